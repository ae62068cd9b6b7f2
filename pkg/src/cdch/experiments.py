"""Measurement studies: Hölder seminorms, the radial closed-form example,
first-order two-scale expansions and epsilon-sweep convergence rates.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elliptic import CoefficientField, assemble, load_vector, solve
from .errors import InvalidParams, UnderResolved
from .geometry import MASK_EXTERIOR, build_grid, interior_subdomain
from .homogenize import homogenized_matrix, oscillating_coefficient, solve_cell_problem
from .measures import morrey_norm


@dataclass
class HoelderReport:
    alpha: float
    seminorm: float
    fitted_alpha: float
    witness: tuple  # ((x1, y1), (x2, y2))
    separations: np.ndarray
    moduli: np.ndarray

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "seminorm": self.seminorm,
            "fitted_alpha": self.fitted_alpha,
            "witness": [list(w) for w in self.witness],
            "separations": self.separations.tolist(),
            "moduli": self.moduli.tolist(),
        }


@dataclass
class RateReport:
    epsilons: list
    sup_errors: list
    fitted_rate: float
    constant: float
    dropped_first: bool = False
    discretization_floor: float = 0.0

    def to_dict(self):
        return {
            "epsilons": list(self.epsilons),
            "sup_errors": list(self.sup_errors),
            "fitted_rate": self.fitted_rate,
            "constant": self.constant,
            "dropped_first": self.dropped_first,
            "discretization_floor": self.discretization_floor,
        }


@dataclass
class ExpansionReport:
    R: float
    w_sup_interior: float  # ||w_eps|| on Omega_R, R = sqrt(eps)
    w_sup_boundary_layer: float
    err_sup_interior: float  # ||u_eps - u0|| on the same sets
    err_sup_boundary_layer: float
    w_field: np.ndarray


# ---------------------------------------------------------------------------
# Hölder seminorm on grids


def _pair_offsets(nmax):
    offsets = []
    s = 1
    while s <= nmax // 2:
        offsets.extend(
            [(0, s, float(s)), (s, 0, float(s)), (s, s, s * math.sqrt(2.0)), (s, -s, s * math.sqrt(2.0))]
        )
        s *= 2
    return offsets


def hoelder_seminorm(u, grid, alpha, fit_min_separation=0.0):
    """Discrete [u]_alpha over structured node pairs at dyadic separations.

    Pairs run along axes and diagonals; both endpoints must be non-exterior.
    fitted_alpha is the log-log slope of the max oscillation against the
    separation; `fit_min_separation` (physical units) pins the fit to a
    resolution-independent band so exponents are comparable across grids.
    """
    if not 0 < alpha <= 1:
        raise InvalidParams("alpha must lie in (0, 1]")
    values = u.values if hasattr(u, "values") else np.asarray(u)
    valid = grid.mask != MASK_EXTERIOR
    best = 0.0
    witness = ((math.nan, math.nan), (math.nan, math.nan))
    sep_map = {}
    h = grid.h
    for dj, di, steps in _pair_offsets(min(grid.nx, grid.ny)):
        a_sl = (
            slice(max(0, -dj), values.shape[0] - max(0, dj)),
            slice(max(0, -di), values.shape[1] - max(0, di)),
        )
        b_sl = (
            slice(max(0, dj), values.shape[0] - max(0, -dj)),
            slice(max(0, di), values.shape[1] - max(0, -di)),
        )
        both = valid[a_sl] & valid[b_sl]
        if not np.any(both):
            continue
        diff = np.abs(values[a_sl] - values[b_sl])
        diff = np.where(both, diff, 0.0)
        dist = steps * h
        m = float(diff.max())
        key = round(steps, 9)
        sep_map[key] = max(sep_map.get(key, 0.0), m)
        ratio = m / dist**alpha
        if ratio > best:
            best = ratio
            j, i = np.unravel_index(np.argmax(diff), diff.shape)
            ja, ia = j + a_sl[0].start, i + a_sl[1].start
            jb, ib = j + b_sl[0].start, i + b_sl[1].start
            witness = (
                (grid.xs[ia], grid.ys[ja]),
                (grid.xs[ib], grid.ys[jb]),
            )
    seps = np.array(sorted(sep_map)) * h
    mods = np.array([sep_map[k] for k in sorted(sep_map)])
    pos = (mods > 0) & (seps >= fit_min_separation)
    if pos.sum() >= 2:
        slope, _ = np.polyfit(np.log(seps[pos]), np.log(mods[pos]), 1)
        fitted = float(min(max(slope, 0.0), 1.05))
    else:
        fitted = 0.0
    return HoelderReport(alpha, best, fitted, witness, seps, mods)


# ---------------------------------------------------------------------------
# radial closed-form example (n >= 3)


def radial_profile(n, alpha, R, r):
    """The spherically symmetric barrier profile u_R(r) on the unit ball."""
    r = np.asarray(r, dtype=float)
    c = (1.0 - R) ** alpha / (R ** (2.0 - n) - 1.0)
    with np.errstate(divide="ignore"):
        tail = c * (r ** (2.0 - n) - 1.0)
    return np.where(r <= R, (1.0 - R) ** alpha, tail)


def radial_example(n, alpha, R, samples=2000):
    """Closed-form radial example: profile, Hölder seminorm and energy.

    The norm is the seminorm sup |u(x)-u(y)| / |x-y|^alpha over the closed
    unit ball; radial pairs dominate, so a 1D pair sup suffices. The pair
    (r = R, r = 1) always gives exactly 1; for small R an interior pair can
    do better, so the dense-grid sup is polished with a local continuous
    optimization. The energy is the radial integral of |u'|^2 r^{n-1} over
    (R, 1), with closed form (n-2)(1-R)^{2 alpha} / (R^{2-n} - 1).
    """
    if not (isinstance(n, (int, np.integer)) and n >= 3):
        raise InvalidParams("n must be an integer >= 3")
    if not 0 < alpha < 1:
        raise InvalidParams("alpha must lie in (0, 1)")
    if not 0 < R < 1:
        raise InvalidParams("R must lie in (0, 1)")
    # include r = R and r = 1, where the quotient is exactly 1
    rs = np.unique(np.concatenate([np.linspace(0.0, 1.0, samples), [R, 1.0]]))
    us = radial_profile(n, alpha, R, rs)
    dr = np.abs(rs[None, :] - rs[:, None])
    du = np.abs(us[None, :] - us[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dr > 0, du / dr**alpha, 0.0)
    i, j = np.unravel_index(np.argmax(ratios), ratios.shape)
    c_alpha_norm = max(float(ratios[i, j]), _polish_radial_pair(n, alpha, R, rs[i], rs[j]))
    energy = (n - 2) * (1.0 - R) ** (2.0 * alpha) / (R ** (2.0 - n) - 1.0)
    return {
        "r": rs,
        "u": us,
        "c_alpha_norm": c_alpha_norm,
        "energy": float(energy),
    }


def _polish_radial_pair(n, alpha, R, r1, r2):
    """Local continuous maximization of the radial Hölder quotient."""
    from scipy.optimize import minimize

    def neg_quot(p):
        a, b = min(p), max(p)
        if not (0.0 <= a < b <= 1.0) or b - a < 1e-14:
            return 0.0
        ua, ub = radial_profile(n, alpha, R, np.array([a, b]))
        return -abs(ua - ub) / (b - a) ** alpha

    best = minimize(neg_quot, x0=[min(r1, r2), max(r1, r2)], method="Nelder-Mead",
                    options={"xatol": 1e-12, "fatol": 1e-14})
    return float(-best.fun)


def radial_energy_quadrature(n, alpha, R, npts=4000):
    """Independent oracle: composite-midpoint quadrature of |u'|^2 r^{n-1}."""
    c = (1.0 - R) ** alpha / (R ** (2.0 - n) - 1.0)
    r = R + (1.0 - R) * (np.arange(npts) + 0.5) / npts
    du = c * (2.0 - n) * r ** (1.0 - n)
    return float(np.sum(du**2 * r ** (n - 1)) * (1.0 - R) / npts)


# ---------------------------------------------------------------------------
# Hölder-estimate study (solution seminorm vs Morrey norm)


def hoelder_estimate_study(grid, A, mu, alpha, alpha0_ladder=None, tol=1e-10, precond="jacobi"):
    """Solve, measure [u]_{alpha0} on a ladder and compare with the Morrey norm."""
    morrey = morrey_norm(mu, grid, alpha)
    if morrey.divergent:
        raise InvalidParams("measure is Morrey-divergent; the estimate does not apply")
    system = assemble(grid, A)
    sol = solve(system, load_vector(grid, mu), tol=tol, precond=precond)
    if alpha0_ladder is None:
        alpha0_ladder = [a for a in (0.25, 0.5, 0.75, 1.0) if a <= alpha]
    reports = {a0: hoelder_seminorm(sol, grid, a0) for a0 in alpha0_ladder}
    scale = morrey.norm / A.lam if morrey.norm > 0 else math.nan
    ratios = {a0: (rep.seminorm / scale if scale == scale else math.nan) for a0, rep in reports.items()}
    return {
        "solution": sol,
        "morrey": morrey,
        "hoelder": reports,
        "ratios": ratios,
    }


# ---------------------------------------------------------------------------
# first-order expansion w_eps


def _torus_interp(field, x, y):
    """Bilinear interpolation of a nodal torus field at fractional coords."""
    n = field.shape[0]
    gx = (np.asarray(x) % 1.0) * n
    gy = (np.asarray(y) % 1.0) * n
    i = np.floor(gx).astype(int) % n
    j = np.floor(gy).astype(int) % n
    tx = gx - np.floor(gx)
    ty = gy - np.floor(gy)
    i1 = (i + 1) % n
    j1 = (j + 1) % n
    return (
        field[j, i] * (1 - tx) * (1 - ty)
        + field[j, i1] * tx * (1 - ty)
        + field[j1, i] * (1 - tx) * ty
        + field[j1, i1] * tx * ty
    )


def first_order_expansion(u_eps, u0, chis, epsilon, grid):
    """w_eps = u_eps - u0 - eps sum_i chi_i(x / eps) du0/dx_i on the nodes.

    du0 is taken by centered differences; sup norms are reported on the
    interior set Omega_R with R = sqrt(eps) and on its boundary layer.
    """
    ue = u_eps.values if hasattr(u_eps, "values") else np.asarray(u_eps)
    u0v = u0.values if hasattr(u0, "values") else np.asarray(u0)
    du_dy, du_dx = np.gradient(u0v, grid.h)
    X, Y = grid.node_coords()
    corr = _torus_interp(chis[0], X / epsilon, Y / epsilon) * du_dx
    corr += _torus_interp(chis[1], X / epsilon, Y / epsilon) * du_dy
    w = ue - u0v - epsilon * corr
    R = math.sqrt(epsilon)
    deep = interior_subdomain(grid, R)
    layer = grid.interior & ~deep
    err = np.abs(ue - u0v)
    aw = np.abs(w)
    sup = lambda f, m: float(f[m].max()) if np.any(m) else 0.0
    return ExpansionReport(R, sup(aw, deep), sup(aw, layer), sup(err, deep), sup(err, layer), w)


# ---------------------------------------------------------------------------
# epsilon-sweep convergence studies


def _pow2_at_least(x):
    return 1 << max(0, math.ceil(math.log2(max(x, 1))))


def convergence_study(
    domain_spec,
    A_per,
    mu,
    eps_list,
    cells_per_period=16,
    tol=1e-10,
    precond="amg",
    cell_tol=1e-10,
    monotone_slack=0.1,
):
    """Solve u_eps across the sweep against the homogenized solution.

    Each epsilon gets its own grid with at least `cells_per_period` cells
    per period (power-of-two resolutions). The reference u0 is the
    homogenized-tensor solve on the same grid; its discretization error is
    O(h^2) and negligible against the O(eps^{a}) homogenization error.
    Measuring on each grid's full interior avoids phase-locking the
    oscillation against a shared coarse node set.
    """
    eps_list = sorted(float(e) for e in eps_list)[::-1]
    if len(eps_list) < 4:
        raise InvalidParams("eps_list requires >= 4 values")
    if any(not 0 < e <= 1 for e in eps_list):
        raise InvalidParams("all epsilons must lie in (0, 1]")
    _, _, side = domain_spec.bounding_box()

    res = {e: _pow2_at_least(cells_per_period * side / e) for e in eps_list}
    for e, r in res.items():
        if e * r / side < 8:
            raise UnderResolved(f"epsilon {e} has {e * r / side:.1f} cells per period")

    chis = [solve_cell_problem(A_per, i, tol=cell_tol) for i in (0, 1)]
    A0 = homogenized_matrix(A_per, chis)

    res_ref = max(res.values())
    grid_ref = build_grid(domain_spec, res_ref)
    grid_half = build_grid(domain_spec, res_ref // 2)
    u0_ref = solve(
        assemble(grid_ref, CoefficientField.constant(grid_ref, A0)),
        load_vector(grid_ref, mu), tol=tol, precond=precond,
    ).values
    u0_half = solve(
        assemble(grid_half, CoefficientField.constant(grid_half, A0)),
        load_vector(grid_half, mu), tol=tol, precond=precond,
    ).values
    floor = float(np.abs(u0_ref[::2, ::2] - u0_half)[grid_half.interior].max()) / 3.0

    sup_errors = []
    for e in eps_list:
        grid = build_grid(domain_spec, res[e])
        ue = solve(
            assemble(grid, oscillating_coefficient(A_per, e, grid)),
            load_vector(grid, mu), tol=tol, precond=precond,
        )
        u0 = solve(
            assemble(grid, CoefficientField.constant(grid, A0)),
            load_vector(grid, mu), tol=tol, precond=precond,
        )
        sup_errors.append(float(np.abs(ue.values - u0.values)[grid.interior].max()))

    le = np.log(np.array(eps_list))
    lerr = np.log(np.array(sup_errors))
    rate, logc = np.polyfit(le, lerr, 1)
    dropped = False
    if len(eps_list) >= 5:
        # the largest epsilon may be pre-asymptotic; drop it if it strays
        rate_rest, logc_rest = np.polyfit(le[1:], lerr[1:], 1)
        if abs(rate_rest * le[0] + logc_rest - lerr[0]) > 0.2 * abs(math.log(10)):
            rate, logc, dropped = rate_rest, logc_rest, True
    report = RateReport(
        eps_list, sup_errors, float(rate), float(math.exp(logc)), dropped, floor
    )
    report.monotone = all(
        sup_errors[i + 1] <= sup_errors[i] * (1.0 + monotone_slack)
        for i in range(len(sup_errors) - 1)
    )
    report.A0 = A0
    return report
