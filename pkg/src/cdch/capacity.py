"""Variational capacities, CDC/VDC boundary scans, Hardy constants, barriers.

Capacities are discrete Dirichlet energies of Q1 potentials: u = 1 on the
rasterized compact set, u = 0 outside the open set, harmonic in between.
Both sides of each CDC ratio are computed on the same local grid so the
numerator and denominator share discretization bias.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .elliptic import _GWEIGHTS, _REF_GRAD, _preconditioner
from .errors import DegenerateCondenser, NoConvergence
from .geometry import MASK_INTERIOR, build_grid

_SUBSAMPLE_SEED = 42
_MAX_BOUNDARY_SAMPLES = 512


@dataclass(frozen=True)
class CondenserSpec:
    """Condenser (K, U): K compact inside the open ball U."""

    u_center: tuple
    u_radius: float
    k_kind: str  # disk | nodes | domain_complement
    k_center: tuple = (0.0, 0.0)
    k_radius: float = 0.0
    k_points: Optional[np.ndarray] = None
    domain: Optional[object] = None  # DomainSpec for domain_complement
    ball_center: tuple = (0.0, 0.0)  # closed ball of the complement ball
    ball_radius: float = 0.0

    @staticmethod
    def annulus(R, center=(0.0, 0.0)):
        """K = closed ball of radius R, U = concentric ball of radius 2R."""
        return CondenserSpec(center, 2.0 * R, "disk", center, R)

    @staticmethod
    def from_points(points, u_center, u_radius):
        return CondenserSpec(tuple(u_center), float(u_radius), "nodes", k_points=np.atleast_2d(points))

    @staticmethod
    def complement_in_ball(domain_spec, xi, R):
        """K = closed ball B(xi, R) minus the domain, U = B(xi, 2R)."""
        return CondenserSpec(
            tuple(xi), 2.0 * R, "domain_complement",
            domain=domain_spec, ball_center=tuple(xi), ball_radius=float(R),
        )


@dataclass
class CdcReport:
    samples: list  # (xi_x, xi_y, R, ratio)
    gamma_min: float

    def to_dict(self):
        return {
            "gamma_min": self.gamma_min,
            "samples": [list(s) for s in self.samples],
        }


@dataclass
class VdcReport:
    samples: list  # (xi_x, xi_y, R, ratio)
    min_ratio: float

    def to_dict(self):
        return {
            "min_ratio": self.min_ratio,
            "samples": [list(s) for s in self.samples],
        }


@dataclass
class HardyReport:
    estimate: float
    eigenfield: Optional[np.ndarray]
    trace: list  # (resolution, estimate)
    iterations: int = 0

    def to_dict(self):
        return {
            "estimate": self.estimate,
            "iterations": self.iterations,
            "trace": [list(t) for t in self.trace],
        }


@dataclass
class BarrierReport:
    c_max: float  # largest feasible constant in the differential inequality
    C_pinch: float  # smallest C with delta^alpha / C <= U <= C delta^alpha
    alpha: float
    ratio_field: np.ndarray  # nodewise (K U)_i / (M_w U)_i, nan off-interior
    feasible: bool

    def to_dict(self):
        return {
            "c_max": self.c_max,
            "C_pinch": self.C_pinch,
            "alpha": self.alpha,
            "feasible": self.feasible,
        }


# ---------------------------------------------------------------------------
# capacity solves


def _full_laplacian(resolution):
    """Q1 Laplacian (all cells active) on an n x n cell grid, plus node grid."""
    n = resolution
    Ke = np.einsum("q,qai,qbj,ij->ab", _GWEIGHTS, _REF_GRAD, _REF_GRAD, np.eye(2))
    ids = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)
    cj, ci = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cj = cj.ravel()
    ci = ci.ravel()
    corners = np.stack(
        [ids[cj, ci], ids[cj, ci + 1], ids[cj + 1, ci], ids[cj + 1, ci + 1]], axis=1
    )
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    data = np.tile(Ke.ravel(), len(cj))
    N = (n + 1) * (n + 1)
    return sp.coo_matrix((data, (rows, cols)), shape=(N, N)).tocsr()


def _condenser_k_mask(cond, X, Y, h):
    if cond.k_kind == "disk":
        if cond.k_radius <= 0:
            return np.zeros(X.shape, dtype=bool)
        return np.hypot(X - cond.k_center[0], Y - cond.k_center[1]) <= cond.k_radius
    if cond.k_kind == "nodes":
        mask = np.zeros(X.shape, dtype=bool)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        tree = cKDTree(pts)
        _, idx = tree.query(cond.k_points)
        mask.ravel()[idx] = True
        return mask
    if cond.k_kind == "domain_complement":
        in_ball = (
            np.hypot(X - cond.ball_center[0], Y - cond.ball_center[1]) <= cond.ball_radius
        )
        return in_ball & ~cond.domain.contains(X, Y)
    raise DegenerateCondenser(f"unknown K kind {cond.k_kind!r}")


def variational_capacity(cond, resolution, tol=1e-9, precond="jacobi"):
    """Discrete cap(K, U): energy of the Q1 condenser potential.

    The grid covers the bounding square of U; overestimates the continuum
    capacity and converges under refinement.
    """
    n = int(resolution)
    side = 2.0 * cond.u_radius
    h = side / n
    x0 = cond.u_center[0] - cond.u_radius
    y0 = cond.u_center[1] - cond.u_radius
    xs = x0 + h * np.arange(n + 1)
    ys = y0 + h * np.arange(n + 1)
    X, Y = np.meshgrid(xs, ys)

    k_mask = _condenser_k_mask(cond, X, Y, h)
    if not np.any(k_mask):
        return 0.0
    out_mask = (
        np.hypot(X - cond.u_center[0], Y - cond.u_center[1]) >= cond.u_radius
    ) & ~k_mask
    free = ~(k_mask | out_mask)
    if not np.any(free):
        raise DegenerateCondenser("no free node between K and the complement of U")

    K = _full_laplacian(n)
    u = np.zeros((n + 1) * (n + 1))
    u[k_mask.ravel()] = 1.0
    fidx = np.nonzero(free.ravel())[0]
    b = -(K @ u)[fidx]
    Kff = K[fidx][:, fidx]
    M = _preconditioner(Kff, precond)
    it = 0

    def cb(_):
        nonlocal it
        it += 1

    uf, info = spla.cg(Kff, b, rtol=tol, atol=0.0, maxiter=20 * n, M=M, callback=cb)
    if info != 0:
        raise NoConvergence("capacity CG did not converge", iterations=it)
    u[fidx] = uf
    return float(u @ (K @ u))


def cdc_ratio(domain_spec, xi, R, local_resolution=64, tol=1e-9):
    """One CDC sample: cap(B(xi,R)-bar \\ Omega, B(xi,2R)) over cap of the full ball."""
    num_cond = CondenserSpec.complement_in_ball(domain_spec, xi, R)
    den_cond = CondenserSpec.annulus(R, center=xi)
    num = variational_capacity(num_cond, local_resolution, tol=tol)
    den = variational_capacity(den_cond, local_resolution, tol=tol)
    return num / den


def _boundary_samples(grid, n_samples):
    pts = grid.boundary_nodes_xy()
    if len(pts) <= min(n_samples, _MAX_BOUNDARY_SAMPLES):
        return pts
    rng = np.random.default_rng(_SUBSAMPLE_SEED)
    idx = rng.choice(len(pts), size=min(n_samples, _MAX_BOUNDARY_SAMPLES), replace=False)
    return pts[np.sort(idx)]


def _dyadic_scales(grid, n_scales):
    Rmax = grid.spec.diameter / 4.0
    Rmin = 8.0 * grid.h
    out = []
    R = Rmax
    while len(out) < n_scales and R >= Rmin:
        out.append(R)
        R /= 2.0
    return out


def cdc_scan(grid, n_samples=32, n_scales=3, local_resolution=64, tol=1e-9):
    """CDC ratios over sampled boundary points and dyadic scales."""
    pts = _boundary_samples(grid, n_samples)
    scales = _dyadic_scales(grid, n_scales)
    samples = []
    for R in scales:
        for x, y in pts:
            ratio = cdc_ratio(grid.spec, (x, y), R, local_resolution, tol=tol)
            samples.append((float(x), float(y), float(R), float(ratio)))
    gamma_min = min(s[3] for s in samples) if samples else math.nan
    return CdcReport(samples, gamma_min)


def vdc_ratio(grid, xi, R):
    """|B(xi,R)-bar \\ Omega| / R^2 on the grid-aligned lattice, full plane."""
    h = grid.h
    x0, y0 = grid.origin
    i0 = int(math.floor((xi[0] - R - x0) / h)) - 1
    i1 = int(math.ceil((xi[0] + R - x0) / h)) + 1
    j0 = int(math.floor((xi[1] - R - y0) / h)) - 1
    j1 = int(math.ceil((xi[1] + R - y0) / h)) + 1
    X, Y = np.meshgrid(x0 + h * np.arange(i0, i1 + 1), y0 + h * np.arange(j0, j1 + 1))
    in_ball = np.hypot(X - xi[0], Y - xi[1]) <= R
    cnt = np.count_nonzero(in_ball & ~grid.spec.contains(X, Y))
    return cnt * h**2 / R**2


def vdc_scan(grid, n_samples=32, n_scales=3):
    """Volume density ratios |B(xi,R)-bar \\ Omega| / R^2, lattice counting."""
    pts = _boundary_samples(grid, n_samples)
    scales = _dyadic_scales(grid, n_scales)
    samples = []
    for R in scales:
        for x, y in pts:
            ratio = vdc_ratio(grid, (x, y), R)
            samples.append((float(x), float(y), float(R), float(ratio)))
    mn = min(s[3] for s in samples) if samples else math.nan
    return VdcReport(samples, mn)


def uniform_perfectness_scan(points, c, max_samples=256, n_scales=12, seed=_SUBSAMPLE_SEED):
    """Empty-annulus test on a point cloud E.

    Checks E intersects B(x, R) \\ B(x, cR) for sampled x in E and dyadic
    R < diam(E), down to the cloud's resolution scale. Returns
    (ok, witness) where witness = (x, R) of the first empty annulus.
    """
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        return False, (tuple(pts[0]), math.nan)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diam = float(np.hypot(*(hi - lo)))
    tree = cKDTree(pts)
    # the finite cloud cannot witness annuli below its own spacing
    d_nn, _ = tree.query(pts, k=2)
    rmin = max(np.median(d_nn[:, 1]) / c, 1e-12)
    if len(pts) > max_samples:
        rng = np.random.default_rng(seed)
        sample = pts[rng.choice(len(pts), size=max_samples, replace=False)]
    else:
        sample = pts
    R = diam * 0.999
    scales = []
    while R > rmin and len(scales) < n_scales:
        scales.append(R)
        R /= 2.0
    for R in scales:
        for x in sample:
            idx = tree.query_ball_point(x, R)
            if not idx:
                return False, (tuple(x), float(R))
            d = np.hypot(*(pts[idx] - x).T)
            if not np.any((d > c * R) & (d < R)):
                # the annulus is empty of E-points other than possibly x
                return False, (tuple(x), float(R))
    return True, None


# ---------------------------------------------------------------------------
# Hardy constant


def _hardy_matrices(grid):
    """Stiffness and consistent 1/delta^2-weighted mass (4x4 Gauss, exact delta).

    The weight is clipped at delta >= h/2; lumped nodal weights dip below the
    continuum constant, the consistent Gauss mass keeps the Rayleigh quotient
    an upper bound in practice.
    """
    from numpy.polynomial.legendre import leggauss

    from .elliptic import CoefficientField, assemble

    system = assemble(grid, CoefficientField.identity(grid))
    gp, gw = leggauss(4)
    gp = 0.5 + 0.5 * gp
    gw = 0.5 * gw
    h = grid.h
    active = grid.active_cells()
    cj, ci = np.nonzero(active)
    x0, y0 = grid.origin
    node_id = system.interior_ids
    corners = np.stack(
        [node_id[cj, ci], node_id[cj, ci + 1], node_id[cj + 1, ci], node_id[cj + 1, ci + 1]],
        axis=1,
    )
    Me = np.zeros((len(cj), 4, 4))
    for gx, wx in zip(gp, gw):
        for gy, wy in zip(gp, gw):
            X = x0 + (ci + gx) * h
            Y = y0 + (cj + gy) * h
            d = np.maximum(grid.spec.boundary_distance(X, Y), h / 2.0)
            phi = np.array([(1 - gx) * (1 - gy), gx * (1 - gy), (1 - gx) * gy, gx * gy])
            Me += wx * wy * (h * h / d**2)[:, None, None] * np.outer(phi, phi)[None]
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = system.n
    W = sp.coo_matrix(
        (Me.reshape(-1)[keep], (rows[keep], cols[keep])), shape=(n, n)
    ).tocsr()
    return system, W


def hardy_constant(grid, tol=1e-8, max_outer=200, precond="amg"):
    """Smallest generalized eigenvalue of (stiffness, 1/delta^2 mass).

    Inverse power iteration with PCG inner solves; the returned Rayleigh
    quotient is an upper bound of the discrete minimum at every iterate.
    """
    system, W = _hardy_matrices(grid)
    K = system.K
    n = K.shape[0]
    M = _preconditioner(K, precond if n > 2000 else "jacobi")
    rng = np.random.default_rng(_SUBSAMPLE_SEED)
    x = 1.0 + 0.01 * rng.standard_normal(n)
    lam = math.inf
    it_used = 0
    for outer in range(max_outer):
        b = W @ x
        x_new, info = spla.cg(K, b, x0=x, rtol=1e-10, atol=0.0, maxiter=50 * int(np.sqrt(n)) + 1000, M=M)
        if info != 0:
            raise NoConvergence("Hardy inner CG did not converge")
        x = x_new / np.linalg.norm(x_new)
        num = float(x @ (K @ x))
        den = float(x @ (W @ x))
        lam_new = num / den
        it_used = outer + 1
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return HardyReport(float(lam), system.extend(x), [(grid.nx, float(lam))], it_used)


def hardy_refinement_study(domain_spec, resolutions, tol=1e-8):
    """Hardy estimates across resolutions; trace is the refinement oracle."""
    trace = []
    last = None
    for res in resolutions:
        grid = build_grid(domain_spec, res)
        last = hardy_constant(grid, tol=tol)
        trace.append((res, last.estimate))
    return HardyReport(trace[-1][1], last.eigenfield, trace, last.iterations)


# ---------------------------------------------------------------------------
# strong barriers


def verify_strong_barrier(grid, U, alpha, interior_sel=None):
    """Check the weak supersolution inequality and the delta^alpha pinching.

    U is a nodal field, positive on interior nodes. The nodewise ratio
    (K U)_i / (h^2 U_i / delta_i^2) gives, over the selected interior nodes,
    the largest feasible c; the pinching constant is the smallest C with
    delta^alpha / C <= U <= C delta^alpha.
    """
    from .elliptic import CoefficientField, assemble

    system = assemble(grid, CoefficientField.identity(grid))
    interior = grid.interior
    KU = system.K @ U[interior]
    dlt = np.maximum(grid.delta[interior], grid.h / 2.0)
    Ui = U[interior]
    WU = grid.h**2 * Ui / dlt**2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = KU / WU
    field = np.full(U.shape, np.nan)
    field[interior] = ratio
    if interior_sel is not None:
        ratio = field[interior_sel & interior]
    c_max = float(np.min(ratio)) if len(ratio) else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        pin = Ui / grid.delta[interior] ** alpha
    pin = pin[np.isfinite(pin) & (pin > 0)]
    C_pinch = float(max(pin.max(), 1.0 / pin.min())) if len(pin) else math.inf
    return BarrierReport(c_max, C_pinch, alpha, field, feasible=c_max > 0)
