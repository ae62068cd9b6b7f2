"""Periodic cell problems, homogenized tensor, flux-corrector potentials.

The unit torus is discretized with N x N Q1 cells (nodes identified
periodically). Correctors are solved by conjugate gradients projected onto
the mean-zero subspace; flux potentials come from spectral periodic Poisson
solves on the cell-center grid.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elliptic import _GWEIGHTS, _REF_GRAD, CoefficientField
from .errors import EllipticityViolation, NoConvergence


@dataclass
class PeriodicCoefficient:
    """Y-periodic 2x2 coefficient sampled on torus cell midpoints."""

    values: np.ndarray  # (N, N, 2, 2), index [j, i] = (y2 row, y1 col)
    lam: float
    L: float

    @property
    def n(self):
        return self.values.shape[0]

    @staticmethod
    def constant(mat, n=64):
        mat = np.asarray(mat, dtype=float)
        vals = np.broadcast_to(mat, (n, n, 2, 2)).copy()
        ev = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        return PeriodicCoefficient(vals, float(ev.min()), float(np.linalg.norm(mat, 2)))

    @staticmethod
    def isotropic(fn, n=256):
        """a(y1, y2) I with a sampled at cell midpoints."""
        y = (np.arange(n) + 0.5) / n
        Y1, Y2 = np.meshgrid(y, y)
        a = np.asarray(fn(Y1, Y2), dtype=float)
        vals = np.zeros((n, n, 2, 2))
        vals[..., 0, 0] = a
        vals[..., 1, 1] = a
        return PeriodicCoefficient(vals, float(a.min()), float(a.max()))

    @staticmethod
    def layered(fn, n=256):
        """a(y1) I depending on the first coordinate only."""
        return PeriodicCoefficient.isotropic(lambda y1, y2: fn(y1), n=n)

    @staticmethod
    def checkerboard(a, b, n=256):
        """Four-quadrant checkerboard with values a and b, period 1."""
        if n % 2:
            raise ValueError("checkerboard needs an even torus grid")
        y = (np.arange(n) + 0.5) / n
        Y1, Y2 = np.meshgrid(y, y)
        same = (Y1 < 0.5) == (Y2 < 0.5)
        return PeriodicCoefficient.isotropic(
            lambda y1, y2: np.where((y1 < 0.5) == (y2 < 0.5), float(a), float(b)), n=n
        )


@dataclass
class CellSolution:
    chi: np.ndarray  # (2, N, N) nodal corrector fields
    A0: np.ndarray  # (2, 2)
    V: np.ndarray  # (2, 2, 2, N, N) cell-center flux potentials, skew in (j,k)
    residuals: tuple
    div_errors: np.ndarray  # (2, 2) relative L2 error of div V_ij vs d_ij
    V_inf: float


def _periodic_stiffness(A):
    n = A.n
    cj, ci = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cj = cj.ravel()
    ci = ci.ravel()
    Acells = A.values[cj, ci]
    Ke = np.einsum("q,qai,mij,qbj->mab", _GWEIGHTS, _REF_GRAD, Acells, _REF_GRAD)
    ids = (np.arange(n + 1) % n)  # periodic wrap of node indices
    nid = lambda j, i: ids[j] * n + ids[i]
    corners = np.stack(
        [nid(cj, ci), nid(cj, ci + 1), nid(cj + 1, ci), nid(cj + 1, ci + 1)], axis=1
    )
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    K = sp.coo_matrix((Ke.reshape(-1), (rows, cols)), shape=(n * n, n * n)).tocsr()
    return K


def _cell_rhs(A, i):
    """b_a = -sum_cells int A e_i . grad(phi_a); h = 1/n folds in once."""
    n = A.n
    h = 1.0 / n
    cj, ci = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cj = cj.ravel()
    ci = ci.ravel()
    Aei = A.values[cj, ci][:, :, i]  # (m, 2)
    be = -h * np.einsum("q,qaj,mj->ma", _GWEIGHTS, _REF_GRAD, Aei)
    ids = (np.arange(n + 1) % n)
    nid = lambda j, i_: ids[j] * n + ids[i_]
    corners = np.stack(
        [nid(cj, ci), nid(cj, ci + 1), nid(cj + 1, ci), nid(cj + 1, ci + 1)], axis=1
    )
    b = np.zeros(n * n)
    np.add.at(b, corners.ravel(), be.ravel())
    return b


def _projected_pcg(K, b, tol, maxiter):
    """CG on the mean-zero subspace of a consistent singular SPD system."""
    n = b.shape[0]
    d = K.diagonal().copy()
    d[d == 0.0] = 1.0
    Minv = 1.0 / d

    def proj(v):
        return v - v.mean()

    x = np.zeros(n)
    r = proj(b)
    nb = np.linalg.norm(r)
    if nb == 0.0:
        return x, 0
    z = proj(Minv * r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Kp = K @ p
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        r = proj(r)
        if np.linalg.norm(r) <= tol * nb:
            return proj(x), it
        z = proj(Minv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(
        f"projected CG stalled at {np.linalg.norm(r)/nb:.3e}", iterations=maxiter
    )


def solve_cell_problem(A, i, tol=1e-10):
    """Mean-zero periodic corrector for direction i (0 or 1)."""
    if i not in (0, 1):
        raise ValueError("direction must be 0 or 1")
    n = A.n
    K = _periodic_stiffness(A)
    b = _cell_rhs(A, i)
    x, _ = _projected_pcg(K, b, tol, maxiter=200 * n)
    return x.reshape(n, n)


def cell_gradients(chi):
    """Q1 gradient of a nodal torus field at cell centers, shape (N, N, 2)."""
    n = chi.shape[0]
    h = 1.0 / n
    e = np.pad(chi, ((0, 1), (0, 1)), mode="wrap")
    gx = (e[:-1, 1:] + e[1:, 1:] - e[:-1, :-1] - e[1:, :-1]) / (2 * h)
    gy = (e[1:, :-1] + e[1:, 1:] - e[:-1, :-1] - e[:-1, 1:]) / (2 * h)
    return np.stack([gx, gy], axis=-1)


def corrected_flux(A, chi, i):
    """A (e_i + grad chi_i) at cell centers, shape (N, N, 2)."""
    g = cell_gradients(chi)
    g[..., i] += 1.0
    return np.einsum("yxij,yxj->yxi", A.values, g)


def homogenized_matrix(A, chis):
    """A0 e_i = cell average of the corrected flux."""
    n = A.n
    A0 = np.zeros((2, 2))
    for i in (0, 1):
        A0[:, i] = corrected_flux(A, chis[i], i).mean(axis=(0, 1))
    return A0


def check_envelope(A0, lam, L, rtol=1e-8):
    th = np.pi * np.arange(16) / 16
    z = np.column_stack([np.cos(th), np.sin(th)])
    Az = z @ A0.T
    quad = np.einsum("di,di->d", Az, z)
    mag = np.hypot(Az[:, 0], Az[:, 1])
    if quad.min() < lam * (1 - rtol) or mag.max() > L * (1 + rtol):
        raise EllipticityViolation(
            f"homogenized tensor leaves the ({lam}, {L}) envelope"
        )


def _spectral_poisson(rhs):
    """Zero-mean periodic solution of Laplace(phi) = rhs on the unit torus."""
    n = rhs.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    KX, KY = np.meshgrid(k, k)
    k2 = KX**2 + KY**2
    k2[0, 0] = 1.0
    rhat = np.fft.fft2(rhs)
    rhat[0, 0] = 0.0
    phat = rhat / (-k2)
    return np.real(np.fft.ifft2(phat))


def _spectral_derivative(f, axis_xy):
    """Periodic derivative; axis_xy = 0 for d/dy1 (columns), 1 for d/dy2."""
    n = f.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    fhat = np.fft.fft2(f)
    if axis_xy == 0:
        fhat = fhat * (1j * k)[None, :]
    else:
        fhat = fhat * (1j * k)[:, None]
    return np.real(np.fft.ifft2(fhat))


def flux_corrector(A, chi, i):
    """Flux potentials V_{ijk} with sum_k d/dy_k V_{ijk} = d_{ij}.

    d_i is the mean-free corrected flux. Each component gets a spectral
    periodic Poisson solve Laplace(phi_ij) = d_ij and the antisymmetrized
    derivative V_{ijk} = d(phi_ij)/dy_k - d(phi_ik)/dy_j.
    """
    flux = corrected_flux(A, chi, i)
    d = flux - flux.mean(axis=(0, 1))  # (N, N, 2)
    phi = [_spectral_poisson(d[..., j]) for j in (0, 1)]
    V = np.zeros((2, 2) + d.shape[:2])
    for j in (0, 1):
        for k in (0, 1):
            V[j, k] = _spectral_derivative(phi[j], k) - _spectral_derivative(phi[k], j)
    div_err = np.zeros(2)
    floor = 1e-9 * A.L * d.shape[0]  # below this d_ij is numerically zero
    for j in (0, 1):
        div = sum(_spectral_derivative(V[j, k], k) for k in (0, 1))
        denom = np.linalg.norm(d[..., j])
        div_err[j] = np.linalg.norm(div - d[..., j]) / denom if denom > floor else 0.0
    return V, d, div_err


def corrector_regularity(chi, n_separations=8):
    """Discrete Hölder behavior of a torus field.

    Measures the max oscillation at dyadic torus separations along axes and
    diagonals and fits the log-log slope. Returns (fitted_alpha, seminorm at
    the fitted exponent, separations, moduli).
    """
    n = chi.shape[0]
    seps = []
    mods = []
    s = 1
    while s <= n // 4 and len(seps) < n_separations:
        m = 0.0
        for dj, di, dist in (
            (0, s, s / n),
            (s, 0, s / n),
            (s, s, math.sqrt(2.0) * s / n),
            (s, -s, math.sqrt(2.0) * s / n),
        ):
            diff = np.abs(np.roll(chi, (dj, di), axis=(0, 1)) - chi).max()
            m = max(m, diff)
        seps.append(s / n)
        mods.append(m)
        s *= 2
    seps = np.array(seps)
    mods = np.array(mods)
    pos = mods > 0
    if pos.sum() < 2:
        return 1.0, 0.0, seps, mods
    slope, logc = np.polyfit(np.log(seps[pos]), np.log(mods[pos]), 1)
    alpha = float(min(max(slope, 0.0), 1.05))
    seminorm = float((mods / seps**alpha).max())
    return alpha, seminorm, seps, mods


def oscillating_coefficient(A, epsilon, grid):
    """A(x / epsilon) sampled at the grid's cell midpoints, torus wraparound."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    n = A.n
    CX, CY = grid.cell_centers()
    i = np.floor((CX / epsilon) % 1.0 * n).astype(int) % n
    j = np.floor((CY / epsilon) % 1.0 * n).astype(int) % n
    vals = A.values[j, i]
    return CoefficientField(vals, A.lam, A.L, symmetric=True)


def solve_cell(A, tol=1e-10):
    """Full cell solve: correctors, homogenized tensor, flux potentials."""
    chis = [solve_cell_problem(A, i, tol=tol) for i in (0, 1)]
    A0 = homogenized_matrix(A, chis)
    check_envelope(A0, A.lam, A.L, rtol=1e-6)
    V = np.zeros((2, 2, 2, A.n, A.n))
    div_errors = np.zeros((2, 2))
    for i in (0, 1):
        Vi, _, err = flux_corrector(A, chis[i], i)
        V[i] = Vi
        div_errors[i] = err
    return CellSolution(
        chi=np.stack(chis),
        A0=A0,
        V=V,
        residuals=(tol, tol),
        div_errors=div_errors,
        V_inf=float(np.abs(V).max()),
    )
