"""Masked Q1 finite element machinery for -div(A grad u) = mu, u = 0 on the boundary.

Assembly runs over cells whose four corner nodes are non-exterior; boundary
and exterior degrees of freedom are eliminated (hard zero Dirichlet). The
solver is preconditioned conjugate gradients; algebraic multigrid is
available for large systems.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EllipticityViolation, NoConvergence
from .geometry import MASK_INTERIOR

# 2x2 Gauss points on the reference square [0,1]^2
_GP = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))
_GAUSS = [(gx, gy, 0.25) for gx in _GP for gy in _GP]


def _ref_gradients():
    """Gradient of the four Q1 hats at each Gauss point, shape (4 pts, 4 fns, 2)."""
    G = np.empty((4, 4, 2))
    for q, (gx, gy, _) in enumerate(_GAUSS):
        # node order: SW, SE, NW, NE
        G[q] = [
            [-(1 - gy), -(1 - gx)],
            [(1 - gy), -gx],
            [-gy, (1 - gx)],
            [gy, gx],
        ]
    return G


_REF_GRAD = _ref_gradients()
_GWEIGHTS = np.array([w for _, _, w in _GAUSS])


def _unit_directions(m=16):
    th = np.pi * np.arange(m) / m
    return np.column_stack([np.cos(th), np.sin(th)])


@dataclass
class CoefficientField:
    """Per-cell 2x2 matrices with ellipticity envelope (lam, L)."""

    values: np.ndarray  # (ny, nx, 2, 2)
    lam: float
    L: float
    symmetric: bool = True

    def check_envelope(self, rtol=1e-9):
        z = _unit_directions()
        Az = np.einsum("yxij,dj->yxdi", self.values, z)
        quad = np.einsum("yxdi,di->yxd", Az, z)
        mag = np.sqrt(np.einsum("yxdi,yxdi->yxd", Az, Az))
        if quad.min() < self.lam * (1 - rtol) or mag.max() > self.L * (1 + rtol):
            raise EllipticityViolation(
                f"envelope ({self.lam}, {self.L}) violated: "
                f"min zAz = {quad.min():.3g}, max |Az| = {mag.max():.3g}"
            )

    @staticmethod
    def identity(grid):
        return CoefficientField.constant(grid, np.eye(2))

    @staticmethod
    def constant(grid, mat):
        mat = np.asarray(mat, dtype=float)
        vals = np.broadcast_to(mat, (grid.ny, grid.nx, 2, 2)).copy()
        ev = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        return CoefficientField(
            vals, lam=float(ev.min()), L=float(np.linalg.norm(mat, 2)),
            symmetric=bool(np.allclose(mat, mat.T)),
        )

    @staticmethod
    def from_scalar_function(grid, fn, lam=None, L=None):
        """Isotropic field a(x) I sampled at cell midpoints."""
        CX, CY = grid.cell_centers()
        a = np.asarray(fn(CX, CY), dtype=float)
        vals = np.zeros((grid.ny, grid.nx, 2, 2))
        vals[..., 0, 0] = a
        vals[..., 1, 1] = a
        return CoefficientField(
            vals,
            lam=float(a.min() if lam is None else lam),
            L=float(a.max() if L is None else L),
            symmetric=True,
        )

    def scaled(self, c):
        return CoefficientField(self.values * c, self.lam * c, self.L * c, self.symmetric)


@dataclass
class FieldSolution:
    """Nodal scalar field with solver metadata."""

    values: np.ndarray  # (ny+1, nx+1), zero on boundary/exterior nodes
    residual_norm: float
    energy: float
    iterations: int


class DirichletSystem:
    """Assembled stiffness operator over interior nodes of a masked grid."""

    def __init__(self, grid, K, interior_ids):
        self.grid = grid
        self.K = K
        self.interior_ids = interior_ids  # (ny+1, nx+1) int array, -1 off-interior

    @property
    def n(self):
        return self.K.shape[0]

    def restrict(self, node_field):
        return node_field[self.grid.interior]

    def extend(self, vec):
        out = np.zeros((self.grid.ny + 1, self.grid.nx + 1))
        out[self.grid.interior] = vec
        return out


def assemble(grid, A):
    """Q1 stiffness over interior nodes with midpoint coefficient per cell."""
    A.check_envelope()
    ny, nx = grid.ny, grid.nx
    active = grid.active_cells()
    cj, ci = np.nonzero(active)
    Acells = A.values[cj, ci]  # (m, 2, 2)

    # element stiffness, h-independent in 2D
    Ke = np.einsum("q,qai,mij,qbj->mab", _GWEIGHTS, _REF_GRAD, Acells, _REF_GRAD)

    node_id = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    interior = grid.interior
    node_id[interior] = np.arange(np.count_nonzero(interior))

    # global node ids of cell corners in (SW, SE, NW, NE) order
    corners = np.stack(
        [
            node_id[cj, ci],
            node_id[cj, ci + 1],
            node_id[cj + 1, ci],
            node_id[cj + 1, ci + 1],
        ],
        axis=1,
    )  # (m, 4)

    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    data = Ke.reshape(len(cj), 16).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = int(interior.sum())
    K = sp.coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    return DirichletSystem(grid, K, node_id)


def load_vector(grid, mu):
    """Weak-form right side: node i gets the mu-integral of its Q1 hat."""
    from .measures import assemble_load  # local import to avoid a cycle

    return assemble_load(grid, mu)


def _preconditioner(K, kind):
    if kind == "jacobi":
        d = K.diagonal().copy()
        d[d == 0.0] = 1.0
        inv = 1.0 / d
        return spla.LinearOperator(K.shape, matvec=lambda x: inv * x)
    if kind == "ssor":
        d = K.diagonal()
        Lw = sp.tril(K, format="csr")
        Uw = sp.triu(K, format="csr")
        Dinv = sp.diags(1.0 / d)

        def apply(x):
            y = spla.spsolve_triangular(Lw, x, lower=True)
            return spla.spsolve_triangular(Uw, d * y, lower=False)

        return spla.LinearOperator(K.shape, matvec=apply)
    if kind == "amg":
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(K.tocsr(), max_coarse=64)
        return ml.aspreconditioner(cycle="V")
    raise ValueError(f"unknown preconditioner {kind!r}")


def solve(system, load, tol=1e-10, precond="jacobi", maxiter=None):
    """PCG solve of the eliminated system; `load` is a full nodal vector."""
    if not (0 < tol <= 1e-6):
        raise ValueError("tol must lie in (0, 1e-6]")
    K = system.K
    b = load[system.grid.interior] if load.ndim == 2 else load
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return FieldSolution(system.extend(np.zeros(system.n)), 0.0, 0.0, 0)
    if maxiter is None:
        maxiter = int(50 * np.sqrt(system.n) * max(np.log(1.0 / tol), 1.0))
    M = _preconditioner(K, precond)
    it = 0

    def cb(_):
        nonlocal it
        it += 1

    u, info = spla.cg(K, b, rtol=tol * 0.5, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    res = np.linalg.norm(b - K @ u) / nb
    if info != 0 or res > tol:
        raise NoConvergence(
            f"CG stalled at relative residual {res:.3e} after {it} iterations",
            residual=res,
            iterations=it,
        )
    energy = float(u @ (K @ u))
    return FieldSolution(system.extend(u), float(res), energy, it)


def solve_poisson(grid, A, mu, tol=1e-10, precond="jacobi"):
    """Convenience wrapper: assemble, load and solve in one call."""
    system = assemble(grid, A)
    b = load_vector(grid, mu)
    return solve(system, b, tol=tol, precond=precond)


def comparison_check(u, v, tol=1e-8):
    """True iff u <= v + tol * max scale, nodewise (comparison principle)."""
    scale = max(np.abs(u.values).max(), np.abs(v.values).max(), 1e-300)
    return bool(np.all(u.values <= v.values + tol * scale))


def discrete_energy(system, u_values):
    """u^T K u for a full nodal field."""
    u = u_values[system.grid.interior]
    return float(u @ (system.K @ u))
