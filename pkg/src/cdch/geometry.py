"""Grids, domain masks and distance fields for the 2D domain zoo.

A :class:`DomainSpec` describes a shape analytically (square, disk, annulus,
Koch prefractal polygon, slit disk, punctured disk, disk-in-disk condenser).
:func:`build_grid` rasterizes it onto a uniform Cartesian grid with a node
mask {interior, boundary, exterior} and the exact distance-to-boundary field.
All grid values are immutable after construction.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from matplotlib.path import Path

from .errors import EmptyInterior, InvalidParams, InvalidSpec

MASK_INTERIOR = 0
MASK_BOUNDARY = 1
MASK_EXTERIOR = 2

_KINDS = (
    "unit_square",
    "disk",
    "annulus",
    "koch_prefractal",
    "slit",
    "punctured_disk",
    "condenser",
)

# Tolerance for "exactly on the boundary" classification, relative to diam.
_ON_BOUNDARY_RTOL = 1e-12


def koch_snowflake_polygon(level, scale_to_unit_box=True):
    """Vertices (closed, CCW) of the level-`level` Koch snowflake prefractal.

    Level 0 is the equilateral triangle. With `scale_to_unit_box` the polygon
    is scaled and translated so its bounding box is centered in [0,1]^2 with
    the longer side equal to 1.
    """
    if level < 0:
        raise InvalidSpec("koch level must be >= 0")
    pts = np.array([np.exp(1j * (np.pi / 2 + 2 * np.pi * k / 3)) for k in range(3)])
    pts = np.append(pts, pts[0])
    for _ in range(level):
        p1 = pts[:-1]
        p2 = pts[1:]
        s1 = p1 + (p2 - p1) / 3.0
        s2 = p1 + 2.0 * (p2 - p1) / 3.0
        # outward bump: rotate s2 by -60 degrees around s1
        tip = (s2 - s1) * np.exp(-1j * np.pi / 3.0) + s1
        pts = np.empty(4 * len(p1) + 1, dtype=complex)
        pts[0:-1:4] = p1
        pts[1::4] = s1
        pts[2::4] = tip
        pts[3::4] = s2
        pts[-1] = p2[-1]
    xy = np.column_stack([pts.real, pts.imag])
    if scale_to_unit_box:
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        s = 1.0 / (hi - lo).max()
        xy = (xy - lo) * s
        xy += (1.0 - (hi - lo) * s) / 2.0
    return xy


def shoelace_area(poly):
    """Signed area of a closed polygon (first point repeated or not)."""
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _points_segments_distance(px, py, segs):
    """Min distance from points (px, py) to a list of segments (m, 2, 2)."""
    p = np.column_stack([np.ravel(px), np.ravel(py)])
    best = np.full(len(p), np.inf)
    # chunk over segments to bound memory at high node counts
    step = max(1, int(4e6 / max(len(p), 1)))
    for k in range(0, len(segs), step):
        a = segs[k : k + step, 0]
        b = segs[k : k + step, 1]
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom[denom == 0.0] = 1.0
        ap = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nmj,mj->nm", ap, ab) / denom, 0.0, 1.0)
        d = ap - t[:, :, None] * ab[None, :, :]
        best = np.minimum(best, np.sqrt(np.einsum("nmj,nmj->nm", d, d)).min(axis=1))
    return best.reshape(np.shape(px))


@dataclass(frozen=True)
class DomainSpec:
    """Analytic description of a computational domain."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidSpec(f"unknown domain kind {self.kind!r}")
        p = self.params
        if self.kind == "koch_prefractal":
            lvl = p.get("level", 0)
            if not (isinstance(lvl, (int, np.integer)) and lvl >= 0):
                raise InvalidSpec("koch level must be a nonnegative integer")
        if self.kind == "disk" or self.kind == "punctured_disk":
            if p.get("radius", 1.0) <= 0:
                raise InvalidSpec("disk radius must be positive")
        if self.kind == "annulus":
            r0 = p.get("r_inner", 0.5)
            r1 = p.get("r_outer", 1.0)
            if not 0 < r0 < r1:
                raise InvalidSpec("annulus requires 0 < r_inner < r_outer")
        if self.kind == "slit":
            for a, b in p.get("open_intervals", []):
                if not a < b:
                    raise InvalidSpec("slit intervals must satisfy a < b")
        if self.kind == "condenser":
            ck, rk = p.get("k_center", (0.0, 0.0)), p.get("k_radius", 0.25)
            cu, ru = p.get("u_center", (0.0, 0.0)), p.get("u_radius", 1.0)
            if np.hypot(ck[0] - cu[0], ck[1] - cu[1]) + rk >= ru:
                raise InvalidSpec("condenser K must be compactly contained in U")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def unit_square():
        return DomainSpec("unit_square")

    @staticmethod
    def disk(radius=1.0):
        return DomainSpec("disk", {"radius": float(radius)})

    @staticmethod
    def annulus(r_inner=0.5, r_outer=1.0):
        return DomainSpec("annulus", {"r_inner": float(r_inner), "r_outer": float(r_outer)})

    @staticmethod
    def koch_prefractal(level):
        return DomainSpec("koch_prefractal", {"level": int(level)})

    @staticmethod
    def slit(open_intervals=((-0.25, 0.25),)):
        """Unit disk minus the slit {(x, 0): x not in D}, D the open intervals."""
        ivs = [(float(a), float(b)) for a, b in open_intervals]
        return DomainSpec("slit", {"open_intervals": ivs})

    @staticmethod
    def punctured_disk(radius=1.0):
        return DomainSpec("punctured_disk", {"radius": float(radius)})

    @staticmethod
    def condenser(k_center=(0.0, 0.0), k_radius=0.25, u_center=(0.0, 0.0), u_radius=1.0):
        return DomainSpec(
            "condenser",
            {
                "k_center": tuple(k_center),
                "k_radius": float(k_radius),
                "u_center": tuple(u_center),
                "u_radius": float(u_radius),
            },
        )

    # -- geometry queries --------------------------------------------------

    def bounding_box(self):
        """(x0, y0, side) of the square bounding box used for rasterization."""
        p = self.params
        if self.kind == "unit_square":
            return 0.0, 0.0, 1.0
        if self.kind in ("disk", "punctured_disk"):
            r = p.get("radius", 1.0)
            return -r, -r, 2 * r
        if self.kind == "annulus":
            r = p["r_outer"]
            return -r, -r, 2 * r
        if self.kind == "koch_prefractal":
            return 0.0, 0.0, 1.0
        if self.kind == "slit":
            return -1.0, -1.0, 2.0
        if self.kind == "condenser":
            cx, cy = p["u_center"]
            r = p["u_radius"]
            return cx - r, cy - r, 2 * r
        raise InvalidSpec(self.kind)

    @property
    def diameter(self):
        if self.kind == "unit_square":
            return np.sqrt(2.0)
        if self.kind == "koch_prefractal":
            poly = self._koch_poly()
            # diameter of the bounding box is a tight enough proxy
            lo, hi = poly.min(axis=0), poly.max(axis=0)
            return float(np.hypot(*(hi - lo)))
        _, _, side = self.bounding_box()
        return float(side)

    def _koch_poly(self):
        return koch_snowflake_polygon(self.params.get("level", 0))

    def _slit_segments(self):
        """Closed intervals on y=0 that belong to the boundary slit."""
        ivs = sorted(self.params.get("open_intervals", []))
        segs = []
        x = -1.0
        for a, b in ivs:
            a = max(a, -1.0)
            b = min(b, 1.0)
            if a > x:
                segs.append((x, a))
            x = max(x, b)
        if x < 1.0:
            segs.append((x, 1.0))
        return segs

    def contains(self, x, y):
        """Strict-interior membership test, vectorized."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.kind == "unit_square":
            return (x > 0) & (x < 1) & (y > 0) & (y < 1)
        if self.kind == "disk":
            return np.hypot(x, y) < p.get("radius", 1.0)
        if self.kind == "punctured_disk":
            r = np.hypot(x, y)
            return (r < p.get("radius", 1.0)) & (r > 0)
        if self.kind == "annulus":
            r = np.hypot(x, y)
            return (r > p["r_inner"]) & (r < p["r_outer"])
        if self.kind == "koch_prefractal":
            poly = self._koch_poly()
            pts = np.column_stack([np.ravel(x), np.ravel(y)])
            inside = Path(poly).contains_points(pts)
            # Path.contains_points is ambiguous on the boundary; points at
            # zero distance are handled by the mask classifier.
            return inside.reshape(np.shape(x))
        if self.kind == "slit":
            r = np.hypot(x, y)
            on_slit = np.zeros(np.shape(x), dtype=bool)
            yz = y == 0.0
            for a, b in self._slit_segments():
                on_slit |= yz & (x >= a) & (x <= b)
            return (r < 1.0) & ~on_slit
        if self.kind == "condenser":
            cu = p["u_center"]
            ck = p["k_center"]
            ru = np.hypot(x - cu[0], y - cu[1]) < p["u_radius"]
            rk = np.hypot(x - ck[0], y - ck[1]) > p["k_radius"]
            return ru & rk
        raise InvalidSpec(self.kind)

    def boundary_distance(self, x, y):
        """Unsigned Euclidean distance to the topological boundary of Omega."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.kind == "unit_square":
            dx = np.minimum(np.abs(x), np.abs(1 - x))
            dy = np.minimum(np.abs(y), np.abs(1 - y))
            return np.minimum(dx, dy)
        if self.kind == "disk":
            return np.abs(p.get("radius", 1.0) - np.hypot(x, y))
        if self.kind == "punctured_disk":
            r = np.hypot(x, y)
            return np.minimum(np.abs(p.get("radius", 1.0) - r), r)
        if self.kind == "annulus":
            r = np.hypot(x, y)
            return np.minimum(np.abs(r - p["r_inner"]), np.abs(p["r_outer"] - r))
        if self.kind == "koch_prefractal":
            poly = self._koch_poly()
            segs = np.stack([poly[:-1], poly[1:]], axis=1)
            return _points_segments_distance(x, y, segs)
        if self.kind == "slit":
            d = np.abs(1.0 - np.hypot(x, y))
            segs = np.array(
                [[[a, 0.0], [b, 0.0]] for a, b in self._slit_segments()], dtype=float
            )
            if len(segs):
                d = np.minimum(d, _points_segments_distance(x, y, segs))
            return d
        if self.kind == "condenser":
            cu = p["u_center"]
            ck = p["k_center"]
            du = np.abs(p["u_radius"] - np.hypot(x - cu[0], y - cu[1]))
            dk = np.abs(np.hypot(x - ck[0], y - ck[1]) - p["k_radius"])
            return np.minimum(du, dk)
        raise InvalidSpec(self.kind)

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @staticmethod
    def from_dict(doc):
        params = dict(doc.get("params", {}))
        if "open_intervals" in params:
            params["open_intervals"] = [tuple(iv) for iv in params["open_intervals"]]
        for key in ("k_center", "u_center"):
            if key in params:
                params[key] = tuple(params[key])
        return DomainSpec(doc["kind"], params)


@dataclass(frozen=True)
class DomainGrid:
    """Uniform Cartesian grid with node mask and distance-to-boundary field.

    Node (j, i) sits at (origin[0] + i*h, origin[1] + j*h); arrays are
    indexed [j, i] (row = y). delta is 0 on boundary/exterior nodes.
    """

    spec: DomainSpec
    origin: tuple
    h: float
    nx: int
    ny: int
    mask: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.mask.setflags(write=False)
        self.delta.setflags(write=False)

    @property
    def xs(self):
        return self.origin[0] + self.h * np.arange(self.nx + 1)

    @property
    def ys(self):
        return self.origin[1] + self.h * np.arange(self.ny + 1)

    def node_coords(self):
        X, Y = np.meshgrid(self.xs, self.ys)
        return X, Y

    @property
    def interior(self):
        return self.mask == MASK_INTERIOR

    @property
    def boundary(self):
        return self.mask == MASK_BOUNDARY

    @property
    def n_interior(self):
        return int(np.count_nonzero(self.interior))

    def cell_centers(self):
        cx = self.origin[0] + self.h * (np.arange(self.nx) + 0.5)
        cy = self.origin[1] + self.h * (np.arange(self.ny) + 0.5)
        return np.meshgrid(cx, cy)

    def active_cells(self):
        """Cells whose four corner nodes are all non-exterior."""
        m = self.mask != MASK_EXTERIOR
        return m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1] & m[1:, 1:]

    def cell_inside(self):
        """Cells whose center lies strictly inside the domain."""
        CX, CY = self.cell_centers()
        return self.spec.contains(CX, CY)

    def interior_area(self):
        """Cell-counting estimate of |Omega|."""
        return float(np.count_nonzero(self.cell_inside())) * self.h**2

    def boundary_nodes_xy(self):
        jj, ii = np.nonzero(self.boundary)
        return np.column_stack([self.xs[ii], self.ys[jj]])

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "origin": list(self.origin),
            "h": self.h,
            "nx": self.nx,
            "ny": self.ny,
            "mask": self.mask.astype(int).tolist(),
            "delta": self.delta.tolist(),
        }


def distance_field(spec, x, y):
    """Distance-to-boundary values at arbitrary points (exact per spec)."""
    return spec.boundary_distance(x, y)


def build_grid(spec, resolution):
    """Rasterize `spec` on a `resolution` x `resolution` cell grid."""
    if resolution < 8:
        raise InvalidSpec("resolution must be >= 8")
    x0, y0, side = spec.bounding_box()
    h = side / resolution
    nx = ny = int(resolution)
    X, Y = np.meshgrid(x0 + h * np.arange(nx + 1), y0 + h * np.arange(ny + 1))

    inside = spec.contains(X, Y)
    dist = spec.boundary_distance(X, Y)
    tol = _ON_BOUNDARY_RTOL * side

    mask = np.full(X.shape, MASK_EXTERIOR, dtype=np.uint8)
    mask[inside & (dist > tol)] = MASK_INTERIOR
    mask[dist <= tol] = MASK_BOUNDARY

    if spec.kind == "punctured_disk":
        # realize the puncture as the single node nearest the origin
        j, i = np.unravel_index(np.argmin(X**2 + Y**2), X.shape)
        mask[j, i] = MASK_BOUNDARY

    # exterior nodes touching the interior (8-neighborhood) become boundary
    interior = mask == MASK_INTERIOR
    touch = np.zeros_like(interior)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj == 0 and di == 0:
                continue
            shifted = np.zeros_like(interior)
            src = interior[
                max(0, -dj) : interior.shape[0] - max(0, dj),
                max(0, -di) : interior.shape[1] - max(0, di),
            ]
            shifted[
                max(0, dj) : interior.shape[0] - max(0, -dj),
                max(0, di) : interior.shape[1] - max(0, -di),
            ] = src
            touch |= shifted
    mask[(mask == MASK_EXTERIOR) & touch] = MASK_BOUNDARY

    delta = np.where(mask == MASK_INTERIOR, dist, 0.0)

    if not np.any(mask == MASK_INTERIOR):
        raise EmptyInterior(f"{spec.kind} has no interior node at resolution {resolution}")
    if not np.any(mask == MASK_BOUNDARY):
        raise EmptyInterior(f"{spec.kind} has no boundary node at resolution {resolution}")

    return DomainGrid(spec, (x0, y0), h, nx, ny, mask, delta)


def interior_subdomain(grid, R):
    """Node mask of Omega_R = {delta > R}; R = 0 gives all interior nodes."""
    if R < 0:
        raise InvalidParams("R must be >= 0")
    return grid.delta > R
