import math

import numpy as np
import pytest

from cdch.errors import EmptyInterior, InvalidSpec
from cdch.geometry import (
    MASK_BOUNDARY,
    MASK_EXTERIOR,
    MASK_INTERIOR,
    DomainSpec,
    build_grid,
    distance_field,
    interior_subdomain,
    koch_snowflake_polygon,
    shoelace_area,
)


class TestKochPolygon:
    def test_level_zero_is_triangle(self):
        # closed polyline: first vertex repeated at the end
        poly = koch_snowflake_polygon(0, scale_to_unit_box=False)
        assert len(poly) == 4
        assert np.allclose(poly[0], poly[-1])

    def test_vertex_count_quadruples_per_level(self):
        for level in range(4):
            poly = koch_snowflake_polygon(level, scale_to_unit_box=False)
            assert len(poly) == 3 * 4**level + 1

    def test_area_increases_with_level(self):
        # each refinement glues outward bumps onto every edge
        areas = [
            shoelace_area(koch_snowflake_polygon(lv, scale_to_unit_box=False))
            for lv in range(4)
        ]
        assert all(a2 > a1 for a1, a2 in zip(areas, areas[1:]))

    def test_area_limit_oracle(self):
        # the snowflake area converges to 8/5 of the starting triangle
        a0 = shoelace_area(koch_snowflake_polygon(0, scale_to_unit_box=False))
        a5 = shoelace_area(koch_snowflake_polygon(5, scale_to_unit_box=False))
        partial = 1.0 + sum(3.0 * 4 ** (k - 1) / 9.0**k for k in range(1, 6))
        assert a5 == pytest.approx(a0 * partial, rel=1e-10)

    def test_perimeter_grows_by_four_thirds(self):
        def perim(poly):
            d = np.diff(np.vstack([poly, poly[:1]]), axis=0)
            return np.hypot(d[:, 0], d[:, 1]).sum()

        p1 = perim(koch_snowflake_polygon(1, scale_to_unit_box=False))
        p2 = perim(koch_snowflake_polygon(2, scale_to_unit_box=False))
        assert p2 / p1 == pytest.approx(4.0 / 3.0, rel=1e-10)

    def test_scaled_polygon_fits_unit_box(self):
        poly = koch_snowflake_polygon(3)
        assert poly.min() >= -1e-12
        assert poly.max() <= 1.0 + 1e-12


class TestDomainSpec:
    def test_disk_contains_and_distance(self):
        spec = DomainSpec.disk(1.0)
        assert spec.contains(0.0, 0.0)
        assert not spec.contains(1.0, 0.0)  # boundary is not interior
        assert spec.boundary_distance(0.0, 0.0) == pytest.approx(1.0)
        assert spec.boundary_distance(0.5, 0.0) == pytest.approx(0.5)

    def test_annulus_distance(self):
        spec = DomainSpec.annulus(0.5, 1.0)
        assert spec.boundary_distance(0.75, 0.0) == pytest.approx(0.25)
        assert not spec.contains(0.25, 0.0)
        assert spec.contains(0.0, 0.75)

    def test_square_distance_is_distance_to_sides(self):
        spec = DomainSpec.unit_square()
        assert spec.boundary_distance(0.5, 0.5) == pytest.approx(0.5)
        assert spec.boundary_distance(0.1, 0.4) == pytest.approx(0.1)

    def test_slit_excludes_closed_complement_of_open_intervals(self):
        spec = DomainSpec.slit(open_intervals=((-0.25, 0.25),))
        assert spec.contains(0.0, 0.0)  # inside the open gap
        assert not spec.contains(0.5, 0.0)  # on the slit
        assert spec.contains(0.5, 0.1)

    def test_slit_distance_with_gap_away_from_origin(self):
        # with the gap excluded near the origin, a point just above the slit
        # sees the slit itself as nearest boundary
        spec = DomainSpec.slit(open_intervals=((-0.75, -0.25), (0.25, 0.75)))
        assert spec.boundary_distance(0.0, 0.1) == pytest.approx(0.1, abs=1e-12)

    def test_punctured_disk_excludes_origin(self):
        spec = DomainSpec.punctured_disk(1.0)
        assert not spec.contains(0.0, 0.0)
        assert spec.contains(0.5, 0.0)
        assert spec.boundary_distance(0.25, 0.0) == pytest.approx(0.25)

    def test_koch_contains_matches_polygon(self):
        spec = DomainSpec.koch_prefractal(2)
        # centroid of the polygon lies inside
        poly = koch_snowflake_polygon(2)
        cx, cy = poly.mean(axis=0)
        assert spec.contains(cx, cy)
        assert not spec.contains(-0.5, -0.5)

    def test_diameter(self):
        assert DomainSpec.unit_square().diameter == pytest.approx(math.sqrt(2.0))
        assert DomainSpec.disk(1.0).diameter == pytest.approx(2.0)

    def test_round_trip_dict(self):
        for spec in (
            DomainSpec.unit_square(),
            DomainSpec.annulus(0.3, 0.9),
            DomainSpec.koch_prefractal(1),
            DomainSpec.slit(),
        ):
            back = DomainSpec.from_dict(spec.to_dict())
            assert back == spec

    def test_distance_vectorized_matches_scalar(self):
        spec = DomainSpec.annulus(0.5, 1.0)
        xs = np.array([0.6, 0.7, 0.0])
        ys = np.array([0.0, 0.3, -0.8])
        vec = spec.boundary_distance(xs, ys)
        for x, y, d in zip(xs, ys, vec):
            assert d == pytest.approx(float(spec.boundary_distance(x, y)))


class TestBuildGrid:
    def test_mask_partition(self):
        grid = build_grid(DomainSpec.disk(1.0), 64)
        vals = set(np.unique(grid.mask))
        assert vals <= {MASK_INTERIOR, MASK_BOUNDARY, MASK_EXTERIOR}
        assert grid.n_interior > 0

    def test_interior_nodes_are_strictly_inside(self):
        grid = build_grid(DomainSpec.disk(1.0), 64)
        X, Y = grid.node_coords()
        inside = grid.spec.contains(X[grid.interior], Y[grid.interior])
        assert np.all(inside)

    def test_unit_square_counts(self):
        grid = build_grid(DomainSpec.unit_square(), 32)
        assert grid.n_interior == 31 * 31
        assert np.count_nonzero(grid.mask == MASK_BOUNDARY) == 4 * 32

    def test_delta_positive_on_interior(self):
        grid = build_grid(DomainSpec.annulus(0.5, 1.0), 64)
        assert np.all(grid.delta[grid.interior] > 0)

    def test_interior_area_converges(self):
        # disk area pi within the O(h) rasterization band
        for res, tol in ((64, 0.15), (256, 0.04)):
            grid = build_grid(DomainSpec.disk(1.0), res)
            assert grid.interior_area() == pytest.approx(math.pi, rel=tol)

    def test_resolution_too_small_raises(self):
        with pytest.raises(InvalidSpec):
            build_grid(DomainSpec.unit_square(), 4)

    def test_empty_interior_raises(self):
        with pytest.raises(EmptyInterior):
            build_grid(DomainSpec.annulus(0.99, 1.0), 8)

    def test_interior_nodes_have_all_neighbors(self):
        # every interior node's 8-neighborhood contains no exterior node
        grid = build_grid(DomainSpec.koch_prefractal(2), 128)
        m = grid.mask
        inner = grid.interior[1:-1, 1:-1]
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                nb = m[1 + dj : m.shape[0] - 1 + dj, 1 + di : m.shape[1] - 1 + di]
                assert not np.any(inner & (nb == MASK_EXTERIOR))


class TestDistanceField:
    def test_matches_spec_distance(self):
        spec = DomainSpec.disk(1.0)
        xs = np.linspace(-0.9, 0.9, 7)
        d = distance_field(spec, xs, np.zeros_like(xs))
        assert np.allclose(d, 1.0 - np.abs(xs))

    def test_interior_subdomain_shrinks(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        big = interior_subdomain(grid, 0.1)
        small = interior_subdomain(grid, 0.3)
        assert np.count_nonzero(small) < np.count_nonzero(big)
        assert np.all(big[small])

    def test_koch_distance_positive_inside(self):
        grid = build_grid(DomainSpec.koch_prefractal(2), 128)
        assert np.all(grid.delta[grid.interior] > 0)
