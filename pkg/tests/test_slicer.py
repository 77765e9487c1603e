import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amstpa_lab import shapes
from amstpa_lab.mesh_io import Encoding, Facet, TriangleMesh, Vec3
from amstpa_lab.slicer import (
    Contour,
    SliceParams,
    contour_perimeter,
    contour_signed_area,
    layers_from_dict,
    layers_to_dict,
    slice_mesh,
)


def translate(mesh, dx, dy, dz):
    def mv(v):
        return Vec3(v.x + dx, v.y + dy, v.z + dz)

    return TriangleMesh(
        tuple(Facet(f.normal, mv(f.v0), mv(f.v1), mv(f.v2)) for f in mesh.facets),
        mesh.source_encoding,
    )


def scale(mesh, s):
    def mv(v):
        return Vec3(v.x * s, v.y * s, v.z * s)

    return TriangleMesh(
        tuple(Facet(f.normal, mv(f.v0), mv(f.v1), mv(f.v2)) for f in mesh.facets),
        mesh.source_encoding,
    )


class TestSliceCube:
    def test_four_layers_one_square_each(self, cube, cube_layers):
        assert len(cube_layers) == 4
        for k, layer in enumerate(cube_layers):
            assert layer.index == k
            assert layer.z == pytest.approx(0.0 + (k + 0.5) * 0.25, abs=0.0)
            assert len(layer.contours) == 1
            contour = layer.contours[0]
            assert contour.closed
            assert len(contour.vertices) == 4
            assert contour_signed_area(contour) == pytest.approx(1.0, abs=1e-9)

    def test_mid_cube_area(self, cube):
        layers = slice_mesh(cube, SliceParams(layer_height=1.0))
        assert len(layers) == 1
        assert layers[0].z == 0.5
        assert contour_signed_area(layers[0].contours[0]) == pytest.approx(1.0, abs=1e-9)

    def test_contours_are_ccw(self, cube_layers):
        for layer in cube_layers:
            for contour in layer.contours:
                assert contour_signed_area(contour) > 0.0


class TestSliceTetrahedron:
    def test_layer0_area(self):
        layers = slice_mesh(shapes.corner_tetrahedron(), SliceParams(layer_height=0.5))
        assert len(layers) == 2
        assert layers[0].z == 0.25
        area = contour_signed_area(layers[0].contours[0])
        assert area == pytest.approx(0.28125, abs=1e-9)

    def test_brute_force_area_oracle(self):
        # polygon area via dense point-in-halfspace counting on a grid
        layers = slice_mesh(shapes.corner_tetrahedron(), SliceParams(layer_height=0.5))
        z = layers[0].z
        n = 600
        hits = sum(
            1
            for i in range(n)
            for j in range(n)
            if (i + 0.5) / n + (j + 0.5) / n + z <= 1.0
        )
        oracle = hits / (n * n)
        assert contour_signed_area(layers[0].contours[0]) == pytest.approx(oracle, abs=2e-3)


class TestEdgeCases:
    def test_empty_mesh_zero_layers(self):
        assert slice_mesh(TriangleMesh((), Encoding.ASCII), SliceParams(0.25)) == []

    def test_flat_mesh_zero_layers(self):
        flat = TriangleMesh(
            (Facet(Vec3(0, 0, 1), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)),),
            Encoding.ASCII,
        )
        assert slice_mesh(flat, SliceParams(0.25)) == []

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            SliceParams(layer_height=0.0)
        with pytest.raises(ValueError):
            SliceParams(layer_height=0.1, snap_eps=0.0)

    def test_open_contours_from_missing_wall(self, cube):
        # facets 4 and 5 are the front wall; slices can no longer close
        broken = TriangleMesh(cube.facets[:4] + cube.facets[6:], cube.source_encoding)
        layers = slice_mesh(broken, SliceParams(layer_height=0.25))
        assert any(not c.closed for layer in layers for c in layer.contours)


class TestContourMath:
    def test_unit_square_ccw(self):
        square = Contour(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)), True)
        assert contour_signed_area(square) == 1.0
        assert contour_perimeter(square) == 4.0

    def test_unit_square_cw(self):
        square = Contour(((0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)), True)
        assert contour_signed_area(square) == -1.0

    def test_open_contour_rejected(self):
        with pytest.raises(ValueError):
            contour_signed_area(Contour(((0.0, 0.0), (1.0, 0.0)), False))

    @pytest.mark.parametrize("n", [32, 64])
    def test_ngon_area_matches_formula(self, n):
        pts = tuple(
            (math.cos(2 * math.pi * k / n), math.sin(2 * math.pi * k / n)) for k in range(n)
        )
        area = contour_signed_area(Contour(pts, True))
        assert area == pytest.approx((n / 2) * math.sin(2 * math.pi / n), abs=1e-12)

    def test_32gon_area_value(self):
        # (n/2)*sin(2*pi/n) at n=32 is the 3.1214 reference value
        pts = tuple(
            (math.cos(2 * math.pi * k / 32), math.sin(2 * math.pi * k / 32)) for k in range(32)
        )
        assert contour_signed_area(Contour(pts, True)) == pytest.approx(3.1214, abs=1e-4)


class TestInvariance:
    @given(
        st.floats(min_value=-50, max_value=50),
        st.floats(min_value=-50, max_value=50),
        st.floats(min_value=-50, max_value=50),
    )
    def test_translation_preserves_areas(self, cube, dx, dy, dz):
        base = slice_mesh(cube, SliceParams(layer_height=0.25))
        moved = slice_mesh(translate(cube, dx, dy, dz), SliceParams(layer_height=0.25))
        assert len(moved) == len(base)
        for a, b in zip(base, moved):
            assert len(a.contours) == len(b.contours)
            for ca, cb in zip(a.contours, b.contours):
                assert contour_signed_area(cb) == pytest.approx(
                    contour_signed_area(ca), rel=1e-9, abs=1e-9
                )

    @given(st.floats(min_value=0.1, max_value=10.0))
    def test_scaling_scales_areas_by_s_squared(self, cube, s):
        base = slice_mesh(cube, SliceParams(layer_height=0.25))
        scaled = slice_mesh(scale(cube, s), SliceParams(layer_height=0.25 * s))
        assert len(scaled) == len(base)
        for a, b in zip(base, scaled):
            assert contour_signed_area(b.contours[0]) == pytest.approx(
                s * s * contour_signed_area(a.contours[0]), rel=1e-9
            )

    @pytest.mark.parametrize(
        "mesh,h",
        [
            (shapes.box(), 0.2),
            (shapes.corner_tetrahedron(), 0.19),
            (shapes.octahedron(), 0.23),
            (shapes.ngon_prism(12), 0.31),
        ],
    )
    def test_convex_solids_one_closed_contour_per_layer(self, mesh, h):
        eps = SliceParams(layer_height=h).snap_eps
        for layer in slice_mesh(mesh, SliceParams(layer_height=h)):
            if not layer.contours:
                continue  # plane above the solid in the final partial layer
            assert len(layer.contours) == 1
            contour = layer.contours[0]
            assert contour.closed
            assert len(contour.vertices) >= 3
            for a, b in zip(contour.vertices, contour.vertices[1:]):
                assert math.hypot(b[0] - a[0], b[1] - a[1]) > eps

    def test_layer_volume_approximates_cube(self, cube_layers):
        volume = sum(
            contour_signed_area(layer.contours[0]) * 0.25 for layer in cube_layers
        )
        assert volume == pytest.approx(1.0, rel=1e-9)  # exact for prisms

    def test_layer_volume_approximates_octahedron(self):
        h = 0.02
        layers = slice_mesh(shapes.octahedron(), SliceParams(layer_height=h))
        volume = sum(
            sum(contour_signed_area(c) for c in layer.contours) * h for layer in layers
        )
        assert volume == pytest.approx(4.0 / 3.0, rel=0.05)

    def test_mid_plane_rule(self, cube_layers):
        for layer in cube_layers:
            assert layer.z == 0.0 + (layer.index + 0.5) * 0.25


def test_layers_json_round_trip(cube_layers):
    doc = layers_to_dict(cube_layers, 0.25)
    assert layers_from_dict(doc) == cube_layers
