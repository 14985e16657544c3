import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kornlab.errors import DegenerateDomainError, GeometryError, ParameterError
from kornlab.geometry import (
    BOUNDARY,
    EXTERIOR,
    INTERIOR,
    Annulus,
    Ball,
    Box,
    Cusp,
    GridSpec,
    LShape,
    Transformed,
    boundary_weights,
    classify,
    diameter,
    embed_mask,
    mask_to_csv,
    named_shape,
    rasterize,
    rasterize_shape,
    shape_from_json,
    shape_from_kv,
    shape_to_json,
    shape_to_kv,
    volume_estimate,
)


def test_grid_coords_and_upper():
    g = GridSpec(0.5, (0.0, 1.0), (3, 2))
    assert g.dim == 2 and g.size == 6
    assert g.upper == (1.0, 1.5)
    assert g.coords().shape == (3, 2, 2)
    assert np.allclose(g.coords()[2, 1], [1.0, 1.5])
    assert g.cell_volume == 0.25


@pytest.mark.parametrize(
    "h, origin, shape",
    [(0.0, (0, 0), (4, 4)), (-1.0, (0,), (4,)), (0.1, (0, 0), (1, 4)), (0.1, (0,) * 4, (2,) * 4),
     (0.1, (0, 0), (4,))],
)
def test_grid_rejects_bad_specs(h, origin, shape):
    with pytest.raises(GeometryError):
        GridSpec(h, origin, shape)


def test_grid_node_cap():
    with pytest.raises(GeometryError):
        GridSpec(1e-4, (0, 0, 0), (1000, 1000, 1000))


def test_unit_square_quarter_spacing_labels():
    m = rasterize_shape(named_shape("square"), 0.25)
    assert m.grid.shape == (5, 5)
    assert m.n_inside == 25
    assert m.n_interior == 9
    assert np.count_nonzero(m.boundary) == 16
    assert set(np.unique(m.labels)) == {BOUNDARY, INTERIOR}


def test_unit_square_boundary_weight_total():
    # 4 sides plus one extra face per corner node
    m = rasterize_shape(named_shape("square"), 0.25)
    w, info = boundary_weights(m)
    assert info["exact"]
    assert math.isclose(w.sum(), 5.0)
    assert w[m.interior].sum() == 0


def test_ball_rasterization_is_symmetric():
    m = rasterize_shape(Ball((0.0, 0.0), 1.0), 1 / 16)
    assert np.array_equal(m.labels, m.labels[::-1, :])
    assert np.array_equal(m.labels, m.labels.T)
    assert not boundary_weights(m)[1]["exact"]


def test_ball_volume_estimate_converges():
    errs = [abs(volume_estimate(rasterize_shape(Ball((0.0, 0.0), 1.0), h), "inside") - math.pi)
            for h in (1 / 16, 1 / 64)]
    assert errs[1] < errs[0] < 0.5


def test_zero_radius_ball_is_degenerate():
    with pytest.raises(DegenerateDomainError):
        rasterize_shape(Ball((0.0, 0.0), 0.0), 0.1)


def test_shape_outside_grid_rejected():
    g = GridSpec(0.1, (0.0, 0.0), (5, 5))
    with pytest.raises(GeometryError):
        rasterize(Box((0.0, 0.0), (1.0, 1.0)), g)


def test_dimension_mismatch_rejected():
    with pytest.raises(GeometryError):
        rasterize(Ball((0.0, 0.0, 0.0), 1.0), GridSpec(0.5, (-1, -1), (5, 5)))


@pytest.mark.parametrize(
    "shape",
    [Box((0, 0), (1, 2)), Ball((0.5, 0.5), 0.5), Annulus((0, 0), 0.4, 1.0), LShape((0, 0), 1.0, 0.5),
     Cusp(1.5, 1.0, 2), Transformed(Ball((0, 0), 1.0), 2.0, (1.0, 0.0)),
     Box((0, 0), (1, 1)) - Ball((1, 1), 0.5), Box((0, 0), (1, 1)) | Ball((1, 1), 0.5),
     Box((0, 0), (1, 1)) & Ball((1, 1), 1.0)],
)
def test_shape_serialization_round_trip(shape):
    assert shape_from_json(shape_to_json(shape)) == shape
    assert shape_from_kv(shape_to_kv(shape)) == shape


@pytest.mark.parametrize("name", ["square", "ball", "annulus", "lshape", "cusp"])
def test_named_shapes_rasterize(name):
    m = rasterize_shape(named_shape(name, 2), 1 / 16)
    assert m.n_interior > 0
    assert np.all(m.labels[~m.inside] == EXTERIOR)


def test_unknown_named_shape():
    with pytest.raises(ParameterError):
        named_shape("triangle")


@pytest.mark.parametrize(
    "shape, expected",
    [(Box((0, 0), (1, 1)), 1.0), (Ball((0, 0), 1.0), math.pi), (Annulus((0, 0), 0.4, 1.0), math.pi * 0.84),
     (LShape((0, 0), 1.0, 0.5), 0.75), (Cusp(2.0, 1.0, 2), 2 / 3)],
)
def test_analytic_volumes(shape, expected):
    assert math.isclose(shape.volume(), expected, rel_tol=1e-12)


def test_lshape_notch_is_exterior():
    m = rasterize_shape(LShape((0.0, 0.0), 1.0, 0.5), 1 / 8)
    x = m.grid.coords()
    notch = (x[..., 0] > 0.5 + 1e-9) & (x[..., 1] > 0.5 + 1e-9)
    assert not np.any(m.inside[notch])
    assert np.all(m.inside[~notch])


def test_diameter_of_square_and_ball():
    assert math.isclose(diameter(rasterize_shape(named_shape("square"), 1 / 8)), math.sqrt(2))
    assert math.isclose(diameter(rasterize_shape(Ball((0, 0), 1.0), 1 / 8)), 2.0)


@given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_classify_labels_consistent(nx, ny, seed):
    inside = np.random.default_rng(seed).random((nx, ny)) < 0.7
    labels = classify(inside)
    assert np.array_equal(labels != EXTERIOR, inside)
    # interior nodes have all four axis neighbors inside the grid and the set
    padded = np.pad(inside, 1)
    nbrs = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    assert np.array_equal(labels == INTERIOR, inside & nbrs)


def test_embed_mask_places_nodes():
    small = rasterize_shape(named_shape("square"), 0.25)
    big = GridSpec(0.25, (-0.5, -0.5), (9, 9))
    m, off = embed_mask(small, big)
    assert off == (2, 2)
    assert m.n_inside == small.n_inside
    assert m.n_interior == small.n_interior


def test_embed_mask_rejects_misaligned():
    small = rasterize_shape(named_shape("square"), 0.25)
    with pytest.raises(GeometryError):
        embed_mask(small, GridSpec(0.25, (-0.1, 0.0), (9, 9)))


def test_mask_csv_has_one_row_per_node():
    m = rasterize_shape(named_shape("square"), 0.5)
    buf = io.StringIO()
    mask_to_csv(m, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x0,x1,label"
    assert len(lines) == 1 + m.grid.size
