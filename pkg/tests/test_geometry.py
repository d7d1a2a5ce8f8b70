import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import euler_by_walk
from synthprobe.errors import EmptyMeshError, ParseError, ValidationError
from synthprobe.geometry import (
    FixtureSpec,
    euler_characteristic,
    make_fixture,
    normalize_mesh,
    parse_obj,
    serialize_obj,
    transform_mesh,
)

TRI = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"


def test_minimal_obj():
    m = parse_obj(TRI)
    assert len(m.vertices) == 3 and len(m.triangles) == 1
    assert np.allclose(m.normals[m.normal_index[0, 0]], [0, 0, 1])


def test_quad_is_fan_triangulated():
    m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert m.vertex_index.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_out_of_range_index_names_it():
    with pytest.raises(ParseError, match="9") as exc:
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    assert exc.value.line == 4


def test_negative_indices_and_slashes():
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\nf -3/1/1 -2/2/1 -1/3/1\n"
    m = parse_obj(text)
    assert m.vertex_index.tolist() == [[0, 1, 2]]
    assert m.texcoords[m.texcoord_index[0]].tolist() == [[0, 0], [1, 0], [0, 1]]


def test_empty_geometry_errors():
    with pytest.raises(EmptyMeshError):
        parse_obj("# nothing\nv 0 0 0\n")


def test_unsupported_records_are_ignored(caplog):
    m = parse_obj("mtllib a.mtl\ng grp\n" + TRI)
    assert len(m.triangles) == 1
    assert "mtllib" in caplog.text


def test_missing_texcoords_are_planar():
    m = parse_obj("v 0 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\n")
    uv = m.texcoords[m.texcoord_index[0]]
    assert uv.min() >= 0 and uv.max() <= 1
    assert uv.tolist() == [[0, 0], [1, 0], [0, 1]]


@pytest.mark.parametrize("kind", ["cube", "uv_sphere", "torus", "extruded_polygon"])
def test_round_trip(kind):
    m = make_fixture(FixtureSpec(kind))
    again = parse_obj(serialize_obj(m))
    assert again.same_geometry(m)


def test_cube_topology():
    m = make_fixture(FixtureSpec("cube"))
    assert len(m.vertices) == 8 and len(m.triangles) == 12
    assert euler_characteristic(m) == 2


@given(st.integers(2, 12), st.integers(3, 16))
@settings(max_examples=25, deadline=None)
def test_sphere_counts_and_euler(stacks, slices):
    m = make_fixture(FixtureSpec("uv_sphere", {"stacks": stacks, "slices": slices}))
    assert len(m.vertices) == (stacks - 1) * slices + 2
    assert euler_by_walk(m.vertex_index.tolist()) == 2
    assert euler_characteristic(m) == 2


@given(st.integers(3, 20), st.integers(3, 12), st.floats(0.05, 0.45))
@settings(max_examples=25, deadline=None)
def test_torus_euler_zero(rings, sides, minor):
    m = make_fixture(FixtureSpec("torus", {"rings": rings, "sides": sides, "minor_radius": minor}))
    assert euler_by_walk(m.vertex_index.tolist()) == 0


@pytest.mark.parametrize("kind", ["cube", "uv_sphere", "torus", "extruded_polygon"])
def test_fixture_invariants(kind):
    m = make_fixture(FixtureSpec(kind))
    for axis, arr in enumerate((m.vertices, m.normals, m.texcoords)):
        assert m.triangles[:, :, axis].max() < len(arr)
    assert np.all(np.abs(np.linalg.norm(m.normals, axis=1) - 1) <= 1e-6)
    assert make_fixture(FixtureSpec(kind)).same_geometry(m)


@pytest.mark.parametrize("spec", [
    FixtureSpec("uv_sphere", {"stacks": 1}),
    FixtureSpec("uv_sphere", {"slices": 2}),
    FixtureSpec("torus", {"minor_radius": 0.6}),
    FixtureSpec("cube", {"size": 0}),
    FixtureSpec("pyramid"),
    FixtureSpec("cube", {"bogus": 1}),
])
def test_invalid_fixture_params(spec):
    with pytest.raises(ValidationError):
        make_fixture(spec)


def test_normalize_offset_cube():
    cube = make_fixture(FixtureSpec("cube"))
    shifted = transform_mesh(cube, (1, 1, 1))
    shifted = type(cube)(cube.vertices + 5.5, cube.normals, cube.texcoords, cube.triangles)
    n = normalize_mesh(shifted)
    lo, hi = n.bounds()
    assert np.allclose((lo + hi) / 2, 0) and np.isclose((hi - lo).max(), 1)
    assert np.array_equal(n.normals, cube.normals)


def test_normalize_degenerate_point():
    m = parse_obj("v 1 1 1\nv 1 1 1\nv 1 1 1\nf 1 2 3\n")
    with pytest.raises(ValidationError):
        normalize_mesh(m)


@given(st.sampled_from(["cube", "uv_sphere", "torus", "extruded_polygon"]),
       st.tuples(*[st.floats(0.2, 3.0)] * 3))
@settings(max_examples=30, deadline=None)
def test_normalize_idempotent(kind, scale):
    m = normalize_mesh(transform_mesh(make_fixture(FixtureSpec(kind)), scale))
    again = normalize_mesh(m)
    assert np.allclose(again.vertices, m.vertices, atol=1e-9, rtol=0)
    lo, hi = m.bounds()
    assert np.allclose((lo + hi) / 2, 0, atol=1e-12) and np.isclose((hi - lo).max(), 1)
