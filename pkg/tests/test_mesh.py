import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hanging_vertices
from pwdg.mesh import (
    INTERFACE, Domain, EdgeTag, Mesh, dump_mesh, is_conforming, make_initial_mesh,
    mesh_stats, min_angles, read_mesh, refine_leb, uniform_refine,
)

PERIMETER = {Domain.UNIT_SQUARE: 4.0, Domain.LSHAPE: 8.0, Domain.UNIT_SQUARE_WITH_INTERFACE: 8.0}


def edge_counts(mesh):
    inner = int(np.sum(mesh.edge_elements[:, 1] >= 0))
    return inner, mesh.n_edges - inner


def test_unit_square_one():
    mesh = make_initial_mesh(Domain.UNIT_SQUARE, 1)
    assert mesh.n_triangles == 2
    assert edge_counts(mesh) == (1, 4)


def test_lshape_one_counts():
    # Euler: V - E + F = 1 with V = 8, F = 6 gives E = 13 = 5 interior + 8 boundary
    mesh = make_initial_mesh(Domain.LSHAPE, 1)
    assert mesh.n_triangles == 6
    assert edge_counts(mesh) == (5, 8)
    assert mesh.n_vertices - mesh.n_edges + mesh.n_triangles == 1


def test_lshape_covers_domain():
    mesh = make_initial_mesh(Domain.LSHAPE, 3)
    assert mesh.areas.sum() == pytest.approx(3.0, rel=1e-14)
    c = mesh.centroids
    assert not np.any((c[:, 0] > 0) & (c[:, 1] < 0))


def test_interface_square_triangles_on_one_side():
    mesh = make_initial_mesh(Domain.UNIT_SQUARE_WITH_INTERFACE, 2)
    y = mesh.vertices[mesh.triangles][:, :, 1]
    assert np.all((y >= 0).all(axis=1) | (y <= 0).all(axis=1))
    iface = mesh.edge_interface
    assert iface.sum() == 4
    assert np.all(mesh.edge_tags[iface] == EdgeTag.INTERIOR)
    assert np.allclose(mesh.vertices[mesh.edges[iface]][:, :, 1], 0.0)
    assert np.array_equal(mesh.regions, (mesh.centroids[:, 1] < 0).astype(int))


def test_invalid_domain_token():
    with pytest.raises(ValueError):
        make_initial_mesh("Annulus", 1)
    with pytest.raises(ValueError):
        make_initial_mesh(Domain.LSHAPE, 0)


def test_boundary_edges_default_dirichlet():
    mesh = make_initial_mesh(Domain.LSHAPE, 2)
    boundary = mesh.edge_elements[:, 1] < 0
    assert np.all(mesh.edge_tags[boundary] == EdgeTag.DIRICHLET)
    assert np.all(mesh.edge_tags[~boundary] == EdgeTag.INTERIOR)


def test_normals_point_out_of_first_element():
    mesh = make_initial_mesh(Domain.LSHAPE, 2)
    mid = mesh.vertices[mesh.edges].mean(axis=1)
    out = np.einsum("ed,ed->e", mid - mesh.centroids[mesh.edge_elements[:, 0]], mesh.edge_normals)
    assert np.all(out > 0)
    assert np.allclose(np.linalg.norm(mesh.edge_normals, axis=1), 1.0)


def test_rejects_clockwise_triangle():
    with pytest.raises(ValueError):
        Mesh(np.array([[0, 0], [0, 1], [1, 0]]), np.array([[0, 1, 2]]))


def test_refine_single_triangle():
    mesh = Mesh(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    out = refine_leb(mesh, {0})
    assert out.n_triangles == 2
    mid = np.array([1.0, 0.5])  # midpoint of the hypotenuse
    for t in out.triangles:
        assert any(np.allclose(out.vertices[i], mid) for i in t)
    assert out.areas.sum() == pytest.approx(1.0, rel=1e-15)


def test_refine_shared_longest_edge():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    mesh = Mesh(v, np.array([[0, 1, 2], [0, 2, 3]]))
    out = refine_leb(mesh, {0})
    assert out.n_triangles == 4
    assert hanging_vertices(out) == 0
    assert is_conforming(out, 4.0)


def test_refine_empty_is_identity():
    mesh = make_initial_mesh(Domain.LSHAPE, 2)
    out = refine_leb(mesh, set())
    assert np.array_equal(out.vertices, mesh.vertices)
    assert np.array_equal(out.triangles, mesh.triangles)


def test_refine_unknown_id():
    mesh = make_initial_mesh(Domain.UNIT_SQUARE, 1)
    with pytest.raises(IndexError):
        refine_leb(mesh, {2})
    with pytest.raises(IndexError):
        refine_leb(mesh, {-1})


def test_refine_bisects_every_marked_triangle():
    mesh = make_initial_mesh(Domain.LSHAPE, 2)
    marked = {0, 5, 17}
    out = refine_leb(mesh, marked)
    for t in marked:
        kids = np.flatnonzero(out.parent == t)
        assert len(kids) >= 2
        assert np.all(out.generation[kids] >= 1)


def test_refine_keeps_untouched_triangles():
    mesh = make_initial_mesh(Domain.LSHAPE, 4)
    out = refine_leb(mesh, {0})
    untouched = [t for t in range(mesh.n_triangles) if np.sum(out.parent == t) == 1]
    assert len(untouched) > mesh.n_triangles // 2
    for t in untouched:
        child = np.flatnonzero(out.parent == t)[0]
        assert np.allclose(out.vertices[out.triangles[child]], mesh.vertices[mesh.triangles[t]])


def test_right_isosceles_quality():
    mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    q = mesh_stats(mesh)
    assert q.h_k[0] == pytest.approx(math.sqrt(2), rel=1e-15)
    assert q.rho_k[0] == pytest.approx(2 - math.sqrt(2), rel=1e-14)
    assert q.sigma == pytest.approx(math.sqrt(2) / (2 - math.sqrt(2)), rel=1e-14)
    assert q.sigma == pytest.approx(2.414, abs=1e-3)


def test_equilateral_min_angle_and_circumdiameter():
    mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]), np.array([[0, 1, 2]]))
    q = mesh_stats(mesh)
    assert q.min_angle == pytest.approx(60.0, abs=1e-12)
    assert q.h_k[0] == pytest.approx(2 / math.sqrt(3), rel=1e-14)


def test_uniform_grid_tau_one():
    q = mesh_stats(make_initial_mesh(Domain.LSHAPE, 4))
    assert q.tau == pytest.approx(1.0, abs=1e-14)
    assert q.h == pytest.approx(math.sqrt(2) / 4)


def test_tau_a_reported():
    mesh = make_initial_mesh(Domain.UNIT_SQUARE, 2).with_boundary(EdgeTag.IMPEDANCE)
    assert mesh_stats(mesh).tau_a == pytest.approx(1.0)
    assert math.isnan(mesh_stats(make_initial_mesh(Domain.UNIT_SQUARE, 2)).tau_a)


@pytest.mark.parametrize("domain", list(Domain))
def test_uniform_refine_conforming(domain):
    mesh = uniform_refine(make_initial_mesh(domain, 1), 3)
    assert hanging_vertices(mesh) == 0
    assert is_conforming(mesh, PERIMETER[domain])


def test_dump_read_roundtrip(tmp_path):
    mesh = make_initial_mesh(Domain.UNIT_SQUARE_WITH_INTERFACE, 2)
    mesh = mesh.with_boundary(lambda m: EdgeTag.IMPEDANCE if m[1] > 0.99 else EdgeTag.DIRICHLET)
    mesh = refine_leb(mesh, {0, 3, 9})
    path = tmp_path / "m.txt"
    dump_mesh(mesh, path)
    text = path.read_text().splitlines()
    assert text[0] == "pwdg-mesh v1"
    back = read_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.regions, mesh.regions)
    assert np.array_equal(back.edge_tags, mesh.edge_tags)
    assert np.array_equal(back.edge_interface, mesh.edge_interface)


def test_marks_survive_refinement():
    mesh = make_initial_mesh(Domain.UNIT_SQUARE_WITH_INTERFACE, 1)
    mesh = mesh.with_boundary(EdgeTag.IMPEDANCE)
    for _ in range(4):
        near = np.flatnonzero(np.abs(mesh.centroids[:, 1]) < 0.3)
        mesh = refine_leb(mesh, near)
    iface = mesh.edge_interface
    assert mesh.edge_lengths[iface].sum() == pytest.approx(2.0, rel=1e-14)
    boundary = mesh.edge_elements[:, 1] < 0
    assert np.all(mesh.edge_tags[boundary] == EdgeTag.IMPEDANCE)
    assert INTERFACE not in set(mesh.edge_tags.tolist())


def test_interior_edges_have_two_owners():
    mesh = refine_leb(make_initial_mesh(Domain.LSHAPE, 2), range(0, 24, 3))
    owners = np.bincount(mesh.tri_edges.ravel(), minlength=mesh.n_edges)
    inner = mesh.edge_elements[:, 1] >= 0
    assert np.all(owners[inner] == 2)
    assert np.all(owners[~inner] == 1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rounds=st.integers(1, 4))
def test_refinement_fuzz(seed, rounds):
    rng = np.random.default_rng(seed)
    mesh = make_initial_mesh(Domain.LSHAPE, 1)
    angle0 = min_angles(mesh).min()
    origin = np.arange(mesh.n_triangles)
    for _ in range(rounds):
        k = int(rng.integers(1, max(2, mesh.n_triangles // 3)))
        marked = rng.choice(mesh.n_triangles, size=k, replace=False)
        new = refine_leb(mesh, marked)
        assert new.h <= mesh.h * (1 + 1e-14)
        assert is_conforming(new, 8.0)
        origin = origin[new.parent]
        mesh = new
    assert hanging_vertices(mesh) == 0
    assert min_angles(mesh).min() >= 0.5 * angle0 - 1e-9
    root = make_initial_mesh(Domain.LSHAPE, 1)
    sums = np.bincount(origin, weights=mesh.areas, minlength=root.n_triangles)
    assert np.allclose(sums, root.areas, rtol=1e-12, atol=0)
    for t in range(mesh.n_triangles):
        corners = root.vertices[root.triangles[origin[t]]]
        T = np.column_stack([corners[1] - corners[0], corners[2] - corners[0]])
        lam = np.linalg.solve(T, (mesh.vertices[mesh.triangles[t]] - corners[0]).T)
        assert np.all(lam >= -1e-12) and np.all(lam.sum(axis=0) <= 1 + 1e-12)


def test_refinement_is_deterministic():
    mesh = make_initial_mesh(Domain.LSHAPE, 2)
    a = refine_leb(mesh, {1, 4, 7})
    b = refine_leb(mesh, [7, 4, 1])
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
