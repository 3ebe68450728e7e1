import numpy as np
import pytest

from polycontact.generators import FracturePlane, Mesh2D, build_cartesian, extrude_2d, perturb_and_cut
from polycontact.mesh import FractureNetwork, PolyMesh, node_side_partition, read_mesh, write_mesh, write_vtk


def closure(m):
    f = m.cell_faces
    s = m.face_area[f][:, None] * m.face_normal[f] * m.cell_sign[:, None]
    return np.linalg.norm(np.add.reduceat(s, m.cell_ptr[:-1], axis=0), axis=1)


def test_cartesian_counts():
    m, net = build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.0)])
    assert m.n_cells == 8
    assert net.n == 4
    m1, net1 = build_cartesian(1, 1, 1)
    assert m1.n_cells == 1 and m1.n_faces == 6 and net1.n == 0
    assert closure(m1).max() < 1e-14


@pytest.mark.parametrize("k", [1, 2, 3])
def test_fracture_face_count(k):
    n = 2 ** k
    _, net = build_cartesian(n, n, n, fracture_planes=[FracturePlane(0, 0.0)])
    assert net.n == 4 ** k
    # + side along the positive axis
    assert np.all(net.normal[:, 0] > 0.99)


def test_plane_not_conforming():
    with pytest.raises(ValueError, match="not grid-conforming"):
        build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.3)])


@pytest.mark.parametrize("tets", [False, True])
def test_geometric_invariants(tets):
    m, _ = build_cartesian(3, 2, 2, tets=tets)
    scale = np.add.reduceat(m.face_area[m.cell_faces], m.cell_ptr[:-1])
    assert (closure(m) <= 1e-12 * scale).all()
    assert np.isclose(m.cell_volume.sum(), 8.0)
    le = np.linalg.norm(m.vertices[m.face_nodes[m._fnext]] - m.vertices[m.face_nodes], axis=1)
    s = np.add.reduceat(le[:, None] * m.face_edge_normal, m.face_ptr[:-1], axis=0)
    assert np.abs(s).max() < 1e-12


def test_perturb_zero_amplitude_is_identity():
    m, net = build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.0)])
    p, pnet = perturb_and_cut(m, net, 0.0, seed=3)
    assert p.n_cells == m.n_cells and p.n_faces == m.n_faces
    assert np.array_equal(p.vertices, m.vertices)
    assert np.allclose(np.sort(p.cell_volume), np.sort(m.cell_volume))
    assert pnet.n == net.n


def test_perturb_deterministic_and_valid():
    m, net = build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.0)])
    a, anet = perturb_and_cut(m, net, 0.2, seed=7)
    b, _ = perturb_and_cut(m, net, 0.2, seed=7)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.face_nodes, b.face_nodes)
    assert (a.cell_volume > 0).all()
    assert np.isclose(a.cell_volume.sum(), 8.0)
    # fracture vertices stay in the plane x = 0
    assert np.abs(a.vertices[np.unique(a.face_nodes[np.isin(a._fseg, anet.faces)]), 0]).max() < 1e-14
    assert (a.face_planarity < 1e-10).all()


def test_perturb_split_areas():
    m, net = build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.0)])
    p, _ = perturb_and_cut(m, net, 0.2, seed=1)
    X = p.vertices
    tri = np.flatnonzero(np.diff(p.face_ptr) == 3)
    pairs = {}
    for f in tri:
        pairs.setdefault(tuple(p.face_cells[f]), []).append(f)
    assert len(pairs) > 0
    for f0, f1 in pairs.values():
        # oriented with respect to the same cell, the two triangles add up to
        # the vector area of the warped quad, half the cross product of its diagonals
        a = p.face_area[f0] * p.face_normal[f0] + p.face_area[f1] * p.face_normal[f1]
        l0, l1 = p.face_loop(f0), p.face_loop(f1)
        sh = np.intersect1d(l0, l1)
        o0, o1 = np.setdiff1d(l0, sh)[0], np.setdiff1d(l1, sh)[0]
        q = 0.5 * np.cross(X[sh[1]] - X[sh[0]], X[o1] - X[o0])
        assert min(np.abs(a - q).max(), np.abs(a + q).max()) < 1e-12


def test_extrude_counts():
    m, net = extrude_2d(Mesh2D(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]], np.zeros((0, 2))))
    assert m.n_cells == 1 and m.n_faces == 5
    m, net = extrude_2d(Mesh2D(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), [[0, 1, 2], [0, 2, 3]], [[0, 2]]))
    assert m.n_cells == 2 and len(m.interior_faces) == 1
    assert net.n == 1 and np.isclose(m.face_area[net.faces[0]], np.sqrt(2))


def test_extrude_fracture_measure():
    n = 5
    x = np.linspace(0, 1, n + 1)
    P = np.concatenate([np.c_[x, np.zeros(n + 1)], np.c_[x, np.ones(n + 1) * 0.5], np.c_[x, -np.ones(n + 1) * 0.5]])
    T = []
    for i in range(n):
        a, b = i, i + 1
        c, d = n + 1 + i, n + 2 + i
        e, f = 2 * (n + 1) + i, 2 * (n + 1) + i + 1
        T += [[a, b, d], [a, d, c], [a, f, b], [a, e, f]]
    S = [[i, i + 1] for i in range(n)]
    m, net = extrude_2d(Mesh2D(P, T, S))
    assert net.n == n
    assert np.allclose(m.face_area[net.faces], 1.0 / n)


def test_node_sides_through_fracture():
    m, net = build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.0)])
    part = node_side_partition(m, net)
    X = m.vertices
    centre = np.flatnonzero(np.all(np.abs(X) < 1e-12, axis=1))[0]
    # interior fracture vertex: two classes of four cells each
    cl = part.classes_of(m, centre)
    assert len(cl) == 2 and all(len(c) == 4 for c in cl)
    corner = np.flatnonzero(np.all(np.abs(X - 1) < 1e-12, axis=1))[0]
    assert len(part.classes_of(m, corner)) == 1


def test_node_sides_three_planes():
    planes = [FracturePlane(0, 0.0), FracturePlane(1, 0.0), FracturePlane(2, 0.0)]
    m, net = build_cartesian(2, 2, 2, fracture_planes=planes)
    part = node_side_partition(m, net)
    centre = np.flatnonzero(np.all(np.abs(m.vertices) < 1e-12, axis=1))[0]
    # eight octants fully separated at the triple point
    assert len(part.classes_of(m, centre)) == 8


def test_node_sides_half_planes():
    # around the z axis: x=0 for y>0 and y=0 for x<0 isolate one column quadrant
    a = FracturePlane(0, 0.0, bounds=((0, 1), (-1, 1)))
    b = FracturePlane(1, 0.0, bounds=((-1, 0), (-1, 1)))
    m, net = build_cartesian(2, 2, 2, fracture_planes=[a, b])
    v = np.flatnonzero(np.all(np.abs(m.vertices) < 1e-12, axis=1))[0]
    assert len(node_side_partition(m, net).classes_of(m, v)) == 2
    # a T junction of three fracture wings gives three classes
    m, net = build_cartesian(2, 2, 2, fracture_planes=[a, FracturePlane(1, 0.0)])
    v = np.flatnonzero(np.all(np.abs(m.vertices) < 1e-12, axis=1))[0]
    assert len(node_side_partition(m, net).classes_of(m, v)) == 3


def test_node_sides_at_tip():
    # immersed fracture patch: a vertex on its tip edge has a single class
    m, net = build_cartesian(4, 4, 4, fracture_planes=[FracturePlane(0, 0.0, bounds=((-0.5, 0.5), (-0.5, 0.5)))])
    part = node_side_partition(m, net)
    X = m.vertices
    tip = np.flatnonzero(np.all(np.abs(X - [0, 0.5, 0]) < 1e-12, axis=1))[0]
    inner = np.flatnonzero(np.all(np.abs(X) < 1e-12, axis=1))[0]
    assert len(part.classes_of(m, tip)) == 1
    assert len(part.classes_of(m, inner)) == 2


def test_partition_is_maximal():
    # brute force: two distinct classes of one vertex cannot be connected
    planes = [FracturePlane(0, 0.0), FracturePlane(2, 0.0, bounds=((-1, 0), (-1, 1)))]
    m, net = build_cartesian(2, 2, 2, fracture_planes=planes)
    part = node_side_partition(m, net)
    for s in range(m.n_vertices):
        classes = part.classes_of(m, s)
        all_cells = sorted(c for cl in classes for c in cl)
        cells_s = sorted(np.flatnonzero([s in m.cell_vertices(k) for k in range(m.n_cells)]))
        assert all_cells == cells_s
        if len(classes) < 2:
            continue
        for a in range(len(classes)):
            for b in range(a + 1, len(classes)):
                for ka in classes[a]:
                    for kb in classes[b]:
                        f = np.flatnonzero(((m.face_cells[:, 0] == ka) & (m.face_cells[:, 1] == kb)) |
                                           ((m.face_cells[:, 0] == kb) & (m.face_cells[:, 1] == ka)))
                        for ff in f:
                            if s in m.face_loop(ff):
                                assert net.is_fracture[ff]


def test_centroid_weights():
    m, _ = build_cartesian(1, 1, 1)
    assert np.allclose(m.face_weights, 0.25)
    t, _ = build_cartesian(1, 1, 1, tets=True)
    assert np.allclose(t.face_weights, 1 / 3)
    p, _ = perturb_and_cut(*build_cartesian(3, 3, 3), 0.25, seed=5)
    s = np.add.reduceat(p.face_weights, p.face_ptr[:-1])
    assert np.abs(s - 1).max() < 1e-13
    xb = np.add.reduceat(p.face_weights[:, None] * p.vertices[p.face_nodes], p.face_ptr[:-1], axis=0)
    assert np.abs(xb - p.face_centroid).max() < 1e-12 * p.face_diameter.max()
    assert (p.face_weights >= 0).all() and (p.cell_weights >= 0).all()
    xc = np.add.reduceat(p.cell_weights[:, None] * p.vertices[p.cv_nodes], p.cv_ptr[:-1], axis=0)
    assert np.abs(xc - p.cell_centroid).max() < 1e-12 * p.cell_diameter.max()


def test_irregular_quad_weights():
    V = np.array([[0, 0, 0], [2, 0, 0], [1.5, 1, 0], [0.2, 0.7, 0], [0.5, 0.4, 1.0]])
    faces = [[0, 1, 2, 3], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
    m = PolyMesh.from_polyhedra(V, [faces])
    f = np.flatnonzero(np.diff(m.face_ptr) == 4)[0]
    w = m.face_weights[m.face_ptr[f]:m.face_ptr[f + 1]]
    x = w @ m.vertices[m.face_loop(f)]
    assert np.abs(x - m.face_centroid[f]).max() < 1e-12
    assert np.isclose(w.sum(), 1.0) and (w >= 0).all()


def test_nonplanar_face_rejected():
    V = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.3], [0, 1, 0], [0.5, 0.5, -1.0]])
    faces = [[0, 1, 2, 3], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
    with pytest.raises(ValueError, match="not planar"):
        PolyMesh.from_polyhedra(V, [faces])


def test_fracture_on_boundary_rejected():
    m, _ = build_cartesian(1, 1, 1)
    with pytest.raises(ValueError):
        FractureNetwork(m, [0])


def test_mesh_file_roundtrip(tmp_path):
    m, net = build_cartesian(2, 2, 2, fracture_planes=[FracturePlane(0, 0.0)], friction=0.3)
    path = tmp_path / "m.txt"
    write_mesh(path, m, net)
    m2, net2 = read_mesh(path)
    assert m2.n_cells == m.n_cells and m2.n_faces == m.n_faces
    assert np.allclose(m2.cell_volume, m.cell_volume)
    assert np.array_equal(net2.faces, net.faces)
    assert np.array_equal(net2.plus_cell, net.plus_cell)
    assert np.allclose(net2.friction, 0.3)
    write_vtk(tmp_path / "m.vtk", m, {"vol": m.cell_volume, "vec": m.cell_centroid})
    txt = (tmp_path / "m.vtk").read_text()
    assert "UNSTRUCTURED_GRID" in txt and "SCALARS vol" in txt and "VECTORS vec" in txt
