"""Mesh generators: structured hexahedra and tetrahedra, random perturbation
with cutting of warped faces, and extrusion of 2D triangulations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mesh import FractureNetwork, PolyMesh, segment_ids


@dataclass
class FracturePlane:
    """Axis-aligned rectangular fracture patch ``x[axis] = value``.

    ``bounds`` gives (lo, hi) ranges of the two remaining axes in increasing
    axis order; None means the whole domain."""

    axis: int
    value: float
    bounds: tuple | None = None
    label: int = 0


def _grid_index(coords, v, what):
    i = np.flatnonzero(np.isclose(coords, v, rtol=0, atol=1e-12 * max(1.0, np.ptp(coords))))
    if len(i) == 0:
        raise ValueError(f"fracture plane {what} is not grid-conforming")
    return i[0]


def _tag_planes(mesh: PolyMesh, planes: Sequence[FracturePlane], axes_coords=None):
    faces, labels = [], []
    X = mesh.vertices
    fseg = segment_ids(mesh.face_ptr)
    interior = mesh.face_cells[:, 1] >= 0
    for pl in planes:
        a = pl.axis
        others = [b for b in range(3) if b != a]
        if axes_coords is not None:
            _grid_index(axes_coords[a], pl.value, pl)
            if pl.bounds is not None:
                for b, (lo, hi) in zip(others, pl.bounds):
                    _grid_index(axes_coords[b], lo, pl)
                    _grid_index(axes_coords[b], hi, pl)
        on = np.abs(X[mesh.face_nodes, a] - pl.value) <= 1e-12 * max(1.0, abs(pl.value))
        inside = on.copy()
        if pl.bounds is not None:
            for b, (lo, hi) in zip(others, pl.bounds):
                xb = X[mesh.face_nodes, b]
                inside &= (xb >= lo - 1e-12) & (xb <= hi + 1e-12)
        allin = np.logical_and.reduceat(inside, mesh.face_ptr[:-1])
        sel = np.flatnonzero(allin & interior)
        faces.append(sel)
        labels.append(np.full(len(sel), pl.label))
    if not faces:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    f = np.concatenate(faces)
    lab = np.concatenate(labels)
    f, idx = np.unique(f, return_index=True)
    return f, lab[idx]


def _plane_normals(planes, faces, labels):
    # n+ along the positive axis of the plane the face belongs to
    nrm = np.zeros((len(faces), 3))
    for pl in planes:
        nrm[labels == pl.label, pl.axis] = 1.0
    return nrm


def build_cartesian(nx, ny, nz, box=((-1, 1), (-1, 1), (-1, 1)), fracture_planes=(), tets=False, **net_kw):
    """Structured hexahedral (or Kuhn tetrahedral) mesh with tagged fractures."""
    xs = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(box, (nx, ny, nz))]
    for pl in fracture_planes:
        _grid_index(xs[pl.axis], pl.value, pl)
    Z, Y, Xg = np.meshgrid(xs[2], xs[1], xs[0], indexing="ij")
    V = np.stack([Xg.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    def cid(i, j, k):
        return i + nx * (j + ny * k)

    if tets:
        k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        corner = lambda d: vid(i + d[0], j + d[1], k + d[2])
        T = []
        for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
            d = np.zeros(3, dtype=int)
            path = [corner(d.copy())]
            for ax in perm:
                d[ax] += 1
                path.append(corner(d.copy()))
            T.append(np.stack(path, axis=1))
        tt = np.stack(T, axis=1).reshape(-1, 4)
        mesh = PolyMesh.from_tets(V, tt)
    else:
        loops, cells = [], []
        # x faces
        k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx + 1), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        loops.append(np.stack([vid(i, j, k), vid(i, j + 1, k), vid(i, j + 1, k + 1), vid(i, j, k + 1)], 1))
        cells.append(np.stack([np.where(i > 0, cid(i - 1, j, k), -1), np.where(i < nx, cid(np.minimum(i, nx - 1), j, k), -1)], 1))
        k, j, i = np.meshgrid(np.arange(nz), np.arange(ny + 1), np.arange(nx), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        loops.append(np.stack([vid(i, j, k), vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j, k)], 1))
        cells.append(np.stack([np.where(j > 0, cid(i, j - 1, k), -1), np.where(j < ny, cid(i, np.minimum(j, ny - 1), k), -1)], 1))
        k, j, i = np.meshgrid(np.arange(nz + 1), np.arange(ny), np.arange(nx), indexing="ij")
        i, j, k = i.ravel(), j.ravel(), k.ravel()
        loops.append(np.stack([vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k)], 1))
        cells.append(np.stack([np.where(k > 0, cid(i, j, k - 1), -1), np.where(k < nz, cid(i, j, np.minimum(k, nz - 1)), -1)], 1))
        L = np.concatenate(loops)
        C = np.concatenate(cells)
        mesh = PolyMesh(V, np.arange(len(L) + 1) * 4, L.ravel(), C)
    faces, labels = _tag_planes(mesh, fracture_planes, xs)
    net = FractureNetwork(mesh, faces, label=labels, plus_normal=_plane_normals(fracture_planes, faces, labels), **net_kw)
    return mesh, net


def _vertex_lengths(mesh):
    e = mesh.edges
    h = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(h, e[:, 0], mesh.edge_length)
    np.minimum.at(h, e[:, 1], mesh.edge_length)
    return h


def perturb_and_cut(mesh: PolyMesh, net: FractureNetwork, amplitude: float, seed: int = 0):
    """Randomly move vertices by up to ``amplitude`` times the shortest incident
    edge; boundary and fracture vertices only move within their planes.
    Warped quadrilaterals are split along their first diagonal."""
    rng = np.random.default_rng(seed)
    nv = mesh.n_vertices
    disp = rng.uniform(-1.0, 1.0, size=(nv, 3)) * (amplitude * _vertex_lengths(mesh))[:, None]
    fseg = segment_ids(mesh.face_ptr)
    cons = np.zeros((nv, 3), dtype=bool)
    constrained = (mesh.face_cells[:, 1] < 0) | net.is_fracture
    for a in range(3):
        axial = constrained & (np.abs(mesh.face_normal[:, a]) > 1 - 1e-12)
        cons[mesh.face_nodes[axial[fseg]], a] = True
    nonaxial = constrained & (np.abs(mesh.face_normal).max(axis=1) < 1 - 1e-12)
    if nonaxial.any():
        raise ValueError("perturb_and_cut expects axis-aligned boundary and fracture faces")
    disp[cons] = 0.0
    X = mesh.vertices + disp
    if amplitude == 0:
        X = mesh.vertices.copy()
    # split warped faces
    loops, fc, old = [], [], []
    ptr = mesh.face_ptr
    for f in range(mesh.n_faces):
        lp = mesh.face_nodes[ptr[f]:ptr[f + 1]]
        if len(lp) == 4 and not net.is_fracture[f]:
            P = X[lp]
            n = np.cross(P[2] - P[0], P[3] - P[1])
            n /= np.linalg.norm(n)
            dev = np.abs((P - P.mean(axis=0)) @ n).max()
            if dev > 1e-10 * mesh.face_diameter[f]:
                loops += [lp[[0, 1, 2]], lp[[0, 2, 3]]]
                fc += [mesh.face_cells[f]] * 2
                old += [f, f]
                continue
        loops.append(lp)
        fc.append(mesh.face_cells[f])
        old.append(f)
    old = np.array(old)
    nptr = np.concatenate([[0], np.cumsum([len(l) for l in loops])])
    try:
        out = PolyMesh(X, nptr, np.concatenate(loops), np.array(fc))
    except ValueError as exc:
        raise ValueError(f"perturbation rejected: {exc}") from exc
    newf = np.flatnonzero(net.is_fracture[old])
    nnet = FractureNetwork(out, newf, label=net.label[net.index[old[newf]]],
                           aperture=net.aperture[net.index[old[newf]]],
                           friction=net.friction[net.index[old[newf]]],
                           normal_perm=net.normal_perm[net.index[old[newf]]],
                           plus_normal=net.normal[net.index[old[newf]]])
    return out, nnet


# ----------------------------------------------------------------------
# 2D meshes and extrusion

@dataclass
class Mesh2D:
    """Polygonal 2D mesh with fracture segments (pairs of vertex ids)."""

    points: np.ndarray
    polygons: list | np.ndarray
    fracture_segments: np.ndarray
    fracture_labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, float)
        self.fracture_segments = np.asarray(self.fracture_segments, dtype=np.int64).reshape(-1, 2)
        if self.fracture_labels is None:
            self.fracture_labels = np.zeros(len(self.fracture_segments), dtype=np.int64)
        self.fracture_labels = np.asarray(self.fracture_labels, dtype=np.int64)


def extrude_2d(m2: Mesh2D, thickness: float = 1.0, **net_kw):
    """One layer of prisms; fracture segments become vertical quad faces."""
    P = m2.points
    n = len(P)
    V = np.concatenate([np.c_[P, np.zeros(n)], np.c_[P, np.full(n, thickness)]])
    polys = [np.asarray(p, dtype=np.int64) for p in m2.polygons]
    nc = len(polys)
    loops, fc = [], []
    edge_cells = {}
    for k, p in enumerate(polys):
        loops.append(p)
        fc.append((k, -1))
        loops.append(p + n)
        fc.append((k, -1))
        for a, b in zip(p, np.roll(p, -1)):
            key = (min(a, b), max(a, b))
            edge_cells.setdefault(key, []).append(k)
    side_index = {}
    for (a, b), cs in edge_cells.items():
        if len(cs) > 2:
            raise ValueError(f"2D edge {(a, b)} shared by more than two polygons")
        side_index[(a, b)] = len(loops)
        loops.append(np.array([a, b, b + n, a + n]))
        fc.append((cs[0], cs[1] if len(cs) == 2 else -1))
    ptr = np.concatenate([[0], np.cumsum([len(l) for l in loops])])
    mesh = PolyMesh(V, ptr, np.concatenate(loops), np.array(fc))
    faces = []
    for a, b in m2.fracture_segments:
        key = (min(a, b), max(a, b))
        if key not in side_index:
            raise ValueError(f"fracture segment {key} is not a mesh edge")
        faces.append(side_index[key])
    faces = np.array(faces, dtype=np.int64)
    net = FractureNetwork(mesh, faces, label=m2.fracture_labels, **net_kw)
    return mesh, net


def triangulate_pslg(points, segments, markers, max_area, min_angle=30.0, size_fn=None, max_passes=12):
    """Quality triangulation of a planar straight-line graph.

    ``markers`` label segments (0 = boundary, i+1 = fracture i). With
    ``size_fn`` (target edge length as a function of position), triangles are
    refined until their area is below ``0.433 * size_fn(centroid)**2``.
    Returns points, triangles and the subdivided marked segments."""
    import triangle as tr

    geo = dict(vertices=np.asarray(points, float), segments=np.asarray(segments, dtype=np.int32),
               segment_markers=np.asarray(markers, dtype=np.int32).reshape(-1, 1) + 1)
    out = tr.triangulate(geo, f"pq{min_angle:g}a{max_area:.17g}")
    if size_fn is not None:
        for _ in range(max_passes):
            xy, T = out["vertices"], out["triangles"]
            c = xy[T].mean(axis=1)
            target = 0.433 * size_fn(c) ** 2
            a, b = xy[T[:, 1]] - xy[T[:, 0]], xy[T[:, 2]] - xy[T[:, 0]]
            area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
            if (area <= 1.05 * target).all():
                break
            out["triangle_max_area"] = np.minimum(target, max_area).reshape(-1, 1)
            out = tr.triangulate(out, f"rpq{min_angle:g}a")
    segs = out["segments"]
    mk = out["segment_markers"].ravel() - 1
    return out["vertices"], out["triangles"], segs, mk


def refine_uniform(points, triangles, segments):
    """Split each triangle into four through edge midpoints; segments in two."""
    points = np.asarray(points, float)
    T = np.asarray(triangles, dtype=np.int64)
    E = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    uE, inv = np.unique(E, axis=0, return_inverse=True)
    inv = inv.ravel()
    n = len(points)
    mids = 0.5 * (points[uE[:, 0]] + points[uE[:, 1]])
    P = np.concatenate([points, mids])
    nt = len(T)
    m01, m12, m20 = inv[:nt] + n, inv[nt:2 * nt] + n, inv[2 * nt:] + n
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    newT = np.concatenate([np.stack([a, m01, m20], 1), np.stack([m01, b, m12], 1),
                           np.stack([m20, m12, c], 1), np.stack([m01, m12, m20], 1)])
    S = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
    key = {tuple(e): i for i, e in enumerate(uE)}
    mid = np.array([key[tuple(sorted(s))] for s in S], dtype=np.int64) + n
    newS = np.concatenate([np.stack([S[:, 0], mid], 1), np.stack([mid, S[:, 1]], 1)])
    order = np.argsort(np.concatenate([np.arange(len(S)) * 2, np.arange(len(S)) * 2 + 1]))
    return P, newT, newS[order], np.repeat(np.arange(len(S)), 2)


def insert_fracture_midpoints(points, triangles, segments):
    """Turn triangles adjacent to fracture edges into 4+ node polygons by
    inserting the edge midpoint (the refinement option for fracture edges)."""
    points = np.asarray(points, float)
    S = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
    mid_of = {}
    P = list(points)
    for a, b in S:
        mid_of[(min(a, b), max(a, b))] = len(P)
        P.append(0.5 * (points[a] + points[b]))
    polys = []
    for t in np.asarray(triangles, dtype=np.int64):
        p = []
        for a, b in zip(t, np.roll(t, -1)):
            p.append(a)
            key = (min(a, b), max(a, b))
            if key in mid_of:
                p.append(mid_of[key])
        polys.append(p)
    newS = []
    for a, b in S:
        m = mid_of[(min(a, b), max(a, b))]
        newS += [(a, m), (m, b)]
    return np.array(P), polys, np.array(newS, dtype=np.int64), np.repeat(np.arange(len(S)), 2)
