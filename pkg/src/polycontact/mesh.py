"""Polytopal meshes conforming to a planar fracture network.

Connectivity is stored in flat CSR-like arrays:

* faces are ordered vertex loops ``face_nodes[face_ptr[f]:face_ptr[f+1]]``,
  oriented so that the loop normal points out of ``face_cells[f, 0]``;
* cells are face lists ``cell_faces[cell_ptr[k]:cell_ptr[k+1]]`` with
  ``cell_sign`` = +1 when the stored face normal is outward for the cell;
* cell vertex sets ``cv_nodes[cv_ptr[k]:cv_ptr[k+1]]`` are sorted.

All geometry is computed once at construction and the object is treated as
immutable afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

PLANARITY_TOL = 1e-10


def segment_ids(ptr: np.ndarray) -> np.ndarray:
    """Owner segment of every entry of a CSR flat array."""
    return np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))


def _next_in_loop(ptr):
    seg = segment_ids(ptr)
    pos = np.arange(ptr[-1])
    loc = pos - ptr[seg]
    n = np.diff(ptr)[seg]
    return ptr[seg] + (loc + 1) % n


def _max_pairwise(points_flat, ptr):
    """Max pairwise distance per segment (grouped by segment length)."""
    nseg = len(ptr) - 1
    out = np.zeros(nseg)
    lens = np.diff(ptr)
    for n in np.unique(lens):
        sel = np.flatnonzero(lens == n)
        idx = ptr[sel][:, None] + np.arange(n)[None, :]
        P = points_flat[idx]
        d = np.linalg.norm(P[:, :, None, :] - P[:, None, :, :], axis=-1)
        out[sel] = d.reshape(len(sel), -1).max(axis=1)
    return out


def _minnorm_weights(A, b):
    """Minimum-norm nonnegative solution of A w = b (batched, active set).

    A: (m, r, n), b: (r,). Returns (m, n) weights and a per-row failure flag.
    """
    m, r, n = A.shape
    w = np.zeros((m, n))
    fail = np.zeros(m, dtype=bool)
    free = np.ones((m, n), dtype=bool)
    todo = np.arange(m)
    for _ in range(n + 1):
        if len(todo) == 0:
            break
        Af = A[todo] * free[todo][:, None, :]
        M = Af @ Af.transpose(0, 2, 1)
        try:
            y = np.linalg.solve(M, np.broadcast_to(b, (len(todo), r))[..., None])[..., 0]
        except np.linalg.LinAlgError:
            # singular after freezing too many entries: solve row by row
            y = np.zeros((len(todo), r))
            for i in range(len(todo)):
                y[i] = np.linalg.lstsq(M[i], b, rcond=None)[0]
        wt = np.einsum("mrn,mr->mn", Af, y)
        w[todo] = wt
        neg = wt < -1e-14
        if not neg.any():
            break
        bad = neg.any(axis=1)
        free[todo[bad]] &= ~neg[bad]
        todo = todo[bad]
    res = np.abs(np.einsum("mrn,mn->mr", A, w) - b).max(axis=1)
    fail |= (w < -1e-14).any(axis=1) | (res > 1e-8)
    return np.maximum(w, 0.0) * (w > -1e-14), fail


@dataclass(eq=False)
class PolyMesh:
    vertices: np.ndarray
    face_ptr: np.ndarray
    face_nodes: np.ndarray
    face_cells: np.ndarray
    validate: bool = True
    n_cells: int = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.face_ptr = np.asarray(self.face_ptr, dtype=np.int64)
        self.face_nodes = np.asarray(self.face_nodes, dtype=np.int64).copy()
        fc = np.asarray(self.face_cells, dtype=np.int64).copy()
        swap = fc[:, 0] < 0
        fc[swap] = fc[swap][:, ::-1]
        if (fc[:, 0] < 0).any():
            raise ValueError("face without any neighbour cell")
        self.face_cells = fc
        self.n_cells = int(fc.max()) + 1
        self._build_topology()
        self._orient_faces()
        self._face_geometry()
        self._cell_geometry()
        self._edges()
        self._weights()
        if self.validate:
            self.check()

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.face_ptr) - 1

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def face_loop(self, f):
        return self.face_nodes[self.face_ptr[f]:self.face_ptr[f + 1]]

    def cell_face_list(self, k):
        s = slice(self.cell_ptr[k], self.cell_ptr[k + 1])
        return self.cell_faces[s], self.cell_sign[s]

    def cell_vertices(self, k):
        return self.cv_nodes[self.cv_ptr[k]:self.cv_ptr[k + 1]]

    def cell_vertex_index(self, cells, verts):
        """Flat position in the cv arrays of (cell, vertex) pairs."""
        keys = np.asarray(cells, dtype=np.int64) * self.n_vertices + verts
        pos = np.searchsorted(self._cv_keys, keys)
        if np.any(self._cv_keys[np.minimum(pos, len(self._cv_keys) - 1)] != keys):
            raise KeyError("vertex not in cell")
        return pos

    # ------------------------------------------------------------------
    def _build_topology(self):
        nf = self.n_faces
        fc = self.face_cells
        inner = fc[:, 1] >= 0
        cells = np.concatenate([fc[:, 0], fc[inner, 1]])
        faces = np.concatenate([np.arange(nf), np.flatnonzero(inner)])
        sign = np.concatenate([np.ones(nf), -np.ones(inner.sum())])
        order = np.lexsort((faces, cells))
        self.cell_faces = faces[order]
        self.cell_sign = sign[order]
        self.cell_ptr = np.concatenate([[0], np.cumsum(np.bincount(cells, minlength=self.n_cells))])
        if (np.diff(self.cell_ptr) < 3).any():
            raise ValueError("cell with fewer than 3 faces")
        # cell vertex sets
        fseg = segment_ids(self.face_ptr)
        fnl = np.diff(self.face_ptr)
        cf_cell = segment_ids(self.cell_ptr)
        rep_cell = np.repeat(cf_cell, fnl[self.cell_faces])
        starts = self.face_ptr[self.cell_faces]
        idx = np.repeat(starts - np.concatenate([[0], np.cumsum(fnl[self.cell_faces])[:-1]]),
                        fnl[self.cell_faces]) + np.arange(fnl[self.cell_faces].sum())
        verts = self.face_nodes[idx]
        keys = np.unique(rep_cell * self.n_vertices + verts)
        self._cv_keys = keys
        self.cv_nodes = keys % self.n_vertices
        cvc = keys // self.n_vertices
        self.cv_ptr = np.concatenate([[0], np.cumsum(np.bincount(cvc, minlength=self.n_cells))])
        del fseg

    def _loop_area_vectors(self):
        X = self.vertices
        ptr = self.face_ptr
        seg = segment_ids(ptr)
        nl = np.diff(ptr)
        v = X[self.face_nodes]
        c0 = np.add.reduceat(v, ptr[:-1], axis=0) / nl[:, None]
        nxt = _next_in_loop(ptr)
        a = v - c0[seg]
        b = X[self.face_nodes[nxt]] - c0[seg]
        cr = 0.5 * np.cross(a, b)
        return np.add.reduceat(cr, ptr[:-1], axis=0), cr, c0, nxt, seg

    def _orient_faces(self):
        av, _, c0, _, _ = self._loop_area_vectors()
        X = self.vertices
        cnt = np.diff(self.cv_ptr)
        cc0 = np.add.reduceat(X[self.cv_nodes], self.cv_ptr[:-1], axis=0) / cnt[:, None]
        flip = np.einsum("ij,ij->i", av, c0 - cc0[self.face_cells[:, 0]]) < 0
        if flip.any():
            ptr = self.face_ptr
            seg = segment_ids(ptr)
            loc = np.arange(ptr[-1]) - ptr[seg]
            rev = ptr[seg] + np.diff(ptr)[seg] - 1 - loc
            src = np.where(flip[seg], rev, np.arange(ptr[-1]))
            self.face_nodes = self.face_nodes[src]

    def _face_geometry(self):
        av, cr, c0, nxt, seg = self._loop_area_vectors()
        X = self.vertices
        area = np.linalg.norm(av, axis=1)
        if (area <= 0).any():
            raise ValueError(f"face {int(np.argmin(area))} has non-positive area")
        nrm = av / area[:, None]
        w = np.einsum("ij,ij->i", cr, nrm[seg])
        tc = (c0[seg] + X[self.face_nodes] + X[self.face_nodes[nxt]]) / 3.0
        cen = np.add.reduceat(w[:, None] * tc, self.face_ptr[:-1], axis=0) / np.add.reduceat(w, self.face_ptr[:-1])[:, None]
        self.face_area = area
        self.face_normal = nrm
        self.face_centroid = cen
        self.face_diameter = _max_pairwise(X[self.face_nodes], self.face_ptr)
        dev = np.abs(np.einsum("ij,ij->i", X[self.face_nodes] - cen[seg], nrm[seg]))
        self.face_planarity = np.maximum.reduceat(dev, self.face_ptr[:-1]) / self.face_diameter
        self._fseg = seg
        self._fnext = nxt

    def _cell_geometry(self):
        X = self.vertices
        cnt = np.diff(self.cv_ptr)
        cc0 = np.add.reduceat(X[self.cv_nodes], self.cv_ptr[:-1], axis=0) / cnt[:, None]
        cseg = segment_ids(self.cell_ptr)
        f = self.cell_faces
        nout = self.face_normal[f] * self.cell_sign[:, None]
        pv = self.face_area[f] * np.einsum("ij,ij->i", nout, self.face_centroid[f] - cc0[cseg]) / 3.0
        self.subpyramid_volume = pv
        vol = np.add.reduceat(pv, self.cell_ptr[:-1])
        if (vol <= 0).any():
            raise ValueError(f"cell {int(np.argmin(vol))} has non-positive volume")
        pc = (3.0 * self.face_centroid[f] + cc0[cseg]) / 4.0
        self.cell_volume = vol
        self.cell_centroid = np.add.reduceat(pv[:, None] * pc, self.cell_ptr[:-1], axis=0) / vol[:, None]
        self.cell_diameter = _max_pairwise(X[self.cv_nodes], self.cv_ptr)
        self._cseg = cseg

    def _edges(self):
        a = self.face_nodes
        b = self.face_nodes[self._fnext]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * self.n_vertices + hi
        ukeys, inv = np.unique(keys, return_inverse=True)
        self.edges = np.stack([ukeys // self.n_vertices, ukeys % self.n_vertices], axis=1)
        self.face_edges = inv  # aligned with face_nodes: edge from loop[i] to loop[i+1]
        X = self.vertices
        t = X[b] - X[a]
        le = np.linalg.norm(t, axis=1)
        self.edge_length = np.linalg.norm(X[self.edges[:, 1]] - X[self.edges[:, 0]], axis=1)
        self.face_edge_normal = np.cross(t, self.face_normal[self._fseg]) / le[:, None]
        bf = self.boundary_faces
        bmask = np.zeros(self.n_faces, dtype=bool)
        bmask[bf] = True
        self.boundary_vertex = np.zeros(self.n_vertices, dtype=bool)
        self.boundary_vertex[a[bmask[self._fseg]]] = True
        self.boundary_edge = np.zeros(len(self.edges), dtype=bool)
        self.boundary_edge[inv[bmask[self._fseg]]] = True

    def _weights(self):
        X = self.vertices
        # faces: local in-plane coordinates
        n = self.face_normal
        t1 = np.cross(n, np.eye(3)[np.argmin(np.abs(n), axis=1)])
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        t2 = np.cross(n, t1)
        rel = X[self.face_nodes] - self.face_centroid[self._fseg]
        h = self.face_diameter[self._fseg]
        xi = np.einsum("ij,ij->i", rel, t1[self._fseg]) / h
        eta = np.einsum("ij,ij->i", rel, t2[self._fseg]) / h
        rows = np.stack([np.ones_like(xi), xi, eta], axis=1)
        self.face_weights = self._solve_weights(rows, self.face_ptr, "face")
        rel = X[self.cv_nodes] - self.cell_centroid[segment_ids(self.cv_ptr)]
        rel /= self.cell_diameter[segment_ids(self.cv_ptr)][:, None]
        rows = np.concatenate([np.ones((len(rel), 1)), rel], axis=1)
        self.cell_weights = self._solve_weights(rows, self.cv_ptr, "cell")

    @staticmethod
    def _solve_weights(rows, ptr, what):
        r = rows.shape[1]
        out = np.zeros(len(rows))
        lens = np.diff(ptr)
        b = np.zeros(r)
        b[0] = 1.0
        for n in np.unique(lens):
            sel = np.flatnonzero(lens == n)
            idx = ptr[sel][:, None] + np.arange(n)[None, :]
            A = rows[idx].transpose(0, 2, 1)
            w, fail = _minnorm_weights(A, b)
            if fail.any():
                raise ValueError(f"no nonnegative centroid weights for {what} {int(sel[np.argmax(fail)])}")
            out[idx] = w
        return out

    # ------------------------------------------------------------------
    def check(self, tol=1e-12):
        """Assert the geometric invariants; raises ValueError."""
        if (self.face_planarity > PLANARITY_TOL).any():
            f = int(np.argmax(self.face_planarity))
            raise ValueError(f"face {f} is not planar (deviation {self.face_planarity[f]:.2e} h)")
        f = self.cell_faces
        s = self.face_area[f][:, None] * self.face_normal[f] * self.cell_sign[:, None]
        clos = np.linalg.norm(np.add.reduceat(s, self.cell_ptr[:-1], axis=0), axis=1)
        scale = np.add.reduceat(self.face_area[f], self.cell_ptr[:-1])
        if (clos > tol * scale).any():
            raise ValueError(f"cell {int(np.argmax(clos / scale))} is not closed")
        le = np.linalg.norm(self.vertices[self.face_nodes[self._fnext]] - self.vertices[self.face_nodes], axis=1)
        s = le[:, None] * self.face_edge_normal
        clos = np.linalg.norm(np.add.reduceat(s, self.face_ptr[:-1], axis=0), axis=1)
        scale = np.add.reduceat(le, self.face_ptr[:-1])
        if (clos > tol * scale).any():
            raise ValueError(f"face {int(np.argmax(clos / scale))} boundary is not closed")
        if (self.subpyramid_volume <= 0).any():
            k = int(self._cseg[np.argmin(self.subpyramid_volume)])
            raise ValueError(f"cell {k} is not star-shaped with respect to its vertex mean")

    # ------------------------------------------------------------------
    @classmethod
    def from_polyhedra(cls, vertices, cells_faces, **kw):
        """Build from cells given as lists of vertex loops; shared faces are matched."""
        loops, owners = [], []
        for k, faces in enumerate(cells_faces):
            for lp in faces:
                loops.append(list(lp))
                owners.append(k)
        key = {}
        face_loops, fcells = [], []
        for lp, k in zip(loops, owners):
            kk = tuple(sorted(lp))
            if kk in key:
                fcells[key[kk]][1] = k
            else:
                key[kk] = len(face_loops)
                face_loops.append(lp)
                fcells.append([k, -1])
        ptr = np.concatenate([[0], np.cumsum([len(l) for l in face_loops])])
        return cls(np.asarray(vertices, float), ptr, np.concatenate(face_loops), np.array(fcells), **kw)

    @classmethod
    def from_tets(cls, vertices, tets, **kw):
        tets = np.asarray(tets, dtype=np.int64)
        nt = len(tets)
        loc = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
        tri = tets[:, loc].reshape(-1, 3)
        owner = np.repeat(np.arange(nt), 4)
        key = np.sort(tri, axis=1)
        nv = len(vertices)
        k = (key[:, 0] * nv + key[:, 1]) * nv + key[:, 2]
        order = np.argsort(k, kind="stable")
        ks = k[order]
        first = np.concatenate([[True], ks[1:] != ks[:-1]])
        fid = np.cumsum(first) - 1
        nf = fid[-1] + 1
        fc = -np.ones((nf, 2), dtype=np.int64)
        fc[fid[first], 0] = owner[order][first]
        second = ~first
        fc[fid[second], 1] = owner[order][second]
        nodes = tri[order][first]
        ptr = np.arange(nf + 1) * 3
        return cls(np.asarray(vertices, float), ptr, nodes.ravel(), fc, **kw)


@dataclass(eq=False)
class FractureNetwork:
    """Fracture faces of a mesh with their + side and per-face parameters."""

    mesh: PolyMesh
    faces: np.ndarray
    label: np.ndarray | None = None
    aperture: np.ndarray | float = 1e-3
    friction: np.ndarray | float = 0.0
    normal_perm: np.ndarray | float = 1e-15
    plus_normal: np.ndarray | None = None

    def __post_init__(self):
        m = self.mesh
        self.faces = np.asarray(self.faces, dtype=np.int64)
        order = np.argsort(self.faces)
        self.faces = self.faces[order]
        n = len(self.faces)
        if n and (m.face_cells[self.faces, 1] < 0).any():
            raise ValueError("fracture face on the domain boundary")
        if self.label is None:
            self.label = np.zeros(n, dtype=np.int64)
        else:
            self.label = np.asarray(self.label, dtype=np.int64)[order]
        for name in ("aperture", "friction", "normal_perm"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            if np.ndim(getattr(self, name)) == 1:
                v = v[order]
            setattr(self, name, v)
        if (self.aperture <= 0).any():
            raise ValueError("contact aperture must be positive")
        nrm = m.face_normal[self.faces]
        if self.plus_normal is None:
            # deterministic + side: largest-magnitude normal component positive
            big = np.argmax(np.abs(nrm) + 1e-9 * np.arange(3)[::-1], axis=1)
            agree = np.sign(nrm[np.arange(n), big])
        else:
            hint = np.asarray(self.plus_normal, float).reshape(-1, 3)
            if len(hint) == n:
                hint = hint[order]
            agree = np.sign(np.einsum("ij,ij->i", nrm, np.broadcast_to(hint, nrm.shape)))
            if (agree == 0).any():
                raise ValueError("+ normal hint orthogonal to a fracture face")
        # stored face normal is outward of face_cells[:,0]
        fc = m.face_cells[self.faces]
        self.plus_cell = np.where(agree > 0, fc[:, 0], fc[:, 1])
        self.minus_cell = np.where(agree > 0, fc[:, 1], fc[:, 0])
        self.normal = nrm * agree[:, None]
        self.face_sign = agree  # stored normal = face_sign * n+
        self.index = -np.ones(m.n_faces, dtype=np.int64)
        self.index[self.faces] = np.arange(n)
        self.is_fracture = self.index >= 0
        self.frame = local_frames(self.normal)
        self._edges()

    @property
    def n(self):
        return len(self.faces)

    def _edges(self):
        m = self.mesh
        fmask = self.is_fracture[m._fseg]
        fe = m.face_edges[fmask]
        self.edges, counts = np.unique(fe, return_counts=True)
        self.edge_face_count = counts
        self.vertices = np.unique(m.face_nodes[fmask])
        bd = m.boundary_edge[self.edges]
        self.edge_kind = np.where(bd, "boundary", np.where(counts == 1, "tip", np.where(counts == 2, "interior", "intersection")))
        self.edge_index = -np.ones(len(m.edges), dtype=np.int64)
        self.edge_index[self.edges] = np.arange(len(self.edges))

    def tip_distance_mask(self, fraction=0.05):
        """Faces whose centroid is farther than ``fraction`` of the fracture
        length from every tip, per fracture label (1D-like fractures)."""
        m = self.mesh
        keep = np.ones(self.n, dtype=bool)
        tips = self.edges[self.edge_kind == "tip"]
        for lab in np.unique(self.label):
            sel = self.label == lab
            fs = self.faces[sel]
            mask = np.isin(m.face_edges, tips) & np.isin(m._fseg, fs)
            te = np.unique(m.face_edges[mask])
            if len(te) == 0:
                continue
            tmid = 0.5 * (m.vertices[m.edges[te, 0]] + m.vertices[m.edges[te, 1]])
            # fracture size ~ sum of face areas / extent normal to plane
            ext = m.face_centroid[fs]
            length = max(np.ptp(ext, axis=0).max(), m.face_diameter[fs].max())
            d = np.linalg.norm(ext[:, None, :2] - tmid[None, :, :2], axis=-1).min(axis=1)
            keep[np.flatnonzero(sel)] = d >= fraction * length
        return keep


def local_frames(normal):
    """Orthonormal frames (n, t1, t2) per face, shape (n, 3, 3) rows.

    For vertical faces t2 = e_z, so that 2D extruded runs can drop it."""
    n = np.asarray(normal, float)
    ez = np.array([0.0, 0.0, 1.0])
    vertical = np.abs(n[:, 2]) < 1e-12
    t1 = np.where(vertical[:, None], np.cross(ez, n), 0.0)
    other = ~vertical
    if other.any():
        nn = n[other]
        a = np.eye(3)[np.argmin(np.abs(nn), axis=1)]
        tt = np.cross(nn, a)
        t1[other] = tt
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n, t1)
    return np.stack([n, t1, t2], axis=1)


@dataclass(eq=False)
class NodeSidePartition:
    cv_side: np.ndarray  # side id per cell-vertex incidence (aligned with cv arrays)
    side_vertex: np.ndarray

    @property
    def n_sides(self):
        return len(self.side_vertex)

    def classes_of(self, mesh: PolyMesh, s: int):
        """Cell sets of the side classes of vertex ``s``."""
        cells = segment_ids(mesh.cv_ptr)
        sel = mesh.cv_nodes == s
        out = {}
        for c, sd in zip(cells[sel], self.cv_side[sel]):
            out.setdefault(int(sd), []).append(int(c))
        return [sorted(v) for _, v in sorted(out.items())]


def node_side_partition(mesh: PolyMesh, net: FractureNetwork | None) -> NodeSidePartition:
    m = mesh
    ninc = m.cv_ptr[-1]
    inner = m.face_cells[:, 1] >= 0
    if net is not None:
        inner &= ~net.is_fracture
    fsel = inner[m._fseg]
    verts = m.face_nodes[fsel]
    f = m._fseg[fsel]
    a = m.cell_vertex_index(m.face_cells[f, 0], verts)
    b = m.cell_vertex_index(m.face_cells[f, 1], verts)
    G = sps.coo_matrix((np.ones(len(a)), (a, b)), shape=(ninc, ninc))
    _, lab = connected_components(G, directed=False)
    cells = segment_ids(m.cv_ptr)
    # order classes by (vertex, smallest cell)
    first_cell = np.full(lab.max() + 1, np.iinfo(np.int64).max)
    np.minimum.at(first_cell, lab, cells)
    vert = np.zeros(lab.max() + 1, dtype=np.int64)
    vert[lab] = m.cv_nodes
    order = np.lexsort((first_cell, vert))
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return NodeSidePartition(cv_side=rank[lab], side_vertex=vert[order])


# ----------------------------------------------------------------------
# text format and VTK

def write_mesh(path, mesh: PolyMesh, net: FractureNetwork | None = None):
    nfr = 0 if net is None else net.n
    with open(path, "w") as fh:
        fh.write(f"POLYMESH {mesh.n_vertices} {mesh.n_faces} {mesh.n_cells} {nfr}\n")
        fh.write("VERTICES\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        fh.write("FACES\n")
        for f in range(mesh.n_faces):
            lp = mesh.face_loop(f)
            fh.write(f"{len(lp)} " + " ".join(map(str, lp)) + "\n")
        fh.write("CELLS\n")
        for k in range(mesh.n_cells):
            fl, _ = mesh.cell_face_list(k)
            fh.write(f"{len(fl)} " + " ".join(map(str, fl)) + "\n")
        fh.write("FRACTURE_FACES\n")
        if net is not None:
            for i in range(net.n):
                fh.write(f"{net.faces[i]} {net.plus_cell[i]} {net.label[i]} "
                         f"{net.aperture[i]:.17g} {net.friction[i]:.17g} {net.normal_perm[i]:.17g}\n")


def read_mesh(path):
    with open(path) as fh:
        lines = [l.split() for l in fh if l.strip()]
    hdr = lines[0]
    nv, nf, nc, nfr = map(int, hdr[1:5])
    i = 2
    X = np.array([[float(t) for t in l] for l in lines[i:i + nv]])
    i += nv + 1
    loops = [list(map(int, l[1:])) for l in lines[i:i + nf]]
    i += nf + 1
    cells = [list(map(int, l[1:])) for l in lines[i:i + nc]]
    i += nc + 1
    fc = -np.ones((nf, 2), dtype=np.int64)
    for k, fl in enumerate(cells):
        for f in fl:
            fc[f, 0 if fc[f, 0] < 0 else 1] = k
    ptr = np.concatenate([[0], np.cumsum([len(l) for l in loops])])
    mesh = PolyMesh(X, ptr, np.concatenate(loops), fc)
    if nfr == 0:
        return mesh, None
    rows = lines[i:i + nfr]
    faces = np.array([int(r[0]) for r in rows])
    plus = np.array([int(r[1]) for r in rows])
    extra = np.array([[float(t) for t in r[2:6]] for r in rows]) if len(rows[0]) >= 6 else None
    nrm = mesh.face_normal[faces] * np.where(mesh.face_cells[faces, 0] == plus, 1.0, -1.0)[:, None]
    kw = {}
    if extra is not None:
        kw = dict(label=extra[:, 0].astype(int), aperture=extra[:, 1], friction=extra[:, 2], normal_perm=extra[:, 3])
    net = FractureNetwork(mesh, faces, plus_normal=nrm, **kw)
    return mesh, net


def write_vtk(path, mesh: PolyMesh, cell_data=None, title="polycontact"):
    """Legacy ASCII VTK unstructured grid; tetrahedra as type 10, the rest as polyhedra."""
    cell_data = cell_data or {}
    conn, types = [], []
    for k in range(mesh.n_cells):
        fl, _ = mesh.cell_face_list(k)
        cv = mesh.cell_vertices(k)
        if len(fl) == 4 and len(cv) == 4:
            conn.append([4] + list(cv))
            types.append(10)
        else:
            stream = [len(fl)]
            for f in fl:
                lp = mesh.face_loop(f)
                stream += [len(lp)] + list(lp)
            conn.append([len(stream)] + stream)
            types.append(42)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 4.2\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        np.savetxt(fh, mesh.vertices, fmt="%.10g")
        fh.write(f"CELLS {mesh.n_cells} {sum(len(c) for c in conn)}\n")
        for c in conn:
            fh.write(" ".join(map(str, c)) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        fh.write("\n".join(map(str, types)) + "\n")
        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_cells}\n")
            for name, val in cell_data.items():
                val = np.asarray(val, float)
                if val.ndim == 1:
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    np.savetxt(fh, val, fmt="%.10g")
                else:
                    fh.write(f"VECTORS {name} double\n")
                    np.savetxt(fh, val, fmt="%.10g")
