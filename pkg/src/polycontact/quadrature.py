"""Simplex quadrature (collapsed Gauss-Jacobi products) and integration over
polytopal faces and cells by centroid-based simplex subdivision."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .mesh import PolyMesh, segment_ids


@lru_cache(maxsize=None)
def _gj01(n, alpha):
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (1 + x), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, n: int):
    """Barycentric points and weights (summing to 1) on a ``dim``-simplex,
    exact for polynomials of degree ``2n-1``."""
    if dim == 2:
        s, ws = _gj01(n, 1.0)
        t, wt = _gj01(n, 0.0)
        S, T = np.meshgrid(s, t, indexing="ij")
        x = S.ravel()
        y = (T * (1 - S)).ravel()
        w = np.outer(ws, wt).ravel() * 2.0
        bary = np.stack([1 - x - y, x, y], axis=1)
    elif dim == 3:
        a, wa = _gj01(n, 2.0)
        b, wb = _gj01(n, 1.0)
        c, wc = _gj01(n, 0.0)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x = A.ravel()
        y = (B * (1 - A)).ravel()
        z = (C * (1 - A) * (1 - B)).ravel()
        w = (wa[:, None, None] * wb[None, :, None] * wc[None, None, :]).ravel() * 6.0
        bary = np.stack([1 - x - y - z, x, y, z], axis=1)
    else:
        raise ValueError("dim must be 2 or 3")
    return bary, w


def degree_to_n(degree: int) -> int:
    return max(1, (degree + 2) // 2)


def face_triangles(mesh: PolyMesh, faces=None):
    """Triangles (N, 3, 3) covering the faces, with owning face index.

    Triangular faces are used as they are; other polygons are fanned from
    their centroid."""
    if faces is None:
        faces = np.arange(mesh.n_faces)
    faces = np.asarray(faces)
    ptr = mesh.face_ptr
    lens = np.diff(ptr)[faces]
    X = mesh.vertices
    tri = lens == 3
    out, own = [], []
    if tri.any():
        f = faces[tri]
        idx = ptr[f][:, None] + np.arange(3)
        out.append(X[mesh.face_nodes[idx]])
        own.append(np.flatnonzero(tri))
    if (~tri).any():
        sel = np.flatnonzero(~tri)
        f = faces[sel]
        n = lens[sel]
        start = np.repeat(ptr[f], n)
        loc = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
        nn = np.repeat(n, n)
        a = mesh.face_nodes[start + loc]
        b = mesh.face_nodes[start + (loc + 1) % nn]
        c = np.repeat(mesh.face_centroid[f], n, axis=0)
        out.append(np.stack([c, X[a], X[b]], axis=1))
        own.append(np.repeat(sel, n))
    return np.concatenate(out), np.concatenate(own)


def face_quadrature(mesh: PolyMesh, faces=None, degree: int = 3):
    """Points, weights and owner position (into ``faces``) of a face rule."""
    T, own = face_triangles(mesh, faces)
    bary, w = simplex_rule(2, degree_to_n(degree))
    area = 0.5 * np.linalg.norm(np.cross(T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]), axis=1)
    pts = np.einsum("qa,tad->tqd", bary, T).reshape(-1, 3)
    wts = (area[:, None] * w[None, :]).ravel()
    return pts, wts, np.repeat(own, len(w))


def cell_tets(mesh: PolyMesh, cells):
    """Tetrahedra (N, 4, 3) covering the cells, with owner position."""
    cells = np.asarray(cells)
    X = mesh.vertices
    nf = np.diff(mesh.cell_ptr)[cells]
    nv = np.diff(mesh.cv_ptr)[cells]
    istet = (nf == 4) & (nv == 4)
    out, own = [], []
    if istet.any():
        c = cells[istet]
        idx = mesh.cv_ptr[c][:, None] + np.arange(4)
        out.append(X[mesh.cv_nodes[idx]])
        own.append(np.flatnonzero(istet))
    if (~istet).any():
        sel = np.flatnonzero(~istet)
        c = cells[sel]
        n = nf[sel]
        start = np.repeat(mesh.cell_ptr[c], n)
        loc = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
        incf = mesh.cell_faces[start + loc]
        incown = np.repeat(sel, n)
        T, tpos = face_triangles(mesh, incf)
        apex = mesh.cell_centroid[cells[incown[tpos]]]
        out.append(np.concatenate([apex[:, None, :], T], axis=1))
        own.append(incown[tpos])
    return np.concatenate(out), np.concatenate(own)


def cell_quadrature(mesh: PolyMesh, cells=None, degree: int = 3):
    if cells is None:
        cells = np.arange(mesh.n_cells)
    T, own = cell_tets(mesh, cells)
    bary, w = simplex_rule(3, degree_to_n(degree))
    vol = np.abs(np.einsum("ij,ij->i", T[:, 1] - T[:, 0], np.cross(T[:, 2] - T[:, 0], T[:, 3] - T[:, 0]))) / 6.0
    pts = np.einsum("qa,tad->tqd", bary, T).reshape(-1, 3)
    wts = (vol[:, None] * w[None, :]).ravel()
    return pts, wts, np.repeat(own, len(w))


def iter_cell_quadrature(mesh: PolyMesh, degree: int = 3, chunk: int = 20000):
    """Cell quadrature in chunks of cells to bound memory."""
    for s in range(0, mesh.n_cells, chunk):
        cells = np.arange(s, min(s + chunk, mesh.n_cells))
        pts, wts, own = cell_quadrature(mesh, cells, degree)
        yield pts, wts, cells[own]
