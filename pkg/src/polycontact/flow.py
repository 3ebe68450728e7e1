"""Hybrid finite volume (SUSHI type) discretisation of the mixed-dimensional
Darcy flow: cell and face pressures in the matrix, half-face pressures on
both sides of fracture faces, face and edge pressures in the fractures."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from . import linalg
from .mesh import PolyMesh, segment_ids
from .spaces import PressureSpace


def _sushi_local(area, normal, rel, d, vol, perm, dim):
    """Local matrices of groups of cells (or faces) with the same number of
    hybrid unknowns. Shapes: area, d (m, n); normal, rel (m, n, 3);
    vol (m,); perm (m, 3, 3). Returns T (m, n, n)."""
    m, n = area.shape
    Gm = area[..., None] * normal / vol[:, None, None]  # (m, n, 3): G = Σ_ν δ_ν Gm[ν]
    alpha = np.sqrt(dim)
    # M[ν] = Gm^T + (α/d_ν) n_ν ⊗ (e_ν - rel_ν · Gm)
    proj = np.einsum("mvd,mwd->mvw", rel, Gm)  # (m, ν, ν')
    E = np.eye(n)[None] - proj
    M = Gm.transpose(0, 2, 1)[:, None, :, :] + (alpha / d)[:, :, None, None] * normal[:, :, :, None] * E[:, :, None, :]
    Dv = area * d / dim
    KM = np.einsum("mab,mvbw->mvaw", perm, M)
    return np.einsum("mv,mvaw,mvax->mwx", Dv, M, KM)


class HFVDiscretization:
    """Assembled HFV operators; conductivities are set per call."""

    def __init__(self, mesh: PolyMesh, net, perm, viscosity: float = 1.0, pspace: PressureSpace | None = None):
        self.mesh = m = mesh
        self.net = net
        self.ps = ps = pspace if pspace is not None else PressureSpace(mesh, net)
        self.eta = float(viscosity)
        perm = np.asarray(perm, float)
        if perm.ndim == 0:
            perm = perm * np.eye(3)
        if perm.ndim == 1:
            perm = np.diag(perm)
        if perm.ndim == 2:
            perm = np.broadcast_to(perm, (m.n_cells, 3, 3))
        self.perm = perm
        # unknown index of every cell-face incidence
        cseg = segment_ids(m.cell_ptr)
        f = m.cell_faces
        slot = ps.face_slot[f].copy()
        fr = net.index[f]
        isfr = fr >= 0
        plus = net.plus_cell[fr[isfr]] == cseg[isfr]
        slot[isfr] = np.where(plus, ps.half_plus[fr[isfr]], ps.half_minus[fr[isfr]])
        self.inc_slot = slot
        self.inc_cell = cseg
        nfc = np.diff(m.cell_ptr)
        rows, cols, vals = [], [], []
        self.cell_T = {}
        for n in np.unique(nfc):
            cells = np.flatnonzero(nfc == n)
            idx = m.cell_ptr[cells][:, None] + np.arange(n)
            ff = f[idx]
            sg = m.cell_sign[idx]
            nrm = m.face_normal[ff] * sg[..., None]
            rel = m.face_centroid[ff] - m.cell_centroid[cells][:, None, :]
            d = np.einsum("mvd,mvd->mv", nrm, rel)
            if (d <= 0).any():
                raise ValueError(f"cell {int(cells[np.argmin(d.min(axis=1))])} has a non-positive sub-volume")
            T = _sushi_local(m.face_area[ff], nrm, rel, d, m.cell_volume[cells], self.perm[cells], 3) / self.eta
            self.cell_T[n] = (cells, idx, T)
            r, c, v = self._scatter(cells, slot[idx], T)
            rows.append(r)
            cols.append(c)
            vals.append(v)
        self.A_matrix = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(ps.n, ps.n))
        # fracture faces: geometric matrices (conductivity 1, viscosity 1)
        self._frac_coo = None
        if net.n:
            faces = net.faces
            lens = np.diff(m.face_ptr)[faces]
            R, C, V, Fo = [], [], [], []
            self.face_T = {}
            for n in np.unique(lens):
                sel = np.flatnonzero(lens == n)
                ff = faces[sel]
                idx = m.face_ptr[ff][:, None] + np.arange(n)
                a = m.vertices[m.face_nodes[idx]]
                b = np.roll(a, -1, axis=1)
                le = np.linalg.norm(b - a, axis=2)
                mid = 0.5 * (a + b)
                nrm = m.face_edge_normal[idx]
                rel = mid - m.face_centroid[ff][:, None, :]
                d = np.einsum("mvd,mvd->mv", nrm, rel)
                if (d <= 0).any():
                    raise ValueError("fracture face with a non-positive sub-area")
                T = _sushi_local(le, nrm, rel, d, m.face_area[ff], np.broadcast_to(np.eye(3), (len(ff), 3, 3)), 2)
                eslots = ps.frac_edge[net.edge_index[m.face_edges[idx]]]
                self.face_T[n] = (sel, eslots, T)
                r, c, v = self._scatter_frac(ps.frac_face[sel], eslots, T)
                R.append(r)
                C.append(c)
                V.append(v)
                Fo.append(np.repeat(sel, (n + 1) ** 2))
            self._frac_coo = (np.concatenate(R), np.concatenate(C), np.concatenate(V), np.concatenate(Fo))

    @staticmethod
    def _local_full(T):
        # E = [-1 | I]: full local matrix over (center, ν...)
        m, n, _ = T.shape
        s = T.sum(axis=2)
        full = np.zeros((m, n + 1, n + 1))
        full[:, 0, 0] = s.sum(axis=1)
        full[:, 0, 1:] = -s
        full[:, 1:, 0] = -s
        full[:, 1:, 1:] = T
        return full

    def _scatter(self, centers, slots, T):
        full = self._local_full(T)
        dofs = np.concatenate([np.asarray(centers)[:, None], slots], axis=1)
        n = dofs.shape[1]
        r = np.repeat(dofs, n, axis=1).ravel()
        c = np.tile(dofs, (1, n)).ravel()
        return r, c, full.ravel()

    def _scatter_frac(self, centers, slots, T):
        return self._scatter(centers, slots, T)

    # ------------------------------------------------------------------
    def operator_parts(self, conductivity=None, transmissivity=None):
        """(matrix, fracture, transmission) parts of the flow operator."""
        ps = self.ps
        net = self.net
        shape = (ps.n, ps.n)
        if not net.n:
            return self.A_matrix, sps.csr_matrix(shape), sps.csr_matrix(shape)
        r, c, v, fo = self._frac_coo
        cf = np.broadcast_to(np.asarray(conductivity, float), (net.n,))
        Af = sps.csr_matrix((v * cf[fo] / self.eta, (r, c)), shape=shape)
        lam = np.broadcast_to(np.asarray(transmissivity, float), (net.n,))
        w = self.mesh.face_area[net.faces] * lam / self.eta
        i = np.concatenate([ps.half_plus, ps.half_minus])
        j = np.concatenate([ps.frac_face, ps.frac_face])
        ww = np.concatenate([w, w])
        At = sps.csr_matrix((np.concatenate([ww, ww, -ww, -ww]),
                             (np.concatenate([i, j, i, j]), np.concatenate([i, j, j, i]))), shape=shape)
        return self.A_matrix, Af, At

    def operator(self, conductivity=None, transmissivity=None):
        """Sum of the matrix, fracture and transmission terms (no accumulation)."""
        Am, Af, At = self.operator_parts(conductivity, transmissivity)
        return (Am + Af + At).tocsr()

    def cell_fluxes(self, p):
        """F_{Kν} = Σ_ν' T^{νν'} (p_K - p_ν') for every cell-face incidence."""
        out = np.zeros(len(self.inc_slot))
        p = np.asarray(p)
        for n, (cells, idx, T) in self.cell_T.items():
            dp = p[cells][:, None] - p[self.inc_slot[idx]]
            out[idx] = np.einsum("mvw,mw->mv", T, dp)
        return out

    def fracture_fluxes(self, p, conductivity):
        """Edge fluxes per fracture face (dict keyed by edge count)."""
        ps = self.ps
        res = {}
        cf = np.broadcast_to(np.asarray(conductivity, float), (self.net.n,))
        for n, (sel, eslots, T) in self.face_T.items():
            dp = p[ps.frac_face[sel]][:, None] - p[eslots]
            res[n] = (sel, np.einsum("mvw,mw->mv", T, dp) * cf[sel, None] / self.eta)
        return res

    # ------------------------------------------------------------------
    def factorize(self, A, diag, dirichlet):
        """Factorised (A + diag) with Dirichlet unknowns eliminated; the
        returned callable maps (rhs, values) to the pressure."""
        n = self.ps.n
        M = (A + sps.diags(diag)).tocsr()
        dirichlet = np.asarray(dirichlet, dtype=np.int64)
        free = np.setdiff1d(np.arange(n), dirichlet)
        fac = linalg.Factorization(M[free][:, free])

        def solve(rhs, values):
            p = np.zeros(n)
            p[dirichlet] = values
            r = rhs - M @ p
            p[free] = fac.solve(r[free])
            return p

        solve.free = fac.free
        return solve

    def solve(self, A, diag, rhs, dirichlet, values):
        """Solve (A + diag) p = rhs with Dirichlet unknowns eliminated."""
        f = self.factorize(A, diag, dirichlet)
        try:
            return f(rhs, values)
        finally:
            f.free()

    def boundary_dirichlet(self, face_mask=None, edge_mask=None):
        """Slots of selected boundary faces and boundary fracture edges."""
        m = self.mesh
        out = []
        if face_mask is not None:
            faces = np.flatnonzero(np.asarray(face_mask) & (m.face_cells[:, 1] < 0))
            out.append(self.ps.face_slot[faces])
        if edge_mask is not None and self.net.n:
            e = self.net.edges
            sel = np.asarray(edge_mask)[e] & (self.net.edge_kind == "boundary")
            out.append(self.ps.frac_edge[np.flatnonzero(sel)])
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def unknown_points(self):
        """Location of every pressure unknown (centroids / edge midpoints)."""
        m, ps, net = self.mesh, self.ps, self.net
        X = np.zeros((ps.n, 3))
        X[: m.n_cells] = m.cell_centroid
        X[ps.face_slot[ps.nonfrac_faces]] = m.face_centroid[ps.nonfrac_faces]
        if net.n:
            X[ps.half_plus] = m.face_centroid[net.faces]
            X[ps.half_minus] = m.face_centroid[net.faces]
            X[ps.frac_face] = m.face_centroid[net.faces]
            e = m.edges[net.edges]
            X[ps.frac_edge] = 0.5 * (m.vertices[e[:, 0]] + m.vertices[e[:, 1]])
        return X


def poiseuille_conductivity(aperture):
    d = np.asarray(aperture, float)
    if (d <= 0).any():
        raise ValueError("non-positive fracture aperture")
    return d ** 3 / 12.0


def normal_transmissivity(normal_perm, aperture):
    return 2.0 * np.asarray(normal_perm, float) / np.asarray(aperture, float)
