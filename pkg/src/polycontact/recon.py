"""Reconstruction operators of the bubble-enriched first order virtual
element space, assembled as sparse matrices acting on displacement vectors.

Scalar operators act on one component; the vector versions are Kronecker
products with the 3x3 identity, so that ``(Op ⊗ I3) u`` applies the scalar
weights componentwise. The cell gradient is stored as a flat array of
length ``9 * n_cells`` with entry ``9K + 3b + a`` equal to ∂_b u_a.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .mesh import segment_ids
from .spaces import DisplacementSpace, csr_expand

I3 = sps.identity(3, format="csr")


def vec(op):
    return sps.kron(op, I3, format="csr")


class Reconstruction:
    def __init__(self, space: DisplacementSpace):
        self.space = space
        m = space.mesh
        net = space.net
        nc = m.n_cells
        ns = space.n_scalar
        # gradient weights of nodal dofs: sum over faces of |σ|/|K| ω n_{Kσ}
        inc_cell = segment_ids(m.cell_ptr)
        fi, own = csr_expand(m.face_ptr, m.cell_faces)
        K = inc_cell[own]
        f = m.cell_faces[own]
        coef = (m.face_area[f] / m.cell_volume[K] * m.face_weights[fi] * m.cell_sign[own])[:, None] * m.face_normal[f]
        sides = space.side_of(K, m.face_nodes[fi])
        rows = [3 * K[:, None] + np.arange(3)]
        cols = [np.repeat(sides[:, None], 3, 1)]
        vals = [coef]
        if space.n_bubbles:
            bf = net.faces[space.bub_face]
            bk = space.bub_cell
            s = np.where(m.face_cells[bf, 0] == bk, 1.0, -1.0)
            g = (m.face_area[bf] / m.cell_volume[bk] * s)[:, None] * m.face_normal[bf]
            rows.append(3 * bk[:, None] + np.arange(3))
            cols.append(np.repeat((space.n_sides + np.arange(space.n_bubbles))[:, None], 3, 1))
            vals.append(g)
        self.Gs = sps.csr_matrix((np.concatenate(vals).ravel(), (np.concatenate(rows).ravel(), np.concatenate(cols).ravel())),
                                 shape=(3 * nc, ns))
        cvc = segment_ids(m.cv_ptr)
        self.Wc = sps.csr_matrix((m.cell_weights, (cvc, space.partition.cv_side)), shape=(nc, ns))
        # vertex values of Π^K: (x_t - x̄_K)·g_j + ω_j^K
        ninc = m.cv_ptr[-1]
        rel = m.vertices[m.cv_nodes] - m.cell_centroid[cvc]
        Xop = sps.csr_matrix((rel.ravel(), (np.repeat(np.arange(ninc), 3), (3 * cvc[:, None] + np.arange(3)).ravel())),
                             shape=(ninc, 3 * nc))
        Rep = sps.csr_matrix((np.ones(ninc), (np.arange(ninc), cvc)), shape=(ninc, nc))
        self.Pvert = (Xop @ self.Gs + Rep @ self.Wc).tocsr()
        Sel = sps.csr_matrix((np.ones(ninc), (np.arange(ninc), space.partition.cv_side)), shape=(ninc, ns))
        Bsel = sps.csr_matrix((np.ones(space.n_bubbles), (np.arange(space.n_bubbles), space.n_sides + np.arange(space.n_bubbles))),
                              shape=(space.n_bubbles, ns))
        self.Ds = sps.vstack([Sel - self.Pvert, Bsel]).tocsr()
        self.D_cell = np.concatenate([cvc, space.bub_cell])
        # jump: face means of both sides plus bubbles
        if net.n:
            Fp = self.face_mean_op(net.plus_cell, net.faces)
            Fm = self.face_mean_op(net.minus_cell, net.faces)
            b = np.arange(space.n_bubbles)
            Bj = sps.csr_matrix((space.bub_sign, (space.bub_face, space.n_sides + b)), shape=(net.n, ns))
            self.Js = (Fp - Fm + Bj).tocsr()
        else:
            self.Js = sps.csr_matrix((0, ns))
        self.G = vec(self.Gs)
        self.W = vec(self.Wc)
        self.J = vec(self.Js)
        tr = np.zeros(9)
        tr[[0, 4, 8]] = 1.0
        self.Div = (sps.kron(sps.identity(nc), sps.csr_matrix(tr), format="csr") @ self.G).tocsr()

    # ------------------------------------------------------------------
    def face_mean_op(self, cells, faces):
        m = self.space.mesh
        fi, own = csr_expand(m.face_ptr, faces)
        sides = self.space.side_of(np.asarray(cells)[own], m.face_nodes[fi])
        return sps.csr_matrix((m.face_weights[fi], (own, sides)), shape=(len(faces), self.space.n_scalar))

    def stab_weights(self, lam_mu_weight=None):
        """Row weights h_K (d = 3) of the stabilisation defect rows, times an
        optional per-cell factor."""
        h = self.space.mesh.cell_diameter[self.D_cell]
        if lam_mu_weight is not None:
            h = h * np.asarray(lam_mu_weight)[self.D_cell]
        return h

    # ------------------------------------------------------------------
    def grad(self, u):
        """Cell gradients (n_cells, 3, 3) with [K, a, b] = ∂_b u_a."""
        return (self.G @ u).reshape(-1, 3, 3).transpose(0, 2, 1)

    def centroid_value(self, u):
        return (self.W @ u).reshape(-1, 3)

    def div(self, u):
        return self.Div @ u

    def pi(self, u, points, cells):
        """Π^K u evaluated at points lying in the given cells."""
        g = self.grad(u)[cells]
        c = self.centroid_value(u)[cells]
        rel = points - self.space.mesh.cell_centroid[cells]
        return c + np.einsum("nab,nb->na", g, rel)

    def jump(self, u):
        return (self.J @ u).reshape(-1, 3)

    def stab_form(self, weight=None):
        """Global S = Σ_K w_K S_K as a sparse matrix on vector dofs."""
        d = self.stab_weights(weight)
        Ds = self.Ds
        return vec((Ds.T @ sps.diags(d) @ Ds).tocsr())

    # ------------------------------------------------------------------
    # local evaluators (used by the property checks)
    def local_dofs(self, K):
        m = self.space.mesh
        sides = self.space.partition.cv_side[m.cv_ptr[K]:m.cv_ptr[K + 1]]
        bub = self.space.n_sides + np.flatnonzero(self.space.bub_cell == K)
        return np.concatenate([sides, bub])

    def cell_reconstruction(self, u, K):
        """(∇^K u, Π^K u as a callable) for one cell."""
        rows = slice(9 * K, 9 * K + 9)
        g = (self.G[rows] @ u).reshape(3, 3).T
        c = (self.W[3 * K:3 * K + 3] @ u)
        xK = self.space.mesh.cell_centroid[K]
        return g, (lambda x: c + (np.atleast_2d(x) - xK) @ g.T)

    def face_gradient(self, u, K, f):
        """In-plane gradient on face ``f`` from edge-midpoint averages."""
        m = self.space.mesh
        s = slice(m.face_ptr[f], m.face_ptr[f + 1])
        lp = m.face_nodes[s]
        sides = self.space.side_of(np.full(len(lp), K), lp)
        U = np.asarray(u).reshape(-1, 3)[sides]
        Un = np.roll(U, -1, axis=0)
        le = np.linalg.norm(m.vertices[np.roll(lp, -1)] - m.vertices[lp], axis=1)
        return np.einsum("e,ea,eb->ab", le, 0.5 * (U + Un), m.face_edge_normal[s]) / m.face_area[f]

    def face_reconstruction(self, u, K, f):
        m = self.space.mesh
        g = self.face_gradient(u, K, f)
        c = self.space.face_mean(u, [K], [f])[0]
        xf = m.face_centroid[f]
        return g, (lambda x: c + (np.atleast_2d(x) - xf) @ g.T)

    def stab_pair(self, u, v, K):
        rows = np.flatnonzero(self.D_cell == K)
        D = self.Ds[rows]
        du = D @ np.asarray(u).reshape(-1, 3)
        dv = D @ np.asarray(v).reshape(-1, 3)
        return self.space.mesh.cell_diameter[K] * float(np.sum(du * dv))


# ----------------------------------------------------------------------
# property checks on single cells

@dataclass
class CheckReport:
    cell: int
    ok: bool
    residual: float
    detail: str = ""


def unisolvence_check(rec: Reconstruction, K: int) -> CheckReport:
    """Rank of the local map dofs -> (gradient, vertex defects, bubbles, centroid value)."""
    loc = rec.local_dofs(K)
    rows = [rec.Gs[3 * K:3 * K + 3][:, loc].toarray(),
            rec.Ds[np.flatnonzero(rec.D_cell == K)][:, loc].toarray(),
            rec.Wc[K][:, loc].toarray()]
    M = np.vstack(rows)
    r = np.linalg.matrix_rank(M, tol=1e-10 * np.abs(M).max())
    return CheckReport(K, r == len(loc), float(len(loc) - r), f"rank {3 * r} of {3 * len(loc)}")


def affine_face_products(mesh, K, skip_faces=()):
    """Callable ψ(x) = Π_σ n_{Kσ}·(x̄_σ - x) over faces of K not in skip."""
    faces, sign = mesh.cell_face_list(K)
    keep = ~np.isin(faces, skip_faces)
    N = mesh.face_normal[faces[keep]] * sign[keep][:, None]
    C = mesh.face_centroid[faces[keep]]
    h = mesh.cell_diameter[K]

    def psi(x):
        x = np.atleast_2d(x)
        return np.prod(np.einsum("fd,nfd->nf", N, C[None] - x[:, None, :]) / h, axis=1)

    def dpsi(x):
        x = np.atleast_2d(x)
        L = np.einsum("fd,nfd->nf", N, C[None] - x[:, None, :]) / h
        out = np.zeros((len(x), 3))
        for i in range(L.shape[1]):
            others = np.prod(np.delete(L, i, axis=1), axis=1)
            out += others[:, None] * (-N[i] / h)[None, :]
        return out

    return psi, dpsi, len(N)


def virtual_fields(rec: Reconstruction, K: int, rng, n_linear: int = 1):
    """Polynomial members of the local virtual space of K: affine fields plus
    products of face affine functions. A product skipping a + fracture face
    vanishes on every edge and on the other faces (a bubble profile of that
    face); the product over all faces is a cell bubble. Returns a list of
    (v, grad v) callables, grad[n, a, b] = ∂_b v_a."""
    m = rec.space.mesh
    sp = rec.space
    xK = m.cell_centroid[K]
    out = []
    for _ in range(n_linear):
        q0 = rng.standard_normal(3)
        Q = rng.standard_normal((3, 3))

        def lin(x, q0=q0, Q=Q):
            return q0 + (np.atleast_2d(x) - xK) @ Q.T

        def dlin(x, Q=Q):
            return np.broadcast_to(Q, (len(np.atleast_2d(x)), 3, 3))

        out.append((lin, dlin))
    lin, dlin = out[0]
    skips = [[sp.net.faces[sp.bub_face[b]]] for b in np.flatnonzero(sp.bub_cell == K)] + [[]]
    for skip in skips:
        psi, dpsi, _ = affine_face_products(m, K, skip)
        c = rng.standard_normal(3)

        def v(x, psi=psi, c=c):
            return lin(x) + psi(x)[:, None] * c

        def dv(x, dpsi=dpsi, c=c):
            return dlin(x) + c[None, :, None] * dpsi(x)[:, None, :]

        out.append((v, dv))
    return out


def _degree(mesh, K):
    return int(np.diff(mesh.cell_ptr)[K]) + 2


def interpolate_local(rec: Reconstruction, K: int, v, degree=None):
    """Local dofs of a virtual field on K: vertex values and, for the + faces
    of K, face mean minus the weighted vertex mean (global-size vector)."""
    from .quadrature import face_quadrature

    sp = rec.space
    m = sp.mesh
    degree = degree or _degree(m, K)
    u = np.zeros((sp.n_scalar, 3))
    verts = m.cell_vertices(K)
    u[sp.side_of(np.full(len(verts), K), verts)] = v(m.vertices[verts])
    for b in np.flatnonzero(sp.bub_cell == K):
        f = sp.net.faces[sp.bub_face[b]]
        pts, wts, _ = face_quadrature(m, [f], degree)
        mean = wts @ v(pts) / m.face_area[f]
        u[sp.n_sides + b] = mean - sp.face_mean(u.ravel(), [K], [f])[0]
    return u.ravel()


def _exact_projector(rec, K, u_loc, v, dv, degree):
    """π^K v from its defining relations: mean gradient by quadrature and
    centroid value from the vertex weights."""
    from .quadrature import cell_quadrature

    m = rec.space.mesh
    pts, wts, _ = cell_quadrature(m, [K], degree)
    G = np.einsum("n,nab->ab", wts, dv(pts)) / m.cell_volume[K]
    c = rec.W[3 * K:3 * K + 3] @ u_loc
    return G, c


def elliptic_projector_check(rec: Reconstruction, K: int, rng, tol=1e-10) -> CheckReport:
    """Cell and face reconstructions of interpolated virtual fields against
    the elliptic projectors computed by quadrature."""
    from .quadrature import face_quadrature

    m = rec.space.mesh
    deg = _degree(m, K)
    worst = 0.0
    faces, _ = m.cell_face_list(K)
    for v, dv in virtual_fields(rec, K, rng):
        u = interpolate_local(rec, K, v, deg)
        G, c = _exact_projector(rec, K, u, v, dv, deg)
        g, Pi = rec.cell_reconstruction(u, K)
        scale = max(np.abs(G).max(), 1e-300)
        worst = max(worst, np.abs(g - G).max() / scale, np.abs(Pi(m.cell_centroid[K])[0] - c).max() / scale)
        for f in faces:
            pts, wts, _ = face_quadrature(m, [f], deg)
            n = m.face_normal[f]
            P = np.eye(3) - np.outer(n, n)
            Gf = np.einsum("n,nab->ab", wts, dv(pts)) @ P / m.face_area[f]
            worst = max(worst, np.abs(rec.face_gradient(u, K, f) - Gf).max() / scale)
    return CheckReport(K, worst <= tol, worst, "elliptic projector")


def dofi_equivalence_check(rec: Reconstruction, K: int, rng, tol=1e-10) -> CheckReport:
    """S_K(I u, I v) against the dofi-dofi form of u - π^K u and v - π^K v,
    with π^K and the face means computed by quadrature."""
    from .quadrature import face_quadrature

    sp = rec.space
    m = sp.mesh
    deg = _degree(m, K)
    verts = m.cell_vertices(K)
    xK = m.cell_centroid[K]
    bub = np.flatnonzero(sp.bub_cell == K)
    fields = virtual_fields(rec, K, rng, n_linear=2)
    dofs, dofi = [], []
    for v, dv in fields:
        u = interpolate_local(rec, K, v, deg)
        G, c = _exact_projector(rec, K, u, v, dv, deg)

        def w(x, v=v, G=G, c=c):
            x = np.atleast_2d(x)
            return v(x) - (c + (x - xK) @ G.T)

        d = [w(m.vertices[verts])]
        for b in bub:
            f = sp.net.faces[sp.bub_face[b]]
            pts, wts, _ = face_quadrature(m, [f], deg)
            lp = m.face_loop(f)
            om = m.face_weights[m.face_ptr[f]:m.face_ptr[f + 1]]
            d.append((wts @ w(pts) / m.face_area[f] - om @ w(m.vertices[lp]))[None])
        dofs.append(u)
        dofi.append(np.concatenate(d))
    worst = 0.0
    h = m.cell_diameter[K]
    for i in range(len(fields)):
        for j in range(i, len(fields)):
            a = rec.stab_pair(dofs[i], dofs[j], K)
            b = h * float(np.sum(dofi[i] * dofi[j]))
            scale = h * np.linalg.norm(dofs[i]) * np.linalg.norm(dofs[j])
            worst = max(worst, abs(a - b) / scale)
    return CheckReport(K, worst <= tol, worst, "dofi-dofi")


# ----------------------------------------------------------------------
# error norms

def _rel(num, den):
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def l2_errors(rec: Reconstruction, u, lam_n=None, exact_u=None, exact_grad=None, exact_lam_n=None,
              face_mask=None, degree: int = 3, jump_part: str = "full", exact_jump=None):
    """Relative L² errors of u - Π u_D, ∇u - ∇_D u_D, ⟦u⟧ - ⟦u_D⟧ and λ_n - λ_{D,n}.

    ``exact_u(points, anchors)`` and ``exact_grad`` take the centroid of the
    cell the value is taken from as anchor; ``exact_lam_n(points)`` and
    ``exact_jump(points)`` are evaluated on the fracture (by default the jump
    is built from ``exact_u`` on both sides). The affine field Π u_D is
    compared with u itself; the piecewise constant fields (gradient, jump,
    multiplier) are compared with the cell or face means of the exact field,
    so that the error does not include the unavoidable O(h) best
    approximation part. ``face_mask`` restricts the multiplier error (e.g.
    away from tips). ``jump_part`` is 'full', 'normal' or 'tangential'.
    """
    from .quadrature import face_quadrature, iter_cell_quadrature

    sp_ = rec.space
    m = sp_.mesh
    net = sp_.net
    out = {}
    if exact_u is not None or exact_grad is not None:
        g = rec.grad(u)
        c = rec.centroid_value(u)
        eu = nu = 0.0
        gmean = np.zeros((m.n_cells, 3, 3))
        gnorm = 0.0
        for pts, wts, cells in iter_cell_quadrature(m, degree):
            anc = m.cell_centroid[cells]
            if exact_u is not None:
                ex = exact_u(pts, anc)
                dis = c[cells] + np.einsum("nab,nb->na", g[cells], pts - anc)
                eu += float(wts @ np.sum((ex - dis) ** 2, axis=1))
                nu += float(wts @ np.sum(ex ** 2, axis=1))
            if exact_grad is not None:
                ex = exact_grad(pts, anc)
                np.add.at(gmean, cells, wts[:, None, None] * ex)
                gnorm += float(wts @ np.sum(ex ** 2, axis=(1, 2)))
        if exact_u is not None:
            out["u"] = _rel(eu, nu)
        if exact_grad is not None:
            gmean /= m.cell_volume[:, None, None]
            eg = float(m.cell_volume @ np.sum((gmean - g) ** 2, axis=(1, 2)))
            out["grad"] = _rel(eg, gnorm)
    if net.n and (exact_u is not None or exact_jump is not None):
        pts, wts, own = face_quadrature(m, net.faces, degree)
        if exact_jump is not None:
            ex = exact_jump(pts)
        else:
            ex = exact_u(pts, m.cell_centroid[net.plus_cell[own]]) - exact_u(pts, m.cell_centroid[net.minus_cell[own]])
        dis = rec.jump(u)
        nrm = net.normal
        if jump_part == "normal":
            ex = np.einsum("ij,ij->i", ex, nrm[own])[:, None]
            dis = np.einsum("ij,ij->i", dis, nrm)[:, None]
        elif jump_part == "tangential":
            ex = ex - np.einsum("ij,ij->i", ex, nrm[own])[:, None] * nrm[own]
            dis = dis - np.einsum("ij,ij->i", dis, nrm)[:, None] * nrm
        emean = np.zeros((net.n, ex.shape[1]))
        np.add.at(emean, own, wts[:, None] * ex)
        area = m.face_area[net.faces]
        emean /= area[:, None]
        out["jump"] = _rel(float(area @ np.sum((emean - dis) ** 2, axis=1)), float(wts @ np.sum(ex ** 2, axis=1)))
    if net.n and exact_lam_n is not None and lam_n is not None:
        sel = np.arange(net.n) if face_mask is None else np.flatnonzero(face_mask)
        faces = net.faces[sel]
        vals = np.asarray(lam_n)[sel]
        pts, wts, own = face_quadrature(m, faces, degree)
        ex = exact_lam_n(pts)
        lmean = np.bincount(own, wts * ex, minlength=len(sel)) / m.face_area[faces]
        out["lambda_n"] = _rel(float(m.face_area[faces] @ (lmean - vals) ** 2), float(wts @ ex ** 2))
    return out


def observed_orders(errors, h=None):
    """Orders between successive entries: log(e_i/e_{i+1}) / log(h_i/h_{i+1})
    (log2 ratios when ``h`` is None, i.e. uniform refinement)."""
    e = np.asarray(errors, float)
    if len(e) < 2:
        raise ValueError("need at least two error values")
    hr = np.full(len(e) - 1, 2.0) if h is None else np.asarray(h[:-1], float) / np.asarray(h[1:], float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(e[:-1] / e[1:]) / np.log(hr)
    return np.where(e[:-1] == e[1:], 0.0, r)
