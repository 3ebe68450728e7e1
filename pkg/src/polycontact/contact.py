"""Mixed elasticity–contact system and its semi-smooth Newton solver.

Multipliers are stored per fracture face in the local frame (n, t1, t2) of
the face, with n the + normal. With ``planar=True`` (extruded 2D runs) the
t2 = e_z component is eliminated together with all z displacements.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import linalg
from .recon import Reconstruction
from .spaces import DisplacementSpace

log = logging.getLogger(__name__)


def lame(E, nu):
    """(μ, λ) from Young's modulus and Poisson ratio."""
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


def projection_Rplus(x):
    return np.maximum(x, 0.0)


def projection_ball(x, alpha):
    """Projection of vectors ``x`` (..., k) on balls of radii ``alpha``."""
    alpha = np.asarray(alpha, float)
    if np.any(alpha < 0):
        raise ValueError("ball radius must be nonnegative")
    x = np.asarray(x, float)
    nx = np.linalg.norm(x, axis=-1)
    scale = np.where(nx > alpha, alpha / np.where(nx > 0, nx, 1.0), 1.0)
    return x * scale[..., None]


def _elastic_blocks():
    Cmu = np.zeros((9, 9))
    Clam = np.zeros((9, 9))
    for a in range(3):
        for b in range(3):
            Cmu[3 * b + a, 3 * b + a] += 1.0
            Cmu[3 * b + a, 3 * a + b] += 1.0
    for a in range(3):
        for b in range(3):
            Clam[4 * a, 4 * b] = 1.0
    return Cmu, Clam


class MechSystem:
    """Elastic operator, contact coupling and load assembly."""

    def __init__(self, space: DisplacementSpace, mu, lam, rec: Reconstruction | None = None, planar: bool = False):
        self.space = space
        self.rec = rec if rec is not None else Reconstruction(space)
        m = space.mesh
        nc = m.n_cells
        self.mu = np.broadcast_to(np.asarray(mu, float), (nc,)).copy()
        self.lam = np.broadcast_to(np.asarray(lam, float), (nc,)).copy()
        if (self.mu <= 0).any() or (self.lam + 2 * self.mu / 3 <= 0).any():
            raise ValueError("material parameters are not admissible")
        self.planar = planar
        Cmu, Clam = _elastic_blocks()
        vol = m.cell_volume
        C = sps.kron(sps.diags(vol * self.mu), sps.csr_matrix(Cmu)) + sps.kron(sps.diags(vol * self.lam), sps.csr_matrix(Clam))
        G = self.rec.G
        self.A_elastic = (G.T @ C.tocsr() @ G).tocsr()
        self.A_stab = self.rec.stab_form(2 * self.mu + self.lam)
        self.A = (self.A_elastic + self.A_stab).tocsr()
        net = space.net
        ng = net.n
        R = sps.block_diag([sps.csr_matrix(f) for f in net.frame], format="csr") if ng else sps.csr_matrix((0, 0))
        self.RJ = (R @ self.rec.J).tocsr() if ng else sps.csr_matrix((0, space.ndof))
        self.B = (sps.diags(np.repeat(m.face_area[net.faces], 3)) @ self.RJ).tocsr()
        self.Jn = self.RJ[0::3] if ng else sps.csr_matrix((0, space.ndof))

    # ------------------------------------------------------------------
    def load(self, body=None, tractions=(), p_cell=None, biot=0.0, p_frac=None):
        """Right-hand side: Σ|K| f_K·v̄_K + Σ|σ| t·v̄_σ + ∫ b p div v − ∫ p_f ⟦v⟧_n."""
        sp = self.space
        m = sp.mesh
        F = np.zeros(sp.ndof)
        if body is not None:
            fk = np.broadcast_to(np.asarray(body, float), (m.n_cells, 3))
            F += self.rec.W.T @ (m.cell_volume[:, None] * fk).ravel()
        for faces, t in tractions:
            faces = np.asarray(faces)
            cells = m.face_cells[faces, 0]
            Fm = self.rec.face_mean_op(cells, faces)
            tt = np.broadcast_to(np.asarray(t, float), (len(faces), 3))
            F += (sps.kron(Fm, sps.identity(3)).T @ (m.face_area[faces][:, None] * tt).ravel())
        if p_cell is not None:
            bb = np.broadcast_to(np.asarray(biot, float), (m.n_cells,))
            F += self.rec.Div.T @ (bb * m.cell_volume * np.asarray(p_cell))
        if p_frac is not None and sp.net.n:
            F -= self.Jn.T @ (m.face_area[sp.net.faces] * np.asarray(p_frac))
        return F

    def energy(self, u):
        """½ a(u, u) including the stabilisation."""
        return 0.5 * float(u @ (self.A @ u))


@dataclass
class ContactParams:
    friction: np.ndarray
    beta_n: np.ndarray
    beta_t: np.ndarray
    tol: float = 1e-10
    max_iter: int = 50


def default_beta(space: DisplacementSpace, mu, lam):
    """β = (2μ + λ)/h_σ on the + cell (Pa/m)."""
    m = space.mesh
    net = space.net
    mu = np.broadcast_to(np.asarray(mu, float), (m.n_cells,))
    lam = np.broadcast_to(np.asarray(lam, float), (m.n_cells,))
    return (2 * mu + lam)[net.plus_cell] / m.face_diameter[net.faces]


@dataclass
class ContactResult:
    u: np.ndarray
    lam: np.ndarray  # (n_faces, 3) in the local frame
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def lam_global(self, frames):
        return np.einsum("fij,fi->fj", frames, self.lam)


def contact_equations(lam, j, w, F, bn, bt, planar=False):
    """Residual C and its derivatives with respect to λ and to the jumps.

    ``j`` is the jump used in the normal condition, ``w`` the one in the
    friction condition (the jump itself, or its time increment). Returns C,
    dC/dλ, dC/dj (both (n, 3, 3), columns (n, t1, t2)) and the face states.
    """
    n = len(lam)
    C = np.zeros((n, 3))
    dL = np.zeros((n, 3, 3))
    dJ = np.zeros((n, 3, 3))
    xn = lam[:, 0] + bn * j[:, 0]
    act = xn > 0
    C[:, 0] = lam[:, 0] - np.maximum(xn, 0.0)
    dL[:, 0, 0] = np.where(act, 0.0, 1.0)
    dJ[:, 0, 0] = np.where(act, -bn, 0.0)
    alpha = F * np.maximum(xn, 0.0)
    y = lam[:, 1:] + bt[:, None] * w[:, 1:]
    if planar:
        y[:, 1] = 0.0
    ny = np.linalg.norm(y, axis=1)
    stick = (ny <= alpha) & (alpha > 0)
    slip = ~stick
    I2 = np.eye(2)
    # stick
    C[stick, 1:] = lam[stick, 1:] - y[stick]
    dJ[stick, 1:, 1:] = -bt[stick, None, None] * I2
    # slip (including the degenerate zero-radius ball of open or frictionless faces)
    yh = np.zeros_like(y)
    nz = slip & (ny > 0)
    yh[nz] = y[nz] / ny[nz, None]
    C[slip, 1:] = lam[slip, 1:] - alpha[slip, None] * yh[slip]
    P = I2[None] - yh[:, :, None] * yh[:, None, :]
    ratio = np.where(nz, alpha / np.where(ny > 0, ny, 1.0), 0.0)
    dL[slip, 1:, 1:] = I2[None] - ratio[slip, None, None] * P[slip]
    dJ[slip, 1:, 1:] = -(ratio * bt)[slip, None, None] * P[slip]
    sa = slip & act
    dL[sa, 1:, 0] = -(F[sa])[:, None] * yh[sa]
    dJ[sa, 1:, 0] = -(F * bn)[sa][:, None] * yh[sa]
    state = np.where(~act, 0, np.where(stick, 1, 2))
    return C, dL, dJ, state


class ContactSolver:
    def __init__(self, system: MechSystem, params: ContactParams):
        self.sys = system
        self.par = params

    def solve(self, F, fixed, fixed_values, u0=None, lam0=None, u_prev=None):
        """Semi-smooth Newton on (u, λ).

        ``u_prev`` switches the friction condition to the increment
        ⟦u - u_prev⟧_τ (quasi-static mode); otherwise the static jump is used.
        """
        S = self.sys
        sp = S.space
        par = self.par
        ndof = sp.ndof
        ng = sp.net.n
        fixed = np.asarray(fixed, dtype=np.int64)
        isfix = np.zeros(ndof, dtype=bool)
        isfix[fixed] = True
        free = np.flatnonzero(~isfix)
        u = np.zeros(ndof) if u0 is None else np.array(u0, float)
        u[fixed] = fixed_values
        lam = np.zeros((ng, 3)) if lam0 is None else np.array(lam0, float).reshape(ng, 3)
        lcomp = np.ones((ng, 3), dtype=bool)
        if S.planar:
            lcomp[:, 2] = False
            lam[:, 2] = 0.0
        lsel = np.flatnonzero(lcomp.ravel())
        A = S.A
        A_ff = A[free][:, free]
        B = S.B
        BT_f = B.T.tocsr()[free][:, lsel]
        RJ_f = S.RJ[:, free]
        Fr = F[free]
        F_scale = np.abs(Fr).max(initial=0.0)
        history = []
        prev_state = None
        du_inf = np.inf
        for it in range(par.max_iter + 1):
            j = (S.RJ @ u).reshape(ng, 3)
            w = j if u_prev is None else (S.RJ @ (u - u_prev)).reshape(ng, 3)
            Au = A @ u
            BTl = B.T @ lam.ravel()
            Ru = (Au + BTl - F)[free]
            C, dL, dJ, state = contact_equations(lam, j, w, par.friction, par.beta_n, par.beta_t, S.planar)
            mscale = max(F_scale, np.abs(Au[free]).max(initial=0.0), np.abs(BTl[free]).max(initial=0.0), 1e-300)
            cscale = max(np.abs(lam).max(initial=0.0), np.abs(par.beta_n[:, None] * j).max(initial=0.0),
                         np.abs(par.beta_t[:, None] * w).max(initial=0.0), 1e-300)
            ru = np.abs(Ru).max(initial=0.0) / mscale
            rc = np.abs(C.ravel()[lsel]).max(initial=0.0) / cscale
            history.append(dict(iteration=it, momentum=ru, contact=rc, increment=du_inf,
                                n_open=int((state == 0).sum()), n_stick=int((state == 1).sum()),
                                n_slip=int((state == 2).sum())))
            log.debug("newton %d: momentum %.3e contact %.3e", it, ru, rc)
            same = prev_state is not None and np.array_equal(state, prev_state)
            if (ru <= par.tol and rc <= par.tol) or (it > 0 and same and du_inf <= par.tol):
                # λ - C is the cone projection at the final iterate: feasible by construction
                return ContactResult(u, lam - C * lcomp, it, True, history)
            if it == par.max_iter:
                break
            prev_state = state
            Cl = sps.block_diag(list(dL), format="csr") if ng else sps.csr_matrix((0, 0))
            Cj = sps.block_diag(list(dJ), format="csr") if ng else sps.csr_matrix((0, 0))
            Cu = (Cj @ RJ_f).tocsr()[lsel]
            Cl = Cl[lsel][:, lsel]
            K = sps.bmat([[A_ff, BT_f], [Cu, Cl]], format="csr")
            rhs = -np.concatenate([Ru, C.ravel()[lsel]])
            sol = linalg.solve(K, rhs)
            if not np.all(np.isfinite(sol)):
                raise RuntimeError(f"singular Newton linearisation; states open/stick/slip = "
                                   f"{history[-1]['n_open']}/{history[-1]['n_stick']}/{history[-1]['n_slip']}")
            du = sol[: len(free)]
            u[free] += du
            lam.ravel()[lsel] += sol[len(free):]
            du_inf = np.abs(du).max(initial=0.0) / max(np.abs(u).max(initial=0.0), 1e-300)
        states = history[-1]
        raise RuntimeError(f"semi-smooth Newton did not converge in {par.max_iter} iterations "
                           f"(momentum {states['momentum']:.2e}, contact {states['contact']:.2e}, "
                           f"open/stick/slip {states['n_open']}/{states['n_stick']}/{states['n_slip']})")


def contact_state(lam, friction, eps=0.0):
    """0 = open, 1 = stick, 2 = slip per face (multipliers in the local frame)."""
    lam = np.asarray(lam).reshape(-1, 3)
    ln = lam[:, 0]
    lt = np.linalg.norm(lam[:, 1:], axis=1)
    return np.where(ln <= eps, 0, np.where(lt < friction * ln - eps, 1, 2))


@dataclass
class ComplementarityReport:
    ok: bool
    max_violation: dict


def complementarity_check(lam, jump, w, friction, tol, lam_scale=None, jump_scale=None):
    """Per-face conditions of the contact problem in inequality form, scaled
    by representative magnitudes of the multiplier and of the jumps."""
    lam = np.asarray(lam).reshape(-1, 3)
    jump = np.asarray(jump).reshape(-1, 3)
    w = np.asarray(w).reshape(-1, 3)
    ls = lam_scale if lam_scale is not None else max(np.abs(lam).max(initial=0.0), 1e-300)
    js = jump_scale if jump_scale is not None else max(np.abs(jump).max(initial=0.0), np.abs(w).max(initial=0.0), 1e-300)
    ln = lam[:, 0]
    lt = lam[:, 1:]
    wt = w[:, 1:]
    v = {
        "lambda_n_nonneg": float(np.maximum(-ln, 0).max(initial=0.0) / ls),
        "jump_n_nonpos": float(np.maximum(jump[:, 0], 0).max(initial=0.0) / js),
        "normal_product": float(np.abs(ln * jump[:, 0]).max(initial=0.0) / (ls * js)),
        "cone": float(np.maximum(np.linalg.norm(lt, axis=1) - friction * ln, 0).max(initial=0.0) / ls),
        "friction_work": float(np.abs(np.einsum("ij,ij->i", lt, wt) - friction * ln * np.linalg.norm(wt, axis=1)).max(initial=0.0) / (ls * js)),
    }
    return ComplementarityReport(all(x <= tol for x in v.values()), v)
