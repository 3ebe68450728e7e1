"""Poromechanical coupling: porosity/aperture laws, fixed-stress iterations
and a per-step energy audit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contact import ContactParams, ContactSolver, MechSystem
from .flow import HFVDiscretization
from .spaces import StateFields

log = logging.getLogger(__name__)


def relaxation_matrix(b, mu, lam):
    """C_{r,m} = 3 b² / (2μ + 3λ)."""
    return 3.0 * np.asarray(b, float) ** 2 / (2.0 * np.asarray(mu, float) + 3.0 * np.asarray(lam, float))


def update_state(state: StateFields, b, M, div_du, dp_cell, jn_du, C_rm=0.0, dp_cell_fs=None,
                 C_rf=0.0, dp_frac_fs=None) -> StateFields:
    """Porosity and aperture after increments of displacement and pressure.

    φ ← φ + b div(δu) + δp/M (+ C_rm δp_fs), d ← d - ⟦δu⟧_n (+ C_rf δp_f,fs).
    """
    phi = state.porosity + b * np.asarray(div_du) + np.asarray(dp_cell) / M
    if dp_cell_fs is not None:
        phi = phi + C_rm * np.asarray(dp_cell_fs)
    d = state.aperture - np.asarray(jn_du)
    if dp_frac_fs is not None:
        d = d + C_rf * np.asarray(dp_frac_fs)
    return StateFields(phi, d, state.normal_perm)


@dataclass
class FixedStressParams:
    eps_fs: float = 1e-5
    u_ref: float = 1e-3
    p_ref: float = 1e5
    C_rm: float | np.ndarray = 0.0
    C_rf: float = 0.0
    max_iter: int = 100

    def __post_init__(self):
        if np.any(np.asarray(self.C_rm) < 0) or self.C_rf < 0:
            raise ValueError("relaxation coefficients must be non-negative")


@dataclass
class PoroProblem:
    """Data of a coupled run. ``mech_bc(t)`` returns (fixed dofs, values),
    ``mech_load(t)`` the external load vector (body forces, tractions)."""
    mech: MechSystem
    contact: ContactParams
    flow: HFVDiscretization
    biot: float
    biot_modulus: float
    porosity0: np.ndarray
    contact_aperture: np.ndarray
    normal_perm: np.ndarray
    mech_bc: Callable
    mech_load: Callable
    flow_dirichlet: np.ndarray
    flow_dirichlet_values: np.ndarray
    source_matrix: np.ndarray | None = None  # h_m per cell (1/s)
    source_fracture: np.ndarray | None = None  # h_f per fracture face (m/s)

    def jn(self, u):
        return self.mech.Jn @ u


@dataclass
class CoupledState:
    t: float
    u: np.ndarray
    lam: np.ndarray
    p: np.ndarray
    fields: StateFields
    inner: int = 0
    newton: int = 0
    criteria: list = field(default_factory=list)


@dataclass
class EnergyAudit:
    terms: dict
    lhs: float
    rhs: float
    tolerance: float
    splitting_defect: float

    @property
    def residual(self):
        return self.lhs - self.rhs

    @property
    def passed(self):
        return self.residual <= self.tolerance

    def __str__(self):
        body = ", ".join(f"{k}={v:.4e}" for k, v in self.terms.items())
        return f"energy audit {'pass' if self.passed else 'FAIL'}: lhs-rhs={self.residual:.3e} tol={self.tolerance:.3e} ({body})"


class FixedStressSolver:
    def __init__(self, problem: PoroProblem, params: FixedStressParams):
        self.pb = problem
        self.par = params
        self.newton = ContactSolver(problem.mech, problem.contact)
        m = problem.mech.space.mesh
        self.vol = m.cell_volume
        net = problem.mech.space.net
        self.area = m.face_area[net.faces]
        self.nc = m.n_cells

    # ------------------------------------------------------------------
    def mechanics(self, t, p, u0=None, lam0=None, u_prev=None):
        pb = self.pb
        ps = pb.flow.ps
        fixed, vals = pb.mech_bc(t)
        F = pb.mech_load(t) + pb.mech.load(p_cell=p[: self.nc], biot=pb.biot, p_frac=p[ps.frac_face])
        return self.newton.solve(F, fixed, vals, u0=u0, lam0=lam0, u_prev=u_prev)

    def _sources(self):
        pb = self.pb
        ps = pb.flow.ps
        rhs = np.zeros(ps.n)
        if pb.source_matrix is not None:
            rhs[: self.nc] += self.vol * pb.source_matrix
        if pb.source_fracture is not None:
            rhs[ps.frac_face] += self.area * pb.source_fracture
        return rhs

    def flow_diagonal(self, dt):
        ps = self.pb.flow.ps
        diag = np.zeros(ps.n)
        diag[: self.nc] = self.vol * (1.0 / self.pb.biot_modulus + self.par.C_rm) / dt
        diag[ps.frac_face] = self.area * self.par.C_rf / dt
        return diag

    def flow(self, A, dt, prev: CoupledState, u_it, p_it, factorized=None):
        """Pressure solve with the relaxed porosity and aperture laws;
        ``factorized`` is an optional ``flow.factorize`` result for this step."""
        pb, par = self.pb, self.par
        ps = pb.flow.ps
        rec = pb.mech.rec
        M = pb.biot_modulus
        rhs = self._sources()
        du = u_it - prev.u
        known = pb.biot * rec.div(du) - prev.p[: self.nc] / M - par.C_rm * p_it[: self.nc]
        rhs[: self.nc] -= self.vol * known / dt
        known_f = -pb.jn(du) - par.C_rf * p_it[ps.frac_face]
        rhs[ps.frac_face] -= self.area * known_f / dt
        if factorized is not None:
            return factorized(rhs, pb.flow_dirichlet_values)
        return pb.flow.solve(A, self.flow_diagonal(dt), rhs, pb.flow_dirichlet, pb.flow_dirichlet_values)

    # ------------------------------------------------------------------
    def initialize(self, t0, p0) -> CoupledState:
        """Mechanical equilibrium under the initial pressure."""
        pb = self.pb
        p = np.array(p0, float)
        res = self.mechanics(t0, p)
        fields = StateFields(np.array(pb.porosity0, float), pb.contact_aperture - pb.jn(res.u),
                             np.array(pb.normal_perm, float))
        return CoupledState(t0, res.u, res.lam, p, fields, 0, res.iterations)

    def step(self, history: list, t_new) -> CoupledState:
        """One time step; ``history`` holds at least the previous state."""
        pb, par = self.pb, self.par
        prev = history[-1]
        older = history[-2] if len(history) > 1 else prev
        dt = t_new - prev.t
        if dt <= 0:
            raise ValueError("non-increasing time")
        dt_old = prev.t - older.t
        if dt_old > 0:
            u_it = prev.u + dt * (prev.u - older.u) / dt_old
            p_it = prev.p + dt * (prev.p - older.p) / dt_old
        else:
            u_it, p_it = prev.u.copy(), prev.p.copy()
        A = pb.flow.operator(prev.fields.conductivity, prev.fields.transmissivity)
        flow_solve = pb.flow.factorize(A, self.flow_diagonal(dt), pb.flow_dirichlet)
        lam = prev.lam
        newton = 0
        crit = []
        for k in range(1, par.max_iter + 1):
            p_new = self.flow(A, dt, prev, u_it, p_it, flow_solve)
            res = self.mechanics(t_new, p_new, u0=u_it, lam0=lam, u_prev=prev.u)
            newton += res.iterations
            c = np.abs(res.u - u_it).max() / par.u_ref + np.abs(p_new - p_it).max() / par.p_ref
            crit.append(float(c))
            log.debug("fixed-stress %d: %.3e (newton %d)", k, c, res.iterations)
            u_it, p_it, lam = res.u, p_new, res.lam
            if c < par.eps_fs:
                break
        else:
            flow_solve.free()
            raise RuntimeError(f"fixed-stress loop did not converge in {par.max_iter} iterations: {crit}")
        flow_solve.free()
        fields = update_state(prev.fields, pb.biot, pb.biot_modulus, pb.mech.rec.div(u_it - prev.u),
                              p_it[: self.nc] - prev.p[: self.nc], pb.jn(u_it - prev.u))
        # the aperture law is stated relative to the contact aperture
        fields.aperture = pb.contact_aperture - pb.jn(u_it)
        return CoupledState(t_new, u_it, lam, p_it, fields, len(crit), newton, crit)

    def run(self, times, p0, callback=None):
        states = [self.initialize(times[0], p0)]
        for t in times[1:]:
            states.append(self.step(states, t))
            if callback is not None:
                callback(states)
        return states

    # ------------------------------------------------------------------
    def audit(self, prev: CoupledState, cur: CoupledState, rel_tol=1e-8) -> EnergyAudit:
        return energy_audit(self.pb, prev, cur, rel_tol)


def energy_audit(pb: PoroProblem, prev: CoupledState, cur: CoupledState, rel_tol=1e-8) -> EnergyAudit:
    """Terms of the discrete energy inequality over one step, as rates.

    Non-homogeneous Dirichlet data add the work of the boundary reactions
    (mechanics) and of the boundary fluxes (flow) to the right-hand side.
    """
    S = pb.mech
    sp = S.space
    m = sp.mesh
    net = sp.net
    nc = m.n_cells
    ps = pb.flow.ps
    dt = cur.t - prev.t
    vol = m.cell_volume
    area = m.face_area[net.faces]
    M = pb.biot_modulus
    du = cur.u - prev.u
    Au = S.A @ cur.u
    elastic = (0.5 * cur.u @ Au - 0.5 * prev.u @ (S.A @ prev.u)) / dt
    pm, pm0 = cur.p[:nc], prev.p[:nc]
    pressure = float(np.sum(vol * (pm ** 2 - pm0 ** 2)) / (2 * M * dt))
    w = (S.RJ @ du).reshape(-1, 3)
    lam = cur.lam
    F = pb.contact.friction
    friction = float(np.sum(area * F * lam[:, 0] * np.linalg.norm(w[:, 1:], axis=1))) / dt
    contact_work = float(np.sum(area * np.einsum("fi,fi->f", lam, w))) / dt
    Am, Af, At = pb.flow.operator_parts(prev.fields.conductivity, prev.fields.transmissivity)
    p = cur.p
    d_m, d_f, d_t = float(p @ (Am @ p)), float(p @ (Af @ p)), float(p @ (At @ p))
    src = 0.0
    if pb.source_matrix is not None:
        src += float(np.sum(vol * pb.source_matrix * pm))
    if pb.source_fracture is not None:
        src += float(np.sum(area * pb.source_fracture * p[ps.frac_face]))
    Fext = pb.mech_load(cur.t)
    external = float(Fext @ du) / dt
    fixed, _ = pb.mech_bc(cur.t)
    Ftot = Fext + S.load(p_cell=pm, biot=pb.biot, p_frac=p[ps.frac_face])
    reaction = (Au + S.B.T @ lam.ravel() - Ftot)[fixed]
    mech_bnd = float(reaction @ du[fixed]) / dt
    dirich = pb.flow_dirichlet
    # Dirichlet rows of the operator hold the inflow through those faces
    inflow = ((Am + Af + At) @ p)[dirich]
    flow_bnd = float(p[dirich] @ inflow)
    terms = dict(elastic_rate=float(elastic), pressure_rate=pressure, friction=friction,
                 darcy_matrix=d_m, darcy_fracture=d_f, transmission=d_t,
                 source_work=src, external_work=external, mech_boundary_work=mech_bnd,
                 flow_boundary_work=flow_bnd)
    lhs = elastic + pressure + friction + d_m + d_f + d_t
    rhs = src + external + mech_bnd + flow_bnd
    numerical = (0.5 * du @ (S.A @ du) + np.sum(vol * (pm - pm0) ** 2) / (2 * M)) / dt + contact_work - friction
    defect = lhs + numerical - rhs
    # rounding floor: absolute sizes of the summed products, so that a state
    # at rest is not judged on cancellation noise
    Aabs = abs(S.A)
    Fabs = abs(Am) + abs(Af) + abs(At)
    ap = np.abs(p)
    size = (float(np.abs(cur.u) @ (Aabs @ np.abs(cur.u)) + np.abs(prev.u) @ (Aabs @ np.abs(prev.u))) / dt
            + float(np.sum(vol * (pm ** 2 + pm0 ** 2)) / (M * dt)) + float(ap @ (Fabs @ ap)))
    tol = rel_tol * max(abs(v) for v in terms.values()) + 64 * np.finfo(float).eps * size
    return EnergyAudit(terms, float(lhs), float(rhs), float(tol), float(defect))


def mean_quantities(pb: PoroProblem, st: CoupledState):
    """Area/volume-weighted means used in the time-series output."""
    m = pb.mech.space.mesh
    net = pb.mech.space.net
    ps = pb.flow.ps
    vol = m.cell_volume
    area = m.face_area[net.faces]
    w = (pb.mech.RJ @ st.u).reshape(-1, 3)
    return dict(
        t=st.t,
        mean_pm=float(np.sum(vol * st.p[: m.n_cells]) / vol.sum()),
        mean_phi=float(np.sum(vol * st.fields.porosity) / vol.sum()),
        mean_pf=float(np.sum(area * st.p[ps.frac_face]) / area.sum()) if net.n else 0.0,
        mean_df=float(np.sum(area * st.fields.aperture) / area.sum()) if net.n else 0.0,
        mean_jump_t=float(np.sum(area * np.linalg.norm(w[:, 1:], axis=1)) / area.sum()) if net.n else 0.0,
    )
