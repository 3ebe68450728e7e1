import numpy as np
import pytest

from polycontact.cases import PoroSetup, _poro_problem, coupled_dfm6_problem, run_coupled
from polycontact.contact import MechSystem, lame
from polycontact.coupling import (CoupledState, FixedStressParams, FixedStressSolver, energy_audit,
                                  relaxation_matrix, update_state)
from polycontact.generators import build_cartesian
from polycontact.spaces import DisplacementSpace, StateFields


def test_update_state_examples():
    st = StateFields(np.full(3, 0.2), np.full(2, 1e-3), np.full(2, 1e-15))
    same = update_state(st, 0.5, 1e10, np.zeros(3), np.zeros(3), np.zeros(2))
    assert np.array_equal(same.porosity, st.porosity) and np.array_equal(same.aperture, st.aperture)
    up = update_state(st, 0.5, 10e9, np.zeros(3), np.full(3, 1e6), np.zeros(2))
    assert np.allclose(up.porosity - st.porosity, 1e-4, rtol=1e-12)
    op = update_state(st, 0.5, 1e10, np.full(3, 1e-3), np.zeros(3), np.full(2, -2e-4))
    assert np.allclose(op.porosity, 0.2 + 5e-4) and np.allclose(op.aperture, 1.2e-3)
    assert np.isclose(st.conductivity[0], 1e-9 / 12) and np.isclose(st.transmissivity[0], 2e-12)


def test_relaxation_coefficient():
    mu, lam = lame(4e9, 0.2)
    assert np.isclose(relaxation_matrix(0.5, mu, lam), 3 * 0.25 / (2 * mu + 3 * lam))
    with pytest.raises(ValueError):
        FixedStressParams(C_rm=-1.0)


def box_problem(setup, n=3):
    m, net = build_cartesian(n, n, n, box=((0, 1),) * 3)
    sp = DisplacementSpace(m, net)
    S = MechSystem(sp, *lame(setup.E, setup.nu))
    X = m.vertices
    bottom = sp.sides_of_vertices(np.abs(X[:, 2]) < 1e-12)
    top = sp.sides_of_vertices(np.abs(X[:, 2] - 1) < 1e-12)
    bf = m.boundary_faces
    left = bf[np.abs(m.face_centroid[bf, 0]) < 1e-12]
    return _poro_problem(m, net, sp, S, setup, sp.dofs(bottom), top, (0, 1, 2), left)


def test_decoupled_limit_needs_one_extra_iteration():
    setup = PoroSetup(biot=0.0, T=10.0, steps=3, top=(1e-4, 0, -1e-4), p0=2e5)
    pb, fs = box_problem(setup)
    pb.flow_dirichlet_values[:] = 1e5
    fs = FixedStressParams(1e-10, setup.u_ref, setup.p_ref, 0.0, 0.0)
    out = run_coupled(pb, fs, setup)
    assert [r["inner"] for r in out["rows"]] == [2, 2, 2]
    assert all(a.passed for a in out["audits"])


def test_equilibrium_start_is_steady():
    setup = PoroSetup(T=10.0, steps=2, top=(0.0, 0.0, 0.0))
    pb, fs = box_problem(setup)
    solver = FixedStressSolver(pb, fs)
    p0 = np.full(pb.flow.ps.n, setup.p0)
    s0 = solver.initialize(0.0, p0)
    s1 = solver.step([s0], 5.0)
    assert np.allclose(s1.p, setup.p0, rtol=1e-12)
    assert np.abs(s1.u - s0.u).max() <= 1e-12 * max(np.abs(s0.u).max(), 1e-300) + 1e-20
    a = energy_audit(pb, s0, s1)
    assert a.passed and abs(a.terms["darcy_matrix"]) < 1e-12 * setup.p0 ** 2


@pytest.fixture(scope="module")
def dfm_run():
    setup = PoroSetup(steps=6)
    pb, fs = coupled_dfm6_problem(0, setup)
    return setup, pb, fs


def test_first_iterate_is_sequential(dfm_run):
    setup, pb, fs = dfm_run
    solver = FixedStressSolver(pb, fs)
    s0 = solver.initialize(0.0, np.full(pb.flow.ps.n, setup.p0))
    t1 = setup.T / setup.steps
    # one sequential pass: flow with the previous displacement, then mechanics
    A = pb.flow.operator(s0.fields.conductivity, s0.fields.transmissivity)
    p_seq = solver.flow(A, t1, s0, s0.u, s0.p)
    u_seq = solver.mechanics(t1, p_seq, u0=s0.u, lam0=s0.lam, u_prev=s0.u).u
    one = FixedStressSolver(pb, FixedStressParams(1e300, fs.u_ref, fs.p_ref, fs.C_rm, fs.C_rf))
    s1 = one.step([s0], t1)
    assert s1.inner == 1
    assert np.allclose(s1.p, p_seq, rtol=0, atol=1e-12 * setup.p0)
    assert np.allclose(s1.u, u_seq, rtol=0, atol=1e-14)


def test_converged_step_is_a_fixpoint(dfm_run):
    setup, pb, fs = dfm_run
    solver = FixedStressSolver(pb, fs)
    s0 = solver.initialize(0.0, np.full(pb.flow.ps.n, setup.p0))
    t1 = setup.T / setup.steps
    s1 = solver.step([s0], t1)
    A = pb.flow.operator(s0.fields.conductivity, s0.fields.transmissivity)
    p = solver.flow(A, t1, s0, s1.u, s1.p)
    assert np.abs(p - s1.p).max() / fs.p_ref < fs.eps_fs
    u = solver.mechanics(t1, s1.p, u0=s1.u, lam0=s1.lam, u_prev=s0.u).u
    assert np.abs(u - s1.u).max() / fs.u_ref < fs.eps_fs


def test_short_run_audit_and_aperture(dfm_run):
    setup, pb, fs = dfm_run
    out = run_coupled(pb, fs, setup)
    assert len(out["rows"]) == setup.steps
    for r, a in zip(out["rows"], out["audits"]):
        assert a.passed, str(a)
        assert a.terms["friction"] >= 0
        # d ≥ d_c up to the contact solver tolerance on the normal jump
        assert r["aperture_margin"] >= -pb.contact.tol * setup.aperture_c
        assert r["fs_criterion"] < setup.eps_fs
