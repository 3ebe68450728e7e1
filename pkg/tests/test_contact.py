import numpy as np
import pytest

from polycontact.cases import run_dfm6
from polycontact.contact import (ContactParams, ContactSolver, MechSystem, complementarity_check, contact_state,
                                 default_beta, lame, projection_ball, projection_Rplus)
from polycontact.generators import FracturePlane, build_cartesian
from polycontact.spaces import DisplacementSpace, cone_project


def test_projections():
    assert projection_Rplus(-2.0) == 0.0 and projection_Rplus(3.0) == 3.0
    assert np.allclose(projection_ball([3.0, 4.0], 10.0), [3, 4])
    assert np.allclose(projection_ball([3.0, 4.0], 1.0), [0.6, 0.8])
    assert np.all(projection_ball([3.0, 4.0], 0.0) == 0)
    assert np.all(projection_ball([0.0, 0.0], 0.0) == 0)
    with pytest.raises(ValueError):
        projection_ball([1.0, 0.0], -1.0)


def block(n=2, two_sided=False, tets=False, friction=0.0, planes=(FracturePlane(0, 0.0),)):
    m, net = build_cartesian(n, n, n, fracture_planes=list(planes), tets=tets)
    sp = DisplacementSpace(m, net, two_sided=two_sided)
    S = MechSystem(sp, 1.0, 1.0)
    beta = default_beta(sp, 1.0, 1.0)
    return sp, S, ContactSolver(S, ContactParams(np.full(net.n, friction), beta, beta))


def faces_at(sp, axis, value):
    X = sp.mesh.vertices
    return sp.sides_of_vertices(np.abs(X[:, axis] - value) < 1e-12)


def test_lame():
    mu, lam = lame(25e9, 0.25)
    assert np.isclose(mu, 1e10) and np.isclose(lam, 1e10)


def test_zero_problem_has_zero_solution():
    sp, S, solver = block()
    bs = sp.sides_of_vertices(sp.mesh.boundary_vertex)
    res = solver.solve(np.zeros(sp.ndof), sp.dofs(bs), 0.0)
    assert res.converged and res.iterations == 0
    assert np.all(res.u == 0) and np.all(res.lam == 0)
    assert cone_project(res.lam_global(sp.net.frame), sp.net.normal, 0.0).feasible


@pytest.mark.parametrize("tets", [False, True])
def test_linear_patch_without_fracture(tets):
    sp, S, solver = block(n=3, tets=tets, planes=())
    A = np.random.default_rng(0).standard_normal((3, 3)) * 1e-2
    q = lambda X, c: X @ A.T + [1e-3, 0, 0]
    want = sp.interp_full(q)
    bs = sp.sides_of_vertices(sp.mesh.boundary_vertex)
    res = solver.solve(np.zeros(sp.ndof), sp.dofs(bs), want.reshape(-1, 3)[bs].ravel())
    assert np.allclose(res.u, want, atol=1e-14)


@pytest.mark.parametrize("two_sided", [False, True])
def test_system_dimensions(two_sided):
    sp, S, _ = block(two_sided=two_sided)
    nf = sp.net.n
    assert S.A.shape == (sp.ndof, sp.ndof)
    assert sp.ndof == 3 * sp.n_sides + 3 * nf * (2 if two_sided else 1)
    assert S.B.shape == (3 * nf, sp.ndof)
    # symmetric positive semidefinite elastic operator
    assert abs(S.A - S.A.T).max() < 1e-12


@pytest.mark.parametrize("two_sided", [False, True])
def test_opened_fracture_has_zero_multiplier(two_sided):
    sp, S, solver = block(two_sided=two_sided)
    left, right = faces_at(sp, 0, -1.0), faces_at(sp, 0, 1.0)
    fixed = np.concatenate([sp.dofs(left), sp.dofs(right)])
    vals = np.concatenate([np.zeros(3 * len(left)), np.tile([0.01, 0, 0], len(right))])
    res = solver.solve(np.zeros(sp.ndof), fixed, vals)
    assert res.converged
    assert np.all(res.lam == 0)
    jn = S.Jn @ res.u
    # + side is x < 0 with n+ = e_x: separation gives a negative normal jump
    assert np.allclose(jn, -0.01, rtol=1e-10)
    assert np.all(contact_state(res.lam, 0.0) == 0)


def test_closed_frictionless_fracture_slips():
    sp, S, solver = block()
    left, right = faces_at(sp, 0, -1.0), faces_at(sp, 0, 1.0)
    fixed = np.concatenate([sp.dofs(left), sp.dofs(right)])
    vals = np.concatenate([np.zeros(3 * len(left)), np.tile([-0.01, 0.01, 0], len(right))])
    res = solver.solve(np.zeros(sp.ndof), fixed, vals)
    assert res.converged
    assert np.all(res.lam[:, 0] > 0) and np.abs(res.lam[:, 1:]).max() == 0
    assert np.all(contact_state(res.lam, 0.0) == 2)
    assert np.abs(S.Jn @ res.u).max() < 1e-12


def test_stick_limit_matches_tied_interface():
    # affine data on the whole boundary: the tied solution is the affine field
    A = np.array([[-0.005, 0, 0], [0.005, 0, 0], [0.0025, 0, 0]])
    q = lambda X, c: X @ A.T
    sp, S, solver = block(friction=1e6)
    tied, _, tsolver = block(planes=())
    out = []
    for s_, sol in ((sp, solver), (tied, tsolver)):
        bs = s_.sides_of_vertices(s_.mesh.boundary_vertex)
        want = s_.interp_full(q)
        res = sol.solve(np.zeros(s_.ndof), s_.dofs(bs), want.reshape(-1, 3)[bs].ravel())
        assert res.converged and np.allclose(res.u, want, atol=1e-14)
        out.append(res)
    res = out[0]
    assert np.abs(S.RJ @ res.u).max() < 1e-14
    assert np.all(contact_state(res.lam, 1e6) == 1)
    # λ = -σ n+ with σ_xx = 2μ ε_xx + λ tr ε
    assert np.allclose(res.lam_global(sp.net.frame), [0.015, -0.005, -0.0025], atol=1e-14)


def test_contact_state_labels():
    lam = np.array([[0.0, 0, 0], [1.0, 0.1, 0], [1.0, 0.5, 0], [-1.0, 0, 0]])
    assert list(contact_state(lam, 0.5)) == [0, 1, 2, 0]


def test_complementarity_check_flags_violations():
    lam = np.array([[1.0, 0.5, 0.0]])
    ok = complementarity_check(lam, np.zeros((1, 3)), np.array([[0, 1.0, 0]]), 0.5, 1e-12)
    assert ok.ok
    bad = complementarity_check(lam, np.array([[0.1, 0, 0]]), np.array([[0, -1.0, 0]]), 0.5, 1e-12)
    assert not bad.ok
    assert bad.max_violation["jump_n_nonpos"] > 0 and bad.max_violation["friction_work"] > 0


def test_dfm6_static_complementarity():
    out = run_dfm6(0)
    res, S = out["result"], out["system"]
    net = S.space.net
    j = S.RJ @ res.u
    rep = complementarity_check(res.lam, j, j, net.friction, 1e-8)
    assert res.converged and rep.ok, rep.max_violation
    lg = res.lam_global(net.frame)
    assert cone_project(lg, net.normal, net.friction, tol=1e-14 * np.abs(lg).max()).feasible
    # in the local frame the projection makes the cone exact
    assert np.all(res.lam[:, 0] >= 0)
    assert np.all(np.linalg.norm(res.lam[:, 1:], axis=1) <= net.friction * res.lam[:, 0] * (1 + 1e-15))
    states = contact_state(res.lam, net.friction)
    assert {0, 1, 2} >= set(states)
