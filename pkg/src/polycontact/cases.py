"""Test problems: geometry, data and post-processing of the verification
and demonstration cases."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .analytic import CompressionSolution, ManufacturedSolution
from .contact import ContactParams, ContactSolver, MechSystem, complementarity_check, default_beta, lame
from .coupling import (FixedStressParams, FixedStressSolver, PoroProblem, energy_audit, mean_quantities,
                       relaxation_matrix)
from .flow import HFVDiscretization
from .generators import (FracturePlane, Mesh2D, build_cartesian, extrude_2d, insert_fracture_midpoints,
                         perturb_and_cut, refine_uniform, triangulate_pslg)
from .quadrature import iter_cell_quadrature
from .recon import l2_errors
from .spaces import DisplacementSpace, PressureSpace

log = logging.getLogger(__name__)


def _rel_l2(err, ref, w):
    den = np.sqrt(np.sum(w * ref ** 2))
    return float(np.sqrt(np.sum(w * err ** 2)) / (den if den > 0 else 1.0))


def _cell_average(mesh, fn, degree=5):
    out = np.zeros((mesh.n_cells, 3))
    for pts, wts, cells in iter_cell_quadrature(mesh, degree):
        np.add.at(out, cells, wts[:, None] * fn(pts, mesh.cell_centroid[cells]))
    return out / mesh.cell_volume[:, None]


# ----------------------------------------------------------------------
# 3D manufactured frictionless solution

def manufactured_mesh(level, family="cartesian", seed=1, amplitude=0.2):
    n = 2 ** level
    m, net = build_cartesian(n, n, n, fracture_planes=[FracturePlane(0, 0.0)], tets=family == "tet")
    if family == "hex":
        m, net = perturb_and_cut(m, net, amplitude, seed)
    elif family not in ("cartesian", "tet"):
        raise ValueError(f"unknown mesh family {family!r}")
    return m, net


def run_manufactured(level, family="cartesian", two_sided=False, seed=1, amplitude=0.2, mu=1.0, lam=1.0, tol=1e-10):
    t0 = time.perf_counter()
    sol = ManufacturedSolution(mu, lam)
    m, net = manufactured_mesh(level, family, seed, amplitude)
    sp = DisplacementSpace(m, net, two_sided=two_sided)
    S = MechSystem(sp, mu, lam)
    F = S.load(body=_cell_average(m, sol.f))
    bs = sp.sides_of_vertices(m.boundary_vertex)
    vals = sol.u(m.vertices[sp.partition.side_vertex[bs]], m.cell_centroid[sp.side_cell()[bs]])
    beta = default_beta(sp, mu, lam)
    res = ContactSolver(S, ContactParams(np.zeros(net.n), beta, beta, tol=tol)).solve(F, sp.dofs(bs), vals.ravel())
    err = l2_errors(S.rec, res.u, res.lam[:, 0], sol.u, sol.grad, sol.lambda_n)
    return dict(case="manufactured3d", family=family, level=level, h=2.0 / 2 ** level, cells=m.n_cells,
                ndof=sp.ndof, newton=res.iterations, converged=res.converged, seconds=time.perf_counter() - t0,
                errors=err, result=res, system=S)


# ----------------------------------------------------------------------
# 2D helpers (one layer of prisms, z displacements eliminated)

def planar_fixed(sp: DisplacementSpace):
    """z components of every side node and bubble."""
    return sp.dofs(np.arange(sp.n_scalar), comps=(2,))


def _face_segment_index(m, net, P2, S2):
    """For every fracture face, the index of the 2D segment it extrudes."""
    mid = 0.5 * (P2[S2[:, 0]] + P2[S2[:, 1]])
    d, i = cKDTree(mid).query(m.face_centroid[net.faces][:, :2])
    if d.max() > 1e-9 * max(1.0, np.ptp(P2)):
        raise RuntimeError("fracture faces do not match the 2D segments")
    return i


# ----------------------------------------------------------------------
# Compression of an inclined fracture in a large square

@dataclass
class CompressionSetup:
    E: float = 25e9
    nu: float = 0.25
    sigma: float = 100e6
    psi: float = np.pi / 9
    friction: float = 1 / np.sqrt(3)
    ell: float = 1.0
    L: float = 160.0
    n_frac: int = 40  # fracture faces of the coarsest mesh
    grading: float = 0.4
    h_max: float = 20.0
    band_rows: int = 3


def compression_base_mesh(cs: CompressionSetup):
    a = cs.L / 2
    d = cs.ell * np.array([np.cos(cs.psi), np.sin(cs.psi)])
    box = np.array([[-a, -a], [0, -a], [a, -a], [a, 0], [a, a], [0, a], [-a, a], [-a, 0]])
    t = np.linspace(-1, 1, cs.n_frac + 1)
    fr = t[:, None] * d
    hf = 2 * cs.ell / cs.n_frac
    # structured band of near-equilateral triangles along the fracture
    nrm = np.array([-d[1], d[0]]) / cs.ell
    band = []
    for j in range(1, cs.band_rows + 1):
        tt = np.arange(-cs.n_frac / 2 - j / 2, cs.n_frac / 2 + j / 2 + 1e-9) * hf / cs.ell
        for sgn in (1, -1):
            band.append(tt[:, None] * d + sgn * j * np.sqrt(3) / 2 * hf * nrm)
    P = np.concatenate([box, fr] + band)
    nb = len(box)
    segs = [(i, (i + 1) % nb) for i in range(nb)] + [(nb + i, nb + i + 1) for i in range(cs.n_frac)]
    marks = [0] * nb + [1] * cs.n_frac

    def size(c):
        # distance to the fracture segment
        s = np.clip(c @ d / cs.ell ** 2, -1, 1)
        dist = np.linalg.norm(c - s[:, None] * d, axis=1)
        return np.minimum(hf + cs.grading * dist, cs.h_max)

    return triangulate_pslg(P, segs, marks, max_area=0.433 * cs.h_max ** 2, size_fn=size)


def compression_mesh(level, cs: CompressionSetup | None = None, base=None):
    cs = cs or CompressionSetup()
    P, T, S, mk = base if base is not None else compression_base_mesh(cs)
    Sf = S[mk == 1]
    for _ in range(level):
        P, T, Sf, _ = refine_uniform(P, T, Sf)
    return P, T, Sf


def run_compression(level, cs: CompressionSetup | None = None, two_sided=False, beta_scale=1.0, tol=1e-10,
                    base=None, tip_fraction=0.05):
    t0 = time.perf_counter()
    cs = cs or CompressionSetup()
    P, T, Sf = compression_mesh(level, cs, base)
    m2 = Mesh2D(P, T, Sf)
    m, net = extrude_2d(m2, friction=cs.friction)
    sp = DisplacementSpace(m, net, two_sided=two_sided)
    mu, lam = lame(cs.E, cs.nu)
    S = MechSystem(sp, mu, lam, planar=True)
    a = cs.L / 2
    X = m.vertices
    bf = m.boundary_faces
    nx = m.face_normal[bf, 0]
    left = bf[(np.abs(m.face_centroid[bf, 0] + a) < 1e-9) & (np.abs(nx) > 0.5)]
    right = bf[(np.abs(m.face_centroid[bf, 0] - a) < 1e-9) & (np.abs(nx) > 0.5)]
    F = S.load(tractions=[(left, [cs.sigma, 0, 0]), (right, [-cs.sigma, 0, 0])])
    tol_x = 1e-9 * a
    vx = (np.abs(X[:, 0]) < tol_x) & (np.abs(np.abs(X[:, 1]) - a) < tol_x)
    vy = (np.abs(X[:, 1]) < tol_x) & (np.abs(np.abs(X[:, 0]) - a) < tol_x)
    if vx.sum() != 4 or vy.sum() != 4:
        raise RuntimeError("point constraint vertices missing from the mesh")
    fixed = np.concatenate([planar_fixed(sp), sp.dofs(sp.sides_of_vertices(vx), (0,)),
                            sp.dofs(sp.sides_of_vertices(vy), (1,))])
    fixed = np.unique(fixed)
    beta = beta_scale * default_beta(sp, mu, lam)
    par = ContactParams(net.friction, beta, beta, tol=tol)
    res = ContactSolver(S, par).solve(F, fixed, np.zeros(len(fixed)))
    out = dict(case="compression2d", level=level, faces=net.n, cells=m.n_cells, ndof=sp.ndof,
               newton=res.iterations, converged=res.converged, result=res, system=S)
    out.update(compression_errors(cs, m, net, S, res, tip_fraction))
    out["seconds"] = time.perf_counter() - t0
    return out


def compression_errors(cs: CompressionSetup, m, net, S, res, tip_fraction=0.05, prefactor=None):
    sol = CompressionSolution(cs.E, cs.nu, cs.sigma, cs.psi, cs.friction, cs.ell, prefactor)
    d = np.array([np.cos(cs.psi), np.sin(cs.psi)])
    c2 = m.face_centroid[net.faces][:, :2]
    tau_c = c2 @ d + cs.ell
    area = m.face_area[net.faces]
    hlen = area / 1.0 / 2  # half segment length (unit thickness)
    gx, gw = np.polynomial.legendre.leggauss(24)
    taus = tau_c[:, None] + hlen[:, None] * gx[None]
    exact_slip = (sol.slip(taus) * gw).sum(axis=1) / 2
    jump = (S.RJ @ res.u).reshape(-1, 3)
    slip = np.abs(jump[:, 1])
    lam_n = res.lam[:, 0]
    keep = (tau_c >= tip_fraction * 2 * cs.ell) & (tau_c <= (1 - tip_fraction) * 2 * cs.ell)
    return dict(h=float(2 * hlen.max()), tau=tau_c, slip=slip, exact_slip=exact_slip, lam_n=lam_n,
                lam_exact=sol.lambda_n, keep=keep,
                err_jump=_rel_l2(slip - exact_slip, exact_slip, area),
                err_lam=_rel_l2(lam_n[keep] - sol.lambda_n, np.full(keep.sum(), sol.lambda_n), area[keep]),
                lam_maxdev=float(np.abs(lam_n[keep] / sol.lambda_n - 1).max()),
                normal_jump_max=float(np.abs(jump[:, 0]).max()))


# ----------------------------------------------------------------------
# 2D network with six fractures (reconstructed geometry on (0,2)x(0,1))

DFM6_FRACTURES = [
    # fracture 1 has a corner; fracture 5 ends on the right boundary
    [(0.20, 0.25), (0.50, 0.50), (0.30, 0.80)],
    [(0.70, 0.15), (1.05, 0.40)],
    [(0.75, 0.80), (1.20, 0.60)],
    [(1.25, 0.15), (1.60, 0.38)],
    [(1.65, 0.55), (2.00, 0.80)],
    [(1.10, 0.90), (1.45, 0.72)],
]


def dfm6_friction(points, label, fractures=DFM6_FRACTURES):
    """0.5 (1 + 10 exp(-D²/0.005)), D = distance to the tips of the fracture
    (the corner of fracture 1 is not a tip)."""
    points = np.asarray(points, float)
    out = np.empty(len(points))
    for i, poly in enumerate(fractures):
        sel = label == i
        tips = np.array([poly[0], poly[-1]])
        D = np.linalg.norm(points[sel, None, :] - tips[None], axis=2).min(axis=1)
        out[sel] = 0.5 * (1 + 10 * np.exp(-D ** 2 / 0.005))
    return out


def dfm6_base_mesh(h=0.1, fractures=DFM6_FRACTURES):
    box = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], float)
    P = [tuple(p) for p in box]
    segs, marks = [], []
    bnd_nodes = [[0], [1], [2], [3]]  # extra points on each box side (in order)
    for i, poly in enumerate(fractures):
        ids = []
        for q in poly:
            P.append(tuple(q))
            ids.append(len(P) - 1)
        for a, b in zip(ids[:-1], ids[1:]):
            # pre-split so that every fracture segment has length <= h
            pa, pb = np.array(P[a]), np.array(P[b])
            k = max(1, int(np.ceil(np.linalg.norm(pb - pa) / h)))
            chain = [a]
            for j in range(1, k):
                P.append(tuple(pa + (pb - pa) * j / k))
                chain.append(len(P) - 1)
            chain.append(b)
            for u, v in zip(chain[:-1], chain[1:]):
                segs.append((u, v))
                marks.append(i + 1)
    P = np.array(P)
    # boundary: collect points lying on the box sides (fracture 5 tip)
    on = []
    for side, (a, b) in enumerate([(0, 1), (1, 2), (2, 3), (3, 0)]):
        pa, pb = box[a], box[b]
        t = pb - pa
        pts = [a]
        extra = []
        for j in range(4, len(P)):
            r = P[j] - pa
            if abs(t[0] * r[1] - t[1] * r[0]) < 1e-12 and 0 < r @ t < t @ t:
                extra.append((r @ t, j))
        pts += [j for _, j in sorted(extra)] + [b]
        on += list(zip(pts[:-1], pts[1:]))
    segs = on + segs
    marks = [0] * len(on) + marks
    Pt, T, S, mk = triangulate_pslg(P, segs, marks, max_area=0.433 * h ** 2)
    return Pt, T, S, mk


def dfm6_mesh(level, h=0.1, base=None, tri4=False):
    P, T, S, mk = base if base is not None else dfm6_base_mesh(h)
    Sf, lab = S[mk > 0], mk[mk > 0] - 1
    for _ in range(level):
        P, T, Sf, parent = refine_uniform(P, T, Sf)
        lab = lab[parent]
    polys = T
    if tri4:
        P, polys, Sf, parent = insert_fracture_midpoints(P, T, Sf)
        lab = lab[parent]
    return P, polys, Sf, lab


def _dfm6_discretisation(level, h, base, two_sided, E, nu, friction, tri4=False, **net_kw):
    P, polys, Sf, lab = dfm6_mesh(level, h, base, tri4)
    m2 = Mesh2D(P, polys, Sf, lab)
    m, net = extrude_2d(m2, **net_kw)
    seg = _face_segment_index(m, net, P, Sf)
    if friction is None:
        net.friction = dfm6_friction(m.face_centroid[net.faces][:, :2], net.label)
    else:
        net.friction = np.full(net.n, float(friction))
    sp = DisplacementSpace(m, net, two_sided=two_sided)
    mu, lam = lame(E, nu)
    S = MechSystem(sp, mu, lam, planar=True)
    return m2, m, net, seg, sp, S, (mu, lam)


def _top_bottom(m, sp):
    X = m.vertices
    bottom = sp.sides_of_vertices(np.abs(X[:, 1]) < 1e-12)
    top = sp.sides_of_vertices(np.abs(X[:, 1] - 1) < 1e-12)
    return bottom, top


def run_dfm6(level, h=0.1, base=None, two_sided=False, E=4e9, nu=0.2, top=(0.005, -0.002), tol=1e-10, tri4=False):
    t0 = time.perf_counter()
    m2, m, net, seg, sp, S, (mu, lam) = _dfm6_discretisation(level, h, base, two_sided, E, nu, None, tri4)
    bottom, topn = _top_bottom(m, sp)
    fixed = np.concatenate([planar_fixed(sp), sp.dofs(bottom, (0, 1)), sp.dofs(topn, (0, 1))])
    vals = np.concatenate([np.zeros(sp.n_scalar + 2 * len(bottom)), np.tile(top, len(topn))])
    fixed, idx = np.unique(fixed, return_index=True)
    vals = vals[idx]
    beta = default_beta(sp, mu, lam)
    res = ContactSolver(S, ContactParams(net.friction, beta, beta, tol=tol)).solve(S.load(), fixed, vals)
    jump = (S.RJ @ res.u).reshape(-1, 3)
    return dict(case="dfm6", level=level, faces=net.n, cells=m.n_cells, ndof=sp.ndof, newton=res.iterations,
                converged=res.converged, h=float(m.face_area[net.faces].max()), label=net.label,
                area=m.face_area[net.faces], segment=seg, jump=jump, lam=res.lam,
                centroid=m.face_centroid[net.faces][:, :2], result=res, system=S,
                seconds=time.perf_counter() - t0)


def transfer_to_coarse(fine_centroids, fine_values, fine_area, coarse_segments_xy):
    """Area-weighted mean of fine fracture-face values over each coarse
    fracture segment (nested meshes). ``coarse_segments_xy`` is (n, 2, 2)."""
    a = coarse_segments_xy[:, 0]
    b = coarse_segments_xy[:, 1]
    t = b - a
    L2 = np.einsum("ij,ij->i", t, t)
    # match every fine centroid to the coarse segment containing it
    r = fine_centroids[:, None, :] - a[None]
    s = np.einsum("fcj,cj->fc", r, t) / L2[None]
    dist = np.abs(r[..., 0] * t[None, :, 1] - r[..., 1] * t[None, :, 0]) / np.sqrt(L2)[None]
    inside = (s > -1e-9) & (s < 1 + 1e-9) & (dist < 1e-9)
    owner = np.argmax(inside, axis=1)
    if not inside.any(axis=1).all():
        raise RuntimeError("fine fracture faces outside the coarse network")
    n = len(coarse_segments_xy)
    vals = np.atleast_2d(fine_values.T).T
    out = np.zeros((n,) + vals.shape[1:])
    wsum = np.zeros(n)
    np.add.at(out, owner, fine_area.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals)
    np.add.at(wsum, owner, fine_area)
    return out / wsum.reshape((-1,) + (1,) * (vals.ndim - 1))


def dfm6_self_convergence(runs, ref):
    """Per-fracture relative L² errors of ⟦u⟧ and λ against the reference run."""
    table = []
    for r in runs:
        S = r["system"]
        m = S.space.mesh
        net = S.space.net
        faces = net.faces
        # coarse segment endpoints from the (vertical quad) face loops
        segs = np.zeros((net.n, 2, 2))
        for i, f in enumerate(faces):
            xy = m.vertices[m.face_loop(f), :2]
            u = np.unique(np.round(xy, 12), axis=0)
            segs[i] = u[:2]
        jr = transfer_to_coarse(ref["centroid"], ref["jump"][:, :2], ref["area"], segs)
        lr = transfer_to_coarse(ref["centroid"], ref["lam"][:, :2], ref["area"], segs)
        row = dict(level=r["level"], h=r["h"])
        for lab in np.unique(r["label"]):
            sel = r["label"] == lab
            w = r["area"][sel]
            row[f"jump_{lab + 1}"] = _rel_l2(np.linalg.norm(r["jump"][sel, :2] - jr[sel], axis=1),
                                             np.linalg.norm(jr[sel], axis=1), w)
            row[f"lam_{lab + 1}"] = _rel_l2(np.linalg.norm(r["lam"][sel, :2] - lr[sel], axis=1),
                                            np.linalg.norm(lr[sel], axis=1), w)
        w = r["area"]
        row["jump"] = _rel_l2(np.linalg.norm(r["jump"][:, :2] - jr, axis=1), np.linalg.norm(jr, axis=1), w)
        row["lam"] = _rel_l2(np.linalg.norm(r["lam"][:, :2] - lr, axis=1), np.linalg.norm(lr, axis=1), w)
        table.append(row)
    return table


# ----------------------------------------------------------------------
# coupled problems

@dataclass
class PoroSetup:
    E: float = 4e9
    nu: float = 0.2
    friction: float = 0.5
    biot: float = 0.5
    M: float = 10e9
    perm: tuple = (1e-15, 0.5e-15, 1e-15)
    normal_perm: float = 1e-15
    eta: float = 1e-3
    porosity0: float = 0.2
    aperture_c: float = 1e-3
    p0: float = 1e5
    T: float = 2000.0
    steps: int = 20
    ramp: float = 0.25  # fraction of T over which the top displacement ramps up
    top: tuple = (0.005, -0.002, 0.0)
    eps_fs: float = 1e-5
    u_ref: float = 1e-3
    p_ref: float = 1e5
    C_rf: float = 0.0
    newton_tol: float = 1e-10


def _ramp(t, T, frac):
    return min(t / (frac * T), 1.0) if frac > 0 else 1.0


def _poro_problem(m, net, sp, S, setup: PoroSetup, fixed_zero, top_sides, top_comps, flow_dirichlet_faces):
    mu, lam = S.mu, S.lam
    flow = HFVDiscretization(m, net, np.diag(setup.perm), setup.eta, PressureSpace(m, net))
    beta = default_beta(sp, mu, lam)
    params = ContactParams(np.full(net.n, setup.friction), beta, beta, tol=setup.newton_tol)
    top_dofs = sp.dofs(top_sides, top_comps)
    top_vals = np.tile(np.asarray(setup.top)[list(top_comps)], len(top_sides))
    fixed_all = np.concatenate([fixed_zero, top_dofs])
    fixed_all, idx = np.unique(fixed_all, return_index=True)
    base_vals = np.concatenate([np.zeros(len(fixed_zero)), top_vals])[idx]
    is_top = np.concatenate([np.zeros(len(fixed_zero), bool), np.ones(len(top_dofs), bool)])[idx]

    def mech_bc(t):
        return fixed_all, np.where(is_top, base_vals * _ramp(t, setup.T, setup.ramp), 0.0)

    zero = np.zeros(sp.ndof)

    def mech_load(t):
        return zero

    fmask = np.zeros(m.n_faces, bool)
    fmask[flow_dirichlet_faces] = True
    emask = np.zeros(len(m.edges), bool)
    if net.n:
        fv = np.zeros(m.n_vertices, bool)
        fv[np.unique(m.face_nodes[np.isin(np.repeat(np.arange(m.n_faces), np.diff(m.face_ptr)), flow_dirichlet_faces)])] = True
        emask = fv[m.edges].all(axis=1)
    dirich = flow.boundary_dirichlet(fmask, emask)
    pb = PoroProblem(S, params, flow, setup.biot, setup.M, np.full(m.n_cells, setup.porosity0),
                     np.full(net.n, setup.aperture_c), np.full(net.n, setup.normal_perm), mech_bc, mech_load,
                     dirich, np.full(len(dirich), setup.p0))
    fs = FixedStressParams(setup.eps_fs, setup.u_ref, setup.p_ref, float(relaxation_matrix(setup.biot, mu[0], lam[0])),
                           setup.C_rf)
    return pb, fs


def run_coupled(pb: PoroProblem, fs: FixedStressParams, setup: PoroSetup, audit=True, progress=None):
    solver = FixedStressSolver(pb, fs)
    times = np.linspace(0.0, setup.T, setup.steps + 1)
    p0 = np.full(pb.flow.ps.n, setup.p0)
    states = [solver.initialize(times[0], p0)]
    rows = []
    audits = []
    for t in times[1:]:
        states.append(solver.step(states[-2:], t))
        st = states[-1]
        row = mean_quantities(pb, st)
        row.update(inner=st.inner, newton=st.newton, fs_criterion=st.criteria[-1],
                   aperture_margin=float((st.fields.aperture - pb.contact_aperture).min()) if pb.mech.space.net.n else 0.0)
        if pb.mech.space.net.n:
            # friction law on the jump increment of the step
            RJ = pb.mech.RJ
            rep = complementarity_check(st.lam, RJ @ st.u, RJ @ (st.u - states[-2].u), pb.contact.friction,
                                        max(1e3 * pb.contact.tol, 1e-8))
            row.update(complementarity_pass=rep.ok, complementarity_violation=max(rep.max_violation.values()))
        if audit:
            a = energy_audit(pb, states[-2], st)
            audits.append(a)
            row.update({f"audit_{k}": v for k, v in a.terms.items()})
            row.update(audit_residual=a.residual, audit_tolerance=a.tolerance, audit_pass=a.passed,
                       audit_splitting_defect=a.splitting_defect)
        rows.append(row)
        if progress is not None:
            progress(row)
        states = states[-2:]
    return dict(rows=rows, audits=audits, final=states[-1], initial_newton=None)


def coupled_dfm6_problem(level, setup: PoroSetup | None = None, h=0.1, base=None, two_sided=False):
    setup = setup or PoroSetup()
    m2, m, net, seg, sp, S, _ = _dfm6_discretisation(level, h, base, two_sided, setup.E, setup.nu, setup.friction,
                                                     aperture=setup.aperture_c, normal_perm=setup.normal_perm)
    bottom, top = _top_bottom(m, sp)
    fixed_zero = np.concatenate([planar_fixed(sp), sp.dofs(bottom, (0, 1))])
    bf = m.boundary_faces
    left = bf[np.abs(m.face_centroid[bf, 0]) < 1e-12]
    left = left[np.abs(m.face_normal[left, 0]) > 0.5]
    pb, fs = _poro_problem(m, net, sp, S, setup, fixed_zero, top, (0, 1), left)
    return pb, fs


def run_coupled_dfm6(level, setup: PoroSetup | None = None, h=0.1, base=None, two_sided=False, audit=True,
                     progress=None):
    setup = setup or PoroSetup()
    t0 = time.perf_counter()
    pb, fs = coupled_dfm6_problem(level, setup, h, base, two_sided)
    out = run_coupled(pb, fs, setup, audit, progress)
    m = pb.mech.space.mesh
    out.update(case="coupled_dfm6", level=level, cells=m.n_cells, faces=pb.mech.space.net.n,
               ndof=pb.mech.space.ndof, npressure=pb.flow.ps.n, problem=pb,
               h=float(m.face_area[pb.mech.space.net.faces].max()), seconds=time.perf_counter() - t0)
    return out


SERIES = ("mean_pm", "mean_phi", "mean_pf", "mean_df", "mean_jump_t")


def time_series_errors(runs, ref, p0=1e5):
    """Relative discrete l² errors in time of the mean quantities against a
    reference run; pressures are compared as over-pressures p - p0."""
    table = []
    for r in runs:
        row = dict(level=r["level"], h=r["h"])
        for q in SERIES:
            a = np.array([x[q] for x in r["rows"]])
            b = np.array([x[q] for x in ref["rows"]])
            if q in ("mean_pm", "mean_pf"):
                a, b = a - p0, b - p0
            row[q] = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
        table.append(row)
    return table


@dataclass
class CubeSetup(PoroSetup):
    perm: tuple = (1e-14, 1e-14, 1e-14)
    normal_perm: float = 1e-14
    T: float = 20.0
    ramp: float = 0.5
    top: tuple = (0.002, 0.002, -0.002)
    n: int = 20


# three mutually intersecting rectangular fractures inside the unit cube
CUBE_FRACTURES = [
    FracturePlane(0, 0.5, bounds=((0.2, 0.8), (0.15, 0.85)), label=0),
    FracturePlane(1, 0.5, bounds=((0.25, 0.75), (0.2, 0.8)), label=1),
    FracturePlane(2, 0.45, bounds=((0.1, 0.9), (0.3, 0.7)), label=2),
]


def coupled_cube_problem(setup: CubeSetup | None = None, two_sided=False, fractures=CUBE_FRACTURES):
    setup = setup or CubeSetup()
    n = setup.n
    m, net = build_cartesian(n, n, n, box=((0, 1),) * 3, fracture_planes=fractures, tets=True,
                             aperture=setup.aperture_c, normal_perm=setup.normal_perm)
    sp = DisplacementSpace(m, net, two_sided=two_sided)
    mu, lam = lame(setup.E, setup.nu)
    S = MechSystem(sp, mu, lam)
    X = m.vertices
    bottom = sp.sides_of_vertices(np.abs(X[:, 2]) < 1e-12)
    top = sp.sides_of_vertices(np.abs(X[:, 2] - 1) < 1e-12)
    fixed_zero = sp.dofs(bottom)
    bf = m.boundary_faces
    yc = m.face_centroid[bf, 1]
    ny = np.abs(m.face_normal[bf, 1]) > 0.5
    dir_faces = bf[ny & ((np.abs(yc) < 1e-12) | (np.abs(yc - 1) < 1e-12))]
    return _poro_problem(m, net, sp, S, setup, fixed_zero, top, (0, 1, 2), dir_faces)


def run_coupled_cube(setup: CubeSetup | None = None, two_sided=False, audit=True, progress=None):
    setup = setup or CubeSetup()
    t0 = time.perf_counter()
    pb, fs = coupled_cube_problem(setup, two_sided)
    out = run_coupled(pb, fs, setup, audit, progress)
    m = pb.mech.space.mesh
    out.update(case="coupled_cube3d", cells=m.n_cells, faces=pb.mech.space.net.n, ndof=pb.mech.space.ndof,
               npressure=pb.flow.ps.n, problem=pb, two_sided=two_sided, seconds=time.perf_counter() - t0)
    return out
