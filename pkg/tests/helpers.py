"""Random cell families shared by the property tests."""
import numpy as np

from polycontact.generators import FracturePlane, Mesh2D, build_cartesian, extrude_2d, perturb_and_cut
from polycontact.mesh import FractureNetwork, PolyMesh
from polycontact.recon import Reconstruction
from polycontact.spaces import DisplacementSpace

KINDS = ("tet", "hex", "cut_hex", "prism")


def _affine(m, net, rng):
    A = np.eye(3) + 0.3 * rng.uniform(-1, 1, (3, 3))
    X = m.vertices @ A.T + rng.standard_normal(3)
    out = PolyMesh(X, m.face_ptr, m.face_nodes, m.face_cells)
    return out, FractureNetwork(out, net.faces, plus_normal=net.normal @ np.linalg.inv(A))


def _prisms(rng, n=3):
    x = np.linspace(0, 1, n + 1)
    P = np.array([(a, b) for b in x for a in x])
    inner = (P > 0).all(axis=1) & (P < 1).all(axis=1) & (np.abs(P[:, 1] - x[n // 2 + 1]) > 1e-12)
    P[inner] += rng.uniform(-0.2, 0.2, (inner.sum(), 2)) / n
    T = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 1, a + n + 2
            T += [[a, b, d], [a, d, c]] if rng.random() < 0.5 else [[a, b, c], [b, d, c]]
    row = n // 2 + 1
    S = [[row * (n + 1) + i, row * (n + 1) + i + 1] for i in range(n)]
    m, net = extrude_2d(Mesh2D(P, T, S), thickness=rng.uniform(0.3, 1.5))
    return _affine(m, net, rng)


def random_mesh(kind, seed):
    rng = np.random.default_rng(seed)
    plane = [FracturePlane(0, 0.0)]
    if kind == "tet":
        m, net = build_cartesian(2, 2, 2, fracture_planes=plane, tets=True)
        m, net = perturb_and_cut(m, net, 0.25, seed)
        return _affine(m, net, rng)
    if kind == "hex":
        return _affine(*build_cartesian(2, 2, 2, fracture_planes=plane), rng)
    if kind == "cut_hex":
        return perturb_and_cut(*build_cartesian(4, 2, 2, fracture_planes=plane), 0.25, seed)
    if kind == "prism":
        return _prisms(rng)
    raise ValueError(kind)


def random_cells(kind, count, seed=0):
    """(rec, cell) pairs; cells touching the fracture carry a bubble."""
    out = []
    s = seed
    while len(out) < count:
        m, net = random_mesh(kind, s)
        rec = Reconstruction(DisplacementSpace(m, net, two_sided=True))
        rng = np.random.default_rng(1000 + s)
        cells = rng.permutation(m.n_cells)[: max(1, min(m.n_cells, 8))]
        # keep at least one cell with a bubble per mesh
        frac = np.union1d(net.plus_cell, net.minus_cell)
        cells = np.union1d(cells[:6], frac[:2])
        out += [(rec, int(k)) for k in cells]
        s += 1
    return out[:count]


# ----------------------------------------------------------------------
# flow checks shared by the unit and acceptance suites

def linear_flux_defect(hfv, g, conductivity=1.0):
    """Max relative defect of HFV fluxes of p = g·x against -|σ| K g·n."""
    m, net, ps = hfv.mesh, hfv.net, hfv.ps
    p = hfv.unknown_points() @ g
    F = hfv.cell_fluxes(p)
    f = m.cell_faces
    nrm = m.face_normal[f] * m.cell_sign[:, None]
    Kg = np.einsum("nab,b->na", hfv.perm[hfv.inc_cell], g)
    want = -m.face_area[f] * np.einsum("na,na->n", nrm, Kg) / hfv.eta
    err = np.abs(F - want).max() / np.abs(want).max()
    if net.n:
        for n, (sel, fl) in hfv.fracture_fluxes(p, conductivity).items():
            idx = m.face_ptr[net.faces[sel]][:, None] + np.arange(n)
            a = m.vertices[m.face_nodes[idx]]
            le = np.linalg.norm(np.roll(a, -1, axis=1) - a, axis=2)
            wf = -conductivity * le * np.einsum("mvd,d->mv", m.face_edge_normal[idx], g) / hfv.eta
            err = max(err, np.abs(fl - wf).max() / np.abs(wf).max())
    return err


def conservation_defect(hfv, p, source_cells, conductivity, transmissivity):
    """Max imbalance of cell, face, half-face, fracture-face and edge fluxes
    relative to the largest flux (interior unknowns only)."""
    m, net, ps = hfv.mesh, hfv.net, hfv.ps
    F = hfv.cell_fluxes(p)
    scale = np.abs(F).max()
    cell = np.add.reduceat(F, m.cell_ptr[:-1]) - m.cell_volume * source_cells
    worst = np.abs(cell).max()
    # every matrix face unknown collects the fluxes of its cells
    coll = np.zeros(ps.n)
    np.add.at(coll, hfv.inc_slot, F)
    interior = ps.face_slot[np.intersect1d(ps.nonfrac_faces, m.interior_faces)]
    worst = max(worst, np.abs(coll[interior]).max(initial=0.0))
    if net.n:
        area = m.face_area[net.faces]
        tr = np.broadcast_to(np.asarray(transmissivity, float), (net.n,)) * area / hfv.eta
        qp = tr * (p[ps.half_plus] - p[ps.frac_face])
        qm = tr * (p[ps.half_minus] - p[ps.frac_face])
        worst = max(worst, np.abs(coll[ps.half_plus] - qp).max(), np.abs(coll[ps.half_minus] - qm).max())
        # fracture faces: edge fluxes balance the inflow from both sides
        ecoll = np.zeros(ps.n)
        fbal = qp + qm
        for n, (sel, fl) in hfv.fracture_fluxes(p, conductivity).items():
            fbal[sel] -= fl.sum(axis=1)
            idx = m.face_ptr[net.faces[sel]][:, None] + np.arange(n)
            np.add.at(ecoll, ps.frac_edge[net.edge_index[m.face_edges[idx]]], fl)
        worst = max(worst, np.abs(fbal).max())
        inner = ps.frac_edge[net.edge_kind != "boundary"]
        worst = max(worst, np.abs(ecoll[inner]).max(initial=0.0))
    return worst / scale


def spd_check(A):
    """Symmetry defect and Cholesky success of a (small) sparse matrix."""
    import scipy.linalg as sla

    D = A.toarray()
    sym = np.abs(D - D.T).max() / np.abs(D).max()
    try:
        sla.cholesky(0.5 * (D + D.T))
        ok = True
    except np.linalg.LinAlgError:
        ok = False
    return sym, ok
