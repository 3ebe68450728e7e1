"""Discrete unknowns: displacement dofs (side nodes and fracture bubbles),
face-wise multipliers, hybrid pressure dofs and the coupled state fields.

Displacement vectors are flat with index ``3 * s + a`` where ``s`` runs over
side nodes (ordered by vertex, then class) followed by bubbles (ordered by
fracture face, + side first) and ``a`` is the component."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mesh import FractureNetwork, NodeSidePartition, PolyMesh, node_side_partition, segment_ids


def csr_expand(ptr, which):
    """Flat indices of the segments ``which`` of a CSR array, with owners."""
    which = np.asarray(which)
    n = np.diff(ptr)[which]
    owner = np.repeat(np.arange(len(which)), n)
    loc = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
    return ptr[which][owner] + loc, owner


class DisplacementSpace:
    def __init__(self, mesh: PolyMesh, net: FractureNetwork, two_sided: bool = False,
                 partition: NodeSidePartition | None = None):
        self.mesh = mesh
        self.net = net
        self.two_sided = bool(two_sided)
        self.partition = partition if partition is not None else node_side_partition(mesh, net)
        self.n_sides = self.partition.n_sides
        nf = net.n
        if self.two_sided:
            self.bub_face = np.repeat(np.arange(nf), 2)
            self.bub_cell = np.stack([net.plus_cell, net.minus_cell], 1).ravel()
            self.bub_sign = np.tile([1.0, -1.0], nf)
        else:
            self.bub_face = np.arange(nf)
            self.bub_cell = net.plus_cell.copy()
            self.bub_sign = np.ones(nf)
        self.n_bubbles = len(self.bub_face)
        self.n_scalar = self.n_sides + self.n_bubbles
        self.ndof = 3 * self.n_scalar

    # ------------------------------------------------------------------
    def side_of(self, cells, verts):
        """Side-node ids of (cell, vertex) pairs."""
        return self.partition.cv_side[self.mesh.cell_vertex_index(cells, verts)]

    def side_cell(self):
        """A representative (smallest) cell of every side class."""
        cells = segment_ids(self.mesh.cv_ptr)
        rep = np.full(self.n_sides, np.iinfo(np.int64).max)
        np.minimum.at(rep, self.partition.cv_side, cells)
        return rep

    def sides_of_vertices(self, mask):
        """Side-node ids whose vertex satisfies the boolean vertex mask."""
        return np.flatnonzero(np.asarray(mask)[self.partition.side_vertex])

    def dofs(self, scalar_ids, comps=(0, 1, 2)):
        s = np.asarray(scalar_ids, dtype=np.int64)
        return (3 * s[:, None] + np.asarray(comps)[None, :]).ravel()

    def nodal_values(self, u):
        return np.asarray(u).reshape(-1, 3)[: self.n_sides]

    def bubble_values(self, u):
        return np.asarray(u).reshape(-1, 3)[self.n_sides:]

    # ------------------------------------------------------------------
    def interp_vertex(self, sampler):
        """Nodal values from one-sided limits ``sampler(points, cells)``;
        bubbles are zero."""
        u = np.zeros((self.n_scalar, 3))
        X = self.mesh.vertices[self.partition.side_vertex]
        u[: self.n_sides] = sampler(X, self.side_cell())
        return u.ravel()

    def interp_full(self, sampler, degree: int = 6):
        """Nodal values plus bubbles correcting the face mean of the trace."""
        from .quadrature import face_quadrature

        u = self.interp_vertex(sampler).reshape(-1, 3)
        if self.n_bubbles:
            faces = self.net.faces[self.bub_face]
            cells = self.bub_cell
            pts, wts, own = face_quadrature(self.mesh, faces, degree)
            vals = sampler(pts, cells[own])
            mean = np.zeros((self.n_bubbles, 3))
            np.add.at(mean, own, wts[:, None] * vals)
            mean /= self.mesh.face_area[faces][:, None]
            u[self.n_sides:] = mean - self.face_mean(u.ravel(), cells, faces)
        return u.ravel()

    def face_mean(self, u, cells, faces):
        """Σ_s ω_s^σ v_{Ks} for (cell, face) pairs; shape (n, 3)."""
        m = self.mesh
        fi, own = csr_expand(m.face_ptr, faces)
        sides = self.side_of(np.asarray(cells)[own], m.face_nodes[fi])
        vals = np.asarray(u).reshape(-1, 3)[sides] * m.face_weights[fi][:, None]
        out = np.zeros((len(faces), 3))
        np.add.at(out, own, vals)
        return out

    def dump_csv(self, path, u):
        U = np.asarray(u).reshape(-1, 3)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "id", "vertex_or_face", "cell", "u_x", "u_y", "u_z"])
            rep = self.side_cell()
            for s in range(self.n_sides):
                w.writerow(["node", s, self.partition.side_vertex[s], rep[s], *(repr(float(x)) for x in U[s])])
            for b in range(self.n_bubbles):
                w.writerow(["bubble", b, self.net.faces[self.bub_face[b]], self.bub_cell[b],
                            *(repr(float(x)) for x in U[self.n_sides + b])])


# ----------------------------------------------------------------------
# multipliers

def normal_part(lam, normals):
    return np.einsum("ij,ij->i", lam, normals)


def tangential_part(lam, normals):
    return lam - normal_part(lam, normals)[:, None] * normals


@dataclass
class ConeCheck:
    feasible: bool
    normal_violation: np.ndarray  # faces with λ_n < 0
    friction_violation: np.ndarray  # faces with |λ_τ| > F λ_n
    max_violation: float


def cone_project(lam, normals, friction, tol=0.0) -> ConeCheck:
    """Feasibility of face multipliers for the dual cone."""
    lam = np.asarray(lam, float).reshape(-1, 3)
    ln = normal_part(lam, normals)
    lt = np.linalg.norm(tangential_part(lam, normals), axis=1)
    vn = np.maximum(-ln, 0.0)
    vt = np.maximum(lt - np.asarray(friction) * np.maximum(ln, 0.0), 0.0)
    bn = np.flatnonzero(vn > tol)
    bt = np.flatnonzero(vt > tol)
    mv = float(max(vn.max(initial=0.0), vt.max(initial=0.0)))
    return ConeCheck(len(bn) == 0 and len(bt) == 0, bn, bt, mv)


# ----------------------------------------------------------------------
# pressures

class PressureSpace:
    """Hybrid pressure layout: cells | non-fracture faces | half-faces
    (+, - per fracture face) | fracture faces | fracture edges."""

    def __init__(self, mesh: PolyMesh, net: FractureNetwork):
        self.mesh = mesh
        self.net = net
        nc, nf, ng = mesh.n_cells, mesh.n_faces, net.n
        self.nonfrac_faces = np.flatnonzero(~net.is_fracture)
        self.face_slot = -np.ones(nf, dtype=np.int64)
        self.face_slot[self.nonfrac_faces] = nc + np.arange(len(self.nonfrac_faces))
        off = nc + len(self.nonfrac_faces)
        self.half_plus = off + 2 * np.arange(ng)
        self.half_minus = self.half_plus + 1
        off += 2 * ng
        self.frac_face = off + np.arange(ng)
        off += ng
        self.frac_edge = off + np.arange(len(net.edges))
        self.n_matrix = nc + len(self.nonfrac_faces) + 2 * ng
        self.n = off + len(net.edges)

    def cell_slots(self):
        return np.arange(self.mesh.n_cells)

    def uniform(self, value):
        return np.full(self.n, float(value))

    def boundary_face_slots(self, faces):
        return self.face_slot[np.asarray(faces)]

    def matrix_cells(self, p):
        return np.asarray(p)[: self.mesh.n_cells]

    def fracture_faces(self, p):
        return np.asarray(p)[self.frac_face]


@dataclass
class StateFields:
    porosity: np.ndarray
    aperture: np.ndarray
    normal_perm: np.ndarray

    @property
    def conductivity(self):
        return self.aperture ** 3 / 12.0

    @property
    def transmissivity(self):
        return 2.0 * self.normal_perm / self.aperture

    def copy(self):
        return StateFields(self.porosity.copy(), self.aperture.copy(), self.normal_perm.copy())
