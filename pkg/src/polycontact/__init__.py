"""Frictional contact poromechanics on polytopal meshes: bubble-enriched
virtual elements for the displacement, face-wise constant Lagrange
multipliers for contact, and hybrid finite volumes for mixed-dimensional
Darcy flow, coupled by a fixed-stress splitting."""

__version__ = "0.1.0"
