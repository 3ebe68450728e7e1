"""Closed-form reference solutions used by the verification cases."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp


@lru_cache(maxsize=None)
def _manufactured_branches(mu=1.0, lam=1.0):
    x, y, z, s = sp.symbols("x y z s", real=True)
    g = -sp.sin(sp.pi * x / 2) * sp.cos(sp.pi * y / 2)
    h = sp.cos(sp.pi * x / 2)
    H = sp.integrate(h.subs(x, s), (s, 0, x))
    p = z ** 2
    branches = {
        "upper": sp.Matrix([g * p, p, x ** 2 * p]),
        "lower_plus": sp.Matrix([h * z ** 4, h * sp.diff(z ** 4, z), -H * sp.diff(z ** 4, z)]),
        "lower_minus": sp.Matrix([h * 2 * z ** 4, h * sp.diff(2 * z ** 4, z), -H * sp.diff(2 * z ** 4, z)]),
    }
    X = [x, y, z]
    out = {}
    for name, u in branches.items():
        grad = u.jacobian(X)
        eps = (grad + grad.T) / 2
        sig = 2 * mu * eps + lam * eps.trace() * sp.eye(3)
        f = -sp.Matrix([sum(sp.diff(sig[i, j], X[j]) for j in range(3)) for i in range(3)])
        out[name] = (sp.lambdify(X, list(u), "numpy"), sp.lambdify(X, list(grad), "numpy"),
                     sp.lambdify(X, list(sp.simplify(f)), "numpy"), sp.lambdify(X, list(sig), "numpy"))
    return out


def _eval(fn, P, n):
    vals = fn(P[:, 0], P[:, 1], P[:, 2])
    return np.stack([np.broadcast_to(np.asarray(v, float), (len(P),)) for v in vals], axis=1).reshape(len(P), *n)


class ManufacturedSolution:
    """Frictionless contact solution on (-1, 1)^3 with fracture x = 0.

    The fracture is closed for z > 0 and open for z < 0. The + side is x < 0
    (n+ = +e_x). Samplers take points and the anchor cells' centroids, which
    select the side of the fracture the value is taken from."""

    def __init__(self, mu=1.0, lam=1.0):
        self.mu, self.lam = mu, lam
        self.br = _manufactured_branches(float(mu), float(lam))

    def _pick(self, P, anchor, k, shape):
        P = np.atleast_2d(P)
        anchor = np.atleast_2d(anchor)
        upper = P[:, 2] >= 0
        plus = anchor[:, 0] < 0
        out = np.zeros((len(P),) + shape)
        for name, sel in (("upper", upper), ("lower_plus", ~upper & plus), ("lower_minus", ~upper & ~plus)):
            if sel.any():
                out[sel] = _eval(self.br[name][k], P[sel], shape)
        return out

    def u(self, P, anchor):
        return self._pick(P, anchor, 0, (3,))

    def grad(self, P, anchor):
        return self._pick(P, anchor, 1, (3, 3))

    def f(self, P, anchor):
        return self._pick(P, anchor, 2, (3,))

    def stress(self, P, anchor):
        return self._pick(P, anchor, 3, (3, 3))

    def lambda_n(self, P):
        """λ_n = -σ(u+) n+ · n+ on x = 0 (from the x < 0 side)."""
        P = np.atleast_2d(P)
        sig = self.stress(P, np.tile([-1.0, 0, 0], (len(P), 1)))
        return -sig[:, 0, 0]

    def jump(self, P):
        P = np.atleast_2d(P)
        a = np.tile([-1.0, 0, 0], (len(P), 1))
        return self.u(P, a) - self.u(P, -a)


class CompressionSolution:
    """Inclined slipping crack under remote compression (plane strain).

    ``prefactor`` multiplies σ̄ sin ψ (cos ψ - F sin ψ) in the slip profile;
    the default is 4(1 - ν²)/E, see ``slip``."""

    def __init__(self, E=25e9, nu=0.25, sigma=100e6, psi=np.pi / 9, F=1 / np.sqrt(3), ell=1.0, prefactor=None):
        self.E, self.nu, self.sigma, self.psi, self.F, self.ell = E, nu, sigma, psi, F, ell
        self.prefactor = 4.0 * (1 - nu ** 2) / E if prefactor is None else prefactor

    @property
    def lambda_n(self):
        return self.sigma * np.sin(self.psi) ** 2

    def slip(self, tau):
        """|⟦u⟧_τ| at curvilinear abscissa 0 ≤ τ ≤ 2ℓ, vanishing at both tips."""
        tau = np.asarray(tau, float)
        c = self.prefactor * self.sigma * np.sin(self.psi) * (np.cos(self.psi) - self.F * np.sin(self.psi))
        return c * np.sqrt(np.maximum(self.ell ** 2 - (self.ell - tau) ** 2, 0.0))

    def endpoints(self):
        d = self.ell * np.array([np.cos(self.psi), np.sin(self.psi)])
        return -d, d
