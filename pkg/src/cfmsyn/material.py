"""Compressible Neo-Hookean constitutive law under plane stress.

Strain energy per unit reference volume:

    W = c10 * (J^(-2/3) * I1 - 3) + (1/d1) * (J - 1)^2

with I1 the trace of the full right Cauchy-Green tensor and J the volume
ratio.  The out-of-plane stretch is condensed out pointwise so the
out-of-plane normal stress vanishes; the returned tangent is the condensed
modulus 2 dS/dC in Voigt order (11, 22, 12) against engineering shear.
Everything is vectorized over an arbitrary batch of quadrature points and
written in scalar component arithmetic (no fourth-order temporaries).

Small-strain limit: shear modulus mu = 2*c10, bulk modulus K = 2/d1, which is
the usual conversion c10 = E / (4(1+nu)), d1 = 6(1-2nu)/E.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def elastic_to_neo_hookean(E: float, nu: float) -> tuple[float, float]:
    """(E, nu) -> (c10, d1)."""
    if E <= 0 or not -1 < nu < 0.5:
        raise ValueError("need E > 0 and -1 < nu < 1/2")
    return E / (4.0 * (1.0 + nu)), 6.0 * (1.0 - 2.0 * nu) / E


def neo_hookean_to_elastic(c10: float, d1: float) -> tuple[float, float]:
    """(c10, d1) -> (E, nu); exact inverse of elastic_to_neo_hookean."""
    if c10 <= 0 or d1 <= 0:
        raise ValueError("need c10 > 0 and d1 > 0")
    prod = c10 * d1
    nu = (3.0 - 2.0 * prod) / (6.0 + 2.0 * prod)
    E = 4.0 * c10 * (1.0 + nu)
    return E, nu


@dataclass(frozen=True)
class PlaneStressNeoHookean:
    c10: float
    d1: float

    @staticmethod
    def from_elastic(E: float, nu: float) -> "PlaneStressNeoHookean":
        return PlaneStressNeoHookean(*elastic_to_neo_hookean(E, nu))

    def thickness_stretch_sq(self, C2: np.ndarray, c33_init=None):
        """Solve the zero out-of-plane-stress condition for C33 pointwise.

        Returns (c33, ok) where ok flags points with positive in-plane
        determinant and a converged scalar Newton iteration.
        """
        C2 = np.asarray(C2, float)
        c11, c22, c12 = C2[..., 0, 0], C2[..., 1, 1], C2[..., 0, 1]
        d2 = c11 * c22 - c12 * c12
        ok = d2 > 1e-12
        d2s = np.where(ok, d2, 1.0)
        tr2 = c11 + c22
        c = np.full_like(d2s, 1.0) if c33_init is None else np.array(c33_init, float)
        c = np.clip(c, 0.05, 20.0)
        stress_scale = 2.0 * self.c10 + 2.0 / self.d1
        converged = np.zeros_like(ok)
        for _ in range(60):
            s33, ds33 = self._s33_and_slope(d2s, tr2, c)
            converged = np.abs(s33) < 1e-12 * stress_scale
            if np.all(converged | ~ok):
                break
            step = np.where(converged, 0.0, -s33 / np.where(ds33 == 0, 1.0, ds33))
            step = np.clip(step, -0.5 * c, 0.5 * c)  # keep c positive, damp big jumps
            c = np.clip(c + step, 1e-6, 1e6)
        return c, ok & converged

    def _s33_and_slope(self, d2, tr2, c):
        J2 = d2 * c
        J = np.sqrt(J2)
        A = J2 ** (-1.0 / 3.0)
        I1 = tr2 + c
        b33 = 1.0 / c
        s33 = 2.0 * self.c10 * A * (1.0 - I1 / (3.0 * c)) + (2.0 / self.d1) * J * (J - 1.0) * b33
        cc3333 = 4.0 * self.c10 * A * (
            -(2.0 / 3.0) * b33 + (I1 / 9.0) * b33**2 + (I1 / 3.0) * b33**2
        ) + (2.0 / self.d1) * (J * (2.0 * J - 1.0) * b33**2 - 2.0 * J * (J - 1.0) * b33**2)
        return s33, 0.5 * cc3333

    def evaluate(self, C2: np.ndarray, c33_init=None):
        """In-plane response at plane stress.

        Returns (S_v, D, W, c33, ok): S_v is the 2nd Piola stress in Voigt
        order (n, 3), D the condensed tangent (n, 3, 3) against engineering
        shear, W the energy density (n,), c33 the squared thickness stretch,
        ok the validity mask (inverted or non-converged points are flagged
        False and carry garbage values).
        """
        C2 = np.asarray(C2, float)
        c33, ok = self.thickness_stretch_sq(C2, c33_init)
        c11, c22, c12 = C2[..., 0, 0], C2[..., 1, 1], C2[..., 0, 1]
        d2 = np.where(ok, c11 * c22 - c12 * c12, 1.0)
        c33 = np.where(ok, c33, 1.0)
        I1 = c11 + c22 + c33
        J = np.sqrt(d2 * c33)
        A = (d2 * c33) ** (-1.0 / 3.0)

        b11 = c22 / d2
        b22 = c11 / d2
        b12 = -c12 / d2
        b33 = 1.0 / c33

        c10, d1 = self.c10, self.d1
        two_c10_A = 2.0 * c10 * A
        pvol = (2.0 / d1) * J * (J - 1.0)
        s11 = two_c10_A * (1.0 - (I1 / 3.0) * b11) + pvol * b11
        s22 = two_c10_A * (1.0 - (I1 / 3.0) * b22) + pvol * b22
        s12 = two_c10_A * (-(I1 / 3.0) * b12) + pvol * b12
        S_v = np.stack([s11, s22, s12], axis=-1)

        # modulus 2 dS/dC = a1 (B x I + I x B) + a2 B x B + a3 (B . B)_sym
        a1 = -4.0 * c10 * A / 3.0
        a2 = (4.0 * c10 * A * I1) / 9.0 + (2.0 / d1) * J * (2.0 * J - 1.0)
        a3 = (4.0 * c10 * A * I1) / 6.0 - (2.0 / d1) * J * (J - 1.0)

        cc1111 = 2.0 * a1 * b11 + a2 * b11 * b11 + 2.0 * a3 * b11 * b11
        cc2222 = 2.0 * a1 * b22 + a2 * b22 * b22 + 2.0 * a3 * b22 * b22
        cc1122 = a1 * (b22 + b11) + a2 * b11 * b22 + 2.0 * a3 * b12 * b12
        cc1112 = a1 * b12 + a2 * b11 * b12 + 2.0 * a3 * b11 * b12
        cc2212 = a1 * b12 + a2 * b22 * b12 + 2.0 * a3 * b22 * b12
        cc1212 = a2 * b12 * b12 + a3 * (b11 * b22 + b12 * b12)

        # condensation against the out-of-plane direction
        g1 = a1 * b33
        g2 = a1 + a2 * b33
        v1 = g1 + g2 * b11  # modulus (11)(33)
        v2 = g1 + g2 * b22
        v3 = g2 * b12
        cc3333 = 2.0 * a1 * b33 + (a2 + 2.0 * a3) * b33 * b33

        D = np.empty(C2.shape[:-2] + (3, 3))
        D[..., 0, 0] = cc1111 - v1 * v1 / cc3333
        D[..., 1, 1] = cc2222 - v2 * v2 / cc3333
        D[..., 0, 1] = D[..., 1, 0] = cc1122 - v1 * v2 / cc3333
        D[..., 0, 2] = D[..., 2, 0] = cc1112 - v1 * v3 / cc3333
        D[..., 1, 2] = D[..., 2, 1] = cc2212 - v2 * v3 / cc3333
        D[..., 2, 2] = cc1212 - v3 * v3 / cc3333

        W = c10 * (A * I1 - 3.0) + (1.0 / d1) * (J - 1.0) ** 2
        return S_v, D, W, c33, ok
