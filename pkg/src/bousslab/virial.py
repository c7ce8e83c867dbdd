"""Weight family, transformed variables, virial functionals and identities.

Weights are built from a C^6 plateau cutoff chi (1 on [-1,1], 0 outside
(-2,2), monotone 13th-degree polynomial transition) via

    zeta_K(x) = exp(-(1-chi(x)) |x| / K),   phi_K(x) = int_0^x zeta_K^2,
    chi_A(x)  = chi(x/A),
    psi_AB    = chi_A^2 phi_B,   rho_AB = chi_A^2 zeta_B^2.

All weight derivatives are evaluated analytically (log-derivative chains),
so every exact identity below holds discretely to quadrature accuracy.
The C^6 regularity keeps the fourth weight derivatives classical, which the
rho and psi identities require.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from bousslab import grid as g
from bousslab.decomposition import NonlinearTerms, PerturbCoords, nonlinear_terms
from bousslab.grid import GridFunction, GridSpec
from bousslab.model import (
    ModelParams,
    State,
    f_values,
    fprime_values,
    potential_V0_derivs,
    soliton_values,
)
from bousslab.spectral import SpectralData, apply_L


class ScaleOrderViolation(ValueError):
    """Weight scales must satisfy 0 < B < A and 2A < L."""


# ---------------------------------------------------------------------------
# the cutoff and its derivatives
# ---------------------------------------------------------------------------

# S8 smoothstep: first eight derivatives vanish at both ends of [0, 1], so
# the cutoff is C^8 and all fourth weight derivatives are classical with
# fast-decaying Fourier tails (degree-17 polynomial, coefficients t^9..t^17)
_S8 = np.polynomial.polynomial.Polynomial(
    [0.0] * 9 + [24310.0, -175032.0, 556920.0, -1021020.0, 1178100.0,
                 -875160.0, 408408.0, -109395.0, 12870.0]
)
_S8_DERIVS = [_S8]
for _ in range(4):
    _S8_DERIVS.append(_S8_DERIVS[-1].deriv())


def chi_derivs(y: np.ndarray):
    """Plateau cutoff chi(y) with derivatives up to fourth order.

    chi = 1 for |y| <= 1, 0 for |y| >= 2, 1 - S8(|y|-1) in between.
    """
    y = np.asarray(y, dtype=float)
    ay = np.abs(y)
    sgn = np.sign(y)
    chi = np.ones_like(y)
    d = [np.zeros_like(y) for _ in range(4)]
    chi[ay >= 2.0] = 0.0
    mask = (ay > 1.0) & (ay < 2.0)
    if np.any(mask):
        t = ay[mask] - 1.0
        signs = sgn[mask]
        chi[mask] = 1.0 - _S8_DERIVS[0](t)
        for order in range(1, 5):
            # d^m/dy^m chi = -S8^(m)(|y|-1) * sgn(y)^m
            d[order - 1][mask] = -_S8_DERIVS[order](t) * signs**order
    return chi, d[0], d[1], d[2], d[3]


@dataclass
class _ZetaPack:
    """zeta_K with analytic log-derivative chain."""

    zeta: np.ndarray
    g1: np.ndarray   # zeta'/zeta
    g2: np.ndarray   # (log zeta)''
    g3: np.ndarray
    g4: np.ndarray

    @property
    def zeta2(self) -> np.ndarray:
        return self.zeta**2

    # ratios zeta^(m)/zeta
    @property
    def r1(self):
        return self.g1

    @property
    def r2(self):
        return self.g2 + self.g1**2

    @property
    def r3(self):
        return self.g3 + 3 * self.g1 * self.g2 + self.g1**3

    @property
    def r4(self):
        return (self.g4 + 4 * self.g3 * self.g1 + 3 * self.g2**2
                + 6 * self.g2 * self.g1**2 + self.g1**4)

    # ratios (zeta^2)^(m)/zeta^2: same chain with doubled log-derivative
    @property
    def q1(self):
        return 2 * self.g1

    @property
    def q2(self):
        return 2 * self.g2 + 4 * self.g1**2

    @property
    def q3(self):
        return 2 * self.g3 + 12 * self.g1 * self.g2 + 8 * self.g1**3

    @property
    def q4(self):
        return (2 * self.g4 + 16 * self.g3 * self.g1 + 12 * self.g2**2
                + 48 * self.g2 * self.g1**2 + 16 * self.g1**4)


def _zeta_pack(x: np.ndarray, K: float) -> _ZetaPack:
    chi, c1, c2, c3, c4 = chi_derivs(x)
    ax = np.abs(x)
    sgn = np.sign(x)
    zeta = np.exp(-(1.0 - chi) * ax / K)
    g1 = -(-c1 * ax + (1.0 - chi) * sgn) / K
    g2 = (c2 * ax + 2 * c1 * sgn) / K
    g3 = (c3 * ax + 3 * c2 * sgn) / K
    g4 = (c4 * ax + 4 * c3 * sgn) / K
    return _ZetaPack(zeta, g1, g2, g3, g4)


def _phi_exact(grid: GridSpec, K: float) -> np.ndarray:
    """phi_K(x) = int_0^x zeta_K^2, exact piecewise: x on the plateau,
    adaptive quadrature across the transition, closed form in the tail."""

    def zeta2_scalar(s: float) -> float:
        chi, *_ = chi_derivs(np.array([s]))
        return float(np.exp(-2.0 * (1.0 - chi[0]) * abs(s) / K))

    x = grid.x
    ax = np.abs(x)
    out = np.empty_like(x)
    plateau = ax <= 1.0
    out[plateau] = ax[plateau]
    trans = (ax > 1.0) & (ax < 2.0)
    for i in np.where(trans)[0]:
        val, _ = quad(zeta2_scalar, 1.0, ax[i], epsabs=1e-14, epsrel=1e-13)
        out[i] = 1.0 + val
    phi2, _ = quad(zeta2_scalar, 1.0, 2.0, epsabs=1e-14, epsrel=1e-13)
    tail = ax >= 2.0
    out[tail] = 1.0 + phi2 + 0.5 * K * (np.exp(-4.0 / K) - np.exp(-2.0 * ax[tail] / K))
    return np.sign(x) * out


@dataclass
class WeightBundle:
    """All weight arrays and analytic derivatives for one (grid, A, B)."""

    grid: GridSpec
    A: float
    B: float
    chiA: np.ndarray
    chiA_d: tuple            # chi_A', .., chi_A''''
    chiA2_d: tuple           # chi_A^2 and its four derivatives
    zetaA: _ZetaPack
    phiA: np.ndarray
    zetaB: _ZetaPack
    phiB: np.ndarray
    psiAB: np.ndarray
    psiAB_d1: np.ndarray
    psiAB_d3: np.ndarray
    rhoAB: np.ndarray
    rho_d: tuple             # rho', rho'', rho''', rho''''


@lru_cache(maxsize=8)
def build_weights(grid: GridSpec, A: float, B: float) -> WeightBundle:
    """Build the weight family; rejects misordered scales."""
    if not (0 < B < A):
        raise ScaleOrderViolation(f"need 0 < B < A, got A={A}, B={B}")
    if 2 * A >= grid.half_width:
        raise ScaleOrderViolation(f"need 2A < L, got A={A}, L={grid.half_width}")
    x = grid.x
    chiA, a1, a2, a3, a4 = chi_derivs(x / A)
    a1, a2, a3, a4 = a1 / A, a2 / A**2, a3 / A**3, a4 / A**4
    chiA2 = chiA**2
    chiA2_d1 = 2 * chiA * a1
    chiA2_d2 = 2 * a1**2 + 2 * chiA * a2
    chiA2_d3 = 6 * a1 * a2 + 2 * chiA * a3
    chiA2_d4 = 6 * a2**2 + 8 * a1 * a3 + 2 * chiA * a4

    zetaA = _zeta_pack(x, A)
    zetaB = _zeta_pack(x, B)
    phiA = _phi_exact(grid, A)
    phiB = _phi_exact(grid, B)

    zB2 = zetaB.zeta2
    zB2_d = (zB2 * zetaB.q1, zB2 * zetaB.q2, zB2 * zetaB.q3, zB2 * zetaB.q4)

    psi = chiA2 * phiB
    psi_d1 = chiA2_d1 * phiB + chiA2 * zB2
    psi_d3 = (chiA2_d3 * phiB + 3 * chiA2_d2 * zB2
              + 3 * chiA2_d1 * zB2_d[0] + chiA2 * zB2_d[1])

    rho = chiA2 * zB2
    chiA2_all = (chiA2, chiA2_d1, chiA2_d2, chiA2_d3, chiA2_d4)
    zB2_all = (zB2,) + zB2_d
    binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1], [1, 4, 6, 4, 1]]
    rho_d = []
    for mth in range(1, 5):
        total = np.zeros_like(x)
        for j in range(mth + 1):
            total = total + binom[mth][j] * chiA2_all[j] * zB2_all[mth - j]
        rho_d.append(total)

    return WeightBundle(
        grid=grid, A=A, B=B,
        chiA=chiA, chiA_d=(a1, a2, a3, a4),
        chiA2_d=chiA2_all,
        zetaA=zetaA, phiA=phiA, zetaB=zetaB, phiB=phiB,
        psiAB=psi, psiAB_d1=psi_d1, psiAB_d3=psi_d3,
        rhoAB=rho, rho_d=tuple(rho_d),
    )


# ---------------------------------------------------------------------------
# parameters and transformed variables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VirialParams:
    A: float = 20.0
    B: float = 3.0
    gamma: float | None = None
    C1: float = 1.0
    C2: float = 1.0

    def __post_init__(self):
        if not (0 < self.B < self.A):
            raise ScaleOrderViolation(f"need 0 < B < A, got A={self.A}, B={self.B}")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def gamma_value(self) -> float:
        return self.B**-4 if self.gamma is None else self.gamma


@dataclass
class TransformedVars:
    v1: GridFunction
    v2: GridFunction
    w1: GridFunction
    w2: GridFunction
    z1: GridFunction
    z2: GridFunction


@dataclass
class VirialSample:
    t: float
    I: float
    J: float
    M: float
    N: float
    H: float
    Bfun: float
    K1: float
    K2: float
    norms: dict


class VirialWorkspace:
    """Precomputed arrays binding one (params, spectral data, virial params)."""

    def __init__(self, params: ModelParams, sd: SpectralData, vp: VirialParams):
        self.params = params
        self.sd = sd
        self.vp = vp
        self.grid = sd.grid
        self.wb = build_weights(self.grid, vp.A, vp.B)
        x = self.grid.x
        self.V0, self.V0p, self.V0pp = potential_V0_derivs(params, x)
        self.fpQ = -self.V0 + 1.0          # f'(Q) = 1 - V0
        self.fpQ_p = -self.V0p             # d_x f'(Q)
        self.sech_x = 1.0 / np.cosh(x)
        self.sech_half = 1.0 / np.cosh(0.5 * x)
        self.gamma = vp.gamma_value

    # -- quadrature helper ---------------------------------------------------
    def _int(self, vals: np.ndarray) -> float:
        return float(np.sum(vals)) * self.grid.dx

    def _dx(self, vals: np.ndarray, order: int = 1) -> np.ndarray:
        return g.deriv_values(self.grid, vals, order)

    # -- transformed variables -----------------------------------------------
    def transform(self, coords: PerturbCoords) -> TransformedVars:
        grid = self.grid
        gam = self.gamma
        Lu1 = apply_L(self.params, coords.u1).values
        v1 = g.inv_helmholtz_values(grid, Lu1, gam)
        v2 = g.inv_helmholtz_values(grid, coords.u2.values, gam)
        zA = self.wb.zetaA.zeta
        cz = self.wb.chiA * self.wb.zetaB.zeta
        return TransformedVars(
            v1=GridFunction(grid, v1),
            v2=GridFunction(grid, v2),
            w1=GridFunction(grid, zA * coords.u1.values),
            w2=GridFunction(grid, zA * coords.u2.values),
            z1=GridFunction(grid, cz * v1),
            z2=GridFunction(grid, cz * v2),
        )

    # -- the four functionals --------------------------------------------------
    def functional_I(self, coords: PerturbCoords) -> float:
        return self._int(self.wb.phiA * coords.u1.values * coords.u2.values)

    def functional_J(self, tv: TransformedVars) -> float:
        return self._int(self.wb.psiAB * tv.v1.values * tv.v2.values)

    def functional_M(self, tv: TransformedVars) -> float:
        return self._int(self.wb.psiAB * self._dx(tv.v1.values) * self._dx(tv.v2.values))

    def functional_N(self, tv: TransformedVars) -> float:
        return self._int(self.wb.rhoAB * self._dx(tv.v1.values) * tv.v2.values)

    def functional_H(self, I: float, J: float, M: float, N: float) -> float:
        B, C1, C2 = self.vp.B, self.vp.C1, self.vp.C2
        return J + 16 * C2 / B * I + M / B - 16 * C1 * C2 / B**5 * N

    @staticmethod
    def functional_Bfun(coords: PerturbCoords) -> float:
        return coords.bplus**2 - coords.bminus**2

    # -- sources of the transformed system ------------------------------------
    def transformed_sources(self, tv: TransformedVars, nt: NonlinearTerms | None):
        """(G, H, G', H') of the regularized system.

        H = (1-gamma dxx)^-1 Nperp; G is the commutator of L with the
        regularization: G = gamma (1-gamma dxx)^-1 [V0'' v2' + 2 V0' v2''].
        """
        grid = self.grid
        gam = self.gamma
        v2 = tv.v2.values
        commut = self.V0pp * self._dx(v2) + 2.0 * self.V0p * self._dx(v2, 2)
        G = gam * g.inv_helmholtz_values(grid, commut, gam)
        if nt is None:
            H = np.zeros_like(G)
        else:
            H = g.inv_helmholtz_values(grid, nt.Nperp.values, gam)
        return G, H, self._dx(G), self._dx(H)

    # -- exact time-derivative identities --------------------------------------
    def identity_rhs_I(self, coords: PerturbCoords,
                       nt: NonlinearTerms | None) -> float:
        """Exact d/dt of int phiA u1 u2; nt=None means the linearized flow."""
        u1, u2 = coords.u1.values, coords.u2.values
        du1 = self._dx(u1)
        phiA = self.wb.phiA
        phiA_p = self.wb.zetaA.zeta2
        phiA_ppp = self.wb.zetaA.zeta2 * self.wb.zetaA.q2
        out = -0.5 * self._int(phiA_p * (u2**2 + u1**2 + 3 * du1**2))
        out += 0.5 * self._int(phiA_ppp * u1**2)
        if nt is not None:
            Q = soliton_values(self.params, self.grid.x)
            lin = coords.a1 * self.sd.phi0.values + u1
            combo = (f_values(self.params, Q) + fprime_values(self.params, Q)
                     * (coords.a1 * self.sd.phi0.values)
                     - f_values(self.params, Q + lin))
            out -= nt.N0 * self._int(phiA * u1 * self.sd.psi0.values)
            out -= self._int((phiA_p * u1 + phiA * du1) * combo)
        else:
            # linearized flow: the potential term that otherwise cancels
            # into the quadratic remainder stays explicit
            out -= self._int(phiA * u1 * self._dx(self.fpQ * u1))
        return out

    def identity_rhs_J(self, tv: TransformedVars, nt: NonlinearTerms | None) -> float:
        v1, v2 = tv.v1.values, tv.v2.values
        dv2 = self._dx(v2)
        psi, psi_p, psi_ppp = self.wb.psiAB, self.wb.psiAB_d1, self.wb.psiAB_d3
        G, H, _, _ = self.transformed_sources(tv, nt)
        out = -0.5 * self._int(psi_p * (v1**2 + v2**2 + 3 * dv2**2))
        out += 0.5 * self._int(psi_ppp * v2**2)
        out -= 0.5 * self._int(psi * self.fpQ * self._dx(v2**2))
        out += self._int(psi * (G * v2 + H * v1))
        return out

    def identity_rhs_M(self, tv: TransformedVars, nt: NonlinearTerms | None) -> float:
        dv1 = self._dx(tv.v1.values)
        dv2 = self._dx(tv.v2.values)
        ddv2 = self._dx(tv.v2.values, 2)
        psi, psi_p, psi_ppp = self.wb.psiAB, self.wb.psiAB_d1, self.wb.psiAB_d3
        _, _, Gt, Ht = self.transformed_sources(tv, nt)
        out = -0.5 * self._int(psi_p * (dv1**2 + dv2**2 + 3 * ddv2**2))
        out += 0.5 * self._int(psi_ppp * dv2**2)
        out -= 0.5 * self._int(psi * self.fpQ * self._dx(dv2**2))
        out -= self._int(psi * self.fpQ_p * dv2**2)
        out += self._int(psi * (Gt * dv2 + Ht * dv1))
        return out

    def identity_rhs_N(self, tv: TransformedVars, nt: NonlinearTerms | None) -> float:
        v2 = tv.v2.values
        dv1 = self._dx(tv.v1.values)
        dv2 = self._dx(v2)
        ddv2 = self._dx(v2, 2)
        rho = self.wb.rhoAB
        rho_p, rho_pp, rho_ppp, _ = self.wb.rho_d
        _, H, Gt, _ = self.transformed_sources(tv, nt)
        out = 2.0 * self._int(rho_pp * dv2**2)
        out -= self._int(rho * (ddv2**2 + self.V0 * dv2**2))
        out += self._int(rho * dv1**2)
        # -1/2 int rho'''' v2^2 in by-parts form (third weight derivative only)
        out += self._int(rho_ppp * v2 * dv2)
        out += 0.5 * self._int((rho_pp * self.V0 + rho_p * self.V0p) * v2**2)
        out += self._int(rho * (v2 * Gt + dv1 * H))
        return out

    # -- parity diagnostics: terms the even-odd class annihilates --------------
    def parity_dropped_terms(self, tv: TransformedVars) -> dict:
        v2 = tv.v2.values
        dv2 = self._dx(v2)
        return {
            "M_term": self._int(self.wb.psiAB * self.fpQ_p * v2 * dv2),
            "N_term": self._int(self.wb.rhoAB * self.fpQ_p * v2**2),
        }

    # -- decay monitors ---------------------------------------------------------
    def decay_monitors(self, coords: PerturbCoords, gamma: float | None = None):
        gam = self.gamma if gamma is None else gamma
        K1 = self._int(self.sech_x * coords.u1.values**2)
        reg = g.inv_helmholtz_values(self.grid, self._dx(coords.u2.values), gam)
        K2 = self._int(self.sech_x * reg**2)
        return K1, K2

    # -- one full time-slice ------------------------------------------------------
    def sample(self, t: float, coords: PerturbCoords) -> VirialSample:
        tv = self.transform(coords)
        I = self.functional_I(coords)
        J = self.functional_J(tv)
        M = self.functional_M(tv)
        N = self.functional_N(tv)
        K1, K2 = self.decay_monitors(coords)
        dxw1 = self._dx(tv.w1.values)
        norms = {
            "w1_L2": g.norm_l2(tv.w1),
            "dx_w1_L2": float(np.sqrt(self._int(dxw1**2))),
            "w2_L2": g.norm_l2(tv.w2),
            "z1_L2": g.norm_l2(tv.z1),
            "dx_z1_L2": float(np.sqrt(self._int(self._dx(tv.z1.values) ** 2))),
            "z2_L2": g.norm_l2(tv.z2),
            "dx_z2_L2": float(np.sqrt(self._int(self._dx(tv.z2.values) ** 2))),
            "dxx_z2_L2": float(np.sqrt(self._int(self._dx(tv.z2.values, 2) ** 2))),
            "sech_half_w1": float(self._int(self.sech_half * tv.w1.values**2)),
        }
        return VirialSample(
            t=t, I=I, J=J, M=M, N=N,
            H=self.functional_H(I, J, M, N),
            Bfun=self.functional_Bfun(coords),
            K1=K1, K2=K2, norms=norms,
        )


# ---------------------------------------------------------------------------
# module-level operation wrappers
# ---------------------------------------------------------------------------

def transform(params: ModelParams, vp: VirialParams, sd: SpectralData,
              coords: PerturbCoords) -> TransformedVars:
    return VirialWorkspace(params, sd, vp).transform(coords)


def functional_values(params: ModelParams, vp: VirialParams, sd: SpectralData,
                      coords: PerturbCoords) -> dict:
    ws = VirialWorkspace(params, sd, vp)
    tv = ws.transform(coords)
    return {
        "I": ws.functional_I(coords),
        "J": ws.functional_J(tv),
        "M": ws.functional_M(tv),
        "N": ws.functional_N(tv),
    }


# ---------------------------------------------------------------------------
# structure identities on arbitrary smooth data
# ---------------------------------------------------------------------------

def lemma_localization_residual(grid: GridSpec, A: float, B: float,
                                u1: GridFunction, u2: GridFunction) -> float:
    """Residual of the rewriting of the main virial block in (w1, w2):

    int phiA'(u2^2+u1^2+3 u1_x^2) - int phiA''' u1^2
      = int [w2^2 + 3 w1_x^2 + (1 + zA''/zA - 2 (zA'/zA)^2) w1^2].
    """
    wb = build_weights(grid, A, B)
    zp = wb.zetaA
    du1 = g.deriv_values(grid, u1.values, 1)
    phi_p = zp.zeta2
    phi_ppp = zp.zeta2 * zp.q2
    lhs = float(np.sum(phi_p * (u2.values**2 + u1.values**2 + 3 * du1**2)
                       - phi_ppp * u1.values**2)) * grid.dx
    w1 = zp.zeta * u1.values
    w2 = zp.zeta * u2.values
    dw1 = g.deriv_values(grid, w1, 1)
    coeff = 1.0 + zp.g2 - zp.g1**2  # 1 + z''/z - 2 (z'/z)^2
    rhs = float(np.sum(w2**2 + 3 * dw1**2 + coeff * w1**2)) * grid.dx
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


def _e1_coeff(wb: WeightBundle, P: np.ndarray, Pp: np.ndarray) -> np.ndarray:
    chiA = wb.chiA
    c1, c2, _, _ = wb.chiA_d
    chiA2_d1 = wb.chiA2_d[1]
    return P * (c2 * chiA + chiA2_d1 * wb.zetaB.g1) + 0.5 * Pp * chiA2_d1


def _cutoff_chain(wb: WeightBundle):
    """m = chiA zetaB and its derivatives by the analytic product chain."""
    zb = wb.zetaB
    chiA = wb.chiA
    c1, c2, c3, c4 = wb.chiA_d
    m0 = chiA * zb.zeta
    m1 = (c1 + chiA * zb.g1) * zb.zeta
    m2 = (c2 + 2 * c1 * zb.g1 + chiA * zb.r2) * zb.zeta
    m3 = (c3 + 3 * c2 * zb.g1 + 3 * c1 * zb.r2 + chiA * zb.r3) * zb.zeta
    m4 = (c4 + 4 * c3 * zb.g1 + 6 * c2 * zb.r2 + 4 * c1 * zb.r3
          + chiA * zb.r4) * zb.zeta
    return m0, m1, m2, m3, m4


def _upsample3(P: GridFunction, v: GridFunction, oversample: int):
    Pf = g.spectral_upsample(P, oversample)
    vf = g.spectral_upsample(v, oversample)
    return Pf.grid, Pf.values, vf.values


def claim_B1_check(grid: GridSpec, B_scale: float, A_scale: float,
                   P: GridFunction, v: GridFunction, oversample: int = 8) -> float:
    """Relative residual of the first change-of-variable identity.

    int P chiA^2 zetaB^2 (v_x)^2 = int P (z_x)^2
        + int [P' zB'/zB + P zB''/zB] z^2 + int E1(P) zetaB^2 v^2,
    with z = chiA zetaB v.  The check runs on an internally refined grid
    (band-limited data interpolates exactly; weights are analytic) so the
    cutoff's Fourier tail cannot alias the discrete derivatives of z.
    """
    fine, Pv, vv = _upsample3(P, v, oversample)
    wb = build_weights(fine, A_scale, B_scale)
    zb = wb.zetaB
    Pp = g.deriv_values(fine, Pv, 1)
    dv = g.deriv_values(fine, vv, 1)
    z = wb.chiA * zb.zeta * vv
    dz = g.deriv_values(fine, z, 1)
    lhs = float(np.sum(Pv * wb.chiA**2 * zb.zeta2 * dv**2)) * fine.dx
    rhs = float(np.sum(
        Pv * dz**2
        + (Pp * zb.g1 + Pv * zb.r2) * z**2
        + _e1_coeff(wb, Pv, Pp) * zb.zeta2 * vv**2
    )) * fine.dx
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


def claim_B2_check(grid: GridSpec, B_scale: float, A_scale: float,
                   R: GridFunction, v: GridFunction, oversample: int = 8) -> float:
    """Relative residual of the second change-of-variable identity
    (second derivatives); see claim_B1_check for the first-order one.

    With m = chiA zetaB the exact v^2 block is -m (R m'''' + 2R' m''' + R'' m''),
    split here as R-tilde z^2 + E2 zetaB^2 v^2; the (v_x)^2 block
    2R' m m' + 4R m m'' - 2R (m')^2 is split as P_R m^2 + E3 zetaB^2 and the
    P_R part is pushed to z-variables through the first-order identity.
    """
    fine, Rv, vv = _upsample3(R, v, oversample)
    wb = build_weights(fine, A_scale, B_scale)
    zb = wb.zetaB
    chiA = wb.chiA
    c1, c2, c3, c4 = wb.chiA_d
    chiA2_d1 = wb.chiA2_d[1]
    Rp = g.deriv_values(fine, Rv, 1)
    Rpp = g.deriv_values(fine, Rv, 2)

    dv = g.deriv_values(fine, vv, 1)
    ddv = g.deriv_values(fine, vv, 2)
    z = chiA * zb.zeta * vv
    dz = g.deriv_values(fine, z, 1)
    ddz = g.deriv_values(fine, z, 2)

    lhs = float(np.sum(Rv * chiA**2 * zb.zeta2 * ddv**2)) * fine.dx

    # pure-zeta part of the v^2 block (coefficient of z^2)
    R_tilde = -(Rv * zb.r4 + 2 * Rp * zb.r3 + Rpp * zb.r2)
    # chiA-derivative corrections of the v^2 block (coefficient of zetaB^2 v^2)
    E2 = -(Rv * (c4 * chiA + 4 * c3 * chiA * zb.g1 + 6 * c2 * chiA * zb.r2
                 + 2 * chiA2_d1 * zb.r3)
           + Rp * (2 * c3 * chiA + 6 * c2 * chiA * zb.g1 + 6 * c1 * chiA * zb.r2)
           + Rpp * (c2 * chiA + chiA2_d1 * zb.g1))
    P_R = Rv * (4 * zb.r2 - 2 * zb.g1**2) + 2 * Rp * zb.g1
    dr2 = zb.g3 + 2 * zb.g1 * zb.g2   # (zeta''/zeta)'
    P_Rp = (Rp * (4 * zb.r2 - 2 * zb.g1**2) + Rv * (4 * dr2 - 4 * zb.g1 * zb.g2)
            + 2 * Rpp * zb.g1 + 2 * Rp * zb.g2)
    E3 = Rv * (4 * c2 * chiA - 2 * c1**2 + 2 * zb.g1 * chiA2_d1) + Rp * chiA2_d1

    rhs = float(np.sum(
        Rv * ddz**2
        + R_tilde * z**2
        + P_R * dz**2
        + (P_Rp * zb.g1 + P_R * zb.r2) * z**2
        + E2 * zb.zeta2 * vv**2
        + _e1_coeff(wb, P_R, P_Rp) * zb.zeta2 * vv**2
        + E3 * zb.zeta2 * dv**2
    )) * fine.dx
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)
