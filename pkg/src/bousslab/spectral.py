"""Linearized operators, the unstable eigenpair, and coercivity probes.

The fourth-order operator P = -d_xx (-d_xx + V0) is not self-adjoint, but
conjugating by one antiderivative turns it into S = -d_x (-d_xx + V0) d_x,
which is.  The unique negative eigenvalue -nu0^2 of P is found by a dense
symmetric eigensolve of S; the eigenfunction of P is phi0 = d_x psi0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from bousslab import grid as g
from bousslab import model as m
from bousslab.grid import GridFunction, GridSpec
from bousslab.model import ModelParams, State


class NoNegativeEigenvalue(RuntimeError):
    """Bottom of the conjugated spectrum is not negative: wrong potential or
    unresolved grid."""


class MultiplicityViolation(RuntimeError):
    """The two lowest eigenvalues nearly coincide."""


class SpectralInvariantError(RuntimeError):
    """A constructed spectral object violates one of its invariants."""


# ---------------------------------------------------------------------------
# dense spectral differentiation matrices
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def diff_matrix(spec: GridSpec, order: int) -> np.ndarray:
    """Dense Fourier differentiation matrix (Nyquist zeroed for odd order)."""
    n = spec.n_points
    mult = spec.multiplier_deriv(order)
    eye = np.eye(n)
    return np.fft.irfft(mult[:, None] * np.fft.rfft(eye, axis=0), n=n, axis=0)


def apply_L(params: ModelParams, f: GridFunction) -> GridFunction:
    """Schroedinger operator L f = -f'' + V0 f."""
    V0 = m.potential_V0(params, f.grid)
    return GridFunction(f.grid, -g.deriv_values(f.grid, f.values, 2) + V0.values * f.values)


def apply_P(params: ModelParams, f: GridFunction) -> GridFunction:
    """Fourth-order operator -d_xx L f = f'''' - f'' + d_xx(p Q^(p-1) f)."""
    grid = f.grid
    Q = m.soliton_values(params, grid.x)
    w = params.p * Q ** (params.p - 1.0) * f.values
    out = (
        g.deriv_values(grid, f.values, 4)
        - g.deriv_values(grid, f.values, 2)
        + g.deriv_values(grid, w, 2)
    )
    return GridFunction(grid, out)


def apply_S_values(params: ModelParams, grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Self-adjoint conjugate S = -d_x L d_x applied spectrally."""
    V0 = m.potential_V0(params, grid).values
    df = g.deriv_values(grid, values, 1)
    return -g.deriv_values(grid, -g.deriv_values(grid, df, 2) + V0 * df, 1)


@lru_cache(maxsize=4)
def _conjugate_matrix(params: ModelParams, grid: GridSpec):
    """Dense S plus its pre-symmetrization asymmetry measure."""
    D1 = diff_matrix(grid, 1)
    D2 = diff_matrix(grid, 2)
    V0 = m.potential_V0(params, grid).values
    Lmat = -D2 + np.diag(V0)
    S = -D1 @ Lmat @ D1
    asym = float(np.linalg.norm(S - S.T) / np.linalg.norm(S))
    return 0.5 * (S + S.T), asym


# ---------------------------------------------------------------------------
# ground pair
# ---------------------------------------------------------------------------

@dataclass
class SpectralData:
    """The unstable eigenpair and the packaged flow directions."""

    params: ModelParams
    grid: GridSpec
    nu0: float
    phi0: GridFunction          # even eigenfunction of -d_xx L, eigenvalue -nu0^2
    psi0: GridFunction          # odd decaying antiderivative, unit L2 norm
    chi0: GridFunction          # even decaying second antiderivative
    Yplus: State
    Yminus: State
    Zplus: State
    Zminus: State
    eig_residual: float         # conjugated-problem residual
    eig_residual_phi: float     # residual of the fourth-order eigen-relation
    eig_gap: float              # distance of the next eigenvalue to the lowest
    matrix_asymmetry: float

    @property
    def Q(self) -> GridFunction:
        return m.soliton(self.params, self.grid)


@lru_cache(maxsize=6)
def ground_pair(params: ModelParams, grid: GridSpec) -> SpectralData:
    """Compute the unique negative eigenpair and package the directions.

    The eigensolve runs on the symmetrized dense matrix of S = -d_x L d_x;
    psi0 is the unit ground eigenvector (parity-projected to the odd class),
    phi0 = d_x psi0, and chi0 is the decaying second antiderivative obtained
    by anchoring the spectral antiderivative to vanish at the torus boundary.
    """
    S, asym = _conjugate_matrix(params, grid)
    vals, vecs = sla.eigh(S, subset_by_index=[0, 5])
    if vals[0] >= -1e-10:
        raise NoNegativeEigenvalue(f"lowest eigenvalue {vals[0]:.3e} is not negative")
    if vals[1] - vals[0] < 1e-6:
        raise MultiplicityViolation(
            f"two lowest eigenvalues {vals[0]:.6e}, {vals[1]:.6e} nearly coincide"
        )
    nu0 = float(np.sqrt(-vals[0]))

    psi_raw = g.project_parity_values(grid, vecs[:, 0], "odd")
    psi_raw /= np.sqrt(np.dot(psi_raw, psi_raw) * grid.dx)
    psi0 = GridFunction(grid, psi_raw)
    phi0 = g.deriv(psi0, 1)
    if phi0.values[grid.center_index] < 0:
        psi0 = GridFunction(grid, -psi0.values)
        phi0 = GridFunction(grid, -phi0.values)

    chi_raw = g.antideriv_values(grid, psi0.values)
    chi0 = GridFunction(grid, chi_raw - chi_raw[0])  # decay anchor at x = -L

    res = apply_S_values(params, grid, psi0.values) - vals[0] * psi0.values
    eig_residual = float(np.linalg.norm(res) / np.linalg.norm(psi0.values))
    rphi = apply_P(params, phi0).values + nu0**2 * phi0.values
    eig_residual_phi = float(np.linalg.norm(rphi) / np.linalg.norm(phi0.values))

    data = SpectralData(
        params=params,
        grid=grid,
        nu0=nu0,
        phi0=phi0,
        psi0=psi0,
        chi0=chi0,
        Yplus=State(phi0.copy(), GridFunction(grid, nu0 * psi0.values)),
        Yminus=State(phi0.copy(), GridFunction(grid, -nu0 * psi0.values)),
        Zplus=State(GridFunction(grid, -chi0.values), GridFunction(grid, psi0.values / nu0)),
        Zminus=State(GridFunction(grid, -chi0.values), GridFunction(grid, -psi0.values / nu0)),
        eig_residual=eig_residual,
        eig_residual_phi=eig_residual_phi,
        eig_gap=float(vals[1] - vals[0]),
        matrix_asymmetry=asym,
    )
    _check_invariants(data)
    return data


def _check_invariants(sd: SpectralData) -> None:
    grid = sd.grid
    checks = []
    checks.append(("psi0 unit norm", abs(g.norm_l2(sd.psi0) - 1.0) < 1e-12))
    checks.append(("phi0 even", g.parity_error(sd.phi0, "even") < 1e-10))
    checks.append(("psi0 odd", g.parity_error(sd.psi0, "odd") < 1e-10))
    checks.append(("chi0 even", g.parity_error(sd.chi0, "even") < 1e-10))
    checks.append(("eig residual", sd.eig_residual_phi < 1e-6))
    mean_phi0 = abs(np.mean(sd.phi0.values)) * 2 * grid.half_width
    checks.append(("phi0 zero mean", mean_phi0 < 1e-8 * g.norm_l2(sd.phi0)))
    overlap = abs(g.inner(sd.Q, sd.phi0))
    checks.append(("Q-phi0 overlap", overlap > 100 * sd.eig_residual_phi))
    pairing = g.inner(sd.phi0, sd.chi0)
    checks.append(("phi0-chi0 pairing", abs(pairing + 1.0) < 1e-8))
    bad = [name for name, ok in checks if not ok]
    if bad:
        raise SpectralInvariantError(f"spectral invariants violated: {bad}")


def build_directions(sd: SpectralData):
    """(Y+, Y-, Z+, Z-) with the duality pairing <Y_s, Z_s'> = 2*delta_ss'.

    Y+- = (phi0, +-nu0 psi0).  The Z pair uses -chi0 in the first slot so
    that <Y+, Z-> = 0 and <Y+, Z+> = 2: with chi0 the honest decaying second
    antiderivative one has <phi0, chi0> = -|psi0|^2 = -1, so the sign flip
    is what makes Z+ annihilate the stable direction and detect the unstable
    amplitude.
    """
    return sd.Yplus, sd.Yminus, sd.Zplus, sd.Zminus


def state_inner(a: State, b: State) -> float:
    """Sum of componentwise L2 pairings."""
    return g.inner(a.u, b.u) + g.inner(a.v, b.v)


# ---------------------------------------------------------------------------
# coercivity probes
# ---------------------------------------------------------------------------

def _parity_basis(grid: GridSpec, parity: str) -> np.ndarray:
    """Orthonormal (in ell-2) basis of the even/odd subspace as columns."""
    n = grid.n_points
    c = grid.center_index
    refl = grid.reflect_index
    cols = []
    if parity == "even":
        for j in range(0, c + 1):
            e = np.zeros(n)
            if refl[j] == j:
                e[j] = 1.0
            else:
                e[j] = e[refl[j]] = 1.0 / np.sqrt(2.0)
            cols.append(e)
    else:
        for j in range(1, c):
            e = np.zeros(n)
            e[j] = 1.0 / np.sqrt(2.0)
            e[refl[j]] = -1.0 / np.sqrt(2.0)
            cols.append(e)
    return np.stack(cols, axis=1)


def _constrained_min(A, M, basis, constraints):
    """Smallest eigenvalue of x^T A x / x^T M x over span(basis) ∩ constraints^perp."""
    Ar = basis.T @ A @ basis
    Mr = basis.T @ M @ basis
    if constraints:
        C = np.stack([basis.T @ c for c in constraints], axis=1)
        Cq, _ = np.linalg.qr(C)
        # orthonormal complement of the constraint span
        full, _ = np.linalg.qr(np.eye(Ar.shape[0]) - Cq @ Cq.T)
        # drop directions inside the constraint span
        keep = [i for i in range(full.shape[1])
                if np.linalg.norm(Cq.T @ full[:, i]) < 1e-8]
        N = full[:, keep]
        Ar = N.T @ Ar @ N
        Mr = N.T @ Mr @ N
    w = sla.eigh(Ar, Mr, subset_by_index=[0, 0], eigvals_only=True)
    return float(w[0])


def coercivity_min(params: ModelParams, grid: GridSpec, constraint_set: str,
                   sd: SpectralData | None = None) -> float:
    """Minimum of <L v, v> / |v|_H1^2 over a constrained subspace.

    constraint_set:
      * "Qprime_Lphi0": v orthogonal to Q' and to L(phi0)
      * "odd_psi0":     v odd and orthogonal to psi0
      * "unconstrained": plain minimum (negative, since L has a bound state)
    """
    if sd is None and constraint_set != "unconstrained":
        sd = ground_pair(params, grid)
    D1 = diff_matrix(grid, 1)
    V0 = m.potential_V0(params, grid).values
    K = D1.T @ D1
    A = K + np.diag(V0)
    M = K + np.eye(grid.n_points)

    if constraint_set == "unconstrained":
        mins = []
        for parity in ("even", "odd"):
            basis = _parity_basis(grid, parity)
            mins.append(_constrained_min(A, M, basis, []))
        return min(mins)
    if constraint_set == "Qprime_Lphi0":
        Qp = m.soliton_deriv_values(params, grid.x)         # odd
        Lphi0 = apply_L(params, sd.phi0).values             # even
        m_even = _constrained_min(A, M, _parity_basis(grid, "even"), [Lphi0])
        m_odd = _constrained_min(A, M, _parity_basis(grid, "odd"), [Qp])
        return min(m_even, m_odd)
    if constraint_set == "odd_psi0":
        return _constrained_min(A, M, _parity_basis(grid, "odd"), [sd.psi0.values])
    raise ValueError(f"unknown constraint set {constraint_set!r}")
