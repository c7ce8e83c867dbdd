"""Coordinates of a state near the standing wave and the modulation system.

A state (u, v) close to (Q, 0) is written as

    u = Q + a1 * phi0 + u1,      <u1, chi0> = 0,
    v = a2 * nu0 * psi0 + u2,    <u2, psi0> = 0,

with b+- = (a1 +- a2)/2.  The coefficients are normalized oblique
projections: a1 = <u - Q, chi0> / <phi0, chi0> and
a2 = <v, psi0> / (nu0 <psi0, psi0>), which enforce the two orthogonality
constraints exactly whatever the sign conventions of the spectral objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bousslab import grid as g
from bousslab.grid import GridFunction
from bousslab.model import ModelParams, State, f_values, fprime_values, soliton_values
from bousslab.spectral import SpectralData


class DegenerateProjectorError(RuntimeError):
    """<phi0, chi0> vanished; the oblique projector is ill-posed."""


class SeriesTooShortError(ValueError):
    """Time series has fewer than 3 samples."""


@dataclass
class PerturbCoords:
    a1: float
    a2: float
    bplus: float
    bminus: float
    u1: GridFunction
    u2: GridFunction


@dataclass
class NonlinearTerms:
    N: GridFunction
    N0: float
    Nperp: GridFunction


def _projector_scale(sd: SpectralData) -> float:
    den = g.inner(sd.phi0, sd.chi0)
    if abs(den) < 1e-10:
        raise DegenerateProjectorError("phi0-chi0 pairing is numerically zero")
    return den


def decompose_values(sd: SpectralData, eta: np.ndarray, xi: np.ndarray):
    """(a1, a2) from perturbation samples eta = u - Q, xi = v; fast path."""
    dx = sd.grid.dx
    den1 = np.dot(sd.phi0.values, sd.chi0.values) * dx
    a1 = np.dot(eta, sd.chi0.values) * dx / den1
    psi_sq = np.dot(sd.psi0.values, sd.psi0.values) * dx
    a2 = np.dot(xi, sd.psi0.values) * dx / (sd.nu0 * psi_sq)
    return a1, a2


def decompose(params: ModelParams, sd: SpectralData, state: State) -> PerturbCoords:
    """Extract (a1, a2, b+-, u1, u2) from a state near (Q, 0)."""
    _projector_scale(sd)
    grid = state.grid
    Q = soliton_values(params, grid.x)
    eta = state.u.values - Q
    xi = state.v.values
    a1, a2 = decompose_values(sd, eta, xi)
    u1 = GridFunction(grid, eta - a1 * sd.phi0.values)
    u2 = GridFunction(grid, xi - a2 * sd.nu0 * sd.psi0.values)
    return PerturbCoords(
        a1=a1, a2=a2, bplus=0.5 * (a1 + a2), bminus=0.5 * (a1 - a2), u1=u1, u2=u2
    )


def recompose(params: ModelParams, sd: SpectralData, coords: PerturbCoords) -> State:
    """Inverse of :func:`decompose`."""
    grid = sd.grid
    Q = soliton_values(params, grid.x)
    u = Q + coords.a1 * sd.phi0.values + coords.u1.values
    v = coords.a2 * sd.nu0 * sd.psi0.values + coords.u2.values
    return State(GridFunction(grid, u), GridFunction(grid, v))


def nonlinear_terms(params: ModelParams, sd: SpectralData, coords: PerturbCoords) -> NonlinearTerms:
    """N = d_x [f(Q) + f'(Q)(a1 phi0 + u1) - f(Q + a1 phi0 + u1)] and its
    psi0-projection N0, with Nperp = N - N0 psi0."""
    grid = sd.grid
    Q = soliton_values(params, grid.x)
    lin_part = coords.a1 * sd.phi0.values + coords.u1.values
    combo = f_values(params, Q) + fprime_values(params, Q) * lin_part \
        - f_values(params, Q + lin_part)
    N_vals = g.deriv_values(grid, combo, 1)
    N0 = float(np.dot(N_vals, sd.psi0.values) * grid.dx)
    Nperp = N_vals - N0 * sd.psi0.values
    return NonlinearTerms(
        N=GridFunction(grid, N_vals), N0=N0, Nperp=GridFunction(grid, Nperp)
    )


# ---------------------------------------------------------------------------
# modulation-system residuals along a recorded trajectory
# ---------------------------------------------------------------------------

def fd_derivative(times: np.ndarray, values: np.ndarray):
    """Central finite differences: 4th order when >= 5 samples, else 2nd.

    Returns (interior indices, derivative at those indices).
    """
    times = np.asarray(times)
    values = np.asarray(values)
    if len(times) < 3:
        raise SeriesTooShortError("need at least 3 samples")
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-10, atol=1e-14):
        raise ValueError("series must be uniformly sampled")
    h = dt[0]
    if len(times) >= 5:
        idx = np.arange(2, len(times) - 2)
        d = (-values[idx + 2] + 8 * values[idx + 1]
             - 8 * values[idx - 1] + values[idx - 2]) / (12 * h)
    else:
        idx = np.arange(1, len(times) - 1)
        d = (values[idx + 1] - values[idx - 1]) / (2 * h)
    return idx, d


def ode_residuals(nu0: float, times, coords_seq, nonlin_seq) -> dict:
    """Compare FD time derivatives of (a1, a2, b+-) with the modulation system

        a1' = nu0 a2,   a2' = nu0 a1 + N0/nu0,
        b+' = nu0 b+ + N0/(2 nu0),   b-' = -nu0 b- - N0/(2 nu0).

    Returns max absolute and relative residual per equation.
    """
    a1 = np.array([c.a1 for c in coords_seq])
    a2 = np.array([c.a2 for c in coords_seq])
    bp = np.array([c.bplus for c in coords_seq])
    bm = np.array([c.bminus for c in coords_seq])
    N0 = np.array([n.N0 for n in nonlin_seq])

    report = {}
    for name, series, rhs in (
        ("a1", a1, nu0 * a2),
        ("a2", a2, nu0 * a1 + N0 / nu0),
        ("bplus", bp, nu0 * bp + N0 / (2 * nu0)),
        ("bminus", bm, -nu0 * bm - N0 / (2 * nu0)),
    ):
        idx, d = fd_derivative(times, series)
        resid = d - rhs[idx]
        scale = np.max(np.abs(d)) + 1e-300
        report[name] = {
            "max_abs": float(np.max(np.abs(resid))),
            "max_rel": float(np.max(np.abs(resid)) / scale),
        }
    return report
