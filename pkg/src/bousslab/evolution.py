"""Time integration: exact linear propagator plus Strang splitting.

Three right-hand sides share one stepper:

  * full state (u, v):          kick  v <- v - dt * d_x f(u)
  * soliton perturbation:       kick  v <- v - dt * d_x [f(Q+u) - f(Q)]
  * linearization about Q:      kick  v <- v - dt * d_x [f'(Q) u]

The linear half-steps are exact mode-wise rotations with frequency
w(k) = k sqrt(1+k^2), so there is no stiffness constraint from the
fourth-order term; u is frozen during the kick, which makes the kick exact
as well.  The perturbation form keeps (0, 0) an exact fixed point of the
discrete map, which matters when hunting for the stable manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bousslab.grid import GridFunction, GridSpec
from bousslab.model import ModelParams, State, f_values, fprime_values, soliton_values


class NonFiniteError(RuntimeError):
    """A state sample became NaN/Inf outside of a managed evolve call."""


@dataclass(frozen=True)
class EvolveConfig:
    dt: float
    t_end: float
    symmetrize: bool = True
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class LinearPropagator:
    """Mode-wise 2x2 blocks [[c, i s1], [i s2, c]] on the rfft modes."""

    grid: GridSpec
    dt: float
    c: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def apply(self, uh: np.ndarray, vh: np.ndarray):
        return self.c * uh + 1j * self.s1 * vh, 1j * self.s2 * uh + self.c * vh


def linear_propagator(grid: GridSpec, dt: float) -> LinearPropagator:
    """Exact exponential of d/dt (u^, v^) = [[0, ik], [ik(1+k^2), 0]] (u^, v^)."""
    if dt == 0:
        raise ValueError("dt must be nonzero")
    k = grid.k_rfft
    omega = k * np.sqrt(1.0 + k**2)
    c = np.cos(omega * dt)
    # sin(w dt)/w with the k = 0 limit dt
    snc = np.empty_like(omega)
    nz = omega != 0
    snc[nz] = np.sin(omega[nz] * dt) / omega[nz]
    snc[~nz] = dt
    return LinearPropagator(grid, dt, c, k * snc, k * (1.0 + k**2) * snc)


@dataclass
class EvolveResult:
    times: list[float]
    exit_reason: str              # "completed" | "blowup" | "stopped"
    t_final: float
    u: GridFunction
    v: GridFunction
    states: list | None = None    # optional recorded (t, u_values, v_values)


class _Stepper:
    def __init__(self, params: ModelParams, grid: GridSpec, dt: float,
                 kind: str, symmetrize: bool):
        self.params = params
        self.grid = grid
        self.dt = dt
        self.kind = kind
        self.symmetrize = symmetrize
        self.half = linear_propagator(grid, 0.5 * dt)
        self.ik = grid.multiplier_deriv(1)
        if kind in ("perturbation", "linearized"):
            Q = soliton_values(params, grid.x)
            self.Q = Q
            self.fQ = f_values(params, Q)
            self.fpQ = fprime_values(params, Q)

    def kick_source(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "full":
            return f_values(self.params, u)
        if self.kind == "perturbation":
            return f_values(self.params, self.Q + u) - self.fQ
        return self.fpQ * u  # linearized

    def step(self, uh: np.ndarray, vh: np.ndarray):
        uh, vh = self.half.apply(uh, vh)
        u = np.fft.irfft(uh, n=self.grid.n_points)
        vh = vh - self.dt * self.ik * np.fft.rfft(self.kick_source(u))
        uh, vh = self.half.apply(uh, vh)
        if self.symmetrize:
            uh = uh.real + 0.0j     # u even
            vh = 1j * vh.imag       # v odd
        return uh, vh


def _run(params: ModelParams, grid: GridSpec, u0: np.ndarray, v0: np.ndarray,
         config: EvolveConfig, kind: str, monitors=(), stop_when=None,
         ceiling: float | None = None, record_state: bool = False) -> EvolveResult:
    stepper = _Stepper(params, grid, config.dt, kind, config.symmetrize)
    uh = np.fft.rfft(u0)
    vh = np.fft.rfft(v0)
    if config.symmetrize:
        uh = uh.real + 0.0j
        vh = 1j * vh.imag
    n_steps = int(round(config.t_end / config.dt))
    times = [0.0]
    states = [] if record_state else None

    def snapshot():
        return np.fft.irfft(uh, n=grid.n_points), np.fft.irfft(vh, n=grid.n_points)

    u, v = snapshot()
    for mon in monitors:
        mon(0.0, u, v)
    if record_state:
        states.append((0.0, u.copy(), v.copy()))

    exit_reason = "completed"
    t = 0.0
    for i in range(1, n_steps + 1):
        uh, vh = stepper.step(uh, vh)
        t = i * config.dt
        if i % config.record_every == 0 or i == n_steps:
            u, v = snapshot()
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                exit_reason = "blowup"
                u = np.nan_to_num(u, nan=0.0, posinf=0.0, neginf=0.0)
                v = np.nan_to_num(v, nan=0.0, posinf=0.0, neginf=0.0)
                break
            if ceiling is not None and np.max(np.abs(u)) > ceiling:
                exit_reason = "blowup"
                times.append(t)
                if record_state:
                    states.append((t, u.copy(), v.copy()))
                break
            times.append(t)
            for mon in monitors:
                mon(t, u, v)
            if record_state:
                states.append((t, u.copy(), v.copy()))
            if stop_when is not None and stop_when(t, u, v):
                exit_reason = "stopped"
                break
    return EvolveResult(
        times=times,
        exit_reason=exit_reason,
        t_final=t,
        u=GridFunction(grid, u),
        v=GridFunction(grid, v),
        states=states,
    )


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def step(params: ModelParams, state: State, dt: float, symmetrize: bool = True) -> State:
    """One Strang step of the full nonlinear system."""
    grid = state.grid
    stepper = _Stepper(params, grid, dt, "full", symmetrize)
    uh, vh = stepper.step(np.fft.rfft(state.u.values), np.fft.rfft(state.v.values))
    u = np.fft.irfft(uh, n=grid.n_points)
    v = np.fft.irfft(vh, n=grid.n_points)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NonFiniteError("state became non-finite during step")
    return State(GridFunction(grid, u), GridFunction(grid, v))


def evolve(params: ModelParams, state: State, config: EvolveConfig, monitors=(),
           ceiling: float | None = None, stop_when=None,
           record_state: bool = False) -> EvolveResult:
    """Integrate the full system; blow-up is an outcome, not an error."""
    if ceiling is None:
        ceiling = 10.0 * soliton_values(params, np.array([0.0]))[0]
    return _run(params, state.grid, state.u.values, state.v.values, config,
                "full", monitors, stop_when, ceiling, record_state)


def evolve_perturbation(params: ModelParams, pert: State, config: EvolveConfig,
                        monitors=(), ceiling: float | None = None, stop_when=None,
                        record_state: bool = False) -> EvolveResult:
    """Integrate (eta, xi) with u = Q + eta; (0,0) is an exact fixed point.

    The monitors and the result see the perturbation variables, not u.
    """
    if ceiling is None:
        ceiling = 9.0 * soliton_values(params, np.array([0.0]))[0]
    return _run(params, pert.grid, pert.u.values, pert.v.values, config,
                "perturbation", monitors, stop_when, ceiling, record_state)


def evolve_linearized(params: ModelParams, pert: State, config: EvolveConfig,
                      monitors=(), stop_when=None,
                      record_state: bool = False) -> EvolveResult:
    """Integrate the linearization about (Q, 0)."""
    return _run(params, pert.grid, pert.u.values, pert.v.values, config,
                "linearized", monitors, stop_when, None, record_state)
