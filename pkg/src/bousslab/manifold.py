"""Stable-manifold construction by bisection shooting on the unstable amplitude.

Near (Q, 0) every even-odd state splits as seed + b+ * Y+, where the seed is
Z+-orthogonal (no unstable content).  Trajectories with the wrong b+(0) blow
out of the tube |b+| <= K^5 delta0^2 with the sign of their unstable
amplitude; bisection on b+(0) between two opposite-sign exits pins down the
manifold value h(seed).  Probes integrate the perturbation form of the flow,
for which (0,0) is an exact fixed point of the discrete map, so h(0) = 0 is
reproduced to roundoff rather than to integrator accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bousslab import grid as g
from bousslab.decomposition import decompose_values
from bousslab.evolution import EvolveConfig, evolve_perturbation
from bousslab.grid import GridFunction
from bousslab.model import ModelParams, State
from bousslab.spectral import SpectralData, state_inner


class NoSignChangeError(RuntimeError):
    """Both bracket endpoints exit with the same unstable sign."""


class ShootBudgetError(RuntimeError):
    """Too many consecutive probes survived without classification."""


@dataclass
class SeedPerturbation:
    """Z+-orthogonal even-odd perturbation (a point of the seed manifold)."""

    eps: State
    norm: float

    @property
    def grid(self):
        return self.eps.grid


@dataclass
class ProbeOutcome:
    b0: float
    outcome: str        # "+exit" | "-exit" | "survived"
    t_exit: float
    reason: str         # "bplus" | "tube" | "budget"


@dataclass
class ShootResult:
    h: float
    bracket: tuple
    iterations: int
    t_survive: float
    exit_log: list
    series: dict | None = None   # t, a1, a2, bplus, dev plus K1 when requested


def energy_norm(state: State) -> float:
    """H1 x L2 magnitude of a perturbation pair."""
    du = g.deriv(state.u, 1)
    return float(np.sqrt(
        g.inner(state.u, state.u) + g.inner(du, du) + g.inner(state.v, state.v)
    ))


def project_A0(sd: SpectralData, raw: State) -> SeedPerturbation:
    """Parity-project and remove the Z+ component so <eps, Z+> = 0."""
    grid = raw.grid
    even = g.project_parity_values(grid, raw.u.values, "even")
    odd = g.project_parity_values(grid, raw.v.values, "odd")
    state = State(GridFunction(grid, even), GridFunction(grid, odd))
    pairing = state_inner(sd.Yplus, sd.Zplus)
    coef = state_inner(state, sd.Zplus) / pairing
    eps = State(
        GridFunction(grid, even - coef * sd.Yplus.u.values),
        GridFunction(grid, odd - coef * sd.Yplus.v.values),
    )
    return SeedPerturbation(eps=eps, norm=energy_norm(eps))


def seed_from_direction(sd: SpectralData, direction: str, delta0: float) -> SeedPerturbation:
    """Unit-energy-norm seed along a named direction, scaled to delta0."""
    if direction == "Yminus":
        base = State(sd.Yminus.u.copy(), sd.Yminus.v.copy())
    elif direction == "zero":
        z = np.zeros(sd.grid.n_points)
        base = State(GridFunction(sd.grid, z), GridFunction(sd.grid, z.copy()))
        return SeedPerturbation(eps=base, norm=0.0)
    else:
        raise ValueError(f"unknown seed direction {direction!r}")
    scale = delta0 / energy_norm(base)
    eps = State(GridFunction(sd.grid, scale * base.u.values),
                GridFunction(sd.grid, scale * base.v.values))
    return project_A0(sd, eps)


def shoot(params: ModelParams, sd: SpectralData, seed: SeedPerturbation,
          K: float = 3.0, delta0: float = 1e-3, tube_radius: float | None = None,
          t_max: float | None = None, tol: float = 1e-9, dt: float = 1e-3,
          record_every: int = 20, allow_subquadratic: bool = False,
          record_series: bool = True, refine: int = 0) -> ShootResult:
    """Bisect b+(0) in [-K^5 d0^2, K^5 d0^2] until the bracket is <= tol wide.

    Each probe evolves (Q,0) + seed + b0*Y+ and classifies the exit by the
    sign of b+(t) when |b+| crosses K^5 delta0^2 (or when the energy tube is
    left).  Probes reaching t_max unclassified count as "survived"; more than
    three consecutive survivals stop the narrowing with the current midpoint.

    With refine > 0 the bisection midpoint is polished by exploiting the
    unstable rate: an exit at time T with sign s means b+(0) - h is about
    s * threshold * exp(-nu0 T), which is subtracted off and re-probed.  A
    few rounds push |b+(0) - h| to the integrator's roundoff floor, letting
    the selected trajectory survive to t_max.
    """
    if params.p < 2 and not allow_subquadratic:
        raise ValueError("shooting requires p >= 2 (pass allow_subquadratic to override)")
    if delta0 < 1e-5:
        raise ValueError("delta0 below 1e-5 drowns in integrator noise")
    if tube_radius is None:
        tube_radius = 50.0 * delta0
    if t_max is None:
        t_max = 30.0 / sd.nu0
    grid = sd.grid
    threshold = K**5 * delta0**2
    exit_log: list[ProbeOutcome] = []

    phi0 = sd.phi0.values
    nu_psi0 = sd.nu0 * sd.psi0.values

    def probe(b0: float, collect: bool = False):
        eta0 = seed.eps.u.values + b0 * phi0
        xi0 = seed.eps.v.values + b0 * nu_psi0
        trace = {"t": [], "a1": [], "a2": [], "bplus": [], "dev": []} if collect else None
        last = {"b": b0, "t": 0.0, "reason": "budget"}

        def stop(t, eta, xi):
            a1, a2 = decompose_values(sd, eta, xi)
            bplus = 0.5 * (a1 + a2)
            deta = g.deriv_values(grid, eta, 1)
            dev = np.sqrt((np.dot(eta, eta) + np.dot(deta, deta)
                           + np.dot(xi, xi)) * grid.dx)
            if collect:
                trace["t"].append(t)
                trace["a1"].append(a1)
                trace["a2"].append(a2)
                trace["bplus"].append(bplus)
                trace["dev"].append(dev)
            last["b"] = bplus
            last["t"] = t
            if abs(bplus) >= threshold:
                last["reason"] = "bplus"
                return True
            if dev > tube_radius:
                last["reason"] = "tube"
                return True
            return False

        res = evolve_perturbation(
            params,
            State(GridFunction(grid, eta0), GridFunction(grid, xi0)),
            EvolveConfig(dt=dt, t_end=t_max, record_every=record_every),
            stop_when=stop,
        )
        if res.exit_reason == "stopped":
            outcome = "+exit" if last["b"] > 0 else "-exit"
        elif res.exit_reason == "blowup":
            outcome = "+exit" if last["b"] > 0 else "-exit"
            last["reason"] = "tube"
        else:
            outcome = "survived"
        po = ProbeOutcome(b0=b0, outcome=outcome, t_exit=last["t"], reason=last["reason"])
        exit_log.append(po)
        return po, trace

    lo, hi = -threshold, threshold
    po_lo, _ = probe(lo)
    po_hi, _ = probe(hi)
    if po_lo.outcome == po_hi.outcome or "survived" in (po_lo.outcome, po_hi.outcome):
        if not (po_lo.outcome == "-exit" and po_hi.outcome == "+exit"):
            raise NoSignChangeError(
                f"endpoints classified {po_lo.outcome}/{po_hi.outcome}; "
                "tube_radius or t_max miscalibrated"
            )

    iterations = 0
    consecutive_survived = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        po, _ = probe(mid)
        iterations += 1
        if po.outcome == "survived":
            consecutive_survived += 1
            if consecutive_survived > 3:
                lo = hi = mid
                break
            # survived: on-manifold side; tighten symmetrically around mid
            half = 0.25 * (hi - lo)
            lo, hi = mid - half, mid + half
            continue
        consecutive_survived = 0
        if po.outcome == "+exit":
            hi = mid
        else:
            lo = mid
    h = 0.5 * (lo + hi)

    for _ in range(refine):
        po, _ = probe(h)
        if po.outcome == "survived":
            break
        sign = 1.0 if po.outcome == "+exit" else -1.0
        h -= sign * threshold * np.exp(-sd.nu0 * po.t_exit)

    series = None
    if record_series:
        po, trace = probe(h, collect=True)
        t_survive = po.t_exit if po.outcome != "survived" else t_max
        series = {k: np.asarray(v) for k, v in trace.items()}
    else:
        t_survive = exit_log[-1].t_exit
    return ShootResult(
        h=h, bracket=(lo, hi), iterations=iterations,
        t_survive=t_survive, exit_log=exit_log, series=series,
    )


def scaling_sweep(params: ModelParams, sd: SpectralData, direction: str,
                  delta_list, **shoot_kwargs) -> dict:
    """h(delta) for seeds delta * direction; fits log|h| against log delta."""
    rows = []
    user_tol = shoot_kwargs.pop("tol", None)
    K = shoot_kwargs.get("K", 3.0)
    for d0 in delta_list:
        seed = seed_from_direction(sd, direction, d0)
        tol = 1e-3 * K**5 * d0**2 if user_tol is None else user_tol
        res = shoot(params, sd, seed, delta0=d0, tol=tol,
                    record_series=False, **shoot_kwargs)
        rows.append({"delta0": d0, "h": res.h, "iterations": res.iterations})
    ds = np.array([r["delta0"] for r in rows])
    hs = np.array([abs(r["h"]) for r in rows])
    ok = hs > 0
    exponent = float(np.polyfit(np.log(ds[ok]), np.log(hs[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return {"rows": rows, "exponent": exponent}


def lipschitz_probe(params: ModelParams, sd: SpectralData,
                    seed_a: SeedPerturbation, seed_b: SeedPerturbation,
                    **shoot_kwargs) -> dict:
    """|h(a) - h(b)| / |a - b| with the delta^(1/2)-normalized variant."""
    diff = State(
        GridFunction(seed_a.grid, seed_a.eps.u.values - seed_b.eps.u.values),
        GridFunction(seed_a.grid, seed_a.eps.v.values - seed_b.eps.v.values),
    )
    dist = energy_norm(diff)
    if dist == 0.0:
        return {"ratio": 0.0, "normalized": 0.0, "h_a": None, "h_b": None, "dist": 0.0}
    res_a = shoot(params, sd, seed_a, record_series=False, **shoot_kwargs)
    res_b = shoot(params, sd, seed_b, record_series=False, **shoot_kwargs)
    delta = max(seed_a.norm, seed_b.norm)
    ratio = abs(res_a.h - res_b.h) / dist
    return {
        "ratio": ratio,
        "normalized": ratio / np.sqrt(delta) if delta > 0 else ratio,
        "h_a": res_a.h,
        "h_b": res_b.h,
        "dist": dist,
    }
