"""Synthetic observational cohorts with confounding by indication.

The generator is built so the estimation assumptions hold by construction:

* the baseline arm and the opportunistic-infection (PCP) time are exogenous,
  so the pre-initiation covariate path equals the untreated one;
* the latent untreated outcome draws its randomness independently of the
  initiation draw given the covariate path (no unmeasured confounding);
* initiation follows exactly the Weibull proportional-hazards intensity the
  estimator models, evaluated on the untreated covariate path over the
  at-risk window;
* the observed outcome applies the failure-time transform deterministically
  (rank preserving): initiating at T rescales the remaining untreated
  lifetime by ``e^{-psi0}``.

Rank preservation makes the latent untreated outcome recoverable exactly:
the mimicking value at time 0 under the true effect parameter reproduces it
patient by patient, which the oracle tests exploit.  Confounding is real:
PCP raises both the initiation hazard and the death hazard.

Randomness comes from counter-based streams: patient ``i`` of a cohort with
seed ``s`` uses the Philox4x64 generator keyed ``(s, i)`` and draws exactly
four uniforms in a fixed order (arm, PCP, death, initiation), so any run is
reproducible from ``(seed, index)`` alone, in any execution order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .trajectory import Cohort, Trajectory

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class DGPConfig:
    """Full specification of the data-generating process.

    Default rates are desk-scale operating points chosen so that roughly a
    third to a half of patients initiate treatment and most die inside the
    observation window; the achieved fractions are reported by the
    simulation front end.
    """

    n: int = 1000
    seed: int = 0
    tau: float = 10.0
    psi0: float = LOG2
    xi0: float = 0.04
    gamma0: float = 1.2
    theta0: tuple[float, float] = (0.5, 0.8)
    rho_pcp: float = 0.15
    beta_pcp_azt: float = -0.5
    mu0: float = 0.055
    beta_death: tuple[float, float] = (0.3, 1.0)
    p_azt: float = 0.5

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")
        if not 0.0 <= self.p_azt <= 1.0:
            raise ValueError(f"p_azt must be a probability, got {self.p_azt}")
        for name in ("tau", "xi0", "gamma0", "rho_pcp", "mu0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v}")
        for name in ("psi0", "beta_pcp_azt"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class SimulatedPatient:
    """Observed trajectory plus the latent quantities kept for oracles."""

    traj: Trajectory
    y0: float            # untreated outcome
    t_latent: float      # initiation draw, +inf when beyond the at-risk window
    u_death: float       # inversion uniform of the untreated outcome
    u_init: float        # inversion uniform of the initiation draw


@dataclass(frozen=True)
class HazardSegment:
    """One piece of a piecewise hazard, starting where the previous ends.

    ``kind="const"`` integrates ``rate * dt``; ``kind="weibull"`` has
    cumulative hazard ``xi * (t**gamma - start**gamma)`` across the piece
    (global time, so consecutive pieces chain continuously).
    """

    start: float
    stop: float
    kind: str = "const"
    rate: float = 0.0
    xi: float = 0.0
    gamma: float = 1.0

    def cumulative(self, t: float) -> float:
        """Cumulative hazard accrued on ``[start, min(t, stop)]``."""
        hi = min(t, self.stop)
        if hi <= self.start:
            return 0.0
        if self.kind == "const":
            return self.rate * (hi - self.start)
        if self.kind == "weibull":
            return self.xi * (hi**self.gamma - self.start**self.gamma)
        raise ValueError(f"unknown segment kind {self.kind!r}")

    def invert(self, target: float) -> float:
        """Time inside the piece at which the accrued hazard hits ``target``."""
        if self.kind == "const":
            return self.start + target / self.rate
        return (self.start**self.gamma + target / self.xi) ** (1.0 / self.gamma)


def invert_piecewise_hazard(segments: Sequence[HazardSegment], u: float) -> float:
    """Inverse-transform sample: first time the cumulative hazard reaches
    ``-log(u)``; ``+inf`` when the total available hazard is smaller."""
    if not 0.0 < u <= 1.0:
        raise ValueError(f"u must be in (0, 1], got {u}")
    prev_stop = 0.0
    for seg in segments:
        if seg.start != prev_stop:
            raise ValueError(
                f"segments must be contiguous from 0, found gap at {seg.start}"
            )
        if seg.stop < seg.start:
            raise ValueError(f"segment ends before it starts: {seg}")
        prev_stop = seg.stop
    target = -math.log(u)
    if target <= 0.0:
        return 0.0
    acc = 0.0
    for seg in segments:
        inc = seg.cumulative(seg.stop) if math.isfinite(seg.stop) else math.inf
        if math.isfinite(inc) and acc + inc < target:
            acc += inc
            continue
        remaining = target - acc
        if not math.isfinite(seg.stop):
            # Unbounded tail: invert directly if it can absorb the target.
            if seg.kind == "const" and seg.rate == 0.0:
                return math.inf
            return seg.invert(remaining)
        if inc >= remaining:
            return seg.invert(remaining)
        acc += inc
    return math.inf


def patient_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one patient: Philox4x64 keyed (seed, index)."""
    return np.random.Generator(np.random.Philox(key=[seed, index]))


def _exp_units(u_raw: np.ndarray) -> np.ndarray:
    """Map uniforms in [0, 1) to (0, 1] for hazard inversion."""
    u = 1.0 - u_raw
    return np.where(u > 0.0, u, 5e-324)


def _generate_columns(cfg: DGPConfig, uniforms: np.ndarray) -> dict:
    """Vectorized patient generation from the (n, 4) uniform block.

    Column order is the reproducibility contract: arm, PCP, untreated
    outcome, initiation.  All branches mirror the piecewise hazard
    inversions exactly.
    """
    azt = (uniforms[:, 0] < cfg.p_azt).astype(float)

    rate_pcp = cfg.rho_pcp * np.exp(cfg.beta_pcp_azt * azt)
    u_pcp = _exp_units(uniforms[:, 1])
    pcp = -np.log(u_pcp) / rate_pcp

    m1 = cfg.mu0 * np.exp(cfg.beta_death[0] * azt)
    m2 = m1 * math.exp(cfg.beta_death[1])
    u_death = _exp_units(uniforms[:, 2])
    e_death = -np.log(u_death)
    cap1 = m1 * pcp
    y0 = np.where(e_death <= cap1, e_death / m1, pcp + (e_death - cap1) / m2)
    y0 = np.where(y0 > 0.0, y0, 5e-324)

    window = np.minimum(y0, cfg.tau)
    xi1 = cfg.xi0 * np.exp(cfg.theta0[0] * azt)
    xi2 = xi1 * math.exp(cfg.theta0[1])
    cut = np.minimum(pcp, window)
    g = cfg.gamma0
    h1 = xi1 * cut**g
    h2 = xi2 * (window**g - cut**g)
    u_init = _exp_units(uniforms[:, 3])
    e_init = -np.log(u_init)
    with np.errstate(invalid="ignore"):
        in_first = e_init <= h1
        in_second = ~in_first & (e_init - h1 <= h2)
        t_first = (e_init / xi1) ** (1.0 / g)
        t_second = (cut**g + (e_init - h1) / xi2) ** (1.0 / g)
    t_latent = np.where(
        in_first, t_first, np.where(in_second, t_second, np.inf)
    )

    initiated = t_latent < window
    scale = math.exp(-cfg.psi0)
    y = np.where(initiated, t_latent + scale * (y0 - t_latent), y0)
    t_latent = np.where(initiated, t_latent, np.inf)
    return {
        "azt": azt.astype(int),
        "pcp": pcp,
        "y0": y0,
        "t_latent": t_latent,
        "initiated": initiated,
        "y": y,
        "u_death": u_death,
        "u_init": u_init,
    }


def _build_patient(cfg: DGPConfig, cols: dict, i: int, patient_id: str
                   ) -> SimulatedPatient:
    y = float(cols["y"][i])
    pcp = float(cols["pcp"][i])
    traj = Trajectory(
        id=patient_id,
        i_azt=int(cols["azt"][i]),
        pcp_time=pcp if pcp <= y else None,
        treat_start=float(cols["t_latent"][i]) if cols["initiated"][i] else None,
        y=y,
        tau=cfg.tau,
    )
    return SimulatedPatient(
        traj=traj,
        y0=float(cols["y0"][i]),
        t_latent=float(cols["t_latent"][i]),
        u_death=float(cols["u_death"][i]),
        u_init=float(cols["u_init"][i]),
    )


def initiation_segments(cfg: DGPConfig, i_azt: int, pcp_time: float,
                        upper: float) -> list[HazardSegment]:
    """Initiation hazard pieces on the untreated covariate path up to ``upper``."""
    xi1 = cfg.xi0 * math.exp(cfg.theta0[0] * i_azt)
    xi2 = xi1 * math.exp(cfg.theta0[1])
    cut = min(pcp_time, upper)
    return [
        HazardSegment(0.0, cut, kind="weibull", xi=xi1, gamma=cfg.gamma0),
        HazardSegment(cut, upper, kind="weibull", xi=xi2, gamma=cfg.gamma0),
    ]


def initiation_cumhaz(cfg: DGPConfig, i_azt: int, pcp_time: float, t: float) -> float:
    """Cumulative initiation hazard at ``t`` on the untreated path."""
    total = 0.0
    for seg in initiation_segments(cfg, i_azt, pcp_time, upper=math.inf):
        total += seg.cumulative(t)
    return total


def simulate_patient(
    cfg: DGPConfig, stream: np.random.Generator, patient_id: str = "p0"
) -> SimulatedPatient:
    """Generate one patient.

    Draw order is part of the reproducibility contract: arm, PCP time,
    untreated outcome, initiation.
    """
    u_azt, u_pcp_raw, u_death_raw, u_init_raw = stream.random(4)
    i_azt = int(u_azt < cfg.p_azt)

    rate_pcp = cfg.rho_pcp * math.exp(cfg.beta_pcp_azt * i_azt)
    u_pcp = _exp_unit(u_pcp_raw)
    pcp_time = -math.log(u_pcp) / rate_pcp

    m1 = cfg.mu0 * math.exp(cfg.beta_death[0] * i_azt)
    m2 = m1 * math.exp(cfg.beta_death[1])
    u_death = _exp_unit(u_death_raw)
    y0 = invert_piecewise_hazard(
        [
            HazardSegment(0.0, pcp_time, kind="const", rate=m1),
            HazardSegment(pcp_time, math.inf, kind="const", rate=m2),
        ],
        u_death,
    )
    if y0 <= 0.0:
        y0 = 5e-324  # u_death == 1 edge; keeps the outcome positive

    window = min(y0, cfg.tau)
    u_init = _exp_unit(u_init_raw)
    t_latent = invert_piecewise_hazard(
        initiation_segments(cfg, i_azt, pcp_time, upper=window), u_init
    )

    if t_latent < window:
        t_start: Optional[float] = t_latent
        y = t_latent + math.exp(-cfg.psi0) * (y0 - t_latent)
    else:
        t_latent = math.inf
        t_start = None
        y = y0

    traj = Trajectory(
        id=patient_id,
        i_azt=i_azt,
        pcp_time=pcp_time if pcp_time <= y else None,
        treat_start=t_start,
        y=y,
        tau=cfg.tau,
    )
    return SimulatedPatient(
        traj=traj, y0=y0, t_latent=t_latent, u_death=u_death, u_init=u_init
    )


def simulate_cohort(cfg: DGPConfig):
    """Generate ``cfg.n`` independent patients.

    Returns ``(cohort, latents)``; the latent table is for oracle checks
    only and is never read by the estimation code.
    """
    latents = [
        simulate_patient(cfg, patient_stream(cfg.seed, i), patient_id=f"p{i}")
        for i in range(cfg.n)
    ]
    cohort = Cohort(tuple(s.traj for s in latents))
    return cohort, latents


def achieved_fractions(cohort: Cohort) -> dict:
    """Share of patients initiating treatment and dying inside the window."""
    n = len(cohort)
    if n == 0:
        return {"initiated": math.nan, "died_before_tau": math.nan}
    initiated = sum(1 for p in cohort if p.treat_start is not None)
    died = sum(1 for p in cohort if p.y < p.tau)
    return {"initiated": initiated / n, "died_before_tau": died / n}


def save_latents(latents: Sequence[SimulatedPatient], path) -> None:
    """Write the oracle table ``id,y0,t_latent`` (empty when never initiated)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "y0", "t_latent"])
        for s in latents:
            t_lat = "" if not math.isfinite(s.t_latent) else format(s.t_latent, ".17g")
            writer.writerow([s.traj.id, format(s.y0, ".17g"), t_lat])
