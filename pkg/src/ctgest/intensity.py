"""Treatment-initiation intensity: time-dependent Weibull proportional hazards.

The initiation counting process jumps at most once per patient.  While the
patient is at risk (alive, untreated, inside the observation window) the
hazard is

    lambda(t) = xi * gamma * t**(gamma - 1) * exp(theta1 * i_azt
                + theta2 * i_pcp(t) + alpha * x(t)),

and zero otherwise.  ``i_pcp(t)`` is the left-limit PCP indicator, so the
exponent is constant between a patient's covariate breakpoints and every
integral used here reduces to closed-form segment primitives.  ``alpha`` is
an optional augmentation coefficient on the counterfactual-mimicking value;
it stays 0 everywhere except in the dedicated no-residual-signal diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _arrays
from .errors import NoEventsError, NonConvergenceError
from .trajectory import Cohort, Trajectory, risk_end, segment_grid

_WEIGHTS = ("one", "inv_xi", "score_gamma", "azt", "pcp")


@dataclass(frozen=True)
class WeibullPHParams:
    """Intensity parameters; ``alpha`` defaults to 0 (no augmentation)."""

    xi: float
    gamma: float
    theta1: float
    theta2: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("xi", "gamma", "theta1", "theta2", "alpha"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def as_array(self) -> np.ndarray:
        return np.array([self.xi, self.gamma, self.theta1, self.theta2])


def lambda_eval(
    p: WeibullPHParams,
    t: float,
    traj: Trajectory,
    x_at_t: Optional[float] = None,
) -> float:
    """Hazard value at ``t > 0``; zero when the patient is not at risk.

    With ``gamma < 1`` the hazard diverges as ``t -> 0``, so evaluation at
    ``t <= 0`` is a domain error; cumulative quantities near zero should go
    through :func:`cumulative_weighted`, whose primitives integrate the
    singularity exactly.
    """
    if t <= 0:
        raise ValueError(f"hazard evaluation requires t > 0, got t={t}")
    if p.alpha != 0.0 and x_at_t is None:
        raise ValueError("x_at_t is required when alpha != 0")
    if t >= risk_end(traj):
        return 0.0
    i_pcp = int(traj.pcp_time is not None and traj.pcp_time < t)
    expo = p.theta1 * traj.i_azt + p.theta2 * i_pcp
    if p.alpha != 0.0:
        expo += p.alpha * x_at_t
    return p.xi * p.gamma * t ** (p.gamma - 1.0) * math.exp(expo)


def segment_primitive(gamma: float, a: float, b: float, kind: str = "plain") -> float:
    """Exact integrals of the Weibull time factor over ``[a, b]``.

    kind:
        ``plain``      integral of gamma * t**(gamma-1), equal to b**g - a**g
        ``logweight``  same with weight (1/gamma + log t)
        ``logweight2`` same with weight (1/gamma + log t)**2

    The weighted antiderivatives are ``t**g * log t`` and
    ``t**g * (log(t)**2 + gamma**-2)``; their limits at 0 vanish because
    ``gamma > 0``, so ``a = 0`` is allowed even when the hazard itself is
    unbounded there.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if a < 0 or b < a:
        raise ValueError(f"need 0 <= a <= b, got a={a}, b={b}")

    def anti(t: float) -> float:
        if t == 0.0:
            return 0.0
        tg = t**gamma
        if kind == "plain":
            return tg
        if kind == "logweight":
            return tg * math.log(t)
        if kind == "logweight2":
            lg = math.log(t)
            return tg * (lg * lg + 1.0 / (gamma * gamma))
        raise ValueError(f"unknown kind {kind!r}")

    return anti(b) - anti(a)


def _segment_exponent(p: WeibullPHParams, traj: Trajectory, a: float, b: float,
                      x_const: Optional[float]) -> float:
    """Covariate exponent, constant on the segment ``(a, b)``."""
    mid_pcp = int(traj.pcp_time is not None and traj.pcp_time <= a)
    expo = p.theta1 * traj.i_azt + p.theta2 * mid_pcp
    if p.alpha != 0.0:
        expo += p.alpha * x_const
    return expo


def cumulative_weighted(
    p: WeibullPHParams,
    traj: Trajectory,
    weight,
    x_const: Optional[float] = None,
    upper: Optional[float] = None,
) -> float:
    """Integral of ``w(t) * lambda(t)`` over the at-risk period ``[0, upper]``.

    ``weight`` is one of ``"one"``, ``"inv_xi"``, ``"score_gamma"``,
    ``"azt"``, ``"pcp"`` or a pair ``("const", c)``.  The constant weight is
    what the counterfactual-mimicking value contributes for the
    failure-time variants, which are constant over the at-risk window.
    ``x_const`` feeds the augmented hazard when ``alpha != 0``.
    """
    if upper is None:
        upper = risk_end(traj)
    if upper <= 0.0:
        return 0.0
    if p.alpha != 0.0 and x_const is None:
        raise ValueError("x_const is required when alpha != 0")

    const = None
    if isinstance(weight, tuple):
        tag, const = weight
        if tag != "const":
            raise ValueError(f"unknown weight {weight!r}")
        weight = "const"
    elif weight not in _WEIGHTS:
        raise ValueError(f"unknown weight {weight!r}")

    total = 0.0
    grid = segment_grid(traj, 0.0, upper)
    for a, b in zip(grid, grid[1:]):
        expo = _segment_exponent(p, traj, a, b, x_const)
        factor = p.xi * math.exp(expo)
        if weight == "score_gamma":
            base = segment_primitive(p.gamma, a, b, "logweight")
        else:
            base = segment_primitive(p.gamma, a, b, "plain")
        if weight == "one" or weight == "score_gamma":
            w = 1.0
        elif weight == "inv_xi":
            w = 1.0 / p.xi
        elif weight == "azt":
            w = float(traj.i_azt)
        elif weight == "pcp":
            w = float(int(traj.pcp_time is not None and traj.pcp_time <= a))
        else:  # const
            w = float(const)
        total += factor * w * base
    return total


def score_vector(cohort: Cohort, p: WeibullPHParams) -> np.ndarray:
    """Mean of the four per-patient score contributions at ``p``.

    Component weights are (1/xi, 1/gamma + log t, i_azt, i_pcp(t)) against
    the initiation events minus the cumulative hazard.
    """
    arr = _arrays.cohort_arrays(cohort)
    sc, _ = _arrays.nuisance_score_and_jacobian(arr, p.xi, p.gamma, p.theta1, p.theta2)
    return sc


@dataclass(frozen=True)
class MLEOptions:
    tol: float = 1e-10
    max_iter: int = 100
    fix: Optional[dict] = None  # e.g. {"gamma": 1.0, "theta1": 0.0}


def weibull_mle(
    cohort: Cohort,
    init: Optional[WeibullPHParams] = None,
    opts: Optional[MLEOptions] = None,
) -> WeibullPHParams:
    """Solve the four partial-likelihood score equations by damped Newton.

    ``xi`` and ``gamma`` are updated on the log scale to preserve
    positivity; steps are halved (up to 30 times) whenever the residual
    max-norm fails to decrease.  ``opts.fix`` pins a subset of parameters,
    which supports reduced models such as the exponential special case.
    """
    opts = opts or MLEOptions()
    if len(cohort) == 0:
        raise ValueError("cannot fit an empty cohort")
    arr = _arrays.cohort_arrays(cohort)
    n_events = int(arr.initiated.sum())
    if n_events == 0:
        raise NoEventsError(
            "no treatment initiations in the cohort: the rate scale xi is "
            "driven to its 0 boundary and the score system has no interior root"
        )
    if init is None:
        # Moment-style start: exponential rate, unit shape, null covariates.
        init = WeibullPHParams(
            xi=max(n_events / float(arr.risk_end.sum()), 1e-8),
            gamma=1.0,
            theta1=0.0,
            theta2=0.0,
        )
    fix = dict(opts.fix or {})
    unknown = set(fix) - {"xi", "gamma", "theta1", "theta2"}
    if unknown:
        raise ValueError(f"cannot fix unknown parameters: {sorted(unknown)}")

    names = ["xi", "gamma", "theta1", "theta2"]
    cur = {n: float(fix.get(n, getattr(init, n))) for n in names}
    free = [n for n in names if n not in fix]
    if not free:
        raise ValueError("at least one parameter must be free")

    def residual(vals):
        sc, jac = _arrays.nuisance_score_and_jacobian(
            arr, vals["xi"], vals["gamma"], vals["theta1"], vals["theta2"]
        )
        return sc, jac

    sc, jac = residual(cur)
    norm = float(np.max(np.abs(sc[[names.index(n) for n in free]])))
    trace = [norm]
    for _ in range(opts.max_iter):
        if norm <= opts.tol:
            return WeibullPHParams(**cur)
        idx = [names.index(n) for n in free]
        # Chain rule for the internal log parameterization of xi and gamma.
        scale = np.array([cur[n] if n in ("xi", "gamma") else 1.0 for n in free])
        jac_free = jac[np.ix_(idx, idx)] * scale[np.newaxis, :]
        try:
            step = np.linalg.solve(jac_free, -sc[idx])
        except np.linalg.LinAlgError:
            raise NonConvergenceError(
                "singular score Jacobian",
                last_iterate=WeibullPHParams(**cur),
                residual_norm=norm,
                trace=trace,
            ) from None
        damping = 1.0
        for _half in range(30):
            trial = dict(cur)
            for k, n in enumerate(free):
                if n in ("xi", "gamma"):
                    trial[n] = cur[n] * math.exp(
                        float(np.clip(damping * step[k], -5.0, 5.0))
                    )
                else:
                    trial[n] = cur[n] + damping * step[k]
            sc_t, jac_t = residual(trial)
            norm_t = float(np.max(np.abs(sc_t[idx])))
            if math.isfinite(norm_t) and norm_t < norm:
                cur, sc, jac, norm = trial, sc_t, jac_t, norm_t
                break
            damping *= 0.5
        else:
            raise NonConvergenceError(
                "damped Newton could not reduce the score residual",
                last_iterate=WeibullPHParams(**cur),
                residual_norm=norm,
                trace=trace,
            )
        trace.append(norm)
    if norm <= opts.tol:
        return WeibullPHParams(**cur)
    raise NonConvergenceError(
        f"no convergence after {opts.max_iter} iterations "
        f"(residual max-norm {norm:.3e})",
        last_iterate=WeibullPHParams(**cur),
        residual_norm=norm,
        trace=trace,
    )
