"""Treatment-effect models and the counterfactual-mimicking transform.

The treatment effect is encoded by an infinitesimal shift rate ``d(y, t)``
per patient: the instantaneous slope, at time ``t``, of the transform that
carries the outcome distribution "treatment as observed" into "treatment
stopped at t".  The mimicking value ``X(t)`` solves the backward equation

    x'(s) = d(x(s), s),    x(tau) = y_observed,

so that ``X(t)`` is distributed like the counterfactual outcome under
treatment stopped at ``t``, given the history up to ``t``.  With the rate
identically zero (``psi = 0``) the transform is the identity and
``X(t) = y`` for all ``t``.

Two accelerated-failure-time style variants admit closed forms; everything
else goes through the generic backward integrator, which restarts at the
patient's covariate breakpoints where the right-hand side may jump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import OdeIntegrationError
from .trajectory import Trajectory, duration_treated, segment_grid

DEFAULT_ODE_TOL = 1e-10
_MAX_HALVINGS = 22


@dataclass(frozen=True)
class ShiftParams:
    """Parameter vector of a shift model; ``psi = 0`` means no effect."""

    psi: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if arr.ndim != 1:
            raise ValueError("psi must be a scalar or a 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"psi must be finite, got {arr}")
        object.__setattr__(self, "psi", arr)


def as_psi(model: "ShiftModel", psi) -> np.ndarray:
    """Coerce ``psi`` (scalar, sequence or ShiftParams) to the model's shape."""
    if isinstance(psi, ShiftParams):
        arr = psi.psi
    else:
        arr = np.atleast_1d(np.asarray(psi, dtype=float))
    if arr.shape != (model.n_params,):
        raise ValueError(
            f"{type(model).__name__} expects {model.n_params} parameter(s), "
            f"got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"psi must be finite, got {arr}")
    return arr


class ShiftModel:
    """Base class; concrete variants implement ``rate``.

    ``rate`` is the raw shift slope before the universal dead-state rule
    (zero once the patient's observed outcome has occurred) is applied by
    :func:`d_eval`.
    """

    n_params: int = 1

    def rate(self, y: float, t: float, psi: np.ndarray, traj: Trajectory) -> float:
        raise NotImplementedError

    def has_closed_form(self) -> bool:
        return False


def _treated_at(traj: Trajectory, t: float) -> bool:
    # Right-continuous treatment: treated on [treat_start, y).
    return traj.treat_start is not None and traj.treat_start <= t < traj.y


def _pcp_frozen_at(traj: Trajectory, t: float) -> int:
    # 1 iff PCP happened at or before t and before treatment started.
    if traj.pcp_time is None or traj.pcp_time > t:
        return 0
    if traj.treat_start is not None and traj.pcp_time >= traj.treat_start:
        return 0
    return 1


@dataclass(frozen=True)
class SimpleAFT(ShiftModel):
    """One-parameter model: rate ``(1 - e^psi)`` while under treatment.

    Stopping treatment at ``t`` multiplies treated residual lifetime by
    ``e^psi`` in distribution.
    """

    n_params: int = field(default=1, init=False)

    def rate(self, y, t, psi, traj):
        if _treated_at(traj, t):
            return 1.0 - math.exp(psi[0])
        return 0.0

    def has_closed_form(self):
        return True


@dataclass(frozen=True)
class StratifiedAFT(ShiftModel):
    """Three-parameter variant; the log time-ratio is
    ``psi1 + psi2 * P(t) + psi3 * i_azt`` where ``P(t)`` indicates a PCP
    episode at or before ``t`` that predates treatment initiation."""

    n_params: int = field(default=3, init=False)

    def rate(self, y, t, psi, traj):
        if _treated_at(traj, t):
            expo = psi[0] + psi[1] * _pcp_frozen_at(traj, t) + psi[2] * traj.i_azt
            return 1.0 - math.exp(expo)
        return 0.0

    def has_closed_form(self):
        return True


@dataclass(frozen=True)
class WindowRestricted(ShiftModel):
    """Wraps another variant and zeroes the rate whenever the current
    outcome state lies more than ``window`` beyond the evaluation time.

    Encodes a-priori knowledge that treatment only matters for patients
    destined to fail within ``window`` time units.
    """

    inner: ShiftModel
    window: float

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError(f"window must be positive, got {self.window}")

    @property
    def n_params(self):  # type: ignore[override]
        return self.inner.n_params

    def rate(self, y, t, psi, traj):
        if y - t > self.window:
            return 0.0
        return self.inner.rate(y, t, psi, traj)


@dataclass(frozen=True)
class CustomRate(ShiftModel):
    """User-supplied rate ``fn(y, t, traj, psi)``.

    The caller declares the regularity constants the integrator relies on:
    a bound on ``|fn|`` and Lipschitz constants in ``y`` and ``t`` between
    covariate breakpoints.  They are not enforced, only probed by
    :func:`check_regularity`.
    """

    fn: Callable[[float, float, Trajectory, np.ndarray], float]
    n_params: int = 1
    bound: Optional[float] = None
    lipschitz_y: Optional[float] = None
    lipschitz_t: Optional[float] = None

    def rate(self, y, t, psi, traj):
        return float(self.fn(y, t, traj, psi))


def d_eval(model: ShiftModel, psi, y: float, t: float, traj: Trajectory) -> float:
    """Shift rate at state ``y``, time ``t``; zero once the patient is dead."""
    p = as_psi(model, psi)
    if t >= traj.y:
        return 0.0
    return float(model.rate(y, t, p, traj))


def _aft_exponent(model: ShiftModel, psi: np.ndarray, traj: Trajectory) -> float:
    """Constant log time-ratio over the treated interval, for AFT variants."""
    if isinstance(model, SimpleAFT):
        return float(psi[0])
    if isinstance(model, StratifiedAFT):
        p_ind = 0
        if (
            traj.pcp_time is not None
            and traj.treat_start is not None
            and traj.pcp_time < traj.treat_start
        ):
            p_ind = 1
        return float(psi[0] + psi[1] * p_ind + psi[2] * traj.i_azt)
    raise TypeError(f"no closed form for {type(model).__name__}")


def x_closed_form(traj: Trajectory, psi, model: ShiftModel, t: float) -> float:
    """Mimicking value ``X(t)`` for the AFT variants, in closed form.

    For an untreated patient the transform is the identity.  For a patient
    treated from ``T`` on, residual time past ``max(t, T)`` is scaled by the
    constant factor ``e^kappa`` with ``kappa`` the patient's log time-ratio.
    """
    if not model.has_closed_form():
        raise ValueError(
            f"{type(model).__name__} has no closed form; use x_ode instead"
        )
    p = as_psi(model, psi)
    if not 0.0 <= t <= traj.tau:
        raise ValueError(f"t={t} outside the observation window [0, {traj.tau}]")
    if t >= traj.y:
        return traj.y
    if traj.treat_start is None:
        return traj.y
    kappa = _aft_exponent(model, p, traj)
    scale = math.exp(kappa)
    t_eff = max(t, traj.treat_start)
    return t_eff + scale * (traj.y - t_eff)


def _rk4_segment(f, a: float, b: float, ya: float, n: int) -> float:
    """Classic fourth-order Runge-Kutta from ``a`` to ``b`` in ``n`` steps."""
    h = (b - a) / n
    y = ya
    t = a
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def _step_segment(
    traj: Trajectory,
    psi: np.ndarray,
    model: ShiftModel,
    left: float,
    right: float,
    x_right: float,
    tol: float,
) -> float:
    """One smooth segment, integrated backward from ``right`` to ``left``.

    The grid is halved until two successive refinements agree to ``tol``.
    """
    span = right - left
    if span == 0.0:
        return x_right
    # Indicator covariates switch exactly at segment boundaries; the
    # integrand must use the continuous extension from the interior, so
    # boundary-stage evaluations are nudged into the open segment.
    s_lo = math.nextafter(left, right)
    s_hi = math.nextafter(right, left)

    def g(u, y):
        # Substitute u = right - s so RK4 marches forward.
        s = min(max(right - u, s_lo), s_hi)
        if s >= traj.y:
            return 0.0
        return -float(model.rate(y, s, psi, traj))

    n = 1
    prev = _rk4_segment(g, 0.0, span, x_right, n)
    for _ in range(_MAX_HALVINGS):
        n *= 2
        cur = _rk4_segment(g, 0.0, span, x_right, n)
        if not math.isfinite(cur):
            raise OdeIntegrationError(
                f"non-finite state integrating segment [{left}, {right}] "
                f"of patient {traj.id!r}"
            )
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise OdeIntegrationError(
        f"step refinement stalled on segment [{left}, {right}] "
        f"of patient {traj.id!r} (last delta {abs(cur - prev):.3e})"
    )


def _window_segment(
    traj: Trajectory,
    psi: np.ndarray,
    model: WindowRestricted,
    left: float,
    right: float,
    x_right: float,
    tol: float,
) -> float:
    """Backward step for a window-restricted rate on one covariate segment.

    The rate is the inner model's while ``x(s) - s <= window`` and zero
    beyond.  Going backward, ``x - s`` is nondecreasing whenever the inner
    rate stays below 1 (true for the failure-time variants), so the state
    can freeze at most once; the crossing is located by bisection and the
    state is constant from there on.
    """
    w = model.window
    if x_right - right > w:
        return x_right  # frozen: zero rate, state carried through unchanged
    x_left = _step_segment(traj, psi, model.inner, left, right, x_right, tol)
    if x_left - left <= w:
        return x_left  # window never binds on this segment
    # Bisect for s* with x(s*) - s* = w, integrating the smooth inner rate.
    lo, hi = left, right  # crossing inside (lo, hi); active on [s*, right]
    x_hi = x_right
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        x_mid = _step_segment(traj, psi, model.inner, mid, hi, x_hi, tol)
        if x_mid - mid > w:
            lo = mid
        else:
            hi, x_hi = mid, x_mid
        if hi - lo <= max(tol, 4.0 * math.ulp(hi)):
            break
    return x_hi  # frozen below the crossing


def _integrate_backward(
    traj: Trajectory,
    psi: np.ndarray,
    model: ShiftModel,
    t_target: float,
    t_from: float,
    y_from: float,
    tol: float,
) -> float:
    """Integrate ``x' = d(x, s)`` from ``(t_from, y_from)`` down to ``t_target``,
    restarting at every covariate breakpoint."""
    if t_target > t_from:
        raise ValueError(f"t_target={t_target} must not exceed t_from={t_from}")
    if isinstance(model, WindowRestricted) and isinstance(
        model.inner, WindowRestricted
    ):
        raise ValueError("nested window restrictions are not supported")
    grid = segment_grid(traj, t_target, t_from)
    x = y_from
    for right, left in zip(reversed(grid), list(reversed(grid))[1:]):
        if isinstance(model, WindowRestricted):
            x = _window_segment(traj, psi, model, left, right, x, tol)
        else:
            x = _step_segment(traj, psi, model, left, right, x, tol)
        if not math.isfinite(x):
            raise OdeIntegrationError(
                f"non-finite state at breakpoint {left} of patient {traj.id!r}"
            )
    return x


def _ode_start(traj: Trajectory, model: ShiftModel):
    """Backward-integration starting point ``(time, state)``.

    The failure-time variants keep patients under treatment until death,
    so their anchor is death itself: ``x(y) = y`` (the rate vanishes
    afterwards).  For window survivors (``y > tau``) the integration then
    runs back through ``(tau, y)``, which reproduces the closed forms by an
    independent route.  A raw custom rate is a plain final-value problem
    anchored at the window end with the observed outcome.
    """
    if traj.y <= traj.tau:
        return traj.y, traj.y
    if isinstance(model, CustomRate):
        return traj.tau, traj.y
    return traj.y, traj.y


def x_ode(
    traj: Trajectory,
    psi,
    model: ShiftModel,
    t: float,
    tol: float = DEFAULT_ODE_TOL,
) -> float:
    """Mimicking value ``X(t)`` by backward numerical integration.

    Works for any variant whose rate is bounded and Lipschitz between the
    patient's covariate breakpoints.  The value is clamped to ``y`` for
    ``t >= y`` (zero rate once the patient is dead).
    """
    p = as_psi(model, psi)
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0.0 <= t <= traj.tau:
        raise ValueError(f"t={t} outside the observation window [0, {traj.tau}]")
    if t >= traj.y:
        return traj.y
    start, state = _ode_start(traj, model)
    return _integrate_backward(traj, p, model, t, start, state, tol)


def x_path(
    traj: Trajectory,
    psi,
    model: ShiftModel,
    ts,
    tol: float = DEFAULT_ODE_TOL,
) -> np.ndarray:
    """``X`` evaluated at a sorted grid of times, one backward sweep."""
    p = as_psi(model, psi)
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return np.empty(0)
    if np.any(np.diff(ts) < 0):
        raise ValueError("ts must be sorted ascending")
    if ts[0] < 0 or ts[-1] > traj.tau:
        raise ValueError("ts must lie inside [0, tau]")
    out = np.empty(ts.shape)
    t_from, x_from = _ode_start(traj, model)
    for i in range(ts.size - 1, -1, -1):
        t = float(ts[i])
        if t >= traj.y:
            out[i] = traj.y
            continue
        x_from = _integrate_backward(traj, p, model, t, t_from, x_from, tol)
        t_from = t
        out[i] = x_from
    return out


def dx_dpsi(
    traj: Trajectory,
    psi,
    model: ShiftModel,
    t: float,
    tol: float = DEFAULT_ODE_TOL,
) -> np.ndarray:
    """Gradient of ``X(t)`` in the model parameters.

    AFT variants use the closed form ``e^kappa * DUR(min(t, y), y)`` times
    the exponent's gradient; other variants fall back to central finite
    differences on the backward integrator with a relative step of 1e-6.
    """
    p = as_psi(model, psi)
    if model.has_closed_form():
        if traj.treat_start is None or t >= traj.y:
            return np.zeros(model.n_params)
        kappa = _aft_exponent(model, p, traj)
        dur = duration_treated(traj, min(t, traj.y), traj.y)
        base = math.exp(kappa) * dur
        if isinstance(model, SimpleAFT):
            return np.array([base])
        p_ind = 0
        if traj.pcp_time is not None and traj.pcp_time < traj.treat_start:
            p_ind = 1
        return base * np.array([1.0, float(p_ind), float(traj.i_azt)])
    grad = np.empty(model.n_params)
    for j in range(model.n_params):
        h = 1e-6 * (1.0 + abs(p[j]))
        hi = p.copy()
        lo = p.copy()
        hi[j] += h
        lo[j] -= h
        grad[j] = (
            x_ode(traj, hi, model, t, tol) - x_ode(traj, lo, model, t, tol)
        ) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class RegularityReport:
    """Empirical bound and Lipschitz constants of a shift rate on a lattice."""

    bound: float
    lipschitz_y: float
    lipschitz_t: float
    violations: int


def check_regularity(
    model: ShiftModel, psi, traj: Trajectory, grid_n: int
) -> RegularityReport:
    """Probe ``|d|`` and its difference quotients on a ``grid_n`` x ``grid_n``
    lattice over ``[0, tau] x [0, 2y]``.

    The time quotient skips pairs that straddle a covariate breakpoint,
    where the rate is allowed to jump.  Non-finite rate values are counted
    as violations rather than raised.
    """
    if grid_n < 2:
        raise ValueError(f"grid_n must be at least 2, got {grid_n}")
    p = as_psi(model, psi)
    ts = np.linspace(0.0, traj.tau, grid_n)
    ys = np.linspace(0.0, 2.0 * traj.y, grid_n)
    jumps = [
        e
        for e in (traj.pcp_time, traj.treat_start, traj.y)
        if e is not None and 0.0 < e < traj.tau
    ]
    values = np.empty((grid_n, grid_n))
    violations = 0
    for i, t in enumerate(ts):
        for j, y in enumerate(ys):
            v = d_eval(model, p, float(y), float(t), traj)
            if not math.isfinite(v):
                violations += 1
                v = math.nan
            values[i, j] = v
    finite = np.isfinite(values)
    bound = float(np.max(np.abs(values[finite]))) if finite.any() else math.nan

    lip_y = 0.0
    for i in range(grid_n):
        for j in range(grid_n - 1):
            if finite[i, j] and finite[i, j + 1]:
                dy = ys[j + 1] - ys[j]
                if dy > 0:
                    lip_y = max(lip_y, abs(values[i, j + 1] - values[i, j]) / dy)

    lip_t = 0.0
    for i in range(grid_n - 1):
        crosses = any(ts[i] < e <= ts[i + 1] for e in jumps)
        if crosses:
            continue
        dt = ts[i + 1] - ts[i]
        if dt <= 0:
            continue
        for j in range(grid_n):
            if finite[i, j] and finite[i + 1, j]:
                lip_t = max(lip_t, abs(values[i + 1, j] - values[i, j]) / dt)

    return RegularityReport(
        bound=bound, lipschitz_y=lip_y, lipschitz_t=lip_t, violations=violations
    )
