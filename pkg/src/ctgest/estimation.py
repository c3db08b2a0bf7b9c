"""Joint estimation of the initiation-intensity nuisance parameters and the
treatment-effect parameters by martingale estimating equations.

Per patient the estimating vector stacks the four hazard score weights with
the counterfactual-mimicking value (times its parameter basis for
multi-parameter effect models), each integrated against the initiation
events minus the modeled cumulative intensity:

    g_i = h(T_i) * dN_i - int_0^{risk_end} h(t) lambda(t) dt.

At the true parameters every component is a martingale increment, so the
empirical mean is an unbiased estimating function.  The solver exploits the
triangular structure: the four nuisance scores do not involve the effect
parameter, so the nuisance fit runs first and the effect parameter is a
one-dimensional root find of the remaining component (with a damped Newton
fallback for multi-parameter models or failed bracketing).

Variance is the empirical sandwich with the jacobian and second-moment
blocks assembled from the same closed-form segment integrals.  With the
matching blocks the effect-parameter estimate is exactly uncorrelated with
the nuisance block in the resulting covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _arrays
from .errors import NonConvergenceError, SingularityError
from .intensity import MLEOptions, WeibullPHParams, cumulative_weighted, weibull_mle
from .shift import (
    ShiftModel,
    SimpleAFT,
    StratifiedAFT,
    as_psi,
    dx_dpsi,
    x_closed_form,
    x_path,
)
from .special import norm_ppf
from .trajectory import Cohort, Trajectory, risk_end, segment_grid

NUISANCE_NAMES = ("xi", "gamma", "theta1", "theta2")


def param_names(model: ShiftModel) -> tuple[str, ...]:
    if model.n_params == 1:
        return NUISANCE_NAMES + ("psi",)
    return NUISANCE_NAMES + tuple(f"psi{j + 1}" for j in range(model.n_params))


def _u_basis(model: ShiftModel) -> Optional[list[str]]:
    """Effect-block multiplier tags for the closed-form variants."""
    if isinstance(model, SimpleAFT):
        return ["one"]
    if isinstance(model, StratifiedAFT):
        return ["one", "pcp", "azt"]
    return None


@dataclass(frozen=True)
class GVector:
    """One patient's estimating vector, split into its event and drift parts."""

    components: np.ndarray
    jump_part: np.ndarray
    drift_part: np.ndarray


@dataclass(frozen=True)
class StackedG:
    """Cohort mean of the estimating vectors plus the per-patient matrix."""

    mean: np.ndarray
    per_patient: np.ndarray


@dataclass(frozen=True)
class EstimationResult:
    params: np.ndarray
    names: tuple[str, ...]
    v0: np.ndarray
    w0: np.ndarray
    cov: np.ndarray
    ci: np.ndarray            # (dim, 2), Wald intervals
    level: float
    diagnostics: dict

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.params.tolist()))


# ---------------------------------------------------------------------------
# Quadrature for effect models without a closed form.
#
# Substituting u = t**gamma removes the integrable endpoint singularity of
# the hazard: lambda(t) dt = xi * e^{covariates} du, so any integral of
# f(t) * lambda(t) becomes a smooth integral of f(u^{1/gamma}) in u.
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _lambda_quad(
    traj: Trajectory,
    weibull: WeibullPHParams,
    fvals,
    tol: float = 1e-10,
    max_levels: int = 7,
) -> float:
    """Integral of ``f(t) * lambda(t)`` over the at-risk window.

    ``fvals`` maps a sorted array of times to the values of ``f``; it is
    called once per refinement level with all nodes at once so callers can
    batch expensive evaluations (one backward sweep of the transform).
    """
    upper = risk_end(traj)
    if upper <= 0.0:
        return 0.0
    grid = segment_grid(traj, 0.0, upper)
    g = weibull.gamma
    prev = None
    pieces = 1
    for _ in range(max_levels):
        ts_all = []
        wts_all = []
        for a, b in zip(grid, grid[1:]):
            i_pcp = int(traj.pcp_time is not None and traj.pcp_time <= a)
            factor = weibull.xi * math.exp(
                weibull.theta1 * traj.i_azt + weibull.theta2 * i_pcp
            )
            ua, ub = a**g, b**g
            edges = np.linspace(ua, ub, pieces + 1)
            for lo, hi in zip(edges, edges[1:]):
                mid = 0.5 * (lo + hi)
                half = 0.5 * (hi - lo)
                us = mid + half * _GL_NODES
                ts_all.append(us ** (1.0 / g))
                wts_all.append(factor * half * _GL_WEIGHTS)
        ts = np.concatenate(ts_all)
        wts = np.concatenate(wts_all)
        order = np.argsort(ts, kind="stable")
        vals = np.asarray(fvals(ts[order]), dtype=float)
        total = float(np.dot(vals, wts[order]))
        if prev is not None and abs(total - prev) <= tol * (1.0 + abs(total)):
            return total
        prev = total
        pieces *= 2
    return prev


def _x_const(traj: Trajectory, psi: np.ndarray, model: ShiftModel) -> float:
    """Mimicking value on the at-risk window (constant for AFT variants)."""
    return x_closed_form(traj, psi, model, 0.0)


def _nuisance_g_scalar(traj, weibull):
    jump = np.zeros(4)
    if traj.treat_start is not None:
        t0 = traj.treat_start
        jump[:] = (
            1.0 / weibull.xi,
            1.0 / weibull.gamma + math.log(t0),
            float(traj.i_azt),
            float(int(traj.pcp_time is not None and traj.pcp_time < t0)),
        )
    drift = np.array(
        [
            cumulative_weighted(weibull, traj, "inv_xi"),
            cumulative_weighted(weibull, traj, "score_gamma"),
            cumulative_weighted(weibull, traj, "azt"),
            cumulative_weighted(weibull, traj, "pcp"),
        ]
    )
    return jump, drift


def g_patient(
    traj: Trajectory,
    weibull: WeibullPHParams,
    psi,
    model: ShiftModel,
    ode_tol: float = 1e-10,
) -> GVector:
    """One patient's stacked estimating vector.

    The four nuisance components use the hazard score weights; the effect
    block uses the mimicking value (exactly, via the closed form, for the
    AFT variants; via the backward integrator and quadrature otherwise).
    """
    if weibull.alpha != 0.0:
        raise ValueError("estimating equations require alpha = 0")
    p = as_psi(model, psi)
    jump4, drift4 = _nuisance_g_scalar(traj, weibull)
    basis = _u_basis(model)
    if basis is not None:
        x = _x_const(traj, p, model)
        jump_x = np.zeros(len(basis))
        drift_x = np.zeros(len(basis))
        t0 = traj.treat_start
        pcp_t = float(
            int(
                traj.pcp_time is not None
                and t0 is not None
                and traj.pcp_time < t0
            )
        )
        for j, tag in enumerate(basis):
            if tag == "one":
                u_jump, w = 1.0, ("const", x)
            elif tag == "azt":
                u_jump, w = float(traj.i_azt), ("const", x * traj.i_azt)
            else:  # pcp
                u_jump = pcp_t
                w = None
            if t0 is not None:
                jump_x[j] = x * u_jump
            if tag == "pcp":
                drift_x[j] = x * cumulative_weighted(weibull, traj, "pcp")
            else:
                drift_x[j] = cumulative_weighted(weibull, traj, w)
    else:
        if model.n_params != 1:
            raise NotImplementedError(
                "multi-parameter effect models need a closed-form variant"
            )
        jump_x = np.zeros(1)
        if traj.treat_start is not None:
            jump_x[0] = x_path(traj, p, model, [traj.treat_start], tol=ode_tol)[0]
        drift_x = np.array(
            [
                _lambda_quad(
                    traj,
                    weibull,
                    lambda ts: x_path(traj, p, model, ts, tol=ode_tol),
                )
            ]
        )
    jump = np.concatenate([jump4, jump_x])
    drift = np.concatenate([drift4, drift_x])
    return GVector(components=jump - drift, jump_part=jump, drift_part=drift)


def _aft_kappa(arr: _arrays.CohortArrays, psi: np.ndarray, model: ShiftModel):
    if isinstance(model, SimpleAFT):
        return np.full(arr.n, psi[0])
    return psi[0] + psi[1] * arr.pcp_before_t + psi[2] * arr.azt


def stacked(
    cohort: Cohort, weibull: WeibullPHParams, psi, model: ShiftModel
) -> StackedG:
    """Empirical mean of the estimating vectors over the cohort."""
    if len(cohort) == 0:
        raise ValueError("cannot stack an empty cohort")
    if weibull.alpha != 0.0:
        raise ValueError("estimating equations require alpha = 0")
    p = as_psi(model, psi)
    basis = _u_basis(model)
    if basis is not None:
        arr = _arrays.cohort_arrays(cohort)
        xconst = _arrays.aft_x_const(arr, _aft_kappa(arr, p, model))
        per = _arrays.g_per_patient_aft(
            arr, weibull.xi, weibull.gamma, weibull.theta1, weibull.theta2,
            xconst, basis,
        )
    else:
        per = np.stack(
            [g_patient(t, weibull, p, model).components for t in cohort]
        )
    return StackedG(mean=per.mean(axis=0), per_patient=per)


def jacobian_stacked(
    cohort: Cohort, weibull: WeibullPHParams, psi, model: ShiftModel
) -> np.ndarray:
    """Exact Jacobian of the stacked mean in (xi, gamma, theta1, theta2, psi).

    Closed form for the AFT variants.  Unlike the sandwich plug-in jacobian
    this includes the martingale terms from the parameter-dependent score
    weights; the two coincide at the fitted root, where those terms are
    proportional to the first score component, which is zero there.
    """
    p = as_psi(model, psi)
    basis = _u_basis(model)
    if basis is None:
        raise NotImplementedError("analytic jacobian needs a closed-form variant")
    arr = _arrays.cohort_arrays(cohort)
    kappa = _aft_kappa(arr, p, model)
    xconst = _arrays.aft_x_const(arr, kappa)
    dx = _arrays.aft_dx_const(arr, kappa)
    _, v0, _ = _arrays.sandwich_blocks_aft(
        arr, weibull.xi, weibull.gamma, weibull.theta1, weibull.theta2,
        xconst, dx, basis,
    )
    jac = v0.copy()
    m = _arrays.moments(arr, weibull.xi, weibull.gamma, weibull.theta1, weibull.theta2)
    mart = float(np.mean(arr.initiated.astype(float) - m.lam))
    jac[0, 0] += -mart / weibull.xi**2
    jac[1, 1] += -mart / weibull.gamma**2
    return jac


@dataclass(frozen=True)
class SolveOptions:
    psi_bracket: tuple[float, float] = (-3.0, 3.0)
    tol: float = 1e-8
    max_iter: int = 100
    ci_level: float = 0.95
    scan_points: int = 33
    mle_tol: float = 1e-10


def _residual_fn(cohort, model, opts):
    """Stacked mean as a function of the raw parameter vector."""

    def f(z):
        weibull = WeibullPHParams(
            xi=math.exp(z[0]), gamma=math.exp(z[1]), theta1=z[2], theta2=z[3]
        )
        return stacked(cohort, weibull, z[4:], model).mean

    return f


def _newton_fallback(cohort, model, z0, opts):
    """Damped Newton on all components with a forward-difference jacobian."""
    f = _residual_fn(cohort, model, opts)
    z = np.asarray(z0, dtype=float).copy()
    r = f(z)
    norm = float(np.max(np.abs(r)))
    trace = [norm]
    dim = z.size
    for it in range(opts.max_iter):
        if norm <= opts.tol:
            return z, norm, trace, it
        jac = np.empty((dim, dim))
        for j in range(dim):
            h = 1e-6 * (1.0 + abs(z[j]))
            zh = z.copy()
            zh[j] += h
            jac[:, j] = (f(zh) - r) / h
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise NonConvergenceError(
                "singular finite-difference jacobian in the fallback solver",
                last_iterate=z,
                residual_norm=norm,
                trace=trace,
            ) from None
        damping = 1.0
        for _ in range(30):
            z_t = z + damping * step
            r_t = f(z_t)
            norm_t = float(np.max(np.abs(r_t)))
            if math.isfinite(norm_t) and norm_t < norm:
                z, r, norm = z_t, r_t, norm_t
                break
            damping *= 0.5
        else:
            break
        trace.append(norm)
    if norm <= opts.tol:
        return z, norm, trace, opts.max_iter
    raise NonConvergenceError(
        "no almost-zero found: fallback Newton stalled "
        f"(residual max-norm {norm:.3e})",
        last_iterate=z,
        residual_norm=norm,
        trace=trace,
    )


def solve(
    cohort: Cohort,
    model: Optional[ShiftModel] = None,
    init: Optional[np.ndarray] = None,
    opts: Optional[SolveOptions] = None,
) -> EstimationResult:
    """Estimate all parameters and their sandwich covariance.

    Primary path for one-parameter effect models: fit the nuisance scores,
    then bracket and root-find the effect component over
    ``opts.psi_bracket``.  Falls back to damped Newton on the full system
    when bracketing fails or the effect parameter is multivariate.
    """
    model = model or SimpleAFT()
    opts = opts or SolveOptions()
    if len(cohort) == 0:
        raise ValueError("cannot estimate from an empty cohort")
    names = param_names(model)
    diag: dict = {"method": None, "psi_bracket": list(opts.psi_bracket)}

    weibull = weibull_mle(cohort, opts=MLEOptions(tol=opts.mle_tol, max_iter=opts.max_iter))

    psi_hat = None
    if model.n_params == 1:
        def f5(psi_val):
            return float(
                stacked(cohort, weibull, [psi_val], model).mean[4]
            )

        lo, hi = opts.psi_bracket
        try:
            f_lo, f_hi = f5(lo), f5(hi)
            bracket = None
            if np.sign(f_lo) != np.sign(f_hi):
                bracket = (lo, hi)
            else:
                grid = np.linspace(lo, hi, opts.scan_points)
                vals = [f5(g) for g in grid]
                for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
                    if np.sign(fa) != np.sign(fb):
                        bracket = (float(a), float(b))
                        break
            if bracket is not None:
                psi_hat = brentq(f5, *bracket, xtol=1e-12, rtol=8.9e-16)
                diag["method"] = "profile"
        except (ValueError, ArithmeticError):
            psi_hat = None

    if psi_hat is not None:
        z = np.array(
            [
                math.log(weibull.xi),
                math.log(weibull.gamma),
                weibull.theta1,
                weibull.theta2,
                psi_hat,
            ]
        )
        resid = _residual_fn(cohort, model, opts)(z)
        norm = float(np.max(np.abs(resid)))
        iters = 0
        if norm > opts.tol:
            z, norm, _, iters = _newton_fallback(cohort, model, z, opts)
    else:
        if init is None:
            z0 = np.concatenate(
                [
                    [math.log(weibull.xi), math.log(weibull.gamma),
                     weibull.theta1, weibull.theta2],
                    np.zeros(model.n_params),
                ]
            )
        else:
            init = np.asarray(init, dtype=float)
            z0 = init.copy()
            z0[0] = math.log(init[0])
            z0[1] = math.log(init[1])
        z, norm, _, iters = _newton_fallback(cohort, model, z0, opts)
        diag["method"] = "newton"

    params = np.concatenate([[math.exp(z[0]), math.exp(z[1])], z[2:]])
    fitted = WeibullPHParams(
        xi=params[0], gamma=params[1], theta1=params[2], theta2=params[3]
    )
    v0, w0, cov = sandwich(cohort, fitted, params[4:], model)
    se = np.sqrt(np.diag(cov))
    zq = norm_ppf(0.5 * (1.0 + opts.ci_level))
    ci = np.stack([params - zq * se, params + zq * se], axis=1)

    eigs = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    diag.update(
        {
            "iterations": iters,
            "residual_norm": norm,
            "n": len(cohort),
            "cov_min_eigenvalue": float(eigs.min()),
            "cov_psd": bool(eigs.min() >= -1e-10),
            "converged": bool(norm <= opts.tol),
        }
    )
    return EstimationResult(
        params=params,
        names=names,
        v0=v0,
        w0=w0,
        cov=cov,
        ci=ci,
        level=opts.ci_level,
        diagnostics=diag,
    )


def sandwich(
    cohort: Cohort,
    weibull: WeibullPHParams,
    psi,
    model: ShiftModel,
):
    """Empirical sandwich pieces ``(v0, w0, cov)`` at the given parameters.

    ``w0`` is the mean predictable second moment of the estimating vector,
    ``v0`` the plug-in jacobian (hazard-score block plus the
    mimicking-derivative column) and ``cov = v0^-1 w0 v0^-T / n``.
    """
    p = as_psi(model, psi)
    n = len(cohort)
    if n == 0:
        raise ValueError("cannot form a sandwich from an empty cohort")
    basis = _u_basis(model)
    if basis is not None:
        arr = _arrays.cohort_arrays(cohort)
        kappa = _aft_kappa(arr, p, model)
        xconst = _arrays.aft_x_const(arr, kappa)
        dx = _arrays.aft_dx_const(arr, kappa)
        w0, v0, _ = _arrays.sandwich_blocks_aft(
            arr, weibull.xi, weibull.gamma, weibull.theta1, weibull.theta2,
            xconst, dx, basis,
        )
    else:
        w0, v0 = _sandwich_generic(cohort, weibull, p, model)
    try:
        v0_inv = np.linalg.inv(v0)
    except np.linalg.LinAlgError:
        raise SingularityError(
            "the jacobian of the expected estimating function is singular; "
            "the asymptotic-normality result requires it to be invertible"
        ) from None
    cov = v0_inv @ w0 @ v0_inv.T / n
    cov = 0.5 * (cov + cov.T)
    return v0, w0, cov


def _patient_quad_nodes(traj, weibull, pieces):
    """Shared quadrature nodes for integrals against the hazard.

    Returns ``(ts, wts, pcp_flags)`` in the ``u = t**gamma`` coordinates
    that absorb the endpoint singularity; ``dot(f(ts), wts)`` is then the
    integral of ``f * lambda`` over the at-risk window.
    """
    upper = risk_end(traj)
    if upper <= 0.0:
        return np.empty(0), np.empty(0), np.empty(0)
    g = weibull.gamma
    grid = segment_grid(traj, 0.0, upper)
    ts_all, wts_all, pcp_all = [], [], []
    for a, b in zip(grid, grid[1:]):
        i_pcp = float(traj.pcp_time is not None and traj.pcp_time <= a)
        factor = weibull.xi * math.exp(
            weibull.theta1 * traj.i_azt + weibull.theta2 * i_pcp
        )
        edges = np.linspace(a**g, b**g, pieces + 1)
        for lo, hi in zip(edges, edges[1:]):
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            us = mid + half * _GL_NODES
            ts_all.append(us ** (1.0 / g))
            wts_all.append(factor * half * _GL_WEIGHTS)
            pcp_all.append(np.full(_GL_NODES.shape, i_pcp))
    ts = np.concatenate(ts_all)
    order = np.argsort(ts, kind="stable")
    return (
        ts[order],
        np.concatenate(wts_all)[order],
        np.concatenate(pcp_all)[order],
    )


def _sandwich_generic(cohort, weibull, psi, model, pieces=8):
    """Quadrature-based blocks for effect models without a closed form.

    One node set per patient serves every matrix entry; the derivative of
    the mimicking value uses central differences on two extra backward
    sweeps.
    """
    dim = 4 + 1
    w0 = np.zeros((dim, dim))
    a_psi = 0.0
    h = 1e-6 * (1.0 + abs(float(psi[0])))
    psi_hi = psi.copy()
    psi_lo = psi.copy()
    psi_hi[0] += h
    psi_lo[0] -= h
    for traj in cohort:
        ts, wts, pcp_flags = _patient_quad_nodes(traj, weibull, pieces)
        t0 = traj.treat_start
        if ts.size:
            xv = x_path(traj, psi, model, ts)
            dxv = (
                x_path(traj, psi_hi, model, ts) - x_path(traj, psi_lo, model, ts)
            ) / (2.0 * h)
            weights = [
                np.full(ts.shape, 1.0 / weibull.xi),
                1.0 / weibull.gamma + np.log(ts),
                np.full(ts.shape, float(traj.i_azt)),
                pcp_flags,
                xv,
            ]
            for a in range(dim):
                for b in range(a, dim):
                    val = float(np.dot(weights[a] * weights[b], wts))
                    w0[a, b] += val
                    if a != b:
                        w0[b, a] += val
            a_psi -= float(np.dot(dxv, wts))
        if t0 is not None:
            a_psi += dx_dpsi(traj, psi, model, t0)[0]
    n = len(cohort)
    w0 /= n
    a_psi /= n
    v0 = np.zeros((dim, dim))
    v0[:, :4] = -w0[:, :4]
    v0[4, 4] = a_psi
    return w0, v0


def alpha_diagnostic(
    cohort: Cohort,
    psi,
    model: Optional[ShiftModel] = None,
    opts: Optional[MLEOptions] = None,
):
    """Fit the hazard augmented with the mimicking value at a fixed effect
    parameter; returns ``(alpha_hat, se)``.

    Under no unmeasured confounding the mimicking value at the true effect
    parameter carries no residual signal for initiation, so ``alpha`` should
    be indistinguishable from zero there; a clearly nonzero ``alpha`` flags
    a wrong effect parameter (or a confounded design).
    """
    model = model or SimpleAFT()
    opts = opts or MLEOptions()
    p = as_psi(model, psi)
    if _u_basis(model) is None:
        raise NotImplementedError("augmentation diagnostic needs a closed-form variant")
    base = weibull_mle(cohort, opts=opts)
    arr = _arrays.cohort_arrays(cohort)
    xconst = _arrays.aft_x_const(arr, _aft_kappa(arr, p, model))

    z = np.array(
        [math.log(base.xi), math.log(base.gamma), base.theta1, base.theta2, 0.0]
    )

    def residual(zv):
        return _arrays.augmented_score_and_jacobian(
            arr, math.exp(zv[0]), math.exp(zv[1]), zv[2], zv[3], zv[4], xconst
        )

    sc, jac = residual(z)
    norm = float(np.max(np.abs(sc)))
    for _ in range(opts.max_iter):
        if norm <= opts.tol:
            break
        scale = np.array([math.exp(z[0]), math.exp(z[1]), 1.0, 1.0, 1.0])
        jac_z = jac * scale[np.newaxis, :]
        try:
            step = np.linalg.solve(jac_z, -sc)
        except np.linalg.LinAlgError:
            raise NonConvergenceError(
                "singular jacobian in the augmented fit",
                last_iterate=z,
                residual_norm=norm,
            ) from None
        damping = 1.0
        for _ in range(30):
            z_t = z + damping * np.clip(step, -5.0, 5.0)
            sc_t, jac_t = residual(z_t)
            norm_t = float(np.max(np.abs(sc_t)))
            if math.isfinite(norm_t) and norm_t < norm:
                z, sc, jac, norm = z_t, sc_t, jac_t, norm_t
                break
            damping *= 0.5
        else:
            raise NonConvergenceError(
                "augmented fit could not reduce the score residual",
                last_iterate=z,
                residual_norm=norm,
            )
    else:
        raise NonConvergenceError(
            f"augmented fit did not converge (residual {norm:.3e})",
            last_iterate=z,
            residual_norm=norm,
        )
    # Model-based covariance: inverse observed information of the score
    # system, scaled by n.
    scale = np.array([math.exp(z[0]), math.exp(z[1]), 1.0, 1.0, 1.0])
    _, jac = residual(z)
    try:
        info_inv = np.linalg.inv(-jac)
    except np.linalg.LinAlgError:
        raise SingularityError("singular information in the augmented fit") from None
    se = math.sqrt(max(info_inv[4, 4], 0.0) / len(cohort))
    return float(z[4]), se


def result_csv_header(names) -> list[str]:
    cols = ["n", "converged", "residual_norm"]
    cols += [f"est_{n}" for n in names]
    cols += [f"se_{n}" for n in names]
    for n in names:
        cols += [f"ci_lo_{n}", f"ci_hi_{n}"]
    return cols


def result_to_csv_row(result: EstimationResult) -> list:
    row = [
        result.diagnostics.get("n"),
        int(result.diagnostics.get("converged", False)),
        result.diagnostics.get("residual_norm"),
    ]
    row += list(result.params)
    row += list(result.se)
    for lo, hi in result.ci:
        row += [lo, hi]
    return row


def result_to_json_dict(result: EstimationResult) -> dict:
    return {
        "params": dict(zip(result.names, result.params.tolist())),
        "se": dict(zip(result.names, result.se.tolist())),
        "ci": {
            n: [float(lo), float(hi)]
            for n, (lo, hi) in zip(result.names, result.ci)
        },
        "ci_level": result.level,
        "cov": result.cov.tolist(),
        "v0": result.v0.tolist(),
        "w0": result.w0.tolist(),
        "diagnostics": result.diagnostics,
    }
