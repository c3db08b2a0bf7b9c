"""Vectorized closed-form kernels over a cohort.

Internal module.  Every integral here is the exact antiderivative of a
Weibull time factor times a per-segment constant; the public per-patient
operations in :mod:`ctgest.intensity` are the scalar reference
implementation and the test suite cross-checks the two.

Per patient the at-risk window ``[0, r)`` splits into at most two segments
at the PCP time: exponent ``theta1 * azt`` before, plus ``theta2`` after.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import Cohort


@dataclass(frozen=True)
class CohortArrays:
    n: int
    azt: np.ndarray        # 0/1 floats
    pcp: np.ndarray        # +inf when absent
    tstart: np.ndarray     # +inf when absent
    y: np.ndarray
    tau: float
    initiated: np.ndarray  # bool, the one-jump counting process increment
    risk_end: np.ndarray
    s1: np.ndarray         # min(pcp, risk_end): end of the pre-PCP segment
    pcp_before_t: np.ndarray  # 1 iff pcp strictly before treatment start


def cohort_arrays(cohort: Cohort) -> CohortArrays:
    n = len(cohort)
    azt = np.empty(n)
    pcp = np.empty(n)
    tstart = np.empty(n)
    y = np.empty(n)
    for i, p in enumerate(cohort):
        azt[i] = p.i_azt
        pcp[i] = p.pcp_time if p.pcp_time is not None else np.inf
        tstart[i] = p.treat_start if p.treat_start is not None else np.inf
        y[i] = p.y
    tau = cohort.tau if n else 0.0
    initiated = np.isfinite(tstart)
    risk_end = np.minimum(np.minimum(tstart, y), tau)
    s1 = np.minimum(pcp, risk_end)
    pcp_before_t = ((pcp < tstart) & initiated).astype(float)
    return CohortArrays(
        n=n,
        azt=azt,
        pcp=pcp,
        tstart=tstart,
        y=y,
        tau=tau,
        initiated=initiated,
        risk_end=risk_end,
        s1=s1,
        pcp_before_t=pcp_before_t,
    )


def _pow(g: float, x: np.ndarray) -> np.ndarray:
    return np.power(x, g)


def _pow_log(g: float, x: np.ndarray) -> np.ndarray:
    safe = np.where(x > 0.0, x, 1.0)
    return np.where(x > 0.0, np.power(safe, g) * np.log(safe), 0.0)


def _pow_log2(g: float, x: np.ndarray) -> np.ndarray:
    safe = np.where(x > 0.0, x, 1.0)
    lg = np.log(safe)
    return np.where(x > 0.0, np.power(safe, g) * (lg * lg + 1.0 / (g * g)), 0.0)


@dataclass(frozen=True)
class MomentIntegrals:
    """Per-patient integrals of weight * hazard over the at-risk window.

    ``lam``     weight 1            (the cumulative hazard)
    ``ilog``    weight 1/gamma + log t
    ``ilog2``   weight (1/gamma + log t)**2
    ``ipcp``    weight i_pcp(t)
    ``ipcplog`` weight i_pcp(t) * (1/gamma + log t)
    """

    lam: np.ndarray
    ilog: np.ndarray
    ilog2: np.ndarray
    ipcp: np.ndarray
    ipcplog: np.ndarray


def moments(
    arr: CohortArrays,
    xi: float,
    gamma: float,
    theta1: float,
    theta2: float,
    alpha: float = 0.0,
    xconst: np.ndarray | None = None,
) -> MomentIntegrals:
    expo = theta1 * arr.azt
    if alpha != 0.0:
        if xconst is None:
            raise ValueError("xconst required when alpha != 0")
        expo = expo + alpha * xconst
    f1 = xi * np.exp(expo)
    f2 = f1 * np.exp(theta2)
    a0 = np.zeros(arr.n)
    seg1 = (a0, arr.s1)
    seg2 = (arr.s1, arr.risk_end)

    def both(fn):
        return f1 * (fn(gamma, seg1[1]) - fn(gamma, seg1[0])) + f2 * (
            fn(gamma, seg2[1]) - fn(gamma, seg2[0])
        )

    def second(fn):
        return f2 * (fn(gamma, seg2[1]) - fn(gamma, seg2[0]))

    return MomentIntegrals(
        lam=both(_pow),
        ilog=both(_pow_log),
        ilog2=both(_pow_log2),
        ipcp=second(_pow),
        ipcplog=second(_pow_log),
    )


def _jump_log(arr: CohortArrays, gamma: float) -> np.ndarray:
    """Per-patient jump value of the shape-score weight, 0 when no jump."""
    safe = np.where(arr.initiated, arr.tstart, 1.0)
    return np.where(arr.initiated, 1.0 / gamma + np.log(safe), 0.0)


def nuisance_score_per_patient(
    arr: CohortArrays, xi: float, gamma: float, theta1: float, theta2: float
) -> np.ndarray:
    """n x 4 matrix of per-patient score contributions."""
    m = moments(arr, xi, gamma, theta1, theta2)
    dn = arr.initiated.astype(float)
    out = np.empty((arr.n, 4))
    out[:, 0] = (dn - m.lam) / xi
    out[:, 1] = dn * _jump_log(arr, gamma) - m.ilog
    out[:, 2] = arr.azt * (dn - m.lam)
    out[:, 3] = dn * arr.pcp_before_t - m.ipcp
    return out


def nuisance_score_and_jacobian(
    arr: CohortArrays, xi: float, gamma: float, theta1: float, theta2: float
):
    """Mean score (4,) and its exact Jacobian (4, 4) in the raw parameters.

    The Jacobian is the derivative of the empirical score, so it includes
    the martingale terms from the parameter-dependent weights 1/xi and
    1/gamma + log t; those terms vanish at the fitted root.
    """
    m = moments(arr, xi, gamma, theta1, theta2)
    dn = arr.initiated.astype(float)
    azt = arr.azt
    pcp = arr.pcp_before_t

    s = np.array(
        [
            np.mean((dn - m.lam) / xi),
            np.mean(dn * _jump_log(arr, gamma) - m.ilog),
            np.mean(azt * (dn - m.lam)),
            np.mean(dn * pcp - m.ipcp),
        ]
    )

    lam_m = np.mean(m.lam)
    ilog_m = np.mean(m.ilog)
    ilog2_m = np.mean(m.ilog2)
    ipcp_m = np.mean(m.ipcp)
    ipcplog_m = np.mean(m.ipcplog)
    azt_lam = np.mean(azt * m.lam)
    azt_ilog = np.mean(azt * m.ilog)
    azt_ipcp = np.mean(azt * m.ipcp)

    jac = -np.array(
        [
            [lam_m / xi**2, ilog_m / xi, azt_lam / xi, ipcp_m / xi],
            [ilog_m / xi, ilog2_m, azt_ilog, ipcplog_m],
            [azt_lam / xi, azt_ilog, azt_lam, azt_ipcp],
            [ipcp_m / xi, ipcplog_m, azt_ipcp, ipcp_m],
        ]
    )
    mart = np.mean(dn - m.lam)
    jac[0, 0] += -mart / xi**2
    jac[1, 1] += -mart / gamma**2
    return s, jac


def augmented_score_and_jacobian(
    arr: CohortArrays,
    xi: float,
    gamma: float,
    theta1: float,
    theta2: float,
    alpha: float,
    xconst: np.ndarray,
):
    """Mean score (5,) and Jacobian (5, 5) for the hazard augmented with a
    per-patient constant covariate ``xconst`` and coefficient ``alpha``."""
    m = moments(arr, xi, gamma, theta1, theta2, alpha=alpha, xconst=xconst)
    dn = arr.initiated.astype(float)
    azt = arr.azt
    pcp = arr.pcp_before_t
    x = xconst

    s = np.array(
        [
            np.mean((dn - m.lam) / xi),
            np.mean(dn * _jump_log(arr, gamma) - m.ilog),
            np.mean(azt * (dn - m.lam)),
            np.mean(dn * pcp - m.ipcp),
            np.mean(x * (dn - m.lam)),
        ]
    )

    def mean(v):
        return float(np.mean(v))

    lam_m = mean(m.lam)
    ilog_m = mean(m.ilog)
    row5 = [
        mean(x * m.lam) / xi,
        mean(x * m.ilog),
        mean(azt * x * m.lam),
        mean(x * m.ipcp),
        mean(x * x * m.lam),
    ]
    jac = -np.array(
        [
            [lam_m / xi**2, ilog_m / xi, mean(azt * m.lam) / xi, mean(m.ipcp) / xi, row5[0]],
            [ilog_m / xi, mean(m.ilog2), mean(azt * m.ilog), mean(m.ipcplog), row5[1]],
            [mean(azt * m.lam) / xi, mean(azt * m.ilog), mean(azt * m.lam), mean(azt * m.ipcp), row5[2]],
            [mean(m.ipcp) / xi, mean(m.ipcplog), mean(azt * m.ipcp), mean(m.ipcp), row5[3]],
            row5,
        ]
    )
    mart = np.mean(dn - m.lam)
    jac[0, 0] += -mart / xi**2
    jac[1, 1] += -mart / gamma**2
    return s, jac


def aft_x_const(arr: CohortArrays, kappa: np.ndarray) -> np.ndarray:
    """Mimicking value on the at-risk window for the failure-time variants.

    Constant there: untreated patients keep their observed outcome, treated
    patients get ``T + e^kappa * (y - T)`` with per-patient log time-ratio
    ``kappa``.
    """
    ts = np.where(arr.initiated, arr.tstart, 0.0)
    scaled = ts + np.exp(kappa) * (arr.y - ts)
    return np.where(arr.initiated, scaled, arr.y)


def aft_dx_const(arr: CohortArrays, kappa: np.ndarray) -> np.ndarray:
    """Base derivative of the mimicking value in the log time-ratio, on the
    at-risk window: ``e^kappa * (y - T)`` for treated patients, else 0."""
    ts = np.where(arr.initiated, arr.tstart, 0.0)
    return np.where(arr.initiated, np.exp(kappa) * (arr.y - ts), 0.0)


def g_per_patient_aft(
    arr: CohortArrays,
    xi: float,
    gamma: float,
    theta1: float,
    theta2: float,
    xconst: np.ndarray,
    u_basis: list[str],
):
    """Per-patient stacked estimating vectors, n x (4 + len(u_basis)).

    ``u_basis`` entries name the multiplier of the mimicking value in the
    corresponding component: "one", "pcp" (the frozen PCP indicator) or
    "azt".  They are the derivative directions of the log time-ratio.
    """
    m = moments(arr, xi, gamma, theta1, theta2)
    dn = arr.initiated.astype(float)
    k = len(u_basis)
    out = np.empty((arr.n, 4 + k))
    out[:, :4] = nuisance_score_per_patient(arr, xi, gamma, theta1, theta2)
    x = xconst
    for j, tag in enumerate(u_basis):
        if tag == "one":
            out[:, 4 + j] = x * (dn - m.lam)
        elif tag == "pcp":
            out[:, 4 + j] = x * (dn * arr.pcp_before_t - m.ipcp)
        elif tag == "azt":
            out[:, 4 + j] = arr.azt * x * (dn - m.lam)
        else:
            raise ValueError(f"unknown basis tag {tag!r}")
    return out


def sandwich_blocks_aft(
    arr: CohortArrays,
    xi: float,
    gamma: float,
    theta1: float,
    theta2: float,
    xconst: np.ndarray,
    dx_const: np.ndarray,
    u_basis: list[str],
):
    """Empirical second-moment and Jacobian blocks at the estimates.

    Returns ``(w0, v0, per_patient_hh_diag)`` where ``w0`` is the mean of
    the per-patient matrices ``int h h' lambda dt``, ``v0`` stacks the
    hazard-score block (first 4 columns, with a minus sign) and the
    mimicking-derivative block, and ``per_patient_hh_diag`` holds the
    per-patient values of ``int h_j**2 lambda dt`` for the variance
    identity checks.
    """
    m = moments(arr, xi, gamma, theta1, theta2)
    dn = arr.initiated.astype(float)
    k = len(u_basis)
    dim = 4 + k

    # Weight descriptors: integrals of w_a * w_b * lambda assemble from the
    # moment kernels; "ind" marks the per-segment indicator weight.
    # Components: 0: 1/xi, 1: 1/gamma+log t, 2: azt, 3: i_pcp(t), 4+: x*u_j.
    hh = np.zeros((arr.n, dim, dim))

    def pair_integral(a, b):
        # Returns the per-patient integral of w_a * w_b * lambda.
        def parts(idx):
            # (constant multiplier array, uses_log, uses_pcp_segment)
            if idx == 0:
                return 1.0 / xi * np.ones(arr.n), 0, False
            if idx == 1:
                return np.ones(arr.n), 1, False
            if idx == 2:
                return arr.azt, 0, False
            if idx == 3:
                return np.ones(arr.n), 0, True
            j = idx - 4
            tag = u_basis[j]
            if tag == "one":
                return xconst, 0, False
            if tag == "azt":
                return xconst * arr.azt, 0, False
            return xconst, 0, True  # pcp-frozen multiplier

        ca, la, pa = parts(a)
        cb, lb, pb = parts(b)
        nlog = la + lb
        use_pcp = pa or pb
        if nlog == 0:
            base = m.ipcp if use_pcp else m.lam
        elif nlog == 1:
            base = m.ipcplog if use_pcp else m.ilog
        else:
            if use_pcp:
                raise NotImplementedError("log^2 on the pcp segment")
            base = m.ilog2
        return ca * cb * base

    for a in range(dim):
        for b in range(a, dim):
            v = pair_integral(a, b)
            hh[:, a, b] = v
            hh[:, b, a] = v
    w0 = hh.mean(axis=0)

    v0 = np.zeros((dim, dim))
    v0[:, :4] = -w0[:, :4]
    # Mimicking-derivative block.  d/dpsi_j of the at-risk x value is
    # dx_const times the frozen jump-time multiplier (constant in t), while
    # the y-derivative of component 4+i is the possibly time-varying weight
    # u_i(t), so each entry is a per-patient constant times the martingale
    # increment of u_i.
    mart = {
        "one": dn - m.lam,
        "azt": arr.azt * (dn - m.lam),
        "pcp": dn * arr.pcp_before_t - m.ipcp,
    }
    frozen = {"one": np.ones(arr.n), "azt": arr.azt, "pcp": arr.pcp_before_t}
    for i, tag_i in enumerate(u_basis):
        for j, tag_j in enumerate(u_basis):
            v0[4 + i, 4 + j] = np.mean(dx_const * frozen[tag_j] * mart[tag_i])
    hh_diag = np.stack([hh[:, j, j] for j in range(dim)], axis=1)
    return w0, v0, hh_diag
