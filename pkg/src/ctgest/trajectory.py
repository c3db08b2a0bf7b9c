"""Observed data for one patient and for a cohort.

A patient record holds the baseline arm indicator, the first opportunistic
infection (PCP) time, the treatment (prophylaxis) initiation time, the
observed outcome time ``y`` and the administrative end of the treatment
observation window ``tau``.  All covariate lookups use left limits so that
every integrand built on top of them is predictable: an event at time ``s``
is visible to indicators only for ``t > s``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import CohortParseError

CSV_COLUMNS = ("id", "azt", "pcp_time", "treat_start", "y", "tau")


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Trajectory:
    """One patient's observed path.

    ``pcp_time`` and ``treat_start`` are ``None`` when the event never
    happened during follow-up.  Stored times are plain floats; comparisons
    are exact (ties only arise with probability zero under the simulator,
    and user-supplied ties are accepted under the strict-inequality
    convention of the indicator functions).
    """

    id: str
    i_azt: int
    pcp_time: Optional[float]
    treat_start: Optional[float]
    y: float
    tau: float

    def __post_init__(self):
        if self.i_azt not in (0, 1):
            raise ValueError(f"i_azt must be 0 or 1, got {self.i_azt!r}")
        _check_finite("y", self.y)
        _check_finite("tau", self.tau)
        if not self.y > 0:
            raise ValueError(f"y must be positive, got {self.y}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.pcp_time is not None:
            _check_finite("pcp_time", self.pcp_time)
            if self.pcp_time < 0:
                raise ValueError(f"pcp_time must be nonnegative, got {self.pcp_time}")
            if self.pcp_time > self.y:
                raise ValueError(
                    f"pcp_time {self.pcp_time} is after the observed outcome {self.y}"
                )
        if self.treat_start is not None:
            _check_finite("treat_start", self.treat_start)
            if self.treat_start < 0:
                raise ValueError(
                    f"treat_start must be nonnegative, got {self.treat_start}"
                )
            if self.treat_start >= self.y:
                raise ValueError(
                    f"treat_start {self.treat_start} must precede the outcome {self.y}"
                )
            if self.treat_start >= self.tau:
                raise ValueError(
                    f"treat_start {self.treat_start} must precede tau {self.tau}; "
                    "initiations at or after the window end are not modeled"
                )


def covariates_at(traj: Trajectory, t: float):
    """Left-limit covariates and the at-risk indicator at time ``t``.

    Returns ``(i_azt, i_pcp_left, treated_left, at_risk)`` with
    ``i_pcp_left = 1`` iff the PCP event happened strictly before ``t``,
    ``treated_left = 1`` iff initiation happened strictly before ``t`` and
    ``at_risk = 1`` iff the patient is alive, untreated and inside the
    observation window at ``t``.
    """
    if not 0.0 <= t <= traj.tau:
        raise ValueError(f"t={t} outside the observation window [0, {traj.tau}]")
    i_pcp = int(traj.pcp_time is not None and traj.pcp_time < t)
    treated = int(traj.treat_start is not None and traj.treat_start < t)
    at_risk = int(t < risk_end(traj))
    return traj.i_azt, i_pcp, treated, at_risk


def risk_end(traj: Trajectory) -> float:
    """End of the at-risk period for treatment initiation.

    The patient is at risk on ``[0, risk_end)``: risk ends at initiation,
    death or the window end, whichever comes first.
    """
    t_start = traj.treat_start if traj.treat_start is not None else math.inf
    return min(t_start, traj.y, traj.tau)


def duration_treated(traj: Trajectory, t1: float, t2: float) -> float:
    """Length of the treated part of the interval ``(t1, t2)``.

    Treatment, once started, never stops, so this is the overlap of
    ``(t1, t2)`` with ``[treat_start, inf)``.
    """
    if t1 > t2:
        raise ValueError(f"empty interval: t1={t1} > t2={t2}")
    if traj.treat_start is None:
        return 0.0
    return max(0.0, t2 - max(t1, traj.treat_start))


def segment_grid(traj: Trajectory, a: float, b: float) -> list[float]:
    """Breakpoints of the patient's indicator covariates inside ``[a, b]``.

    Between consecutive grid points every indicator used by the package is
    constant, so integrals against them can be assembled segment by segment
    in closed form.
    """
    if a > b:
        raise ValueError(f"empty interval: a={a} > b={b}")
    points = {a, b}
    for event in (traj.pcp_time, traj.treat_start, traj.y):
        if event is not None and a < event < b:
            points.add(event)
    return sorted(points)


@dataclass(frozen=True)
class Cohort:
    """An ordered collection of independent patients sharing one ``tau``."""

    patients: tuple[Trajectory, ...]

    def __post_init__(self):
        ids = [p.id for p in self.patients]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate patient ids: {dup[:5]}")
        taus = {p.tau for p in self.patients}
        if len(taus) > 1:
            raise ValueError(f"patients must share one tau, got {sorted(taus)[:5]}")

    def __len__(self):
        return len(self.patients)

    def __iter__(self):
        return iter(self.patients)

    def __getitem__(self, i):
        return self.patients[i]

    @property
    def tau(self) -> float:
        if not self.patients:
            raise ValueError("empty cohort has no tau")
        return self.patients[0].tau


def make_cohort(patients: Sequence[Trajectory]) -> Cohort:
    return Cohort(tuple(patients))


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def _parse_float(row_num: int, field: str, text: str, optional: bool):
    text = text.strip()
    if text == "":
        if optional:
            return None
        raise CohortParseError(f"row {row_num}: field '{field}' is empty")
    try:
        return float(text)
    except ValueError:
        raise CohortParseError(
            f"row {row_num}: field '{field}' is not numeric: {text!r}"
        ) from None


def save_cohort(cohort: Cohort, path) -> None:
    """Write the cohort in the canonical CSV schema (see ``CSV_COLUMNS``)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for p in cohort:
            writer.writerow(
                [p.id, p.i_azt, _fmt(p.pcp_time), _fmt(p.treat_start), _fmt(p.y), _fmt(p.tau)]
            )


def load_cohort(path) -> Cohort:
    """Read a cohort CSV, rejecting invalid rows with row-numbered messages."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortParseError("empty file: missing header") from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise CohortParseError(
                f"bad header {header!r}, expected {','.join(CSV_COLUMNS)}"
            )
        patients = []
        for row_num, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise CohortParseError(
                    f"row {row_num}: expected {len(CSV_COLUMNS)} fields, got {len(row)}"
                )
            pid = row[0].strip()
            if not pid:
                raise CohortParseError(f"row {row_num}: field 'id' is empty")
            azt_raw = row[1].strip()
            if azt_raw not in ("0", "1"):
                raise CohortParseError(
                    f"row {row_num}: field 'azt' must be 0 or 1, got {azt_raw!r}"
                )
            pcp = _parse_float(row_num, "pcp_time", row[2], optional=True)
            t_start = _parse_float(row_num, "treat_start", row[3], optional=True)
            y = _parse_float(row_num, "y", row[4], optional=False)
            tau = _parse_float(row_num, "tau", row[5], optional=False)
            try:
                patients.append(
                    Trajectory(
                        id=pid,
                        i_azt=int(azt_raw),
                        pcp_time=pcp,
                        treat_start=t_start,
                        y=y,
                        tau=tau,
                    )
                )
            except ValueError as exc:
                raise CohortParseError(f"row {row_num}: {exc}") from None
        try:
            return Cohort(tuple(patients))
        except ValueError as exc:
            raise CohortParseError(str(exc)) from None
