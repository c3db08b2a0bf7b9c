"""Monte Carlo validation harness: replicated simulate / estimate / test
runs with deterministic per-replication randomness and order-insensitive
aggregation."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .estimation import SolveOptions, param_names, solve
from .score_test import run_test
from .shift import SimpleAFT
from .simulate import DGPConfig, achieved_fractions, simulate_cohort


@dataclass(frozen=True)
class RunConfig:
    dgp: DGPConfig = field(default_factory=DGPConfig)
    psi_bracket: tuple[float, float] = (-3.0, 3.0)
    tol: float = 1e-8
    max_iter: int = 100
    ci_level: float = 0.95
    replications: int = 1
    parallel_width: int = 1
    checks: tuple[str, ...] = ("estimate", "test")
    out_dir: str = "."
    formats: tuple[str, ...] = ("json", "csv")

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be at least 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must be in (0, 1)")
        bad = set(self.checks) - {"estimate", "test"}
        if bad:
            raise ValueError(f"unknown checks: {sorted(bad)}")

    def solve_options(self) -> SolveOptions:
        return SolveOptions(
            psi_bracket=self.psi_bracket,
            tol=self.tol,
            max_iter=self.max_iter,
            ci_level=self.ci_level,
        )


# Flat dotted-key schema of the plain-text configuration format.
_SCHEMA = {
    "dgp.n": int,
    "dgp.seed": int,
    "dgp.tau": float,
    "dgp.psi0": float,
    "dgp.xi0": float,
    "dgp.gamma0": float,
    "dgp.theta1": float,
    "dgp.theta2": float,
    "dgp.rho_pcp": float,
    "dgp.beta_pcp_azt": float,
    "dgp.mu0": float,
    "dgp.beta_death_azt": float,
    "dgp.beta_death_pcp": float,
    "dgp.p_azt": float,
    "estimation.psi_lo": float,
    "estimation.psi_hi": float,
    "estimation.tol": float,
    "estimation.max_iter": int,
    "estimation.ci_level": float,
    "mc.replications": int,
    "mc.parallel_width": int,
    "mc.checks": str,
    "io.out_dir": str,
    "io.formats": str,
}


def parse_config(path) -> RunConfig:
    """Read the flat ``section.key = value`` text format."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _SCHEMA:
                raise ConfigError(f"line {line_no}: unknown configuration key {key!r}")
            caster = _SCHEMA[key]
            try:
                values[key] = caster(val)
            except ValueError:
                raise ConfigError(
                    f"line {line_no}: bad value {val!r} for key {key!r} "
                    f"(expected {caster.__name__})"
                ) from None
    return config_from_values(values)


def config_from_values(values: dict) -> RunConfig:
    unknown = set(values) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    dgp_kwargs: dict = {}
    simple = {
        "dgp.n": "n", "dgp.seed": "seed", "dgp.tau": "tau", "dgp.psi0": "psi0",
        "dgp.xi0": "xi0", "dgp.gamma0": "gamma0", "dgp.rho_pcp": "rho_pcp",
        "dgp.beta_pcp_azt": "beta_pcp_azt", "dgp.mu0": "mu0", "dgp.p_azt": "p_azt",
    }
    for key, name in simple.items():
        if key in values:
            dgp_kwargs[name] = values[key]
    theta = (values.get("dgp.theta1", 0.5), values.get("dgp.theta2", 0.8))
    beta_death = (
        values.get("dgp.beta_death_azt", 0.3),
        values.get("dgp.beta_death_pcp", 1.0),
    )
    dgp = DGPConfig(theta0=theta, beta_death=beta_death, **dgp_kwargs)

    kwargs: dict = {"dgp": dgp}
    if "estimation.psi_lo" in values or "estimation.psi_hi" in values:
        kwargs["psi_bracket"] = (
            values.get("estimation.psi_lo", -3.0),
            values.get("estimation.psi_hi", 3.0),
        )
    if "estimation.tol" in values:
        kwargs["tol"] = values["estimation.tol"]
    if "estimation.max_iter" in values:
        kwargs["max_iter"] = values["estimation.max_iter"]
    if "estimation.ci_level" in values:
        kwargs["ci_level"] = values["estimation.ci_level"]
    if "mc.replications" in values:
        kwargs["replications"] = values["mc.replications"]
    if "mc.parallel_width" in values:
        kwargs["parallel_width"] = values["mc.parallel_width"]
    if "mc.checks" in values:
        kwargs["checks"] = tuple(
            c.strip() for c in values["mc.checks"].split(",") if c.strip()
        )
    if "io.out_dir" in values:
        kwargs["out_dir"] = values["io.out_dir"]
    if "io.formats" in values:
        kwargs["formats"] = tuple(
            c.strip() for c in values["io.formats"].split(",") if c.strip()
        )
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _replication(cfg: RunConfig, rep: int) -> dict:
    """One simulate/estimate/test pass; per-rep seed is ``base seed + rep``."""
    dgp = replace(cfg.dgp, seed=cfg.dgp.seed + rep)
    cohort, _ = simulate_cohort(dgp)
    fractions = achieved_fractions(cohort)
    record: dict = {
        "rep": rep,
        "seed": dgp.seed,
        "frac_initiated": fractions["initiated"],
        "frac_died_before_tau": fractions["died_before_tau"],
        "converged": False,
        "error": "",
    }
    try:
        if "estimate" in cfg.checks:
            result = solve(cohort, SimpleAFT(), opts=cfg.solve_options())
            record["converged"] = bool(result.diagnostics["converged"])
            record["params"] = result.params.tolist()
            record["se"] = result.se.tolist()
            record["ci"] = result.ci.tolist()
            record["residual_norm"] = result.diagnostics["residual_norm"]
        if "test" in cfg.checks:
            tr = run_test(cohort)
            record["test_statistic"] = tr.statistic
            record["test_p_value"] = tr.p_value
        if "estimate" not in cfg.checks:
            record["converged"] = True
    except Exception as exc:  # recorded, not fatal unless too frequent
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def _worker(args):
    cfg, rep = args
    return _replication(cfg, rep)


def run_montecarlo(cfg: RunConfig):
    """Run all replications and aggregate; deterministic for a given
    ``(seed, config)`` regardless of ``parallel_width``."""
    t0 = time.perf_counter()
    reps = list(range(cfg.replications))
    if cfg.parallel_width > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallel_width) as pool:
            records = list(pool.map(_worker, [(cfg, r) for r in reps], chunksize=8))
    else:
        records = [_replication(cfg, r) for r in reps]
    records.sort(key=lambda r: r["rep"])
    wall = time.perf_counter() - t0
    summary = summarize(cfg, records, wall)
    n_failed = summary["failed"]
    if n_failed > 0.1 * cfg.replications:
        raise RuntimeError(
            f"{n_failed} of {cfg.replications} replications failed; "
            "inspect the per-replication records"
        )
    return summary, records


def summarize(cfg: RunConfig, records: list, wall_time: float) -> dict:
    """Order-insensitive aggregation of per-replication records."""
    names = list(param_names(SimpleAFT()))
    truth = [
        cfg.dgp.xi0,
        cfg.dgp.gamma0,
        cfg.dgp.theta0[0],
        cfg.dgp.theta0[1],
        cfg.dgp.psi0,
    ]
    ok = [r for r in records if not r["error"] and r.get("converged")]
    failed = [r for r in records if r["error"] or not r.get("converged", False)]

    summary: dict = {
        "replications": cfg.replications,
        "n_per_replication": cfg.dgp.n,
        "converged": len(ok),
        "failed": len(failed),
        "truth": dict(zip(names, truth)),
    }
    est_ok = [r for r in ok if "params" in r]
    if est_ok:
        params = np.array([r["params"] for r in est_ok])
        ses = np.array([r["se"] for r in est_ok])
        cis = np.array([r["ci"] for r in est_ok])
        truth_arr = np.array(truth)
        covered = (cis[:, :, 0] <= truth_arr) & (truth_arr <= cis[:, :, 1])
        summary["bias"] = dict(zip(names, (params.mean(axis=0) - truth_arr).tolist()))
        summary["empirical_sd"] = dict(zip(names, params.std(axis=0, ddof=1).tolist()))
        summary["mean_se"] = dict(zip(names, ses.mean(axis=0).tolist()))
        summary["coverage"] = dict(zip(names, covered.mean(axis=0).tolist()))
        if params.shape[0] > 2:
            psi = params[:, 4]
            corr = {}
            for j, name in enumerate(names[:4]):
                cj = np.corrcoef(params[:, j], psi)[0, 1]
                corr[name] = float(cj)
            summary["theta_psi_corr"] = corr
    tests = [r for r in records if not r["error"] and "test_p_value" in r]
    if tests:
        pvals = np.array([r["test_p_value"] for r in tests])
        summary["test_rejection_rate_05"] = float(np.mean(pvals < 0.05))
        summary["test_mean_p"] = float(pvals.mean())
    fr_i = [r["frac_initiated"] for r in records if not r["error"]]
    fr_d = [r["frac_died_before_tau"] for r in records if not r["error"]]
    if fr_i:
        summary["frac_initiated_mean"] = float(np.mean(fr_i))
        summary["frac_died_before_tau_mean"] = float(np.mean(fr_d))
    summary["wall_time_s"] = wall_time
    return summary
