"""Batch protocol: many initial conditions under several policies, aggregated into a table.

A table file holds a scenario ``base`` (everything but the policy and
``x0``), optional ``cases`` overriding the base, a named ``policies`` map and
``checks`` that are evaluated on the aggregated numbers::

    {"name": "nominal", "base": {"model": "rigid_body", "T": 15, "nominal_eta": 1.0},
     "initial_conditions": {"n": 25, "radius": 1.0, "seed": 0},
     "cases": [{"name": "eta8", "eta": 8.0}, {"name": "eta1", "eta": 1.0}],
     "policies": {"continuous": {"kind": "continuous"}, ...},
     "checks": [{"kind": "j_within", "case": "eta8", "policy": "proposed",
                 "reference": "continuous", "rel_tol": 0.05}]}
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path


from .config import parse_policy, scenario_kwargs
from .errors import ConfigurationError
from .metrics import MetricsReport, sphere_initial_conditions
from .simulation import Scenario, simulate_batch

__all__ = ["BatchReport", "CheckResult", "TableReport", "TableConfig", "run_batch",
           "run_table_experiment", "thread_limit"]


@dataclass(frozen=True)
class BatchReport:
    policy: str
    runs: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def J_avg(self) -> float:
        return math.fsum(r.J for r in self.runs) / len(self.runs)

    @property
    def avg_interval(self) -> float:
        vals = [r.avg_interval for r in self.runs if math.isfinite(r.avg_interval)]
        return math.fsum(vals) / len(vals) if vals else math.nan

    @property
    def diverged_runs(self) -> int:
        return sum(r.diverged for r in self.runs)

    def to_dict(self, include_runs=True):
        out = {"policy": self.policy, "J_avg": self.J_avg,
               "avg_interval": None if math.isnan(self.avg_interval) else self.avg_interval,
               "diverged_runs": self.diverged_runs, "metadata": self.metadata}
        if include_runs:
            out["runs"] = [r.to_dict() for r in self.runs]
        return out


@dataclass(frozen=True)
class CheckResult:
    spec: dict
    passed: bool
    detail: str

    def to_dict(self):
        return {**self.spec, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class TableReport:
    name: str
    cases: dict
    checks: tuple = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def batch(self, case, policy) -> BatchReport:
        return self.cases[case][policy]

    def to_dict(self, include_runs=True):
        return {
            "name": self.name,
            "cases": {c: {p: b.to_dict(include_runs) for p, b in pols.items()}
                      for c, pols in self.cases.items()},
            "table": [{"case": c, "policy": p, "J_avg": b.J_avg,
                       "avg_interval": None if math.isnan(b.avg_interval) else b.avg_interval,
                       "diverged_runs": b.diverged_runs}
                      for c, pols in self.cases.items() for p, b in pols.items()],
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }


@dataclass(frozen=True)
class TableConfig:
    name: str
    base: dict
    policies: dict
    cases: tuple = ({"name": "default"},)
    n_initial: int = 25
    radius: float = 1.0
    ic_seed: int = 0
    transient_cutoff: float | None = None
    checks: tuple = ()

    @classmethod
    def from_dict(cls, d):
        if "policies" not in d or not d["policies"]:
            raise ConfigurationError("table config needs a non-empty 'policies' map")
        ics = d.get("initial_conditions", {})
        cases = tuple(d.get("cases") or ({"name": "default"},))
        names = [c.get("name") for c in cases]
        if None in names or len(set(names)) != len(names):
            raise ConfigurationError("every case needs a unique name")
        return cls(name=str(d.get("name", "table")), base=dict(d.get("base", {})),
                   policies=dict(d["policies"]), cases=cases,
                   n_initial=int(ics.get("n", 25)), radius=float(ics.get("radius", 1.0)),
                   ic_seed=int(ics.get("seed", 0)),
                   transient_cutoff=d.get("transient_cutoff"),
                   checks=tuple(d.get("checks", ())))


def thread_limit(n_jobs: int) -> int:
    """Worker count: ``STC_THREADS`` if set, else the CPU count, never more than the jobs."""
    env = os.environ.get("STC_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigurationError(f"STC_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigurationError("STC_THREADS must be at least 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def run_batch(name, policy, base_kwargs, initial_conditions, transient_cutoff=None,
              csv_dir=None, prefix="") -> BatchReport:
    """Simulate one policy from every initial condition and collect the metrics."""
    scenarios = [Scenario(policy=policy, x0=x0, scenario_id=f"{prefix}{name}-{i:03d}",
                          **base_kwargs)
                 for i, x0 in enumerate(initial_conditions)]
    traces = simulate_batch(scenarios)
    runs = []
    for trace in traces:
        runs.append(MetricsReport.from_trace(trace, transient_cutoff))
        if csv_dir is not None:
            trace.to_csv(Path(csv_dir) / f"{trace.scenario_id}.csv")
    runs.sort(key=lambda r: r.scenario_id)
    return BatchReport(name, tuple(runs), {"policy": policy.to_dict(),
                                           "n_runs": len(runs),
                                           "T": base_kwargs.get("T"),
                                           "dt": base_kwargs.get("dt")})


def _evaluate_check(spec, cases) -> CheckResult:
    kind = spec.get("kind")
    try:
        case = cases[spec.get("case", next(iter(cases)))]
        if kind == "j_within":
            a, b = case[spec["policy"]].J_avg, case[spec["reference"]].J_avg
            gap = abs(a - b) / b
            return CheckResult(spec, gap <= spec.get("rel_tol", 0.05),
                               f"J_avg {a:.6g} vs {b:.6g}, relative gap {gap:.4%}")
        if kind == "j_greater":
            a, b = case[spec["policy"]].J_avg, case[spec["reference"]].J_avg
            return CheckResult(spec, a > b, f"J_avg {a:.6g} vs {b:.6g}")
        if kind == "all_within":
            ref = case[spec["reference"]].J_avg
            gaps = {p: abs(bt.J_avg - ref) / ref for p, bt in case.items()}
            worst = max(gaps, key=gaps.get)
            return CheckResult(spec, gaps[worst] <= spec.get("rel_tol", 0.05),
                               f"largest gap {gaps[worst]:.4%} ({worst})")
        if kind == "ultimate_bound":
            batch = case[spec["policy"]]
            worst = max(r.ultimate_bound_est for r in batch.runs)
            return CheckResult(spec, worst <= spec["bound"] and batch.diverged_runs == 0,
                               f"largest post-transient norm {worst:.6g}, bound {spec['bound']}")
        if kind == "no_divergence":
            names = [spec["policy"]] if "policy" in spec else list(case)
            bad = {p: case[p].diverged_runs for p in names if case[p].diverged_runs}
            return CheckResult(spec, not bad, f"diverged runs: {bad or 'none'}")
    except KeyError as exc:
        raise ConfigurationError(f"check {spec!r} refers to unknown name {exc}") from None
    raise ConfigurationError(f"unknown check kind {kind!r}")


def run_table_experiment(config, csv_dir=None, threads=None) -> TableReport:
    """Run every (case, policy) batch of a table config and evaluate its checks.

    Batches run on a thread pool capped by ``STC_THREADS`` (or ``threads``);
    results are keyed by name, so the report does not depend on completion order.
    """
    if isinstance(config, dict):
        config = TableConfig.from_dict(config)
    ics = sphere_initial_conditions(config.n_initial, config.radius, config.ic_seed)
    if csv_dir is not None:
        Path(csv_dir).mkdir(parents=True, exist_ok=True)

    jobs = []
    for case in config.cases:
        overrides = {k: v for k, v in case.items() if k != "name"}
        kw = scenario_kwargs({**config.base, **overrides})
        for pname, pspec in config.policies.items():
            policy = parse_policy(pspec, kw["dt"], kw["nominal_eta"], kw["model"], kw["eta_box"])
            jobs.append((case["name"], pname, policy, kw))

    def work(job):
        cname, pname, policy, kw = job
        return run_batch(pname, policy, kw, ics, config.transient_cutoff, csv_dir,
                         prefix=f"{cname}-" if len(config.cases) > 1 else "")

    n_workers = threads or thread_limit(len(jobs))
    if n_workers == 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(work, jobs))

    cases = {}
    for (cname, pname, _, _), batch in zip(jobs, results):
        cases.setdefault(cname, {})[pname] = batch
    checks = tuple(_evaluate_check(spec, cases) for spec in config.checks)
    return TableReport(config.name, cases, checks)
