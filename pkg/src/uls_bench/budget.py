"""Wall-clock budget for inference jobs (100 lesions in 9 minutes by default)."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RuntimeBudget:
    max_seconds: float = 540.0
    lesions_per_job: int = 100

    def __post_init__(self):
        if not (self.max_seconds > 0 and self.lesions_per_job > 0):
            raise ValueError("budget values must be positive")


@dataclass
class BudgetReport:
    passed: bool
    budget: RuntimeBudget
    job_seconds: list[float] = field(default_factory=list)
    timings: list[tuple[str, float]] = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return float(sum(self.job_seconds))

    def write_timing_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lesion_id", "seconds"])
            for lesion_id, sec in self.timings:
                w.writerow([lesion_id, f"{sec:.6f}"])


def _timed(fn, lesion_id):
    t0 = time.perf_counter()
    out = fn(lesion_id)
    return out, time.perf_counter() - t0


def enforce_budget(lesion_ids, predict, budget: RuntimeBudget = RuntimeBudget(), workers: int = 1,
                   keep_results: bool = False) -> BudgetReport:
    """Run ``predict(lesion_id)`` over jobs of ``budget.lesions_per_job`` lesions.

    Each job is timed end to end and fails if it exceeds ``budget.max_seconds``.
    Per-lesion timings are always recorded.
    """
    ids = list(lesion_ids)
    report = BudgetReport(passed=True, budget=budget)
    for start in range(0, len(ids), budget.lesions_per_job):
        job = ids[start:start + budget.lesions_per_job]
        t0 = time.perf_counter()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(lambda i: _timed(predict, i), job))
        else:
            outs = [_timed(predict, i) for i in job]
        elapsed = time.perf_counter() - t0
        report.job_seconds.append(elapsed)
        for lesion_id, (out, sec) in zip(job, outs):
            report.timings.append((lesion_id, sec))
            log.debug("lesion %s: %.3f s", lesion_id, sec)
            if keep_results:
                report.results[lesion_id] = out
        if elapsed > budget.max_seconds:
            log.error("job %d: %.2f s exceeds the %.2f s budget", len(report.job_seconds), elapsed, budget.max_seconds)
            report.passed = False
        else:
            log.info("job %d: %d lesions in %.2f s", len(report.job_seconds), len(job), elapsed)
    return report
