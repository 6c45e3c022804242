"""Fixed-size worker pool for independent slice jobs, with serial/parallel
timing arithmetic."""
from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Sequence


class JobFailure(RuntimeError):
    def __init__(self, index: int, cause: BaseException, partial: dict[int, Any]):
        super().__init__(f"job {index} failed: {cause!r}; {len(partial)} job(s) completed")
        self.index = index
        self.cause = cause
        self.partial = partial


@dataclass
class ScheduleReport:
    workers: int
    job_ms: list[float] = field(default_factory=list)
    makespan_ms: float = 0.0
    backend: str = "thread"

    @property
    def serial_ms(self) -> float:
        return float(sum(self.job_ms))

    @property
    def speedup(self) -> float:
        # a lone job cannot overlap with anything; pool overhead is not a slowdown
        if len(self.job_ms) <= 1 or self.makespan_ms <= 0:
            return 1.0
        return self.serial_ms / self.makespan_ms

    @property
    def efficiency(self) -> float:
        return self.speedup / self.workers

    def as_row(self) -> dict:
        return {
            "workers": self.workers,
            "jobs": len(self.job_ms),
            "backend": self.backend,
            "makespan_ms": round(self.makespan_ms, 3),
            "serial_ms": round(self.serial_ms, 3),
            "max_job_ms": round(max(self.job_ms, default=0.0), 3),
            "speedup": round(self.speedup, 4),
            "efficiency": round(self.efficiency, 4),
        }


def _timed(job: Callable[[], Any]):
    t0 = time.perf_counter()
    out = job()
    return out, (time.perf_counter() - t0) * 1e3


def run_jobs(jobs: Sequence[Callable[[], Any]], workers: int = 1,
             backend: Literal["thread", "process"] = "thread") -> tuple[list[Any], ScheduleReport]:
    """Run zero-argument callables on ``workers`` workers.

    Results come back in job order whatever the completion order. The first
    failing job cancels everything not yet started and raises
    :class:`JobFailure` carrying the finished results. ``workers == 1`` runs
    inline on the calling thread. Process workers need picklable jobs.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    report = ScheduleReport(workers=workers, job_ms=[0.0] * len(jobs), backend=backend if workers > 1 else "serial")
    results: list[Any] = [None] * len(jobs)
    start = time.perf_counter()
    if workers == 1 or len(jobs) <= 1:
        for i, job in enumerate(jobs):
            try:
                results[i], report.job_ms[i] = _timed(job)
            except Exception as e:  # noqa: BLE001 - re-raised with context
                raise JobFailure(i, e, {k: results[k] for k in range(i)}) from e
        report.makespan_ms = (time.perf_counter() - start) * 1e3
        return results, report

    pool_cls = ThreadPoolExecutor if backend == "thread" else ProcessPoolExecutor
    with pool_cls(max_workers=workers) as pool:
        futures = {pool.submit(_timed, job): i for i, job in enumerate(jobs)}
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        failed = [f for f in done if f.exception() is not None]
        if failed:
            for f in pending:
                f.cancel()
            wait(pending)
            partial = {futures[f]: f.result()[0] for f in futures
                       if f.done() and not f.cancelled() and f.exception() is None}
            first = min(failed, key=lambda f: futures[f])
            raise JobFailure(futures[first], first.exception(), partial) from first.exception()
        for f, i in futures.items():
            results[i], report.job_ms[i] = f.result()
    report.makespan_ms = (time.perf_counter() - start) * 1e3
    return results, report


def timing_summary(reports: Sequence[ScheduleReport], path=None) -> str:
    """Serial-vs-parallel comparison table as CSV, one row per report."""
    buf = io.StringIO()
    cols = ["workers", "jobs", "backend", "makespan_ms", "serial_ms", "max_job_ms", "speedup", "efficiency"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.as_row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1
