import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensorslice.schedule import JobFailure, ScheduleReport, run_jobs, timing_summary


def _sleep_job(ms, value):
    def job():
        time.sleep(ms / 1e3)
        return value
    return job


def test_single_job_speedup_is_one():
    for workers in (1, 3):
        results, rep = run_jobs([lambda: 42], workers=workers)
        assert results == [42]
        assert rep.speedup == 1.0


def test_results_keep_job_order():
    jobs = [_sleep_job(ms, i) for i, ms in enumerate([30, 1, 15, 5])]
    results, rep = run_jobs(jobs, workers=4)
    assert results == [0, 1, 2, 3]
    assert rep.makespan_ms >= max(rep.job_ms)
    assert rep.serial_ms == sum(rep.job_ms)


def test_sleeping_jobs_overlap():
    results, rep = run_jobs([_sleep_job(50, i) for i in range(4)], workers=4)
    assert rep.speedup > 2.0
    assert 0 < rep.efficiency <= 1.0


def test_failure_cancels_and_reports_partial():
    def boom():
        raise RuntimeError("bad slice")

    with pytest.raises(JobFailure) as e:
        run_jobs([lambda: 1, boom, lambda: 3], workers=1)
    assert e.value.index == 1 and e.value.partial == {0: 1}
    assert isinstance(e.value.cause, RuntimeError)
    with pytest.raises(JobFailure) as e:
        run_jobs([_sleep_job(1, 0), boom], workers=2)
    assert e.value.index == 1


def test_invalid_worker_count():
    with pytest.raises(ValueError):
        run_jobs([], workers=0)


def test_process_backend_runs_picklable_jobs():
    results, rep = run_jobs([_Const(i) for i in range(3)], workers=2, backend="process")
    assert results == [0, 1, 2] and rep.backend == "process"


class _Const:
    def __init__(self, v):
        self.v = v

    def __call__(self):
        return self.v


@given(st.lists(st.floats(0.0, 1e4), min_size=1, max_size=10), st.integers(1, 8), st.floats(0.0, 1.0))
def test_report_arithmetic(job_ms, workers, slack):
    # a valid schedule has makespan between max(job) and the serial sum
    makespan = max(job_ms) + slack * (sum(job_ms) - max(job_ms))
    if makespan == 0:
        return
    r = ScheduleReport(workers, job_ms, makespan)
    assert r.serial_ms == sum(job_ms)
    assert r.speedup == pytest.approx(sum(job_ms) / makespan)
    assert r.efficiency == pytest.approx(r.speedup / workers)


def test_timing_summary_csv(tmp_path):
    r = ScheduleReport(2, [10.0, 20.0], 21.0, "thread")
    text = timing_summary([r], tmp_path / "t.csv")
    lines = text.strip().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("workers,jobs,backend,makespan_ms,serial_ms")
    assert (tmp_path / "t.csv").read_text() == text
    assert "30.0" in lines[1]
