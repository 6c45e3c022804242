"""Serial vs pooled slice healing: makespan, serial-equivalent time and efficiency
for a sweep of worker counts (median of repeated runs)."""
import argparse
import statistics

import numpy as np

from tensorslice.model import Dataset, block_partition, make_mlp, plan_uniform, same_params
from tensorslice.distill import local_tensorize
from tensorslice.schedule import available_cores, timing_summary
from tensorslice.train import TrainConfig

p = argparse.ArgumentParser()
p.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4])
p.add_argument("--backend", choices=["thread", "process"], default="process")
p.add_argument("--repeats", type=int, default=3)
p.add_argument("--width", type=int, default=64)
p.add_argument("--samples", type=int, default=2048)
p.add_argument("--out", default="results/schedule.csv")
args = p.parse_args()

w = args.width
net = make_mlp([w] * 5, seed=0)  # four equal-cost slices
rng = np.random.default_rng(0)
data = Dataset(rng.standard_normal((args.samples, w)), rng.integers(0, w, args.samples))
plan = plan_uniform(net, 0.5)
cfg = TrainConfig(epochs=2, batch_size=16, seed=0)
print(f"host cores available: {available_cores()}")

reports, reference = [], None
for workers in args.workers:
    runs = []
    for _ in range(args.repeats):
        out, reps = local_tensorize(net, data, block_partition(net), plan, cfg, workers=workers,
                                    backend=args.backend)
        reference = reference or out
        assert same_params(out, reference), "results differ across worker counts"
        runs.append(reps.schedule)
    reports.append(sorted(runs, key=lambda r: r.makespan_ms)[len(runs) // 2])
    print(f"workers={workers}: median makespan {statistics.median(r.makespan_ms for r in runs):.1f} ms")
print(timing_summary(reports, args.out))
