"""Local healing of the toy MLP with features captured from a fraction of the training set."""
import argparse
import math
import statistics

from _common import baseline_for, train_cfg, write_rows
from tensorslice.model import block_partition
from tensorslice.pipeline import MLP_PRESET, make_plan, run_local

p = argparse.ArgumentParser()
p.add_argument("--fractions", type=float, nargs="+", default=[1.0, 0.6, 0.2])
p.add_argument("--cr", type=float, default=0.5)
p.add_argument("--seeds", type=int, default=5)
p.add_argument("--out", default="results/data_efficiency.csv")
args = p.parse_args()

rows = []
for seed in range(args.seeds):
    net, train, test, base = baseline_for(MLP_PRESET, seed)
    plan = make_plan(net, args.cr, MLP_PRESET["compress"]["exclude"])
    for frac in args.fractions:
        cfg = train_cfg(MLP_PRESET["local"], seed, data_fraction=frac)
        res = run_local(net, train, test, block_partition(net), plan, cfg)
        rows.append({"seed": seed, "fraction": frac, "baseline": base, "local": res.accuracy,
                     "samples": math.ceil(frac * len(train))})
        print(rows[-1], flush=True)

for frac in args.fractions:
    print(f"fraction {frac}: median {statistics.median(r['local'] for r in rows if r['fraction'] == frac):.4f}")
write_rows(args.out, rows)
