"""Local vs global vs hybrid healing on the toy CNN (or MLP) across rates and seeds."""
import argparse
import statistics

from _common import Timer, baseline_for, train_cfg, write_rows
from tensorslice.model import block_partition, evaluate, tensorize
from tensorslice.pipeline import CNN_PRESET, MLP_PRESET, make_plan, run_global, run_hybrid, run_local

p = argparse.ArgumentParser()
p.add_argument("--preset", choices=["cnn", "mlp"], default="cnn")
p.add_argument("--cr", type=float, nargs="+", default=[0.5, 0.75, 0.9])
p.add_argument("--seeds", type=int, default=5)
p.add_argument("--out", default="results/schedules.csv")
args = p.parse_args()

preset = CNN_PRESET if args.preset == "cnn" else MLP_PRESET
rows = []
for seed in range(args.seeds):
    net, train, test, base = baseline_for(preset, seed)
    slices = block_partition(net)
    for cr in args.cr:
        plan = make_plan(net, cr, preset["compress"]["exclude"])
        lc, gc = train_cfg(preset["local"], seed), train_cfg(preset["global"], seed)
        row = {"seed": seed, "cr": cr, "baseline": base,
               "unhealed": evaluate(tensorize(net, plan), test)["accuracy"]}
        with Timer() as t:
            row["local"] = run_local(net, train, test, slices, plan, lc).accuracy
        row["local_s"] = round(t.s, 2)
        with Timer() as t:
            row["global"] = run_global(net, train, test, plan, gc).accuracy
        row["global_s"] = round(t.s, 2)
        row["hybrid"] = run_hybrid(net, train, test, slices, plan, lc, gc).accuracy
        print(row, flush=True)
        rows.append(row)

for cr in args.cr:
    sel = [r for r in rows if r["cr"] == cr]
    med = {k: statistics.median(r[k] for r in sel) for k in ("unhealed", "local", "global", "hybrid")}
    print(f"cr={cr}: " + "  ".join(f"{k} {v:.4f}" for k, v in med.items()))
write_rows(args.out, rows)
