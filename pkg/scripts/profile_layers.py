"""Single-layer sensitivity profile of a toy baseline, with the exhaustive
exclusion check for comparison."""
import argparse

from _common import baseline_for
from tensorslice.decompose import CompressionPlan
from tensorslice.model import evaluate, tensorize
from tensorslice.pipeline import CNN_PRESET, MLP_PRESET
from tensorslice.sensitivity import layer_sensitivity, probe_entry, sensitivity_csv

p = argparse.ArgumentParser()
p.add_argument("--preset", choices=["cnn", "mlp"], default="cnn")
p.add_argument("--seed", type=int, default=0)
p.add_argument("--out", default="results/profile.csv")
args = p.parse_args()

net, train, test, base = baseline_for(CNN_PRESET if args.preset == "cnn" else MLP_PRESET, args.seed)
cands = [i for i, l in enumerate(net.layers) if l.kind in ("dense", "conv2d")]
records = layer_sensitivity(net, test, cands, baseline=base)
print(sensitivity_csv(records, args.out))
entries = {i: probe_entry(net, i) for i in cands}
for ex in cands:
    acc = evaluate(tensorize(net, CompressionPlan(tuple(e for i, e in entries.items() if i != ex))), test)
    print(f"all probes except layer {ex}: accuracy {acc['accuracy']:.4f}")
