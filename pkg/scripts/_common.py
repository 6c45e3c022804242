import csv
import time
from pathlib import Path

from tensorslice.data import make_dataset
from tensorslice.model import evaluate
from tensorslice.pipeline import build_model, train_baseline
from tensorslice.train import TrainConfig


def baseline_for(preset, seed):
    train = make_dataset(preset["dataset"], "train", seed)
    test = make_dataset(preset["dataset"], "test", seed)
    net, _ = train_baseline(build_model(preset["model"], seed), train,
                            TrainConfig(**{**preset["baseline"], "seed": seed}))
    return net, train, test, evaluate(net, test)["accuracy"]


def train_cfg(section, seed, **kw):
    return TrainConfig(**{**section, "seed": seed, **kw})


def write_rows(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0
