"""Compare a short training run against last-value persistence on one EPF region CSV.

Column layout: first column is the timestamp, the target is ``OT`` (or the last
column) and every other column is exogenous.
"""

import argparse
import csv

from aura import experiments as ex
from aura.config import RunConfig
from aura.train import evaluate


def columns(path):
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh))]
    endo = "OT" if "OT" in header[1:] else header[-1]
    return header[0], endo, [c for c in header[1:] if c != endo]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    ts, endo, exo = columns(args.csv)
    rc = RunConfig.load(None, [
        "data.source=csv", f"data.path={args.csv}", f"data.timestamp_col={ts}", f"data.endo_col={endo}",
        f"data.exo_cols={','.join(exo)}", "data.input_len=168", "data.horizon=24", "data.stride=24",
        "data.train_frac=0.7", "data.val_frac=0.1", "train.lr=1e-4", f"train.max_epochs={args.epochs}",
    ] + args.set)
    prep = ex.prepare(rc)
    model, _ = ex.train_model(rc, prep)
    m = evaluate(model, prep.test)
    naive = ex.persistence_metrics(prep.test)
    print(f"windows train/val/test {len(prep.train)}/{len(prep.val)}/{len(prep.test)}")
    print(f"model       MSE {m['mse']:.4f}  MAE {m['mae']:.4f}")
    print(f"persistence MSE {naive['mse']:.4f}  MAE {naive['mae']:.4f}")


if __name__ == "__main__":
    main()
