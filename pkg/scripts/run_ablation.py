"""Multi-seed ablation matrix on the synthetic corpus.

    python3 scripts/run_ablation.py --seeds 0 1 2 3 4 --set model.d_model=64 --out runs/ablation
"""

import argparse
import json
import logging

from aura import experiments as ex
from aura.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rc = RunConfig.load(args.config, args.set + [f"output.dir={args.out}"])
    prep = ex.prepare(rc)
    rows = ex.run_ablation(rc, prep, args.seeds)
    summary = ex.summarize_ablation(rows)
    direction = ex.ablation_direction(rows)

    out = ex.ensure_dir(args.out)
    (out / "ablation_seeds.json").write_text(json.dumps({"runs": rows, "summary": summary}, indent=2))
    print(f"{'variant':<24}{'MSE':>9}{'MAE':>9}{'TAR':>8}")
    for r in summary:
        tar = "-" if r["tar"] is None else f"{r['tar']:.3f}"
        print(f"{r['variant']:<24}{r['mse']:9.4f}{r['mae']:9.4f}{tar:>8}")
    n = len(args.seeds)
    print(f"full model best in {sum(direction['full_best'].values())}/{n} seeds; "
          f"w/o exogenous worst in {sum(direction['no_exog_worst'].values())}/{n}")


if __name__ == "__main__":
    main()
