"""Pipelines shared by the CLI and the scripts: data prep, training runs, ablations, gate statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import mannwhitneyu

from .config import RunConfig
from .context import DiscretizationRules, make_embedder
from .data import (
    CsvSchema,
    Dataset,
    ExoStats,
    boundaries_from_fractions,
    chronological_split,
    dataset_windows,
    fit_exo_stats,
    load_csv_dataset,
)
from .detect import detect
from .features import Batch, make_batch
from .model import AuraModel
from .synthetic import generate_synthetic
from .train import TrainReport, evaluate, train_loop

log = logging.getLogger(__name__)

# (row label, ablation flags) in the published table order
ABLATION_VARIANTS = (
    ("Aura", ()),
    ("w/o Static Attributes", ("no_static",)),
    ("w/o Dynamic Events", ("no_events",)),
    ("w/o Exogenous Series", ("no_exog",)),
    ("Token Concat", ("uniform_concat",)),
    ("Cross Attention", ("uniform_crossattn",)),
    ("Mixture of Experts", ("uniform_moe",)),
    ("w/o Gated Residual", ("no_gated_residual",)),
)


@dataclass
class Prepared:
    dataset: Dataset
    exo_stats: Optional[ExoStats]
    train: Batch
    val: Batch
    test: Batch
    excluded_abnormal: int

    @property
    def exo_dim(self) -> int:
        return self.dataset.exo_dim


def rules_from(rc: RunConfig) -> DiscretizationRules:
    return DiscretizationRules(
        temp_low_c=rc["context.temp_low_c"], temp_high_c=rc["context.temp_high_c"],
        humidity_low_pct=rc["context.humidity_low_pct"], humidity_high_pct=rc["context.humidity_high_pct"],
        highland_cutoff_m=rc["context.highland_cutoff_m"],
    )


def embedder_from(rc: RunConfig):
    return make_embedder(rc["embedder.kind"], rc["model.text_embed_dim"], rc["embedder.url"],
                         rc["embedder.timeout_ms"], rc["embedder.retries"])


def load_dataset(rc: RunConfig) -> Dataset:
    if rc["data.source"] == "synthetic":
        return generate_synthetic(rc.synthetic_config())
    schema = CsvSchema(
        endo_col=rc["data.endo_col"], exo_cols=tuple(rc["data.exo_cols"]), timestamp_col=rc["data.timestamp_col"],
        series_col=rc["data.series_col"], label_col=rc["data.label_col"],
    )
    return load_csv_dataset(rc["data.path"], schema, rc["data.sidecar"] or None)


def prepare(rc: RunConfig, dataset: Optional[Dataset] = None) -> Prepared:
    """Window, split chronologically, fit train exogenous stats and embed every split."""
    ds = load_dataset(rc) if dataset is None else dataset
    T, S = rc["data.input_len"], rc["data.horizon"]
    samples = dataset_windows(ds, T, S, rc["data.stride"])
    if not samples:
        raise ValueError(f"no windows of length {T + S} in the dataset")
    split = chronological_split(samples, boundaries_from_fractions(samples, rc["data.train_frac"],
                                                                   rc["data.val_frac"]))
    if not split.train or not split.val or not split.test:
        raise ValueError(f"empty split: train={len(split.train)} val={len(split.val)} test={len(split.test)}")
    exo_stats = fit_exo_stats(split.train) if ds.exo_dim else None
    emb, rules, tpl = embedder_from(rc), rules_from(rc), rc["context.template"]
    mk = lambda part: make_batch(part, exo_stats, emb, tpl, rules)  # noqa: E731
    return Prepared(ds, exo_stats, mk(split.train), mk(split.val), mk(split.test), split.excluded_abnormal)


def normal_only(batch: Batch) -> Batch:
    return batch.subset([i for i, lab in enumerate(batch.labels) if lab != "abnormal"])


def train_model(rc: RunConfig, prep: Prepared, ablation=None, seed=None) -> tuple[AuraModel, TrainReport]:
    seed = rc["train.seed"] if seed is None else seed
    model = AuraModel(rc.model_config(prep.exo_dim, ablation), seed=seed)
    report = train_loop(model, prep.train, prep.val, rc.train_config(seed))
    return model, report


# ----------------------------------------------------------------- ablation

def run_ablation(rc: RunConfig, prep: Prepared, seeds: Sequence[int]) -> list[dict]:
    """One row per (variant, seed): normalised test MSE/MAE on normal windows and TAR."""
    rows = []
    for seed in seeds:
        for name, flags in ABLATION_VARIANTS:
            model, report = train_model(rc, prep, flags, seed)
            metrics = evaluate(model, normal_only(prep.test))
            tar = None
            if any(lab == "abnormal" for lab in prep.test.labels):
                tar = detect(model, prep.test, rc["detect.target_far"], rc["detect.calib_frac"],
                             rc["detect.seed"], rc["detect.in_sample"], rc["detect.score"]).tar
            rows.append({"variant": name, "flags": ",".join(flags), "seed": seed, "mse": metrics["mse"],
                         "mae": metrics["mae"], "tar": tar, "epochs": report.stop_epoch})
            log.info("seed %d %-22s mse %.5f mae %.5f tar %s", seed, name, metrics["mse"], metrics["mae"], tar)
    return rows


def summarize_ablation(rows: Sequence[dict]) -> list[dict]:
    """Mean MSE/MAE/TAR per variant in table order."""
    out = []
    for name, flags in ABLATION_VARIANTS:
        sel = [r for r in rows if r["variant"] == name]
        tars = [r["tar"] for r in sel if r["tar"] is not None]
        out.append({
            "variant": name, "flags": ",".join(flags), "n_seeds": len(sel),
            "mse": float(np.mean([r["mse"] for r in sel])), "mae": float(np.mean([r["mae"] for r in sel])),
            "tar": float(np.mean(tars)) if tars else None,
        })
    return out


def ablation_direction(rows: Sequence[dict]) -> dict:
    """Per seed: is the full model best, and is removing exogenous series the worst degradation."""
    seeds = sorted({r["seed"] for r in rows})
    best, worst = {}, {}
    for s in seeds:
        by = {r["variant"]: r["mse"] for r in rows if r["seed"] == s}
        best[s] = min(by, key=by.get) == "Aura"
        worst[s] = max(by, key=by.get) == "w/o Exogenous Series"
    return {"full_best": best, "no_exog_worst": worst}


# -------------------------------------------------------------------- gates

def collect_gates(model: AuraModel, batch: Batch, layer: int = -1) -> tuple[np.ndarray, np.ndarray]:
    _, traces = model.predict(batch)
    a_h, a_f = traces.alpha_hist[layer], traces.alpha_fut[layer]
    if a_h is None or a_f is None:
        raise ValueError("both cross-attention stages must be enabled to analyse gates")
    return a_h, a_f


def _describe(x: np.ndarray) -> dict:
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {"mean": float(x.mean()), "median": float(q[2]), "std": float(x.std()),
            "q05": float(q[0]), "q25": float(q[1]), "q75": float(q[3]), "q95": float(q[4]), "n": int(x.size)}


def gate_statistics(alpha_hist: np.ndarray, alpha_fut: np.ndarray) -> dict:
    """Summary per stage plus a one-sided rank-sum test of alpha_fut > alpha_hist."""
    test = mannwhitneyu(alpha_fut, alpha_hist, alternative="greater")
    return {
        "alpha_hist": _describe(alpha_hist),
        "alpha_fut": _describe(alpha_fut),
        "rank_sum": {"test": "mann-whitney-u", "alternative": "alpha_fut > alpha_hist",
                     "statistic": float(test.statistic), "p_value": float(test.pvalue)},
        "fut_mean_exceeds_hist": bool(alpha_fut.mean() > alpha_hist.mean()),
    }


# ---------------------------------------------------------------- baselines

def persistence_forecast(batch: Batch) -> np.ndarray:
    """Last observed (normalised) value carried across the horizon."""
    return np.repeat(batch.endo[:, -1:], batch.target.shape[1], axis=1)


def persistence_metrics(batch: Batch) -> dict:
    err = persistence_forecast(batch) - batch.target
    return {"mse": float(np.mean(np.mean(err ** 2, axis=1))), "mae": float(np.mean(np.mean(np.abs(err), axis=1)))}


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
