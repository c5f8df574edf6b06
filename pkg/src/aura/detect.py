"""Residual scoring, false-alarm-constrained thresholds and TAR/FAR reporting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .features import Batch
from .model import AuraModel

MIN_CALIBRATION = 20
QUANTILE_METHOD = "nearest-rank-upper"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ResidualScore:
    sample_id: str
    score: float
    label: str

    def __post_init__(self):
        if not (math.isfinite(self.score) and self.score >= 0):
            raise ValueError(f"score must be finite and >= 0, got {self.score}")


@dataclass(frozen=True)
class Threshold:
    value: float
    target_far: float
    n_normal_calibration: int
    quantile_method: str = QUANTILE_METHOD


def residual_scores(pred: np.ndarray, target: np.ndarray, kind: str = "mse") -> np.ndarray:
    err = np.asarray(pred) - np.asarray(target)
    if kind == "mse":
        return np.mean(err ** 2, axis=-1)
    if kind == "mae":
        return np.mean(np.abs(err), axis=-1)
    raise ValueError(f"unknown score kind {kind!r}")


def score_residuals(model: AuraModel, batch: Batch, kind: str = "mse") -> list[ResidualScore]:
    """Horizon-mean residual per window on the normalised scale, with true exogenous inputs."""
    pred, _ = model.predict(batch)
    scores = residual_scores(pred, batch.target, kind)
    return [ResidualScore(i, float(s), lab) for i, s, lab in zip(batch.ids, scores, batch.labels)]


def calibrate_threshold(normal_scores: Sequence[float], target_far: float) -> Threshold:
    """Threshold = k-th largest normal score, k = floor(target_far * n); flags are strict '>'."""
    scores = np.sort(np.asarray(normal_scores, dtype=np.float64))[::-1]
    n = scores.size
    if n < MIN_CALIBRATION:
        raise CalibrationError(f"need at least {MIN_CALIBRATION} normal scores to calibrate, got {n}")
    if not 0 < target_far < 1:
        raise CalibrationError(f"target_far must lie in (0, 1), got {target_far}")
    k = max(int(math.floor(target_far * n)), 1)
    return Threshold(float(scores[k - 1]), target_far, n)


@dataclass
class RateReport:
    tar: Optional[float]
    far: Optional[float]
    flagged_ids: list[str]
    n_normal: int
    n_abnormal: int


def compute_tar_far(scores: Sequence[ResidualScore], threshold) -> RateReport:
    """TAR over abnormal, FAR over normal scores; ``None`` marks an undefined rate."""
    value = threshold.value if isinstance(threshold, Threshold) else float(threshold)
    flagged = [s.sample_id for s in scores if s.score > value]
    normal = [s for s in scores if s.label != "abnormal"]
    abnormal = [s for s in scores if s.label == "abnormal"]
    tar = sum(s.score > value for s in abnormal) / len(abnormal) if abnormal else None
    far = sum(s.score > value for s in normal) / len(normal) if normal else None
    return RateReport(tar, far, flagged, len(normal), len(abnormal))


@dataclass
class DetectionReport:
    threshold: Threshold
    tar: Optional[float]
    far: Optional[float]
    calibration_far: float
    n_calibration: int
    n_heldout_normal: int
    n_abnormal: int
    in_sample: bool
    flagged_ids: list[str]
    scores: list[ResidualScore]
    calibration_ids: list[str] = field(default_factory=list)
    histograms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        calib = set(self.calibration_ids)
        return {
            "threshold": asdict(self.threshold),
            "tar": self.tar,
            "far": self.far,
            "calibration_far": self.calibration_far,
            "n_calibration": self.n_calibration,
            "n_heldout_normal": self.n_heldout_normal,
            "n_abnormal": self.n_abnormal,
            "in_sample": self.in_sample,
            "flagged_ids": self.flagged_ids,
            "histograms": self.histograms,
            "scores": [asdict(s) | {"calibration": s.sample_id in calib}
                       for s in self.scores],
        }

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jpath, cpath = out_dir / "detection_report.json", out_dir / "scores.csv"
        jpath.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        calib = set(self.calibration_ids)
        with cpath.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "score", "label", "calibration", "flagged"])
            for s in self.scores:
                w.writerow([s.sample_id, repr(s.score), s.label, int(s.sample_id in calib),
                            int(s.score > self.threshold.value)])
        return jpath, cpath


def _histograms(scores: Sequence[ResidualScore], bins: int = 20) -> dict:
    values = np.array([s.score for s in scores])
    if values.size == 0:
        return {}
    edges = np.histogram_bin_edges(values, bins=bins)
    out = {"edges": edges.tolist()}
    for lab in ("normal", "abnormal"):
        sel = np.array([s.score for s in scores if (s.label == "abnormal") == (lab == "abnormal")])
        out[lab] = np.histogram(sel, bins=edges)[0].tolist() if sel.size else [0] * bins
    return out


def detect_from_scores(scores: Sequence[ResidualScore], target_far: float = 0.05, calib_frac: float = 0.5,
                       seed: int = 0, in_sample: bool = False) -> DetectionReport:
    """Calibrate on (part of) the normal scores, then report TAR and held-out FAR."""
    normal = [s for s in scores if s.label != "abnormal"]
    abnormal = [s for s in scores if s.label == "abnormal"]
    if in_sample:
        calib, heldout = normal, normal
    else:
        perm = np.random.default_rng(seed).permutation(len(normal))
        n_cal = int(round(calib_frac * len(normal)))
        calib = [normal[i] for i in sorted(perm[:n_cal])]
        heldout = [normal[i] for i in sorted(perm[n_cal:])]
    threshold = calibrate_threshold([s.score for s in calib], target_far)
    cal_rates = compute_tar_far(calib, threshold)
    rates = compute_tar_far(heldout + abnormal, threshold)
    return DetectionReport(
        threshold=threshold,
        tar=rates.tar,
        far=rates.far,
        calibration_far=cal_rates.far,
        n_calibration=len(calib),
        n_heldout_normal=len(heldout),
        n_abnormal=len(abnormal),
        in_sample=in_sample,
        flagged_ids=[s.sample_id for s in scores if s.score > threshold.value],
        scores=list(scores),
        calibration_ids=[s.sample_id for s in calib],
        histograms=_histograms(scores),
    )


def detect(model: AuraModel, test: Batch, target_far: float = 0.05, calib_frac: float = 0.5, seed: int = 0,
           in_sample: bool = False, kind: str = "mse") -> DetectionReport:
    return detect_from_scores(score_residuals(model, test, kind), target_far, calib_frac, seed, in_sample)
