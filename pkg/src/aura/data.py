"""Dataset records, CSV ingestion, windowing, normalisation and splitting."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .context import ContextRecord

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8
LABELS = ("normal", "abnormal", "unlabeled")

CONTEXT_COLUMNS = (
    "ambient_temp_c", "humidity_pct", "terrain", "airport_elevation_m", "is_holiday", "load_level",
)


class ParseError(ValueError):
    pass


class DataValidationError(ValueError):
    pass


@dataclass(frozen=True)
class StaticAttributes:
    registration: str = ""
    lat: float = 0.0
    lon: float = 0.0
    alt: float = 0.0

    @property
    def geo(self) -> np.ndarray:
        return np.array([self.lat, self.lon, self.alt], dtype=np.float64)


@dataclass
class Series:
    series_id: str
    timestamps: list[datetime]
    endo: np.ndarray            # (L,)
    exo: np.ndarray             # (L, D_ex)
    labels: list[str]           # per row
    contexts: list[ContextRecord]

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass
class Dataset:
    series: list[Series]
    endo_name: str
    exo_names: list[str]
    static: dict[str, StaticAttributes] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def exo_dim(self) -> int:
        return len(self.exo_names)

    @property
    def n_rows(self) -> int:
        return sum(len(s) for s in self.series)


@dataclass
class SampleRecord:
    endo_hist: np.ndarray       # (T,)
    endo_target: np.ndarray     # (S,)
    exo_hist: np.ndarray        # (T, D_ex)
    exo_fut: np.ndarray         # (S, D_ex)
    attr_text: str
    geo: np.ndarray             # (3,) lat deg, lon deg, alt m
    context: ContextRecord
    label: str
    series_id: str
    t0: datetime
    offset: int = 0

    @property
    def sample_id(self) -> str:
        return f"{self.series_id}@{self.offset}"

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataValidationError(f"bad label {self.label!r}")
        T, S = len(self.endo_hist), len(self.endo_target)
        if self.exo_hist.shape[0] != T or self.exo_fut.shape[0] != S:
            raise DataValidationError(
                f"exogenous lengths {self.exo_hist.shape}/{self.exo_fut.shape} do not match T={T}, S={S}")
        if self.exo_hist.shape[1] != self.exo_fut.shape[1]:
            raise DataValidationError("exo_hist and exo_fut disagree on the number of variables")


@dataclass(frozen=True)
class CsvSchema:
    endo_col: str
    exo_cols: tuple[str, ...]
    timestamp_col: str = "timestamp"
    series_col: Optional[str] = "series_id"
    label_col: Optional[str] = "label"


# ----------------------------------------------------------------------- CSV

def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _opt_float(text: str) -> Optional[float]:
    text = text.strip()
    return float(text) if text else None


def _opt_bool(text: str) -> Optional[bool]:
    text = text.strip().lower()
    if not text:
        return None
    if text in ("1", "true", "yes"):
        return True
    if text in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _label(text: str) -> str:
    text = text.strip().lower()
    if text in ("", "unlabeled"):
        return "unlabeled"
    if text in ("0", "normal"):
        return "normal"
    if text in ("1", "abnormal"):
        return "abnormal"
    raise ValueError(f"not a label: {text!r}")


def load_sidecar(path: Path) -> dict[str, StaticAttributes]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        sid: StaticAttributes(str(v.get("registration", "")), float(v["lat"]), float(v["lon"]), float(v["alt"]))
        for sid, v in raw.items()
    }


def load_csv_dataset(path, schema: CsvSchema, sidecar=None) -> Dataset:
    """Read a columnar CSV (plus optional JSON static sidecar) into a ``Dataset``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        col = {name: i for i, name in enumerate(header)}
        needed = [schema.timestamp_col, schema.endo_col, *schema.exo_cols]
        missing = [c for c in needed if c not in col]
        if missing:
            raise ParseError(f"{path}: header lacks columns {missing}")
        has_series = schema.series_col is not None and schema.series_col in col
        has_label = schema.label_col is not None and schema.label_col in col
        ctx_cols = [c for c in CONTEXT_COLUMNS if c in col]

        rows: dict[str, dict] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = parse_timestamp(row[col[schema.timestamp_col]])
                endo = float(row[col[schema.endo_col]])
                exo = [float(row[col[c]]) for c in schema.exo_cols]
                label = _label(row[col[schema.label_col]]) if has_label else "unlabeled"
                vals = {c: row[col[c]] for c in ctx_cols}
                ctx = ContextRecord(
                    timestamp_utc=ts,
                    ambient_temp_c=_opt_float(vals.get("ambient_temp_c", "")),
                    humidity_pct=_opt_float(vals.get("humidity_pct", "")),
                    terrain=vals.get("terrain", "").strip() or None,
                    airport_elevation_m=_opt_float(vals.get("airport_elevation_m", "")),
                    is_holiday=_opt_bool(vals.get("is_holiday", "")),
                    load_level=vals.get("load_level", "").strip() or None,
                )
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in [endo, *exo]):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            sid = row[col[schema.series_col]].strip() if has_series else "series0"
            acc = rows.setdefault(sid, {"ts": [], "endo": [], "exo": [], "labels": [], "ctx": [], "lines": []})
            if acc["ts"] and ts <= acc["ts"][-1]:
                raise DataValidationError(
                    f"{path}:{lineno}: timestamp {format_timestamp(ts)} for series {sid!r} "
                    f"is not after the previous row (line {acc['lines'][-1]})")
            acc["ts"].append(ts)
            acc["endo"].append(endo)
            acc["exo"].append(exo)
            acc["labels"].append(label)
            acc["ctx"].append(ctx)
            acc["lines"].append(lineno)

    series = [
        Series(sid, a["ts"], np.array(a["endo"]), np.array(a["exo"], dtype=np.float64).reshape(len(a["ts"]), -1),
               a["labels"], a["ctx"])
        for sid, a in rows.items()
    ]
    ds = Dataset(series=series, endo_name=schema.endo_col, exo_names=list(schema.exo_cols))
    if sidecar is not None and Path(sidecar).exists():
        ds.static = load_sidecar(Path(sidecar))
    else:
        ds.warnings.append("static sidecar missing: empty attribute text and zero geo used")
        log.warning("%s: no static sidecar, using empty attributes", path)
    return ds


def write_csv_dataset(ds: Dataset, csv_path, sidecar_path=None) -> None:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "series_id", ds.endo_name, *ds.exo_names, *CONTEXT_COLUMNS, "label"])
        for s in ds.series:
            for i in range(len(s)):
                c = s.contexts[i]
                w.writerow([
                    format_timestamp(s.timestamps[i]), s.series_id, repr(float(s.endo[i])),
                    *[repr(float(v)) for v in s.exo[i]],
                    "" if c.ambient_temp_c is None else repr(c.ambient_temp_c),
                    "" if c.humidity_pct is None else repr(c.humidity_pct),
                    c.terrain or "",
                    "" if c.airport_elevation_m is None else repr(c.airport_elevation_m),
                    "" if c.is_holiday is None else int(c.is_holiday),
                    c.load_level or "",
                    s.labels[i],
                ])
    if sidecar_path is not None:
        payload = {sid: {"registration": a.registration, "lat": a.lat, "lon": a.lon, "alt": a.alt}
                   for sid, a in sorted(ds.static.items())}
        Path(sidecar_path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


# ------------------------------------------------------------------- windows

def make_windows(series: Series, T: int, S: int, stride: int,
                 static: Optional[StaticAttributes] = None) -> list[SampleRecord]:
    """Cut ``series`` into (history T, horizon S) windows at offsets 0, stride, ..."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    static = static or StaticAttributes()
    out = []
    for off in range(0, len(series) - (T + S) + 1, stride):
        hist, fut = slice(off, off + T), slice(off + T, off + T + S)
        labels = series.labels[off:off + T + S]
        if "abnormal" in labels:
            label = "abnormal"
        elif all(lab == "normal" for lab in labels):
            label = "normal"
        else:
            label = "unlabeled"
        out.append(SampleRecord(
            endo_hist=series.endo[hist].copy(),
            endo_target=series.endo[fut].copy(),
            exo_hist=series.exo[hist].copy(),
            exo_fut=series.exo[fut].copy(),
            attr_text=static.registration,
            geo=static.geo,
            context=series.contexts[off + T - 1],
            label=label,
            series_id=series.series_id,
            t0=series.timestamps[off],
            offset=off,
        ))
    return out


def dataset_windows(ds: Dataset, T: int, S: int, stride: int) -> list[SampleRecord]:
    out = []
    for s in sorted(ds.series, key=lambda s: s.series_id):
        out.extend(make_windows(s, T, S, stride, ds.static.get(s.series_id)))
    return out


# ------------------------------------------------------------- normalisation

@dataclass(frozen=True)
class ExoStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class NormalizationStats:
    mean: float
    std: float
    exo: Optional[ExoStats] = None


def _guard(std):
    return np.where(std < STD_FLOOR, 1.0, std)


def fit_exo_stats(samples: Sequence[SampleRecord]) -> ExoStats:
    """Per-column statistics of every exogenous value seen in ``samples``."""
    if not samples:
        raise ValueError("need at least one sample to fit exogenous statistics")
    rows = np.concatenate([np.concatenate([s.exo_hist, s.exo_fut]) for s in samples])
    return ExoStats(mean=rows.mean(axis=0), std=_guard(rows.std(axis=0)))


def normalize(sample: SampleRecord, exo_stats: Optional[ExoStats] = None):
    """Standardise one window; returns ``(normalized sample, stats)``."""
    mu = float(sample.endo_hist.mean())
    sd = float(sample.endo_hist.std())
    if sd < STD_FLOOR:
        sd = 1.0
    changes = dict(endo_hist=(sample.endo_hist - mu) / sd, endo_target=(sample.endo_target - mu) / sd)
    if exo_stats is not None:
        changes["exo_hist"] = (sample.exo_hist - exo_stats.mean) / exo_stats.std
        changes["exo_fut"] = (sample.exo_fut - exo_stats.mean) / exo_stats.std
    return replace(sample, **changes), NormalizationStats(mu, sd, exo_stats)


def denormalize(forecast, stats: NormalizationStats):
    return np.asarray(forecast) * stats.std + stats.mean


# ----------------------------------------------------------------- splitting

@dataclass
class Split:
    train: list[SampleRecord]
    val: list[SampleRecord]
    test: list[SampleRecord]
    excluded_abnormal: int = 0


def chronological_split(samples: Sequence[SampleRecord], boundaries: tuple[datetime, datetime]) -> Split:
    """train: t0 < b1, val: b1 <= t0 < b2, test: t0 >= b2; abnormal windows leave train/val."""
    b1, b2 = boundaries
    if b2 < b1:
        raise ValueError("split boundaries must be ordered")
    split = Split([], [], [])
    for s in samples:
        if s.t0 >= b2:
            split.test.append(s)
            continue
        if s.label == "abnormal":
            split.excluded_abnormal += 1
            continue
        (split.train if s.t0 < b1 else split.val).append(s)
    if split.excluded_abnormal:
        log.info("excluded %d abnormal windows from train/val", split.excluded_abnormal)
    return split


def boundaries_from_fractions(samples: Sequence[SampleRecord], train_frac: float, val_frac: float):
    """Boundaries at the given quantiles of the sorted window start times."""
    if not 0 < train_frac <= train_frac + val_frac < 1:
        raise ValueError("need 0 < train_frac and train_frac + val_frac < 1")
    times = sorted(s.t0 for s in samples)
    n = len(times)
    return times[int(train_frac * n)], times[int((train_frac + val_frac) * n)]
