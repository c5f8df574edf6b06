"""Key=value run configuration with a fixed, documented schema.

File format::

    # comment
    [data]              section header: following keys are prefixed "data."
    input_len = 6
    train.seed = 3      dotted keys are accepted anywhere (outside a section)

Unknown keys are rejected with the key name in the message.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .model import ABLATIONS, ModelConfig
from .synthetic import FaultSpec, SyntheticConfig
from .train import TrainConfig

EMBEDDER_URL_ENV = "AURA_EMBEDDER_URL"


class ConfigError(ValueError):
    pass


# key: (type, default, description); list values are comma separated
SCHEMA: dict[str, tuple[type, object, str]] = {
    "data.source": (str, "synthetic", "synthetic | csv"),
    "data.path": (str, "", "CSV file (csv source)"),
    "data.sidecar": (str, "", "JSON static-attribute sidecar; empty means none"),
    "data.timestamp_col": (str, "timestamp", "timestamp column"),
    "data.series_col": (str, "series_id", "series id column (optional in the file)"),
    "data.label_col": (str, "label", "normal/abnormal label column (optional in the file)"),
    "data.endo_col": (str, "mp", "endogenous target column"),
    "data.exo_cols": (list, ["n2", "ip"], "exogenous columns"),
    "data.input_len": (int, 6, "history length T"),
    "data.horizon": (int, 18, "forecast horizon S"),
    "data.stride": (int, 24, "window stride"),
    "data.train_frac": (float, 0.6, "chronological share of windows in train"),
    "data.val_frac": (float, 0.1, "chronological share of windows in validation"),
    "data.exo_future": (bool, True, "use future exogenous values"),
    "synth.n_series": (int, 4000, "number of generated takeoff segments"),
    "synth.series_len": (int, 24, "steps per segment"),
    "synth.seed": (int, 0, "generator seed"),
    "synth.mode": (str, "standard", "standard | future_only"),
    "synth.exo_profile": (str, "ramp", "ramp | constant"),
    "synth.a1": (float, 0.7, "autoregressive coefficient"),
    "synth.b1": (float, 0.2, "engine-speed coupling"),
    "synth.b2": (float, 0.1, "intermediate-pressure coupling"),
    "synth.noise_std": (float, 0.05, "process noise std"),
    "synth.n_aircraft": (int, 8, "distinct registrations"),
    "synth.asset_lag_spread": (float, 0.05, "per-aircraft spread of a1"),
    "synth.asset_demand_spread": (float, 0.015, "per-aircraft bleed demand spread"),
    "synth.context_effect": (float, 0.03, "demand per temperature/load level"),
    "synth.altitude_effect": (float, 0.01, "demand per km of airport elevation"),
    "synth.fault_onset": (int, 6, "fault onset step within a segment"),
    "synth.fault_drift": (float, 0.5, "fractional loss of regulation response"),
    "synth.fault_fraction": (float, 0.15, "share of eligible segments with a fault"),
    "synth.fault_period_start": (float, 0.7, "faults only after this chronological fraction"),
    "model.patch_len": (int, 6, "patch length P"),
    "model.d_model": (int, 128, "token width D"),
    "model.n_layers": (int, 1, "encoder layers L"),
    "model.n_heads": (int, 4, "attention heads"),
    "model.n_experts": (int, 4, "experts K"),
    "model.moe_top_k": (int, 0, "experts kept per sample; 0 keeps all"),
    "model.ffn_hidden": (int, 256, "expert hidden width"),
    "model.text_embed_dim": (int, 256, "text embedding width"),
    "model.ablation": (list, [], "ablation flags: " + ", ".join(ABLATIONS)),
    "train.lr": (float, 5e-4, "Adam learning rate"),
    "train.max_epochs": (int, 100, "epoch budget"),
    "train.patience": (int, 5, "early-stopping patience in epochs"),
    "train.batch_size": (int, 32, "mini-batch size"),
    "train.seed": (int, 0, "seed for initialisation and shuffling"),
    "train.max_steps": (int, 0, "optimizer step cap; 0 means none"),
    "detect.target_far": (float, 0.05, "false-alarm budget"),
    "detect.calib_frac": (float, 0.5, "share of normal test windows used to calibrate"),
    "detect.in_sample": (bool, False, "calibrate and report FAR on the same normals"),
    "detect.score": (str, "mse", "mse | mae"),
    "detect.seed": (int, 0, "seed for the calibration/held-out split"),
    "ablate.seeds": (list, ["0"], "seeds for the ablation matrix"),
    "embedder.kind": (str, "hash", "hash | http"),
    "embedder.url": (str, "", "embedding service URL (http kind)"),
    "embedder.timeout_ms": (int, 5000, "HTTP timeout"),
    "embedder.retries": (int, 2, "HTTP retries"),
    "context.template": (str, "context-v1", "prompt template id"),
    "context.temp_low_c": (float, 10.0, "below: low temperature"),
    "context.temp_high_c": (float, 28.0, "at or above: high temperature"),
    "context.humidity_low_pct": (float, 30.0, "below: low humidity"),
    "context.humidity_high_pct": (float, 70.0, "at or above: high humidity"),
    "context.highland_cutoff_m": (float, 1500.0, "elevation treated as highland"),
    "output.dir": (str, "runs/default", "artifact directory"),
}


def _coerce(key: str, raw, typ):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is list:
            return [x.strip() for x in raw.split(",") if x.strip()]
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, raw, SCHEMA[key][0])

    def __getitem__(self, key: str):
        return self.values[key]

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    @classmethod
    def load(cls, path=None, overrides=(), env=None) -> "RunConfig":
        rc = cls()
        if path is not None:
            for key, raw in parse_config_text(Path(path).read_text(encoding="utf-8")):
                rc.set(key, raw)
        env = os.environ if env is None else env
        if env.get(EMBEDDER_URL_ENV):
            rc.set("embedder.url", env[EMBEDDER_URL_ENV])
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            rc.set(key.strip(), raw)
        rc.validate()
        return rc

    def validate(self) -> None:
        bad = [f for f in self["model.ablation"] if f not in ABLATIONS]
        if bad:
            raise ConfigError(f"model.ablation: unknown flags {bad}")
        if self["data.source"] not in ("synthetic", "csv"):
            raise ConfigError(f"data.source: expected synthetic or csv, got {self['data.source']!r}")
        if self["data.source"] == "csv" and not self["data.path"]:
            raise ConfigError("data.path: required when data.source = csv")
        if not 0 < self["detect.target_far"] < 1:
            raise ConfigError("detect.target_far: must lie in (0, 1)")

    # typed views -------------------------------------------------------
    def model_config(self, exo_dim: int, ablation=None) -> ModelConfig:
        T, S = self["data.input_len"], self["data.horizon"]
        return ModelConfig(
            patch_len=self["model.patch_len"], d_model=self["model.d_model"], n_layers=self["model.n_layers"],
            n_heads=self["model.n_heads"], n_experts=self["model.n_experts"],
            moe_top_k=self["model.moe_top_k"] or None, ffn_hidden=self["model.ffn_hidden"],
            endo_len=T, horizon=S, exo_dim=exo_dim, exo_hist_len=T if exo_dim else 0,
            exo_fut_len=S if (exo_dim and self["data.exo_future"]) else 0,
            text_embed_dim=self["model.text_embed_dim"],
            ablation=tuple(self["model.ablation"] if ablation is None else ablation),
        )

    def train_config(self, seed=None) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["train.lr"], max_epochs=self["train.max_epochs"], patience=self["train.patience"],
            batch_size=self["train.batch_size"], seed=self["train.seed"] if seed is None else seed,
            max_steps=self["train.max_steps"] or None,
        )

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            n_series=self["synth.n_series"], series_len=self["synth.series_len"], seed=self["synth.seed"],
            a1=self["synth.a1"], b1=self["synth.b1"], b2=self["synth.b2"], noise_std=self["synth.noise_std"],
            fault=FaultSpec(self["synth.fault_onset"], self["synth.fault_drift"], self["synth.fault_fraction"]),
            fault_period_start=self["synth.fault_period_start"], mode=self["synth.mode"],
            history_len=self["data.input_len"], exo_profile=self["synth.exo_profile"],
            n_aircraft=self["synth.n_aircraft"], asset_lag_spread=self["synth.asset_lag_spread"],
            asset_demand_spread=self["synth.asset_demand_spread"], context_effect=self["synth.context_effect"],
            altitude_effect=self["synth.altitude_effect"],
        )


def parse_config_text(text: str) -> list[tuple[str, str]]:
    items, section = [], ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        items.append((f"{section}.{key}" if section else key, value))
    return items


def describe_schema() -> str:
    return "\n".join(f"{k} ({t.__name__}, default {d!r}): {h}" for k, (t, d, h) in SCHEMA.items())
