"""Single-file checkpoints.

Layout (UTF-8 text header, then a binary payload)::

    AURA-CHECKPOINT 1
    [config]
    key=value            one line per ModelConfig field
    [meta]
    key=value            free-form string metadata (no newlines)
    [tensors]
    name<TAB>d1,d2,...<TAB>offset<TAB>count
    [payload]
    <float64 little-endian values, tensors back to back in header order>

``offset`` and ``count`` are in float64 elements from the start of the payload.
Values round-trip bitwise.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Optional

import numpy as np

from .model import AuraModel, ModelConfig

MAGIC = "AURA-CHECKPOINT 1"


class CheckpointError(ValueError):
    pass


def config_to_items(cfg: ModelConfig) -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            out[f.name] = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        else:
            out[f.name] = repr(v) if isinstance(v, float) else str(v)
    return out


def config_from_items(items: dict[str, str]) -> ModelConfig:
    kwargs = {}
    names = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(items) - names
    if unknown:
        raise CheckpointError(f"unknown config keys {sorted(unknown)}")
    for name, raw in items.items():
        if name == "ablation":
            kwargs[name] = tuple(x for x in raw.split(",") if x)
        elif name == "geo_scale":
            kwargs[name] = tuple(float(x) for x in raw.split(","))
        else:
            kwargs[name] = int(raw)
    return ModelConfig(**kwargs)


def save_checkpoint(model: AuraModel, path, meta: Optional[dict[str, str]] = None) -> None:
    meta = meta or {}
    lines = [MAGIC, "[config]"]
    lines += [f"{k}={v}" for k, v in config_to_items(model.config).items()]
    lines.append("[meta]")
    for k, v in sorted(meta.items()):
        if "\n" in k or "\n" in str(v) or "=" in k:
            raise CheckpointError(f"meta entry {k!r} contains a newline or '='")
        lines.append(f"{k}={v}")
    lines.append("[tensors]")
    offset = 0
    for name, p in model.params.items():
        shape = ",".join(str(n) for n in p.shape)
        lines.append(f"{name}\t{shape}\t{offset}\t{p.data.size}")
        offset += p.data.size
    lines.append("[payload]")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in model.params.values())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + payload)


def load_checkpoint(path) -> tuple[AuraModel, dict[str, str]]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    marker = b"[payload]\n"
    cut = blob.find(marker)
    if not blob.startswith(MAGIC.encode()) or cut < 0:
        raise CheckpointError(f"{path} is not an Aura checkpoint")
    header = blob[:cut].decode("utf-8").splitlines()
    payload = blob[cut + len(marker):]
    sections: dict[str, list[str]] = {}
    current = None
    for line in header[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    try:
        cfg = config_from_items(dict(line.split("=", 1) for line in sections["config"]))
        meta = dict(line.split("=", 1) for line in sections.get("meta", []))
        model = AuraModel(cfg)
        values = np.frombuffer(payload, dtype="<f8")
        state = {}
        for line in sections["tensors"]:
            name, shape, offset, count = line.split("\t")
            shape = tuple(int(n) for n in shape.split(",")) if shape else ()
            offset, count = int(offset), int(count)
            if offset + count > values.size:
                raise CheckpointError(f"{path}: tensor {name} runs past the payload")
            state[name] = values[offset:offset + count].reshape(shape).astype(np.float64)
        model.load_state_dict(state)
    except CheckpointError:
        raise
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    return model, meta
