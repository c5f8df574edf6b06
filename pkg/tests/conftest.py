import numpy as np
import pytest

from aura.features import Batch
from aura.model import AuraModel, ModelConfig


def micro_config(**kw) -> ModelConfig:
    base = dict(patch_len=2, d_model=8, n_layers=1, n_heads=2, n_experts=2, ffn_hidden=8,
                endo_len=6, horizon=4, exo_dim=2, exo_hist_len=6, exo_fut_len=4, text_embed_dim=16)
    base.update(kw)
    return ModelConfig(**base)


def random_batch(cfg: ModelConfig, B: int = 3, seed: int = 0) -> Batch:
    rng = np.random.default_rng(seed)
    T, S, V, E = cfg.endo_len, cfg.horizon, cfg.exo_dim, cfg.text_embed_dim
    return Batch(
        endo=rng.normal(size=(B, T)),
        target=rng.normal(size=(B, S)),
        exo_hist=rng.normal(size=(B, T, V)),
        exo_fut=rng.normal(size=(B, S, V)),
        attr=rng.normal(size=(B, E)),
        geo=np.column_stack([rng.uniform(-60, 60, B), rng.uniform(-180, 180, B), rng.uniform(0, 4000, B)]),
        text=rng.normal(size=(B, E)),
        mean=rng.normal(size=B),
        std=rng.uniform(0.5, 2.0, size=B),
        ids=[f"s{i}" for i in range(B)],
        labels=["normal"] * B,
    )


@pytest.fixture
def micro():
    cfg = micro_config()
    return AuraModel(cfg, seed=0), random_batch(cfg)
