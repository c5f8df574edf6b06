import numpy as np
import pytest

from aura.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from aura.model import AuraModel

from conftest import micro_config, random_batch


@pytest.mark.parametrize("ablation", [(), ("no_static", "uniform_moe"), ("no_exog",)])
def test_round_trip_is_bitwise(tmp_path, ablation):
    cfg = micro_config(ablation=ablation, moe_top_k=1)
    model = AuraModel(cfg, seed=4)
    for p in model.parameters():
        p.data += np.random.default_rng(1).normal(size=p.shape) * 1e-3
    save_checkpoint(model, tmp_path / "m.ckpt", {"seed": "4"})
    back, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == cfg and meta == {"seed": "4"}
    assert list(back.params) == list(model.params)
    for name, p in model.params.items():
        assert back.params[name].data.tobytes() == p.data.tobytes()
    b = random_batch(cfg)
    assert np.array_equal(back.predict(b)[0], model.predict(b)[0])


def test_truncated_payload(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(AuraModel(micro_config()), path)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CheckpointError, match="m.ckpt"):
        load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"hello")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_mangled_header(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(AuraModel(micro_config()), path)
    path.write_bytes(path.read_bytes().replace(b"d_model=8", b"d_model=eight"))
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_meta_rejects_newlines(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(AuraModel(micro_config()), tmp_path / "m.ckpt", {"note": "a\nb"})
