"""Exogenous-aware patch transformer.

Layout of one forward pass (batched, leading axis B):

* endogenous history -> non-overlapping patches -> shared linear projector + positional table
* attribute-text embedding and scaled (lat, lon, alt) -> two meta tokens appended after the patches
* per layer: self-attention, gated cross-attention on historical exogenous
  tokens, gated cross-attention on future exogenous tokens, then a
  mixture-of-experts FFN whose gate reads the context-text embedding
* temporal tokens only -> affine head -> S normalised outputs

Every sublayer is ``LayerNorm(H + branch)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diffcore as dc
from .diffcore import DimensionError, Parameter, Tensor

ABLATIONS = (
    "no_static",
    "no_events",
    "no_exog",
    "uniform_concat",
    "uniform_crossattn",
    "uniform_moe",
    "no_gated_residual",
)
_UNIFORM = ("uniform_concat", "uniform_crossattn", "uniform_moe")


class ModelValidationError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    patch_len: int = 6
    d_model: int = 128
    n_layers: int = 1
    n_heads: int = 4
    n_experts: int = 4
    moe_top_k: Optional[int] = None
    ffn_hidden: int = 256
    endo_len: int = 6
    horizon: int = 18
    exo_dim: int = 2
    exo_hist_len: int = 6
    exo_fut_len: int = 18
    text_embed_dim: int = 256
    ablation: tuple[str, ...] = ()
    geo_scale: tuple[float, float, float] = (90.0, 180.0, 1000.0)

    def __post_init__(self):
        object.__setattr__(self, "ablation", tuple(sorted(set(self.ablation))))
        object.__setattr__(self, "geo_scale", tuple(float(g) for g in self.geo_scale))
        if self.moe_top_k is None:
            object.__setattr__(self, "moe_top_k", self.n_experts)
        for name in ("patch_len", "d_model", "n_layers", "n_heads", "n_experts", "ffn_hidden",
                     "endo_len", "horizon", "text_embed_dim"):
            if getattr(self, name) < 1:
                raise ModelValidationError(f"{name} must be positive")
        if self.exo_dim < 0:
            raise ModelValidationError("exo_dim must be nonnegative")
        if self.d_model % self.n_heads:
            raise ModelValidationError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not 1 <= self.moe_top_k <= self.n_experts:
            raise ModelValidationError(f"moe_top_k={self.moe_top_k} outside [1, {self.n_experts}]")
        if self.exo_hist_len not in (0, self.endo_len):
            raise ModelValidationError("exo_hist_len must be 0 or endo_len")
        if self.exo_fut_len not in (0, self.horizon):
            raise ModelValidationError("exo_fut_len must be 0 or horizon")
        unknown = set(self.ablation) - set(ABLATIONS)
        if unknown:
            raise ModelValidationError(f"unknown ablation flags {sorted(unknown)}")
        if sum(f in self.ablation for f in _UNIFORM) > 1:
            raise ModelValidationError("at most one uniform_* ablation may be active")
        if len(self.geo_scale) != 3 or min(self.geo_scale) <= 0:
            raise ModelValidationError("geo_scale needs three positive entries")

    # derived sizes
    @property
    def n_patches(self) -> int:
        return math.ceil(self.endo_len / self.patch_len)

    def n_exo_tokens(self, stage: str) -> int:
        length = self.exo_hist_len if stage == "hist" else self.exo_fut_len
        return self.exo_dim * math.ceil(length / self.patch_len) if length and self.exo_dim else 0

    # architecture switches
    def _has(self, flag: str) -> bool:
        return flag in self.ablation

    @property
    def meta_tokens(self) -> bool:
        return not (self._has("no_static") or self._has("uniform_crossattn") or self._has("uniform_moe"))

    @property
    def uses_static(self) -> bool:
        return not self._has("no_static")

    @property
    def uses_exo(self) -> bool:
        return not self._has("no_exog") and self.exo_dim > 0

    def cross_enabled(self, stage: str) -> bool:
        if self._has("uniform_concat") or self._has("uniform_moe"):
            return False
        if self._has("uniform_crossattn"):
            return True
        return self.uses_exo and self.n_exo_tokens(stage) > 0

    @property
    def text_gated_moe(self) -> bool:
        return not (self._has("no_events") or self._has("uniform_concat") or self._has("uniform_crossattn"))

    @property
    def text_token(self) -> bool:
        return self._has("uniform_concat") or self._has("uniform_crossattn")

    @property
    def gated_residual(self) -> bool:
        return not self._has("no_gated_residual")

    @property
    def gate_input_dim(self) -> int:
        if self._has("uniform_moe"):
            n_exo = sum(self.n_exo_tokens(s) > 0 for s in ("hist", "fut")) if self.uses_exo else 0
            return self.text_embed_dim + self.d_model * (2 * self.uses_static + n_exo)
        return self.text_embed_dim


@dataclass
class GateTrace:
    layer: int
    alpha_hist: Optional[float]
    alpha_fut: Optional[float]
    moe_weights: np.ndarray


@dataclass
class Traces:
    """Batched gate record; arrays are indexed [layer, sample, ...]."""

    alpha_hist: list = field(default_factory=list)
    alpha_fut: list = field(default_factory=list)
    moe: list = field(default_factory=list)
    attention: list = field(default_factory=list)

    def for_sample(self, i: int) -> list[GateTrace]:
        def pick(a):
            return None if a is None else float(a[i])

        return [GateTrace(l, pick(h), pick(f), m[i].copy())
                for l, (h, f, m) in enumerate(zip(self.alpha_hist, self.alpha_fut, self.moe))]


# --------------------------------------------------------------- free functions

def patchify(x, P: int) -> list[np.ndarray]:
    """Split a 1-D series into ceil(T/P) length-P patches, zero-padding the tail."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1 or P < 1:
        raise DimensionError(f"patchify needs a non-empty 1-D series and P >= 1, got {x.shape}, P={P}")
    return list(patch_array(x[None, :], P)[0])


def unpatchify(patches, T: int) -> np.ndarray:
    return np.concatenate([np.asarray(p) for p in patches])[:T]


def patch_array(x: np.ndarray, P: int) -> np.ndarray:
    """(..., L) -> (..., ceil(L/P), P) with zero padding at the end."""
    L = x.shape[-1]
    n = math.ceil(L / P)
    pad = n * P - L
    if pad:
        x = np.concatenate([x, np.zeros(x.shape[:-1] + (pad,))], axis=-1)
    return x.reshape(x.shape[:-1] + (n, P))


def patch_embed(patches, W, PE) -> Tensor:
    """Token i = W s_i + PE(i); ``patches`` is (..., N, P), W is (D, P), PE is (N, D)."""
    patches = dc.as_tensor(np.asarray(patches, dtype=np.float64)) if not isinstance(patches, Tensor) else patches
    W, PE = dc.as_tensor(W), dc.as_tensor(PE)
    if patches.shape[-1] != W.shape[1]:
        raise DimensionError(f"patch length {patches.shape[-1]} vs projector {W.shape}")
    if patches.shape[-2] != PE.shape[0] or PE.shape[1] != W.shape[0]:
        raise DimensionError(f"positional table {PE.shape} vs {patches.shape[-2]} patches of width {W.shape[0]}")
    return patches @ W.T + PE


def assemble_endo_tokens(h_endo, z_a, z_g) -> Tensor:
    """[h_endo; z_a; z_g] along the token axis; accepts (N, D) or (B, N, D) tokens."""
    h_endo, z_a, z_g = dc.as_tensor(h_endo), dc.as_tensor(z_a), dc.as_tensor(z_g)
    D = h_endo.shape[-1]
    if z_a.shape[-1] != D or z_g.shape[-1] != D:
        raise DimensionError(f"meta token widths {z_a.shape}, {z_g.shape} vs token width {D}")
    lead = h_endo.shape[:-2]
    return dc.concatenate([h_endo, z_a.reshape(lead + (1, D)), z_g.reshape(lead + (1, D))], axis=-2)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class AuraModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Parameter] = {}
        # test-only hooks: a float forces both gates, an (K,) array forces MoE weights
        self.alpha_override: Optional[float] = None
        self.moe_override: Optional[np.ndarray] = None
        self._build(np.random.default_rng(seed))

    # ------------------------------------------------------------ parameters
    def _add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self.params:
            raise ModelValidationError(f"duplicate parameter name {name!r}")
        p = Parameter(value, name)
        self.params[name] = p
        return p

    def _affine(self, prefix: str, out: int, inn: int, rng, bias: bool = True):
        self._add(f"{prefix}.W", _uniform(rng, (out, inn), inn))
        if bias:
            self._add(f"{prefix}.b", _uniform(rng, (out,), inn))

    def _ln(self, prefix: str, D: int):
        self._add(f"{prefix}.gamma", np.ones(D))
        self._add(f"{prefix}.beta", np.zeros(D))

    def _attn(self, prefix: str, D: int, rng):
        for m in ("q", "k", "v"):
            self._affine(f"{prefix}.{m}", D, D, rng, bias=False)
        self._affine(f"{prefix}.o", D, D, rng)

    def _build(self, rng):
        c = self.config
        D, P, E = c.d_model, c.patch_len, c.text_embed_dim
        self._affine("patch", D, P, rng, bias=False)
        self._add("pe.endo", rng.normal(0.0, 0.02, (c.n_patches, D)))
        need_exo = c.uses_exo and (any(c.cross_enabled(s) for s in ("hist", "fut"))
                                   or "uniform_concat" in c.ablation or "uniform_moe" in c.ablation)
        if need_exo:
            for stage in ("hist", "fut"):
                n = c.n_exo_tokens(stage)
                if n:
                    self._add(f"pe.exo_{stage}", rng.normal(0.0, 0.02, (n, D)))
        if c.uses_static:
            self._affine("static.attr", D, E, rng)
            self._affine("static.geo", D, 3, rng)
        if c.text_token:
            self._affine("text", D, E, rng)
        for l in range(c.n_layers):
            pre = f"layer{l}"
            self._attn(f"{pre}.self", D, rng)
            self._ln(f"{pre}.self.ln", D)
            for stage in ("hist", "fut"):
                if c.cross_enabled(stage):
                    self._attn(f"{pre}.cross_{stage}", D, rng)
                    if c.gated_residual:
                        self._add(f"{pre}.cross_{stage}.gate.u", _uniform(rng, (D, 1), D))
                        self._add(f"{pre}.cross_{stage}.gate.c", np.zeros(1))
                    self._ln(f"{pre}.cross_{stage}.ln", D)
            K = c.n_experts if c.text_gated_moe else 1
            if c.text_gated_moe:
                self._affine(f"{pre}.moe.gate", K, c.gate_input_dim, rng)
            H = c.ffn_hidden
            self._add(f"{pre}.moe.W1", _uniform(rng, (K, H, D), D))
            self._add(f"{pre}.moe.b1", _uniform(rng, (K, H), D))
            self._add(f"{pre}.moe.W2", _uniform(rng, (K, D, H), H))
            self._add(f"{pre}.moe.b2", _uniform(rng, (K, D), H))
            self._ln(f"{pre}.moe.ln", D)
        self._affine("head", c.horizon, c.n_patches * D, rng)

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ModelValidationError(
                f"state keys differ: missing {sorted(set(self.params) - set(state))}, "
                f"extra {sorted(set(state) - set(self.params))}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ModelValidationError(f"{k}: shape {v.shape} vs {self.params[k].shape}")
            self.params[k].data[...] = v

    # -------------------------------------------------------------- embedding
    def embed_endo(self, endo: np.ndarray) -> Tensor:
        return patch_embed(patch_array(np.asarray(endo), self.config.patch_len),
                           self.params["patch.W"], self.params["pe.endo"])

    def embed_exo(self, exo: np.ndarray, stage: str) -> Tensor:
        """(B, L, D_ex) -> (B, D_ex * n, D): variables in order, patches within each."""
        exo = np.asarray(exo)
        B, L, V = exo.shape
        patches = patch_array(np.swapaxes(exo, 1, 2), self.config.patch_len)   # (B, V, n, P)
        patches = patches.reshape(B, -1, self.config.patch_len)
        return patch_embed(patches, self.params["patch.W"], self.params[f"pe.exo_{stage}"])

    def scale_geo(self, geo: np.ndarray) -> np.ndarray:
        geo = np.asarray(geo, dtype=np.float64)
        if not np.all(np.isfinite(geo)):
            raise ModelValidationError("non-finite geo coordinates")
        return geo / np.asarray(self.config.geo_scale)

    def embed_static(self, attr: np.ndarray, geo: np.ndarray) -> tuple[Tensor, Tensor]:
        attr = np.asarray(attr, dtype=np.float64)
        if attr.shape[-1] != self.config.text_embed_dim:
            raise DimensionError(f"attribute embedding width {attr.shape[-1]} vs {self.config.text_embed_dim}")
        p = self.params
        z_a = dc.matmul(attr.reshape(-1, attr.shape[-1]), p["static.attr.W"].T) + p["static.attr.b"]
        return z_a, self.embed_geo(geo)

    def embed_geo(self, geo: np.ndarray) -> Tensor:
        """Affine map of (lat, lon, alt) after dividing by ``config.geo_scale``."""
        g = self.scale_geo(geo).reshape(-1, 3)
        return dc.matmul(g, self.params["static.geo.W"].T) + self.params["static.geo.b"]

    def embed_text_token(self, text: np.ndarray) -> Tensor:
        return dc.matmul(np.asarray(text).reshape(-1, self.config.text_embed_dim), self.params["text.W"].T) \
            + self.params["text.b"]

    # -------------------------------------------------------------- attention
    def attention(self, prefix: str, Hq: Tensor, Hkv: Tensor, mask=None):
        p, h = self.params, self.config.n_heads
        B, M, D = Hq.shape
        Mk = Hkv.shape[1]
        if Hkv.shape[-1] != D:
            raise DimensionError(f"key/value width {Hkv.shape[-1]} vs query width {D}")
        dh = D // h
        q = (Hq @ p[f"{prefix}.q.W"].T).reshape(B, M, h, dh).transpose((0, 2, 1, 3))
        k = (Hkv @ p[f"{prefix}.k.W"].T).reshape(B, Mk, h, dh).transpose((0, 2, 3, 1))
        v = (Hkv @ p[f"{prefix}.v.W"].T).reshape(B, Mk, h, dh).transpose((0, 2, 1, 3))
        scores = (q @ k) * (1.0 / math.sqrt(dh))
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (M, Mk):
                raise DimensionError(f"attention mask shape {mask.shape}, expected {(M, Mk)}")
            if mask.all(axis=1).any():
                raise DimensionError("attention mask hides every key for some query")
            scores = dc.masked_fill(scores, mask, -np.inf)
        weights = dc.softmax(scores, axis=-1)
        out = (weights @ v).transpose((0, 2, 1, 3)).reshape(B, M, D)
        return out @ p[f"{prefix}.o.W"].T + p[f"{prefix}.o.b"], weights.data

    def _norm(self, prefix: str, x: Tensor) -> Tensor:
        return dc.layer_norm(x, self.params[f"{prefix}.gamma"], self.params[f"{prefix}.beta"])

    def self_attention_block(self, layer: int, H: Tensor, mask=None):
        pre = f"layer{layer}.self"
        attn, weights = self.attention(pre, H, H, mask)
        return self._norm(f"{pre}.ln", H + attn), weights

    def gate(self, layer: int, stage: str, H: Tensor) -> Tensor:
        """Per-sample sigmoid gate from the mean-pooled query tokens, shape (B, 1, 1)."""
        pre = f"layer{layer}.cross_{stage}.gate"
        pooled = H.mean(axis=1)
        logit = pooled @ self.params[f"{pre}.u"] + self.params[f"{pre}.c"]
        return dc.sigmoid(logit).reshape(H.shape[0], 1, 1)

    def cross_attention_gated(self, layer: int, H: Tensor, exo_tokens: Optional[Tensor], stage: str):
        """LayerNorm(H + alpha * CrossAttn(H, exo, exo)); returns (H', alpha array or None)."""
        c = self.config
        if not c.cross_enabled(stage):
            return H, None
        if exo_tokens is None or exo_tokens.shape[1] == 0:
            raise DimensionError(f"cross-attention stage {stage!r} is enabled but has no tokens")
        pre = f"layer{layer}.cross_{stage}"
        attn, _ = self.attention(pre, H, exo_tokens)
        if self.alpha_override is not None:
            alpha = Tensor(np.full((H.shape[0], 1, 1), float(self.alpha_override)))
            branch = alpha * attn
        elif c.gated_residual:
            alpha = self.gate(layer, stage, H)
            branch = alpha * attn
        else:
            alpha, branch = None, attn
        out = self._norm(f"{pre}.ln", H + branch)
        return out, None if alpha is None else alpha.data.reshape(-1).copy()

    def moe_weights(self, layer: int, gate_input: Optional[np.ndarray], B: int) -> Tensor:
        c = self.config
        if self.moe_override is not None:
            w = np.broadcast_to(np.asarray(self.moe_override, dtype=np.float64), (B, self._n_experts()))
            return Tensor(w.copy())
        if not c.text_gated_moe:
            return Tensor(np.ones((B, 1)))
        gate_input = dc.as_tensor(gate_input)
        if gate_input.shape[-1] != c.gate_input_dim:
            raise DimensionError(f"gate input width {gate_input.shape[-1]} vs {c.gate_input_dim}")
        pre = f"layer{layer}.moe.gate"
        w = dc.softmax(gate_input @ self.params[f"{pre}.W"].T + self.params[f"{pre}.b"], axis=-1)
        K, k = c.n_experts, c.moe_top_k
        if k < K:
            order = np.argsort(-w.data, axis=-1, kind="stable")[:, :k]
            keep = np.zeros_like(w.data)
            np.put_along_axis(keep, order, 1.0, axis=-1)
            w = w * keep
            w = w / w.sum(axis=-1, keepdims=True)
        return w

    def _n_experts(self) -> int:
        return self.config.n_experts if self.config.text_gated_moe else 1

    def experts(self, layer: int, H: Tensor) -> Tensor:
        """All expert FFN outputs stacked: (B, M, D) -> (K, B, M, D)."""
        p, pre = self.params, f"layer{layer}.moe"
        B, M, D = H.shape
        K, Hd = self._n_experts(), self.config.ffn_hidden
        x = H.reshape(B * M, D)
        hidden = (x @ p[f"{pre}.W1"].reshape(K * Hd, D).T).reshape(B * M, K, Hd).transpose((1, 0, 2))
        hidden = dc.gelu(hidden + p[f"{pre}.b1"].reshape(K, 1, Hd))
        out = hidden @ p[f"{pre}.W2"].transpose((0, 2, 1)) + p[f"{pre}.b2"].reshape(K, 1, D)
        return out.reshape(K, B, M, D)

    def moe_block(self, layer: int, H: Tensor, gate_input=None):
        """LayerNorm(H + sum_i w_i FFN_i(H)) with one weight vector per sample."""
        B = H.shape[0]
        w = self.moe_weights(layer, gate_input, B)
        mix = (self.experts(layer, H) * w.T.reshape(-1, B, 1, 1)).sum(axis=0)
        return self._norm(f"layer{layer}.moe.ln", H + mix), w.data.copy()

    def forecast_head(self, H: Tensor) -> Tensor:
        """Flatten the N temporal tokens and map to S normalised outputs."""
        N, D = self.config.n_patches, self.config.d_model
        B = H.shape[0]
        flat = H[:, :N, :].reshape(B, N * D)
        return flat @ self.params["head.W"].T + self.params["head.b"]

    # ---------------------------------------------------------------- forward
    def encode_inputs(self, batch):
        """Token sets for the batch: (H0, exo_hist_tokens, exo_fut_tokens, gate_input)."""
        c = self.config
        h = self.embed_endo(batch.endo)
        z_a = z_g = z_t = None
        if c.uses_static:
            z_a, z_g = self.embed_static(batch.attr, batch.geo)
        if c.text_token:
            z_t = self.embed_text_token(batch.text)
        ex = {"hist": None, "fut": None}
        if c.uses_exo:
            for stage, arr in (("hist", batch.exo_hist), ("fut", batch.exo_fut)):
                if f"pe.exo_{stage}" in self.params:
                    ex[stage] = self.embed_exo(arr, stage)

        B, D = h.shape[0], c.d_model
        tok = lambda z: z.reshape(B, 1, D)  # noqa: E731
        extras = [tok(z) for z in (z_a, z_g, z_t) if z is not None]

        H = assemble_endo_tokens(h, z_a, z_g) if (c.meta_tokens and z_a is not None) else h
        gate_input = batch.text
        if "uniform_concat" in c.ablation:
            parts = [h] + extras + [t for t in (ex["hist"], ex["fut"]) if t is not None]
            H = dc.concatenate(parts, axis=1)
        elif "uniform_crossattn" in c.ablation:
            for stage in ("hist", "fut"):
                parts = ([ex[stage]] if ex[stage] is not None else []) + extras
                ex[stage] = dc.concatenate(parts, axis=1)
        elif "uniform_moe" in c.ablation:
            parts = [Tensor(batch.text)]
            if z_a is not None:
                parts += [z_a, z_g]
            parts += [t.mean(axis=1) for t in (ex["hist"], ex["fut"]) if t is not None]
            gate_input = dc.concatenate(parts, axis=1)
        return H, ex["hist"], ex["fut"], gate_input

    def forward_batch(self, batch, mask=None, keep_attention: bool = False):
        """Normalised forecast (B, S) and the batch's gate traces."""
        H, ex_h, ex_f, gate_input = self.encode_inputs(batch)
        traces = Traces()
        for l in range(self.config.n_layers):
            H, attn = self.self_attention_block(l, H, mask)
            H, a_h = self.cross_attention_gated(l, H, ex_h, "hist")
            H, a_f = self.cross_attention_gated(l, H, ex_f, "fut")
            H, w = self.moe_block(l, H, gate_input)
            traces.alpha_hist.append(a_h)
            traces.alpha_fut.append(a_f)
            traces.moe.append(w)
            if keep_attention:
                traces.attention.append(attn)
        return self.forecast_head(H), traces

    def predict(self, batch, chunk: int = 512) -> tuple[np.ndarray, Traces]:
        """Graph-free normalised forecasts for a whole batch, evaluated in chunks."""
        preds, merged = [], Traces()
        with dc.no_grad():
            for start in range(0, len(batch), chunk):
                part = batch.subset(np.arange(start, min(start + chunk, len(batch))))
                pred, tr = self.forward_batch(part)
                preds.append(pred.data)
                for name in ("alpha_hist", "alpha_fut", "moe"):
                    dst, src = getattr(merged, name), getattr(tr, name)
                    for l, arr in enumerate(src):
                        if len(dst) <= l:
                            dst.append(arr)
                        elif arr is not None:
                            dst[l] = np.concatenate([dst[l], arr])
        return np.concatenate(preds), merged


def forward(sample, model: AuraModel, exo_stats, embedder, template_id: str = "context-v1"):
    """De-normalised forecast (S,) and per-layer gate traces for one ``SampleRecord``."""
    from .features import make_batch

    c = model.config
    if len(sample.endo_hist) != c.endo_len or len(sample.endo_target) != c.horizon:
        raise DimensionError(
            f"sample lengths T={len(sample.endo_hist)}, S={len(sample.endo_target)} "
            f"vs config T={c.endo_len}, S={c.horizon}")
    if sample.exo_hist.shape[1] != c.exo_dim:
        raise DimensionError(f"sample has {sample.exo_hist.shape[1]} exogenous variables, config {c.exo_dim}")
    batch = make_batch([sample], exo_stats, embedder, template_id)
    with dc.no_grad():
        pred, traces = model.forward_batch(batch)
    return batch.denormalize(pred.data)[0], traces.for_sample(0)
