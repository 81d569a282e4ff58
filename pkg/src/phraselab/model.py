"""Encoder with disentangled attention blocks and a regression head.

Architecture, bottom to top: token embedding lookup; a stack of
pre-layer-norm blocks (norm, disentangled attention, residual, norm,
GELU feed-forward, residual) that use only relative positions; an
absolute-position injection adding ``abs_pos_embed`` to the hidden
states entering the final block (late injection, instead of the usual
input-time addition); a pooled head ``tanh(dense(h[CLS]))`` feeding a
logistic scalar that lands the predicted similarity in (0, 1).

Training minimizes mean squared error with Adam and global-norm
gradient clipping. Every forward/backward is hand-written over float64
numpy arrays, and the backward pass is held to finite differences by
the test suite.
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import attention as attn_mod
from .attention import AttentionConfig, AttentionParams
from .corpus import Dataset
from .errors import (
    BadMagic,
    ConfigError,
    EmptySplit,
    IoError,
    NonFiniteLoss,
    ShapeMismatch,
    UnknownPreset,
    ZeroVariance,
    LengthMismatch,
)
from .evaluation import FoldOutcome, pearson
from .text import TokenSequence, Vocabulary, build_vocab, encode

# how many blocks from the top the absolute-position injection happens:
# 1 means the embeddings are added to the hidden states entering the
# final block (late injection, ahead of the head)
POSITION_INJECTION_BLOCKS_FROM_TOP = 1

LN_EPS = 1e-5
GELU_C = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715
MAGIC = b"SSLB1"


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for one encoder instance."""

    layers: int
    ffn_dim: int
    vocab_size: int
    max_len: int
    attention: AttentionConfig
    dropout_rate: float = 0.1
    seed: int = 1234
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 5
    batch_size: int = 16
    input_layout: str = "anchor_target_context"

    def __post_init__(self) -> None:
        for name in ("layers", "ffn_dim", "vocab_size", "max_len", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size must cover the 4 special ids, got {self.vocab_size}")

    @property
    def d_model(self) -> int:
        return self.attention.d_model

    @property
    def n_heads(self) -> int:
        return self.attention.n_heads


@dataclass
class LayerParams:
    attn: AttentionParams
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass
class ModelParams:
    """All trainable arrays; layers alias one shared ``rel_embed``."""

    token_embed: np.ndarray
    abs_pos_embed: np.ndarray
    rel_embed: np.ndarray
    layers: list[LayerParams]
    head_w: np.ndarray
    head_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Every parameter array exactly once, in declaration order.

        The shared relative table appears only under its own name, not
        again inside each layer.
        """
        yield "token_embed", self.token_embed
        yield "abs_pos_embed", self.abs_pos_embed
        yield "rel_embed", self.rel_embed
        for i, lay in enumerate(self.layers):
            p = f"layers.{i}."
            yield p + "attn.wq_c", lay.attn.wq_c
            yield p + "attn.wk_c", lay.attn.wk_c
            yield p + "attn.wv", lay.attn.wv
            yield p + "attn.wq_r", lay.attn.wq_r
            yield p + "attn.wk_r", lay.attn.wk_r
            yield p + "attn.wo", lay.attn.wo
            yield p + "ln1_g", lay.ln1_g
            yield p + "ln1_b", lay.ln1_b
            yield p + "w1", lay.w1
            yield p + "b1", lay.b1
            yield p + "w2", lay.w2
            yield p + "b2", lay.b2
            yield p + "ln2_g", lay.ln2_g
            yield p + "ln2_b", lay.ln2_b
        yield "head_w", self.head_w
        yield "head_b", self.head_b
        yield "out_w", self.out_w
        yield "out_b", self.out_b


@dataclass
class TrainTrace:
    """Loss bookkeeping for one training run."""

    step_losses: list[float]
    val_losses: list[float]
    val_pearsons: list[Optional[float]]
    epoch_seconds: list[float]
    steps_per_epoch: int

    def final_epoch_train_loss(self) -> float:
        tail = self.step_losses[-self.steps_per_epoch:]
        return math.fsum(tail) / len(tail)


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d = cfg.d_model
    shapes: dict[str, tuple[int, ...]] = {
        "token_embed": (cfg.vocab_size, d),
        "abs_pos_embed": (cfg.max_len, d),
        "rel_embed": (cfg.attention.n_buckets, d),
    }
    for i in range(cfg.layers):
        p = f"layers.{i}."
        for w in ("attn.wq_c", "attn.wk_c", "attn.wv", "attn.wq_r", "attn.wk_r", "attn.wo"):
            shapes[p + w] = (d, d)
        shapes[p + "ln1_g"] = (d,)
        shapes[p + "ln1_b"] = (d,)
        shapes[p + "w1"] = (d, cfg.ffn_dim)
        shapes[p + "b1"] = (cfg.ffn_dim,)
        shapes[p + "w2"] = (cfg.ffn_dim, d)
        shapes[p + "b2"] = (d,)
        shapes[p + "ln2_g"] = (d,)
        shapes[p + "ln2_b"] = (d,)
    shapes["head_w"] = (d, d)
    shapes["head_b"] = (d,)
    shapes["out_w"] = (d,)
    shapes["out_b"] = (1,)
    return shapes


def _assemble(flat: dict[str, np.ndarray], cfg: ModelConfig) -> ModelParams:
    layers = []
    for i in range(cfg.layers):
        p = f"layers.{i}."
        layers.append(
            LayerParams(
                attn=AttentionParams(
                    wq_c=flat[p + "attn.wq_c"],
                    wk_c=flat[p + "attn.wk_c"],
                    wv=flat[p + "attn.wv"],
                    wq_r=flat[p + "attn.wq_r"],
                    wk_r=flat[p + "attn.wk_r"],
                    rel_embed=flat["rel_embed"],
                    wo=flat[p + "attn.wo"],
                ),
                ln1_g=flat[p + "ln1_g"],
                ln1_b=flat[p + "ln1_b"],
                w1=flat[p + "w1"],
                b1=flat[p + "b1"],
                w2=flat[p + "w2"],
                b2=flat[p + "b2"],
                ln2_g=flat[p + "ln2_g"],
                ln2_b=flat[p + "ln2_b"],
            )
        )
    return ModelParams(
        token_embed=flat["token_embed"],
        abs_pos_embed=flat["abs_pos_embed"],
        rel_embed=flat["rel_embed"],
        layers=layers,
        head_w=flat["head_w"],
        head_b=flat["head_b"],
        out_w=flat["out_w"],
        out_b=flat["out_b"],
    )


def init_params(cfg: ModelConfig) -> ModelParams:
    """Seeded initialization.

    Weights draw from N(0, 0.02^2) truncated by clipping at two
    standard deviations; layer-norm gains start at 1 and every bias at
    0. The draw order follows declaration order, so a given seed
    always produces bit-identical parameters.
    """
    rng = np.random.default_rng(cfg.seed)
    flat: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("_g"):
            flat[name] = np.ones(shape)
        elif leaf.endswith("_b") or leaf in ("b1", "b2"):
            flat[name] = np.zeros(shape)
        else:
            flat[name] = np.clip(rng.normal(0.0, 0.02, shape), -0.04, 0.04)
    return _assemble(flat, cfg)


def _gelu_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(gelu(x), tanh part); the tanh is cached for the backward pass."""
    u = x * x
    u *= GELU_CUBIC
    u += 1.0
    u *= x  # x + GELU_CUBIC * x^3
    u *= GELU_C
    t = np.tanh(u, out=u)
    out = t + 1.0
    out *= x
    out *= 0.5
    return out, t


def gelu(x: np.ndarray) -> np.ndarray:
    """Smooth GELU (tanh form), differentiable everywhere."""
    return _gelu_parts(np.asarray(x, dtype=np.float64))[0]


def _gelu_grad_from(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    du = x * x
    du *= 3.0 * GELU_CUBIC
    du += 1.0
    du *= GELU_C
    out = 1.0 - t * t
    out *= du
    out *= x
    out += 1.0 + t
    out *= 0.5
    return out


def gelu_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return _gelu_grad_from(x, _gelu_parts(x)[1])


def _layer_norm_forward(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xn = xc * inv
    return xn * g + b, (xn, inv, g)


def _layer_norm_backward(dy: np.ndarray, cache):
    xn, inv, g = cache
    dg = np.sum(dy * xn, axis=tuple(range(dy.ndim - 1)))
    db = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxn = dy * g
    dx = inv * (
        dxn
        - np.mean(dxn, axis=-1, keepdims=True)
        - xn * np.mean(dxn * xn, axis=-1, keepdims=True)
    )
    return dx, dg, db


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # logits from the bounded tanh head stay small; the clip only
    # shields exp from pathological hand-built parameters
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def forward_batch(
    ids: np.ndarray,
    mask: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
):
    """Forward pass over a batch; returns (scores, cache).

    ``ids`` and ``mask`` are (B, max_len). In training mode dropout
    masks are drawn from ``rng`` after the attention probabilities and
    after the FFN activation, exactly one draw pair per block.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask)
    if ids.ndim != 2 or ids.shape[1] != cfg.max_len:
        raise ShapeMismatch(f"ids must be (B, {cfg.max_len}), got {ids.shape}")
    if mask.shape != ids.shape:
        raise ShapeMismatch(f"mask shape {mask.shape} != ids shape {ids.shape}")
    use_dropout = train and cfg.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ConfigError("training-mode dropout needs a random generator")

    n_batch, length = ids.shape
    keep_scale = 1.0 / (1.0 - cfg.dropout_rate) if use_dropout else 1.0

    x = params.token_embed[ids]
    inject_at = cfg.layers - POSITION_INJECTION_BLOCKS_FROM_TOP
    blocks = []
    for li, lay in enumerate(params.layers):
        if li == inject_at:
            x = x + params.abs_pos_embed[None, :length]
        n1, ln1_cache = _layer_norm_forward(x, lay.ln1_g, lay.ln1_b)
        prob_drop = None
        if use_dropout:
            shape = (n_batch, cfg.n_heads, length, length)
            prob_drop = (rng.random(shape) >= cfg.dropout_rate) * keep_scale
        attn_out, _, attn_cache = attn_mod.forward_batched(
            n1, lay.attn, cfg.attention, mask, prob_drop
        )
        xb = x + attn_out
        n2, ln2_cache = _layer_norm_forward(xb, lay.ln2_g, lay.ln2_b)
        pre = n2 @ lay.w1 + lay.b1
        act, gelu_t = _gelu_parts(pre)
        ffn_drop = None
        used = act
        if use_dropout:
            ffn_drop = (rng.random(act.shape) >= cfg.dropout_rate) * keep_scale
            used = act * ffn_drop
        x = xb + used @ lay.w2 + lay.b2
        blocks.append(
            {
                "ln1": ln1_cache,
                "attn": attn_cache,
                "ln2": ln2_cache,
                "n2": n2,
                "pre": pre,
                "gelu_t": gelu_t,
                "used": used,
                "ffn_drop": ffn_drop,
            }
        )

    cls = x[:, 0]
    pooled = np.tanh(cls @ params.head_w + params.head_b)
    logit = pooled @ params.out_w + params.out_b[0]
    score = _sigmoid(logit)
    cache = {
        "ids": ids,
        "length": length,
        "inject_at": inject_at,
        "blocks": blocks,
        "cls": cls,
        "pooled": pooled,
        "score": score,
    }
    return score, cache


def forward(tokens: TokenSequence, params: ModelParams, cfg: ModelConfig) -> float:
    """Deterministic single-sequence score in (0, 1), dropout off."""
    if len(tokens.ids) != cfg.max_len:
        raise ShapeMismatch(f"sequence length {len(tokens.ids)} != max_len {cfg.max_len}")
    ids = np.asarray(tokens.ids, dtype=np.intp)[None]
    mask = np.asarray(tokens.attention_mask, dtype=np.float64)[None]
    score, _ = forward_batch(ids, mask, params, cfg)
    return float(score[0])


def loss_and_grads(
    ids: np.ndarray,
    mask: np.ndarray,
    gold: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
    train: bool = True,
    rng: Optional[np.random.Generator] = None,
):
    """MSE loss over a batch plus gradients for every parameter array.

    Gradient keys match ``ModelParams.named_arrays`` names; the shared
    relative table accumulates contributions from every layer.
    """
    score, cache = forward_batch(ids, mask, params, cfg, train=train, rng=rng)
    gold = np.asarray(gold, dtype=np.float64)
    n_batch = score.shape[0]
    diff = score - gold
    loss = float(np.mean(diff * diff))

    grads: dict[str, np.ndarray] = {
        name: np.zeros_like(arr) for name, arr in params.named_arrays()
    }

    dlogit = (2.0 / n_batch) * diff * score * (1.0 - score)
    pooled = cache["pooled"]
    grads["out_w"] += pooled.T @ dlogit
    grads["out_b"] += np.array([dlogit.sum()])
    dpooled = dlogit[:, None] * params.out_w[None, :]
    dpooled_pre = dpooled * (1.0 - pooled * pooled)
    grads["head_w"] += cache["cls"].T @ dpooled_pre
    grads["head_b"] += dpooled_pre.sum(axis=0)
    dcls = dpooled_pre @ params.head_w.T

    length = cache["length"]
    dx = np.zeros((n_batch, length, cfg.d_model))
    dx[:, 0] = dcls

    for li in range(cfg.layers - 1, -1, -1):
        lay = params.layers[li]
        blk = cache["blocks"][li]
        p = f"layers.{li}."

        # feed-forward sub-block
        d_used = dx @ lay.w2.T
        grads[p + "w2"] += blk["used"].reshape(-1, cfg.ffn_dim).T @ dx.reshape(-1, cfg.d_model)
        grads[p + "b2"] += dx.sum(axis=(0, 1))
        d_act = d_used if blk["ffn_drop"] is None else d_used * blk["ffn_drop"]
        d_pre = d_act * _gelu_grad_from(blk["pre"], blk["gelu_t"])
        grads[p + "w1"] += blk["n2"].reshape(-1, cfg.d_model).T @ d_pre.reshape(-1, cfg.ffn_dim)
        grads[p + "b1"] += d_pre.sum(axis=(0, 1))
        d_n2 = d_pre @ lay.w1.T
        d_xb, dg2, db2 = _layer_norm_backward(d_n2, blk["ln2"])
        grads[p + "ln2_g"] += dg2
        grads[p + "ln2_b"] += db2
        dx = dx + d_xb

        # attention sub-block
        agr = attn_mod.backward_batched(dx, blk["attn"])
        grads[p + "attn.wq_c"] += agr.dwq_c
        grads[p + "attn.wk_c"] += agr.dwk_c
        grads[p + "attn.wv"] += agr.dwv
        grads[p + "attn.wq_r"] += agr.dwq_r
        grads[p + "attn.wk_r"] += agr.dwk_r
        grads[p + "attn.wo"] += agr.dwo
        grads["rel_embed"] += agr.drel_embed
        d_n1, dg1, db1 = _layer_norm_backward(agr.dh, blk["ln1"])
        grads[p + "ln1_g"] += dg1
        grads[p + "ln1_b"] += db1
        dx = dx + d_n1

        if li == cache["inject_at"]:
            grads["abs_pos_embed"] += dx.sum(axis=0)

    np.add.at(grads["token_embed"], cache["ids"], dx)
    return loss, grads, score


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float = 1.0) -> float:
    """Scale all gradients in place so their joint L2 norm <= max_norm."""
    total = math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


class AdamState:
    """Adam with bias correction, one slot pair per parameter array."""

    def __init__(self, cfg: ModelConfig, params: ModelParams) -> None:
        self.lr = cfg.learning_rate
        self.b1 = cfg.adam_beta1
        self.b2 = cfg.adam_beta2
        self.eps = cfg.adam_eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in params.named_arrays()}
        self.v = {name: np.zeros_like(a) for name, a in params.named_arrays()}
        self._scratch = {name: np.empty_like(a) for name, a in params.named_arrays()}

    def update(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        """Apply one step in place; the gradient arrays are consumed."""
        self.t += 1
        correct1 = 1.0 - self.b1**self.t
        correct2 = 1.0 - self.b2**self.t
        step = self.lr / correct1
        spread = 1.0 / math.sqrt(correct2)
        for name, arr in params.named_arrays():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            sq = self._scratch[name]
            np.multiply(g, g, out=sq)
            sq *= 1.0 - self.b2
            v *= self.b2
            v += sq
            g *= 1.0 - self.b1
            m *= self.b1
            m += g
            np.sqrt(v, out=sq)
            sq *= spread
            sq += self.eps
            np.divide(m, sq, out=sq)
            sq *= step
            arr -= sq


def _encode_rows(
    d: Dataset, indices: Sequence[int], vocab: Vocabulary, cfg: ModelConfig
):
    ids = np.empty((len(indices), cfg.max_len), dtype=np.intp)
    mask = np.empty((len(indices), cfg.max_len), dtype=np.float64)
    gold = np.empty(len(indices), dtype=np.float64)
    for row, i in enumerate(indices):
        rec = d.records[i]
        seq = encode(rec.anchor, rec.target, rec.context, vocab, cfg.max_len, cfg.input_layout)
        ids[row] = seq.ids
        mask[row] = seq.attention_mask
        gold[row] = rec.score
    return ids, mask, gold


def _batched_scores(
    ids: np.ndarray, mask: np.ndarray, params: ModelParams, cfg: ModelConfig
) -> np.ndarray:
    out = np.empty(ids.shape[0], dtype=np.float64)
    for start in range(0, ids.shape[0], cfg.batch_size):
        stop = start + cfg.batch_size
        out[start:stop], _ = forward_batch(ids[start:stop], mask[start:stop], params, cfg)
    return out


def train(
    d: Dataset,
    split: tuple[Sequence[int], Sequence[int]],
    cfg: ModelConfig,
    vocab: Optional[Vocabulary] = None,
) -> tuple[ModelParams, TrainTrace]:
    """Fit on the train side of ``split``, tracking the validation side.

    The vocabulary defaults to one built from the training rows only,
    so nothing from the validation side leaks into the token table.
    Raises NonFiniteLoss as soon as a step produces a NaN or infinity.
    """
    train_idx = list(split[0])
    val_idx = list(split[1])
    if not train_idx or not val_idx:
        raise EmptySplit("both sides of the split must be non-empty")
    if set(train_idx) & set(val_idx):
        raise EmptySplit("train and validation indices overlap")

    if vocab is None:
        vocab = build_vocab(d.subset(train_idx), min_freq=1, max_size=cfg.vocab_size - 4)

    tr_ids, tr_mask, tr_gold = _encode_rows(d, train_idx, vocab, cfg)
    va_ids, va_mask, va_gold = _encode_rows(d, val_idx, vocab, cfg)

    params = init_params(cfg)
    opt = AdamState(cfg, params)
    rng = np.random.default_rng(cfg.seed)

    n_train = len(train_idx)
    steps_per_epoch = (n_train + cfg.batch_size - 1) // cfg.batch_size
    step_losses: list[float] = []
    val_losses: list[float] = []
    val_pearsons: list[Optional[float]] = []
    epoch_seconds: list[float] = []

    for _epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            pick = order[start : start + cfg.batch_size]
            loss, grads, _ = loss_and_grads(
                tr_ids[pick], tr_mask[pick], tr_gold[pick], params, cfg, train=True, rng=rng
            )
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"step {len(step_losses)}: loss is {loss!r}")
            clip_global_norm(grads, 1.0)
            opt.update(params, grads)
            step_losses.append(loss)
        preds = _batched_scores(va_ids, va_mask, params, cfg)
        errs = (preds - va_gold) ** 2
        val_losses.append(math.fsum(errs.tolist()) / len(errs))
        try:
            val_pearsons.append(pearson(va_gold, preds))
        except (ZeroVariance, LengthMismatch):
            val_pearsons.append(None)
        epoch_seconds.append(time.perf_counter() - started)

    trace = TrainTrace(
        step_losses=step_losses,
        val_losses=val_losses,
        val_pearsons=val_pearsons,
        epoch_seconds=epoch_seconds,
        steps_per_epoch=steps_per_epoch,
    )
    return params, trace


def predict(
    d: Dataset,
    indices: Sequence[int],
    params: ModelParams,
    cfg: ModelConfig,
    vocab: Vocabulary,
) -> np.ndarray:
    """Evaluation-mode scores for the given dataset rows."""
    ids, mask, _ = _encode_rows(d, list(indices), vocab, cfg)
    return _batched_scores(ids, mask, params, cfg)


def model_fold_trainer(
    d: Dataset, train_idx: Sequence[int], val_idx: Sequence[int], cfg: ModelConfig
) -> FoldOutcome:
    """Fold hook for cross-validation: train, then score the held-out rows."""
    vocab = build_vocab(d.subset(list(train_idx)), min_freq=1, max_size=cfg.vocab_size - 4)
    params, trace = train(d, (list(train_idx), list(val_idx)), cfg, vocab=vocab)
    preds = predict(d, val_idx, params, cfg, vocab)
    return FoldOutcome(
        predictions=preds.tolist(),
        train_loss=trace.final_epoch_train_loss(),
        trace=trace,
        extras={"params": params, "vocab": vocab, "config": cfg},
    )


_PRESETS = {
    # scaled-down trio keeping the originals' structural ratios:
    # base and small share width, small halves the depth; xsmall
    # halves the width at full depth
    "base": dict(layers=12, d_model=64, n_heads=4, ffn_dim=256),
    "small": dict(layers=6, d_model=64, n_heads=4, ffn_dim=256),
    "xsmall": dict(layers=12, d_model=32, n_heads=4, ffn_dim=128),
}


def presets(name: str) -> ModelConfig:
    """Named desk-scale configurations."""
    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}, expected one of {sorted(_PRESETS)}")
    spec = _PRESETS[name]
    max_len = 16
    return ModelConfig(
        layers=spec["layers"],
        ffn_dim=spec["ffn_dim"],
        vocab_size=8192,
        max_len=max_len,
        attention=AttentionConfig(
            d_model=spec["d_model"],
            n_heads=spec["n_heads"],
            max_rel_distance=max_len // 2,
        ),
    )


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)


def _config_from_dict(data: dict) -> ModelConfig:
    attn = AttentionConfig(**data["attention"])
    rest = {k: v for k, v in data.items() if k != "attention"}
    return ModelConfig(attention=attn, **rest)


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path: str | Path) -> Path:
    """Binary checkpoint: magic, config JSON block, raw float64 arrays.

    Arrays are written little-endian in declaration order with no
    per-array framing; shapes are fully determined by the config
    block. A JSON config echo is written next to the checkpoint.
    """
    path = Path(path)
    blob = json.dumps(config_dict(cfg), sort_keys=True).encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(MAGIC)
            handle.write(struct.pack("<I", len(blob)))
            handle.write(blob)
            for _name, arr in params.named_arrays():
                handle.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        Path(f"{path}.json").write_text(
            json.dumps(config_dict(cfg), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    """Inverse of save_checkpoint; bit-exact round trip."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint (bad magic bytes)")
    (blob_len,) = struct.unpack_from("<I", raw, len(MAGIC))
    header_end = len(MAGIC) + 4 + blob_len
    if len(raw) < header_end:
        raise ShapeMismatch(f"{path}: truncated config block")
    try:
        data = json.loads(raw[len(MAGIC) + 4 : header_end].decode("utf-8"))
        cfg = _config_from_dict(data)
    except (ValueError, KeyError, TypeError) as exc:
        raise ShapeMismatch(f"{path}: unreadable config block: {exc}") from exc

    flat: dict[str, np.ndarray] = {}
    offset = header_end
    for name, shape in _param_shapes(cfg).items():
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        need = count * 8
        if len(raw) - offset < need:
            raise ShapeMismatch(f"{path}: truncated at array {name!r}")
        flat[name] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += need
    if offset != len(raw):
        raise ShapeMismatch(f"{path}: {len(raw) - offset} trailing bytes")
    return _assemble(flat, cfg), cfg
