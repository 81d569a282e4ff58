"""Multi-head attention with disentangled content/position scoring.

Each token is represented by two vectors: its content embedding and a
shared relative-position embedding looked up by clamped signed offset.
The raw attention score between query position m and key position n is
the sum of up to four bilinear terms:

    content-to-content   Qc[m] . Kc[n]
    content-to-position  Qc[m] . Kr[bucket(m, n)]
    position-to-content  Qr[bucket(n, m)] . Kc[n]
    position-to-position Qr[bucket(m, n)] . Kr[bucket(n, m)]  (optional)

where Qc/Kc project the hidden states, Qr/Kr project a single shared
relative-embedding table, and bucket() clamps the signed offset into
2k buckets. The sum is scaled by 1/sqrt(T * d_head) with T the number
of terms that can be structurally non-zero, so a configuration whose
position parameters are all zero reduces exactly to standard scaled
dot-product attention.

Forward and backward passes are written out by hand over float64
arrays; the backward pass is validated against finite differences in
the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AllMasked, ConfigError, ShapeMismatch

SCALE_MODES = ("per_term", "global")


@dataclass(frozen=True)
class AttentionConfig:
    """Shape and behavior switches for one attention module.

    ``max_rel_distance`` is the clamp distance k: offsets at or beyond
    k (either direction) share the two boundary buckets, giving a
    relative-embedding table of 2k rows.
    """

    d_model: int
    n_heads: int
    max_rel_distance: int
    include_p2p: bool = True
    scale_mode: str = "per_term"

    def __post_init__(self) -> None:
        if self.d_model < 1 or self.n_heads < 1:
            raise ConfigError(f"d_model and n_heads must be positive, got {self.d_model}, {self.n_heads}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.max_rel_distance < 1:
            raise ConfigError(f"max_rel_distance must be >= 1, got {self.max_rel_distance}")
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"scale_mode {self.scale_mode!r} not in {SCALE_MODES}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def n_buckets(self) -> int:
        return 2 * self.max_rel_distance


@dataclass
class AttentionParams:
    """Projection weights for one attention module.

    ``rel_embed`` (2k x d_model) is the shared relative-position table;
    in a multi-layer model every layer aliases the same array.
    """

    wq_c: np.ndarray
    wk_c: np.ndarray
    wv: np.ndarray
    wq_r: np.ndarray
    wk_r: np.ndarray
    rel_embed: np.ndarray
    wo: np.ndarray


@dataclass
class ScoreMatrix:
    """Per-head raw scaled scores and the masked softmax over keys."""

    scores: np.ndarray  # (n_heads, L, L), before masking
    probs: np.ndarray  # (n_heads, L, L), rows sum to 1 over unmasked keys


@dataclass
class AttentionGrads:
    dh: np.ndarray
    dwq_c: np.ndarray
    dwk_c: np.ndarray
    dwv: np.ndarray
    dwq_r: np.ndarray
    dwk_r: np.ndarray
    drel_embed: np.ndarray
    dwo: np.ndarray


@dataclass
class AttentionCache:
    """Everything the backward pass needs from one forward pass."""

    h: np.ndarray
    mask: np.ndarray
    qc: np.ndarray
    kc: np.ndarray
    v: np.ndarray
    qr: np.ndarray
    kr: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    probs: np.ndarray
    used: np.ndarray
    drop: Optional[np.ndarray]
    merged: np.ndarray
    denom: float
    params: AttentionParams
    cfg: AttentionConfig


def relative_bucket(i: int, j: int, k: int) -> int:
    """Bucket index of query position i relative to key position j.

    The signed offset i - j is clamped to [-k, k-1] and shifted by k,
    so bucket 0 collects offsets <= -k and bucket 2k-1 collects
    offsets >= k. Depends only on the offset, never on absolute
    position.
    """
    delta = i - j
    if delta <= -k:
        return 0
    if delta >= k:
        return 2 * k - 1
    return delta + k


def bucket_matrix(length: int, k: int) -> np.ndarray:
    """(L, L) matrix with entry [m, n] = relative_bucket(m, n, k)."""
    pos = np.arange(length)
    delta = pos[:, None] - pos[None, :]
    return (np.clip(delta, -k, k - 1) + k).astype(np.intp)


# gather/scatter tables per (length, k); small and reused every step
_TABLES: dict = {}


def _bucket_tables(length: int, k: int):
    """Cached index machinery for one (sequence length, clamp) pair.

    Returns (b1, b2, b1_keys, key_cols, onehot, pair_flat):
      b1[m, n]      bucket of query m relative to key n
      b2            b1 transposed (key relative to query)
      b1_keys       b1 broadcast to (1, 1, L, L) for take_along_axis
      key_cols      (L, L) column index grid, key_cols[m, n] = n
      onehot        (L, L, 2k) float one-hot of b1, used as a scatter
                    matrix: contracting an (L, L) field against it sums
                    entries into their bucket
      pair_flat     (L*L,) flattened b1*2k+b2 joint bucket index
    """
    key = (length, k)
    hit = _TABLES.get(key)
    if hit is not None:
        return hit
    b1 = bucket_matrix(length, k)
    b2 = b1.T.copy()
    n_buckets = 2 * k
    onehot = np.zeros((length, length, n_buckets))
    rows = np.repeat(np.arange(length), length)
    cols = np.tile(np.arange(length), length)
    onehot[rows, cols, b1.ravel()] = 1.0
    tables = (
        b1,
        b2,
        b1[None, None, :, :],
        np.broadcast_to(np.arange(length)[None, :], (length, length)),
        onehot,
        (b1 * n_buckets + b2).ravel(),
    )
    _TABLES[key] = tables
    return tables


def masked_softmax(scores: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
    """Row softmax over keys, with masked keys pinned to probability 0.

    ``key_mask`` broadcasts against the key axis (last axis); every row
    must keep at least one unmasked key. Rows are shifted by their max
    before exponentiation, so the result is invariant (to rounding)
    under adding a constant to a row.
    """
    keep = np.asarray(key_mask, dtype=bool)
    if not np.all(np.any(keep, axis=-1)):
        raise AllMasked("attention mask hides every key position")
    shifted = np.where(keep[..., None, :], scores, -np.inf)
    shifted = shifted - np.max(shifted, axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / np.sum(weights, axis=-1, keepdims=True)


def active_term_count(params: AttentionParams, cfg: AttentionConfig) -> int:
    """Number of score terms that are not structurally zero.

    The content term always counts. A position term counts only when
    every factor on its path is a non-zero array, because a zero
    projection or a zero embedding table forces the whole term to
    vanish identically.
    """
    table = bool(np.any(params.rel_embed))
    query_side = table and bool(np.any(params.wq_r))
    key_side = table and bool(np.any(params.wk_r))
    count = 1
    if key_side:
        count += 1
    if query_side:
        count += 1
    if cfg.include_p2p and query_side and key_side:
        count += 1
    return count


def scale_denominator(params: AttentionParams, cfg: AttentionConfig) -> float:
    if cfg.scale_mode == "global":
        return math.sqrt(cfg.d_head)
    return math.sqrt(active_term_count(params, cfg) * cfg.d_head)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    """(..., L, d) -> (..., H, L, d/H); heads are contiguous slices."""
    *lead, length, d = x.shape
    out = x.reshape(*lead, length, n_heads, d // n_heads)
    return np.moveaxis(out, -2, -3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    """(..., H, L, dh) -> (..., L, H*dh); inverse of _split_heads."""
    moved = np.moveaxis(x, -3, -2)
    *lead, length, n_heads, dh = moved.shape
    return np.ascontiguousarray(moved).reshape(*lead, length, n_heads * dh)


def _validate_batched(h: np.ndarray, params: AttentionParams, cfg: AttentionConfig, mask: np.ndarray):
    if h.ndim != 3 or h.shape[2] != cfg.d_model:
        raise ShapeMismatch(f"hidden states must be (B, L, {cfg.d_model}), got {h.shape}")
    if mask.shape != h.shape[:2]:
        raise ShapeMismatch(f"mask shape {mask.shape} does not match sequence shape {h.shape[:2]}")
    if params.rel_embed.shape != (cfg.n_buckets, cfg.d_model):
        raise ShapeMismatch(
            f"relative table must be ({cfg.n_buckets}, {cfg.d_model}), got {params.rel_embed.shape}"
        )


def forward_batched(
    h: np.ndarray,
    params: AttentionParams,
    cfg: AttentionConfig,
    mask: np.ndarray,
    prob_dropout: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, AttentionCache]:
    """Batched forward pass.

    ``h`` is (B, L, d_model), ``mask`` is (B, L) with 1 marking real
    tokens. ``prob_dropout``, when given, is an already-scaled keep
    mask applied to the attention probabilities (training only).
    Returns (output, raw scaled scores, cache).
    """
    h = np.asarray(h, dtype=np.float64)
    mask = np.asarray(mask)
    _validate_batched(h, params, cfg, mask)
    n_heads = cfg.n_heads
    length = h.shape[1]
    k = cfg.max_rel_distance

    qc = _split_heads(h @ params.wq_c, n_heads)  # (B, H, L, dh)
    kc = _split_heads(h @ params.wk_c, n_heads)
    v = _split_heads(h @ params.wv, n_heads)
    qr = _split_heads(params.rel_embed @ params.wq_r, n_heads)  # (H, 2k, dh)
    kr = _split_heads(params.rel_embed @ params.wk_r, n_heads)

    b1, b2, b1_keys, key_cols, _, pair_flat = _bucket_tables(length, k)

    # each bilinear term is computed in bucket space with one batched
    # matmul and then gathered per (query, key) pair
    raw = qc @ kc.swapaxes(-1, -2)
    q_buckets = qc @ kr.swapaxes(-1, -2)[None]  # (B, H, L, 2k)
    raw += np.take_along_axis(q_buckets, b1_keys, axis=-1)
    k_buckets = kc @ qr.swapaxes(-1, -2)[None]  # (B, H, L, 2k), key indexed
    raw += k_buckets[:, :, key_cols, b2]
    if cfg.include_p2p:
        pp = qr @ kr.swapaxes(-1, -2)  # (H, 2k, 2k)
        raw += pp.reshape(n_heads, -1)[:, pair_flat].reshape(n_heads, length, length)[None]

    denom = scale_denominator(params, cfg)
    raw /= denom

    probs = masked_softmax(raw, mask[:, None, :])
    used = probs if prob_dropout is None else probs * prob_dropout
    merged = _merge_heads(used @ v)
    out = merged @ params.wo

    cache = AttentionCache(
        h=h, mask=np.asarray(mask, dtype=bool), qc=qc, kc=kc, v=v, qr=qr, kr=kr,
        b1=b1, b2=b2, probs=probs, used=used, drop=prob_dropout,
        merged=merged, denom=denom, params=params, cfg=cfg,
    )
    return out, raw, cache


def backward_batched(d_out: np.ndarray, cache: AttentionCache) -> AttentionGrads:
    """Gradients of a scalar loss through one batched forward pass.

    ``d_out`` must match the forward output shape. Returns gradients
    for the input hidden states and every parameter array, with the
    scale denominator treated as a constant (it is piecewise constant
    in the parameters and differentiable nowhere it changes).
    """
    d_out = np.asarray(d_out, dtype=np.float64)
    expected = (cache.h.shape[0], cache.h.shape[1], cache.cfg.d_model)
    if d_out.shape != expected:
        raise ShapeMismatch(f"upstream gradient shape {d_out.shape}, expected {expected}")

    params, cfg = cache.params, cache.cfg
    n_heads = cfg.n_heads
    n_batch, length = cache.h.shape[:2]
    n_buckets = cfg.n_buckets
    _, _, _, _, onehot, pair_flat = _bucket_tables(length, cfg.max_rel_distance)

    d_model = cfg.d_model
    dwo = cache.merged.reshape(-1, d_model).T @ d_out.reshape(-1, d_model)
    d_merged = d_out @ params.wo.T
    d_ctx = _split_heads(d_merged, n_heads)  # (B, H, L, dh)

    d_used = d_ctx @ cache.v.swapaxes(-1, -2)
    dv = cache.used.swapaxes(-1, -2) @ d_ctx
    d_probs = d_used if cache.drop is None else d_used * cache.drop

    # softmax backward; masked keys have prob 0, so their rows drop out
    inner = np.sum(d_probs * cache.probs, axis=-1, keepdims=True)
    d_raw = cache.probs * (d_probs - inner)
    d_raw /= cache.denom

    qc, kc, qr, kr = cache.qc, cache.kc, cache.qr, cache.kr
    dqc = d_raw @ kc
    dkc = d_raw.swapaxes(-1, -2) @ qc

    # collapse the key axis (resp. query axis) of d_raw into buckets,
    # then every position-term gradient is a plain batched matmul
    flat = n_batch * n_heads
    by_query = d_raw.transpose(2, 0, 1, 3).reshape(length, flat, length)
    dq_buckets = (by_query @ onehot).reshape(length, n_batch, n_heads, n_buckets)
    dq_buckets = dq_buckets.transpose(1, 2, 0, 3)  # (B, H, L, 2k)
    by_key = d_raw.transpose(3, 0, 1, 2).reshape(length, flat, length)
    dk_buckets = (by_key @ onehot).reshape(length, n_batch, n_heads, n_buckets)
    dk_buckets = dk_buckets.transpose(1, 2, 0, 3)

    dqc += dq_buckets @ kr[None]
    dkc += dk_buckets @ qr[None]

    def _into_buckets(bucketed: np.ndarray, states: np.ndarray) -> np.ndarray:
        lhs = bucketed.transpose(1, 3, 0, 2).reshape(n_heads, n_buckets, -1)
        rhs = states.transpose(1, 0, 2, 3).reshape(n_heads, -1, cfg.d_head)
        return lhs @ rhs

    dkr = _into_buckets(dq_buckets, qc)
    dqr = _into_buckets(dk_buckets, kc)
    if cfg.include_p2p:
        d_sum = d_raw.sum(axis=0)  # (H, L, L)
        dpp = np.empty((n_heads, n_buckets, n_buckets))
        for head in range(n_heads):
            dpp[head] = np.bincount(
                pair_flat, weights=d_sum[head].ravel(), minlength=n_buckets * n_buckets
            ).reshape(n_buckets, n_buckets)
        dqr += dpp @ kr
        dkr += dpp.swapaxes(-1, -2) @ qr

    dqc_full = _merge_heads(dqc)
    dkc_full = _merge_heads(dkc)
    dv_full = _merge_heads(dv)
    dqr_full = _merge_heads(dqr)  # (2k, d_model)
    dkr_full = _merge_heads(dkr)

    h = cache.h
    h2 = h.reshape(-1, d_model)
    dh = dqc_full @ params.wq_c.T + dkc_full @ params.wk_c.T + dv_full @ params.wv.T
    return AttentionGrads(
        dh=dh,
        dwq_c=h2.T @ dqc_full.reshape(-1, d_model),
        dwk_c=h2.T @ dkc_full.reshape(-1, d_model),
        dwv=h2.T @ dv_full.reshape(-1, d_model),
        dwq_r=params.rel_embed.T @ dqr_full,
        dwk_r=params.rel_embed.T @ dkr_full,
        drel_embed=dqr_full @ params.wq_r.T + dkr_full @ params.wk_r.T,
        dwo=dwo,
    )


def disentangled_scores(
    h: np.ndarray, params: AttentionParams, cfg: AttentionConfig, mask: np.ndarray
) -> ScoreMatrix:
    """Raw scaled scores and masked softmax for one (L, d) sequence."""
    _, raw, cache = forward_batched(
        np.asarray(h, dtype=np.float64)[None], params, cfg, np.asarray(mask)[None]
    )
    return ScoreMatrix(scores=raw[0], probs=cache.probs[0])


def attention_forward(
    h: np.ndarray, params: AttentionParams, cfg: AttentionConfig, mask: np.ndarray
) -> tuple[np.ndarray, ScoreMatrix]:
    """Full attention for one (L, d) sequence: project, score, mix."""
    out, raw, cache = forward_batched(
        np.asarray(h, dtype=np.float64)[None], params, cfg, np.asarray(mask)[None]
    )
    return out[0], ScoreMatrix(scores=raw[0], probs=cache.probs[0])


def attention_forward_with_cache(
    h: np.ndarray, params: AttentionParams, cfg: AttentionConfig, mask: np.ndarray
) -> tuple[np.ndarray, ScoreMatrix, AttentionCache]:
    """Like attention_forward but also returns the backward cache."""
    out, raw, cache = forward_batched(
        np.asarray(h, dtype=np.float64)[None], params, cfg, np.asarray(mask)[None]
    )
    return out[0], ScoreMatrix(scores=raw[0], probs=cache.probs[0]), cache


def attention_backward(d_out: np.ndarray, cache: AttentionCache) -> AttentionGrads:
    """Gradients for one (L, d) upstream gradient and its cache."""
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.ndim == 2:
        grads = backward_batched(d_out[None], cache)
        grads.dh = grads.dh[0]
        return grads
    return backward_batched(d_out, cache)
