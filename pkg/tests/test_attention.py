import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phraselab.attention import (
    AttentionConfig,
    AttentionParams,
    active_term_count,
    attention_backward,
    attention_forward,
    attention_forward_with_cache,
    bucket_matrix,
    disentangled_scores,
    forward_batched,
    backward_batched,
    masked_softmax,
    relative_bucket,
    scale_denominator,
)
from phraselab.errors import AllMasked, ConfigError, ShapeMismatch


def small_config(**overrides):
    base = dict(d_model=8, n_heads=2, max_rel_distance=3)
    base.update(overrides)
    return AttentionConfig(**base)


def random_params(cfg, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    d, nb = cfg.d_model, cfg.n_buckets
    return AttentionParams(
        wq_c=rng.normal(0, scale, (d, d)),
        wk_c=rng.normal(0, scale, (d, d)),
        wv=rng.normal(0, scale, (d, d)),
        wq_r=rng.normal(0, scale, (d, d)),
        wk_r=rng.normal(0, scale, (d, d)),
        rel_embed=rng.normal(0, scale, (nb, d)),
        wo=rng.normal(0, scale, (d, d)),
    )


def zero_position_params(params):
    return AttentionParams(
        wq_c=params.wq_c, wk_c=params.wk_c, wv=params.wv,
        wq_r=np.zeros_like(params.wq_r), wk_r=np.zeros_like(params.wk_r),
        rel_embed=np.zeros_like(params.rel_embed), wo=params.wo,
    )


# ---------------------------------------------------------------- buckets

def test_bucket_center_and_clamps():
    assert relative_bucket(5, 5, 4) == 4
    assert relative_bucket(0, 10, 4) == 0
    assert relative_bucket(9, 2, 4) == 7


def test_bucket_full_sweep_small_k():
    # k=2: offsets -3 -2 -1 0 1 2 3 -> buckets 0 0 1 2 3 3 3
    got = [relative_bucket(i, 5, 2) for i in range(2, 9)]
    assert got == [0, 0, 1, 2, 3, 3, 3]


@settings(max_examples=150, deadline=None)
@given(
    st.integers(0, 50), st.integers(0, 50),
    st.integers(0, 30), st.integers(1, 12),
)
def test_bucket_translation_invariance(i, j, c, k):
    assert relative_bucket(i + c, j + c, k) == relative_bucket(i, j, k)


def test_bucket_matrix_matches_scalar():
    for length, k in ((1, 1), (5, 2), (7, 3), (4, 9)):
        mat = bucket_matrix(length, k)
        assert mat.shape == (length, length)
        for m in range(length):
            for n in range(length):
                assert mat[m, n] == relative_bucket(m, n, k)


# ----------------------------------------------------------- masked softmax

def test_masked_softmax_rows_sum_to_one():
    rng = np.random.default_rng(11)
    for _ in range(50):
        scores = rng.normal(0, 5, (3, 6, 6))
        mask = (rng.random(6) > 0.3).astype(float)
        mask[0] = 1.0
        probs = masked_softmax(scores, mask[None, :])
        sums = probs.sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) < 1e-9)
        assert np.all(probs[..., mask == 0] == 0.0)


def test_masked_softmax_shift_invariance():
    rng = np.random.default_rng(12)
    scores = rng.normal(0, 2, (4, 5, 5))
    mask = np.ones(5)
    base = masked_softmax(scores, mask)
    shifted = masked_softmax(scores + 17.25, mask)
    assert np.max(np.abs(base - shifted)) < 1e-12


def test_masked_softmax_all_masked_raises():
    with pytest.raises(AllMasked):
        masked_softmax(np.zeros((2, 3, 3)), np.zeros(3))


def test_masked_softmax_single_key_is_certain():
    mask = np.array([0.0, 1.0, 0.0])
    probs = masked_softmax(np.full((2, 3, 3), 9.0), mask)
    assert np.all(probs[..., 1] == 1.0)


# ------------------------------------------------------- term accounting

def test_active_term_count_structural():
    cfg = small_config(include_p2p=True)
    params = random_params(cfg, 0)
    assert active_term_count(params, cfg) == 4
    assert active_term_count(zero_position_params(params), cfg) == 1

    only_key = random_params(cfg, 1)
    only_key.wq_r = np.zeros_like(only_key.wq_r)
    assert active_term_count(only_key, cfg) == 2  # c2c + c2p

    only_query = random_params(cfg, 2)
    only_query.wk_r = np.zeros_like(only_query.wk_r)
    assert active_term_count(only_query, cfg) == 2  # c2c + p2c

    no_table = random_params(cfg, 3)
    no_table.rel_embed = np.zeros_like(no_table.rel_embed)
    assert active_term_count(no_table, cfg) == 1

    no_p2p = small_config(include_p2p=False)
    assert active_term_count(random_params(no_p2p, 4), no_p2p) == 3


def test_scale_denominator_modes():
    cfg = small_config()
    params = random_params(cfg, 5)
    assert scale_denominator(params, cfg) == math.sqrt(4 * cfg.d_head)
    gcfg = small_config(scale_mode="global")
    assert scale_denominator(params, gcfg) == math.sqrt(gcfg.d_head)


def test_config_validation():
    with pytest.raises(ConfigError):
        AttentionConfig(d_model=7, n_heads=2, max_rel_distance=3)
    with pytest.raises(ConfigError):
        AttentionConfig(d_model=8, n_heads=2, max_rel_distance=0)
    with pytest.raises(ConfigError):
        AttentionConfig(d_model=8, n_heads=2, max_rel_distance=3, scale_mode="weird")


# -------------------------------------------------------- scalar oracles

def scalar_scores_oracle(h, params, cfg):
    """Straight-line per-entry evaluation of the four-term score sum.

    Deliberately naive: scalar loops, explicit bucket calls, no shared
    code with the implementation under test.
    """
    length = h.shape[0]
    heads, dh, k = cfg.n_heads, cfg.d_head, cfg.max_rel_distance
    qc = h @ params.wq_c
    kc = h @ params.wk_c
    qr = params.rel_embed @ params.wq_r
    kr = params.rel_embed @ params.wk_r
    denom = scale_denominator(params, cfg)
    out = np.zeros((heads, length, length))
    for head in range(heads):
        sl = slice(head * dh, (head + 1) * dh)
        for m in range(length):
            for n in range(length):
                s = float(qc[m, sl] @ kc[n, sl])
                s += float(qc[m, sl] @ kr[relative_bucket(m, n, k), sl])
                s += float(qr[relative_bucket(n, m, k), sl] @ kc[n, sl])
                if cfg.include_p2p:
                    s += float(
                        qr[relative_bucket(m, n, k), sl]
                        @ kr[relative_bucket(n, m, k), sl]
                    )
                out[head, m, n] = s / denom
    return out


def scalar_forward_oracle(h, params, cfg, mask):
    scores = scalar_scores_oracle(h, params, cfg)
    length = h.shape[0]
    heads, dh = cfg.n_heads, cfg.d_head
    v = h @ params.wv
    mixed = np.zeros((length, cfg.d_model))
    for head in range(heads):
        sl = slice(head * dh, (head + 1) * dh)
        for m in range(length):
            exps = [
                math.exp(scores[head, m, n]) if mask[n] else 0.0
                for n in range(length)
            ]
            z = sum(exps)
            for n in range(length):
                mixed[m, sl] += (exps[n] / z) * v[n, sl]
    return mixed @ params.wo


def test_two_token_scores_match_scalar_oracle():
    cfg = AttentionConfig(d_model=2, n_heads=1, max_rel_distance=1)
    params = AttentionParams(
        wq_c=np.array([[1.0, 2.0], [-1.0, 0.5]]),
        wk_c=np.array([[0.5, -1.0], [2.0, 1.0]]),
        wv=np.array([[1.0, 0.0], [0.0, 1.0]]),
        wq_r=np.array([[0.25, -0.5], [1.0, 0.75]]),
        wk_r=np.array([[-0.75, 0.5], [0.25, -1.0]]),
        rel_embed=np.array([[1.0, -1.0], [0.5, 2.0]]),
        wo=np.array([[1.0, 1.0], [-1.0, 1.0]]),
    )
    h = np.array([[0.5, -1.5], [2.0, 0.25]])
    mask = np.ones(2)
    sm = disentangled_scores(h, params, cfg, mask)
    expected = scalar_scores_oracle(h, params, cfg)
    assert np.max(np.abs(sm.scores - expected)) < 1e-12


def test_random_instances_match_scalar_oracle():
    rng = np.random.default_rng(77)
    for seed, p2p in ((1, True), (2, False), (3, True)):
        cfg = small_config(include_p2p=p2p)
        params = random_params(cfg, seed)
        h = rng.normal(0, 1, (5, cfg.d_model))
        mask = np.array([1.0, 1.0, 1.0, 1.0, 0.0])
        out, sm = attention_forward(h, params, cfg, mask)
        assert np.max(np.abs(sm.scores - scalar_scores_oracle(h, params, cfg))) < 1e-12
        assert np.max(np.abs(out - scalar_forward_oracle(h, params, cfg, mask))) < 1e-12


# --------------------------------------------------- structural reductions

def test_zero_position_equals_standard_attention():
    """With position parameters zeroed the module must reduce exactly
    to softmax(Qc Kc^T / sqrt(d_head)) V, head by head."""
    rng = np.random.default_rng(21)
    cfg = small_config(include_p2p=False)
    params = zero_position_params(random_params(cfg, 6))
    h = rng.normal(0, 1, (6, cfg.d_model))
    mask = np.ones(6)
    out, sm = attention_forward(h, params, cfg, mask)

    dh = cfg.d_head
    expected = np.zeros_like(h)
    for head in range(cfg.n_heads):
        sl = slice(head * dh, (head + 1) * dh)
        q = h @ params.wq_c[:, sl]
        kk = h @ params.wk_c[:, sl]
        v = h @ params.wv[:, sl]
        s = q @ kk.T / math.sqrt(dh)
        e = np.exp(s - s.max(axis=1, keepdims=True))
        a = e / e.sum(axis=1, keepdims=True)
        expected[:, sl] = a @ v
    expected = expected @ params.wo
    assert np.max(np.abs(out - expected)) < 1e-12


def test_zero_hidden_states_give_uniform_rows():
    cfg = small_config(include_p2p=True)
    params = AttentionParams(
        wq_c=np.zeros((8, 8)), wk_c=np.zeros((8, 8)), wv=np.zeros((8, 8)),
        wq_r=np.zeros((8, 8)), wk_r=np.zeros((8, 8)),
        rel_embed=np.zeros((cfg.n_buckets, 8)), wo=np.zeros((8, 8)),
    )
    sm = disentangled_scores(np.zeros((4, 8)), params, cfg, np.ones(4))
    assert np.max(np.abs(sm.probs - 0.25)) < 1e-12


def test_diagonal_dominant_scores_force_identity_mixing():
    d = 4
    cfg = AttentionConfig(d_model=d, n_heads=1, max_rel_distance=2)
    params = AttentionParams(
        wq_c=np.eye(d) * 10.0, wk_c=np.eye(d) * 10.0,
        wv=np.random.default_rng(8).normal(0, 1, (d, d)),
        wq_r=np.zeros((d, d)), wk_r=np.zeros((d, d)),
        rel_embed=np.zeros((cfg.n_buckets, d)),
        wo=np.random.default_rng(9).normal(0, 1, (d, d)),
    )
    h = np.eye(d)  # orthonormal rows: off-diagonal scores collapse
    out, _ = attention_forward(h, params, cfg, np.ones(d))
    assert np.max(np.abs(out - h @ params.wv @ params.wo)) < 1e-12


def test_equal_values_under_uniform_mixing_give_equal_rows():
    cfg = small_config()
    params = zero_position_params(random_params(cfg, 10))
    params.wq_c = np.zeros_like(params.wq_c)  # scores all zero -> uniform
    h = np.tile(np.linspace(-1, 1, cfg.d_model), (2, 1))
    out, sm = attention_forward(h, params, cfg, np.ones(2))
    assert np.max(np.abs(sm.probs - 0.5)) < 1e-12
    assert np.max(np.abs(out[0] - out[1])) < 1e-12


# ------------------------------------------------------------- validation

def test_shape_validation():
    cfg = small_config()
    params = random_params(cfg, 30)
    with pytest.raises(ShapeMismatch):
        forward_batched(np.zeros((2, 4, 5)), params, cfg, np.ones((2, 4)))
    with pytest.raises(ShapeMismatch):
        forward_batched(np.zeros((2, 4, 8)), params, cfg, np.ones((2, 5)))
    bad = random_params(cfg, 31)
    bad.rel_embed = np.zeros((3, cfg.d_model))
    with pytest.raises(ShapeMismatch):
        forward_batched(np.zeros((2, 4, 8)), bad, cfg, np.ones((2, 4)))


def test_backward_rejects_wrong_upstream_shape():
    cfg = small_config()
    params = random_params(cfg, 32)
    h = np.random.default_rng(0).normal(0, 1, (2, 4, 8))
    _, _, cache = forward_batched(h, params, cfg, np.ones((2, 4)))
    with pytest.raises(ShapeMismatch):
        backward_batched(np.zeros((2, 5, 8)), cache)


# -------------------------------------------------------------- gradients

def test_zero_upstream_gradient_zeroes_everything():
    cfg = small_config()
    params = random_params(cfg, 40)
    h = np.random.default_rng(41).normal(0, 1, (4, cfg.d_model))
    out, _, cache = forward_batched(h[None], params, cfg, np.ones((1, 4)))
    grads = backward_batched(np.zeros_like(out), cache)
    for field in ("dh", "dwq_c", "dwk_c", "dwv", "dwq_r", "dwk_r", "drel_embed", "dwo"):
        assert np.all(getattr(grads, field) == 0.0)


def test_single_sequence_wrappers_agree_with_batched():
    cfg = small_config()
    params = random_params(cfg, 50)
    h = np.random.default_rng(51).normal(0, 1, (5, cfg.d_model))
    mask = np.ones(5)
    out1, sm, cache = attention_forward_with_cache(h, params, cfg, mask)
    out2, _, _ = forward_batched(h[None], params, cfg, mask[None])
    assert np.array_equal(out1, out2[0])
    d_out = np.random.default_rng(52).normal(0, 1, h.shape)
    grads = attention_backward(d_out, cache)
    assert grads.dh.shape == h.shape
    ref = backward_batched(d_out[None], cache)
    assert np.array_equal(grads.dwq_r, ref.dwq_r)
    assert np.array_equal(grads.dh, ref.dh[0])


def test_single_unmasked_key_pins_softmax_gradient():
    """One visible key pins every probability row at exactly 1, so no
    gradient can flow back through the score matrix."""
    cfg = small_config()
    params = random_params(cfg, 42)
    h = np.random.default_rng(43).normal(0, 1, (1, 3, cfg.d_model))
    mask = np.array([[1.0, 0.0, 0.0]])
    out, _, cache = forward_batched(h, params, cfg, mask)
    grads = backward_batched(np.random.default_rng(44).normal(0, 1, out.shape), cache)
    for field in ("dwq_c", "dwk_c", "dwq_r", "dwk_r"):
        assert np.all(getattr(grads, field) == 0.0)
    assert np.any(grads.dwv != 0.0)
    assert np.any(grads.dwo != 0.0)


def finite_difference_check(cfg, seed, with_dropout=False, h_step=1e-5, tol=1e-4):
    rng = np.random.default_rng(seed)
    length = int(rng.integers(2, 6))
    n_batch = int(rng.integers(1, 3))
    params = random_params(cfg, seed + 1000)
    h = rng.normal(0, 1, (n_batch, length, cfg.d_model))
    mask = np.ones((n_batch, length))
    if length > 2:
        mask[0, -1] = 0.0
    drop = None
    if with_dropout:
        drop = (rng.random((n_batch, cfg.n_heads, length, length)) >= 0.2) / 0.8
    d_out = rng.normal(0, 1, h.shape)

    def run():
        out, _, cache = forward_batched(h, params, cfg, mask, drop)
        return float(np.sum(out * d_out)), cache

    loss0, cache = run()
    grads = backward_batched(d_out, cache)
    targets = {
        "wq_c": (params.wq_c, grads.dwq_c),
        "wk_c": (params.wk_c, grads.dwk_c),
        "wv": (params.wv, grads.dwv),
        "wq_r": (params.wq_r, grads.dwq_r),
        "wk_r": (params.wk_r, grads.dwk_r),
        "rel_embed": (params.rel_embed, grads.drel_embed),
        "wo": (params.wo, grads.dwo),
    }
    worst = 0.0
    for name, (arr, an) in targets.items():
        flat = arr.reshape(-1)
        for idx in rng.choice(flat.size, size=3, replace=False):
            keep = flat[idx]
            flat[idx] = keep + h_step
            up, _ = run()
            flat[idx] = keep - h_step
            down, _ = run()
            flat[idx] = keep
            fd = (up - down) / (2 * h_step)
            a = an.reshape(-1)[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, rel)
            assert rel < tol, (name, idx, a, fd, rel)
    # input gradient too
    hf = h.reshape(-1)
    for idx in rng.choice(hf.size, size=4, replace=False):
        keep = hf[idx]
        hf[idx] = keep + h_step
        up, _ = run()
        hf[idx] = keep - h_step
        down, _ = run()
        hf[idx] = keep
        fd = (up - down) / (2 * h_step)
        a = grads.dh.reshape(-1)[idx]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
        worst = max(worst, rel)
        assert rel < tol, ("h", idx, a, fd, rel)
    return worst


def test_gradients_match_finite_differences():
    for seed, p2p, mode in (
        (1, True, "per_term"),
        (2, False, "per_term"),
        (3, True, "global"),
    ):
        cfg = small_config(include_p2p=p2p, scale_mode=mode)
        finite_difference_check(cfg, seed)


def test_gradients_match_finite_differences_with_dropout():
    finite_difference_check(small_config(), 9, with_dropout=True)


def test_single_head_full_table_gradients():
    cfg = AttentionConfig(d_model=6, n_heads=1, max_rel_distance=5)
    finite_difference_check(cfg, 13)
