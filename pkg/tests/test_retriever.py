import numpy as np
import pytest

from sistream.core import KnowledgeItem
from sistream.retriever import (
    FeatureConfig,
    FusionParams,
    KnowledgeBase,
    TrainExample,
    TrainHyper,
    bce_loss,
    eval_recall,
    example_gradients,
    featurize,
    init_params,
    score,
    top_k,
    train,
)


def fd_gradients(params, key_vecs, window_vecs, label, eps=1e-4):
    """Central finite differences of the loss over every parameter entry."""

    def loss_at(p):
        value, _ = bce_loss(score(p, key_vecs, window_vecs), label)
        return value

    grads = {}
    for name in ("W_q", "W_k", "W_v", "w"):
        base = getattr(params, name)
        g = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            p2 = params.copy()
            getattr(p2, name)[idx] += eps
            up = loss_at(p2)
            p2 = params.copy()
            getattr(p2, name)[idx] -= eps
            down = loss_at(p2)
            g[idx] = (up - down) / (2 * eps)
            it.iternext()
        grads[name] = g
    p2 = params.copy()
    p2.b += eps
    up = loss_at(p2)
    p2 = params.copy()
    p2.b -= eps
    down = loss_at(p2)
    grads["b"] = (up - down) / (2 * eps)
    return grads


def max_relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
    return float(np.max(np.abs(a - n) / denom))


# --- featurization ----------------------------------------------------------


def test_featurize_deterministic():
    cfg = FeatureConfig()
    a = featurize(["hello", "world"], cfg)
    b = featurize(["hello", "world"], cfg)
    assert np.array_equal(a, b)
    assert a.shape == (2, cfg.dim)
    assert np.array_equal(a[0], featurize(["hello"], cfg)[0])


def test_featurize_seed_changes_vectors():
    a = featurize(["hello"], FeatureConfig(projection_seed=0))
    b = featurize(["hello"], FeatureConfig(projection_seed=1))
    assert not np.allclose(a, b)


def test_featurize_gram_count_matches_enumeration():
    # "abc" padded to "^abc$" has exactly 3 trigram hits: ^ab, abc, bc$
    cfg = FeatureConfig(n_gram=3, hash_buckets=64, dim=8)
    vec = featurize(["abc"], cfg)[0]
    # each gram contributes a +-1/sqrt(d) row: total squared norm == 3*(8/64)...
    # safer: reconstruct from the gram set directly
    from sistream.retriever import _bucket, _grams, _projection

    grams = _grams("abc", 3)
    assert grams == ["^ab", "abc", "bc$"]
    proj = _projection(64, 8, 0)
    expected = sum(proj[_bucket(g, 64)] for g in grams)
    assert np.allclose(vec, expected)


def test_featurize_rejects_empty():
    with pytest.raises(ValueError, match="nothing to encode"):
        featurize([], FeatureConfig())


def test_featurize_string_splits_on_whitespace():
    cfg = FeatureConfig()
    assert featurize("Ising model", cfg).shape == (2, cfg.dim)
    assert featurize("伊辛模型", cfg).shape == (1, cfg.dim)


# --- scoring ----------------------------------------------------------------


def zero_params(cfg):
    d = cfg.dim
    return FusionParams(
        cfg=cfg,
        W_q=np.zeros((d, d)),
        W_k=np.zeros((d, d)),
        W_v=np.zeros((d, d)),
        w=np.zeros(d),
        b=0.0,
    )


def test_zero_params_score_half():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    params = zero_params(cfg)
    kv = featurize(["key"], cfg)
    wv = featurize(["a", "b", "c"], cfg)
    assert score(params, kv, wv) == pytest.approx(0.5)


def test_bias_saturates_score():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    params = zero_params(cfg)
    params.b = 10.0
    kv = featurize(["key"], cfg)
    wv = featurize(["a"], cfg)
    assert score(params, kv, wv) == pytest.approx(0.99995, abs=1e-5)


def test_identical_window_rows_are_permutation_invariant():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    params = init_params(cfg, seed=3)
    kv = featurize(["key"], cfg)
    wv = featurize(["same", "same", "same"], cfg)
    assert score(params, kv, wv) == score(params, kv, wv[::-1].copy())


def test_score_bounded_and_monotone_in_bias():
    rng = np.random.default_rng(61)
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    for seed in range(10):
        params = init_params(cfg, seed=seed)
        kv = featurize([f"k{seed}"], cfg)
        wv = featurize([f"w{i}" for i in range(int(rng.integers(1, 6)))], cfg)
        s0 = score(params, kv, wv)
        assert 0.0 < s0 < 1.0
        params.b += 1.0
        assert score(params, kv, wv) > s0


def test_score_shape_mismatch():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    params = init_params(cfg)
    other = featurize(["x"], FeatureConfig(dim=8, hash_buckets=64))
    with pytest.raises(ValueError, match="dim mismatch"):
        score(params, other, other)


# --- loss -------------------------------------------------------------------


def test_bce_values():
    loss, grad = bce_loss(0.5, 1)
    assert loss == pytest.approx(np.log(2))
    assert grad == pytest.approx(-0.5)
    loss, _ = bce_loss(0.5, 0)
    assert loss == pytest.approx(np.log(2))
    loss, _ = bce_loss(1.0 - 1e-12, 1)
    assert loss < 1e-6


def test_bce_clamps():
    loss, _ = bce_loss(0.0, 1)
    assert np.isfinite(loss)


# --- gradients --------------------------------------------------------------


@pytest.mark.parametrize("heads,m,L", [(1, 1, 4), (2, 2, 3), (4, 3, 5)])
def test_analytic_gradients_match_finite_differences(heads, m, L):
    cfg = FeatureConfig(dim=8, heads=heads, hash_buckets=64, projection_seed=7)
    params = init_params(cfg, seed=heads, scale=0.3, tie_qk=False)
    kv = featurize([f"key{i}" for i in range(m)], cfg)
    wv = featurize([f"win{i}" for i in range(L)], cfg)
    for label in (0, 1):
        _, analytic = example_gradients(params, kv, wv, label)
        numeric = fd_gradients(params, kv, wv, label)
        for name in ("W_q", "W_k", "W_v", "w", "b"):
            err = max_relative_error(getattr(analytic, name), numeric[name])
            assert err <= 1e-4, f"{name}: {err}"


# --- training ---------------------------------------------------------------


def separable_examples(n_keys=12, seed=0, n_fillers=20, win=5, negs=3):
    """Positives contain their key verbatim among shared filler words."""
    rng = np.random.default_rng(seed)
    fillers = [f"common{i}" for i in range(n_fillers)]
    keys = [f"term{i}" for i in range(n_keys)]
    examples = []
    for i, key in enumerate(keys):
        window = [str(x) for x in rng.choice(fillers, size=win)] + [key]
        rng.shuffle(window)
        examples.append(TrainExample(window, key, 1))
        for _ in range(negs):
            j = int(rng.integers(0, n_keys - 1))
            absent = keys[j if j < i else j + 1]
            examples.append(TrainExample(window, absent, 0))
    return examples


def test_training_reaches_low_loss_on_separable_set():
    cfg = FeatureConfig(dim=32, hash_buckets=512, projection_seed=1)
    examples = separable_examples()
    result = train(
        init_params(cfg, seed=5, scale=0.3),
        examples,
        TrainHyper(lr=0.5, epochs=150, batch=8, seed=5),
    )
    assert result.final_loss < 0.1


def test_training_loss_nonincreasing():
    # full-batch descent in the smooth regime: small set, modest lr
    examples = separable_examples(n_keys=4, win=4)
    cfg = FeatureConfig(dim=16, hash_buckets=128, projection_seed=1)
    result = train(
        init_params(cfg, seed=5, scale=0.3),
        examples,
        TrainHyper(lr=0.2, epochs=600, batch=len(examples), seed=5),
    )
    assert result.final_loss < 0.1
    for before, after in zip(result.epoch_losses, result.epoch_losses[1:]):
        assert after <= before + 1e-6


def test_training_requires_both_classes():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    ones = [TrainExample(["a", "b"], "a", 1)]
    with pytest.raises(ValueError, match="both classes required"):
        train(init_params(cfg), ones)


def test_training_deterministic():
    cfg = FeatureConfig(dim=16, hash_buckets=128)
    examples = separable_examples(n_keys=6)
    hyper = TrainHyper(lr=0.3, epochs=5, batch=4, seed=2)
    a = train(init_params(cfg, seed=1), examples, hyper)
    b = train(init_params(cfg, seed=1), examples, hyper)
    assert a.epoch_losses == b.epoch_losses
    assert np.array_equal(a.params.W_q, b.params.W_q)


# --- retrieval --------------------------------------------------------------


def test_top_k_single_item_kb():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    params = init_params(cfg)
    kb = KnowledgeBase([KnowledgeItem("only", "value")])
    out = top_k(params, kb, featurize(["x"], cfg), k=3)
    assert [i.key for i in out] == ["only"]


def test_top_k_tie_breaks_lexicographically():
    cfg = FeatureConfig(dim=16, hash_buckets=64)
    params = zero_params(cfg)  # constant scorer: every key scores 0.5
    kb = KnowledgeBase([KnowledgeItem("zeta", "1"), KnowledgeItem("alpha", "2")])
    out = top_k(params, kb, featurize(["x"], cfg), k=1)
    assert out[0].key == "alpha"


def test_top_k_deterministic():
    cfg = FeatureConfig(dim=16, hash_buckets=128)
    params = init_params(cfg, seed=9)
    kb = KnowledgeBase([KnowledgeItem(f"k{i}", str(i)) for i in range(30)])
    wv = featurize(["box", "fox"], cfg)
    assert [i.key for i in top_k(params, kb, wv, 7)] == [
        i.key for i in top_k(params, kb, wv, 7)
    ]


def test_eval_recall_perfect_and_exhaustive():
    cfg = FeatureConfig(dim=16, hash_buckets=128)
    params = init_params(cfg, seed=9)
    kb = KnowledgeBase([KnowledgeItem(f"k{i}", str(i)) for i in range(5)])
    labeled = [(["k0", "junk"], ["k0"]), (["k3"], ["k3"])]
    assert eval_recall(params, labeled, kb, k=5) == 1.0  # k == |kb| is exhaustive


def test_eval_recall_missing_key_is_error():
    cfg = FeatureConfig(dim=16, hash_buckets=128)
    params = init_params(cfg)
    kb = KnowledgeBase([KnowledgeItem("a", "1")])
    with pytest.raises(ValueError, match="missing"):
        eval_recall(params, [(["x"], ["nope"])], kb, k=1)


def test_constant_scorer_recall_matches_combinatorics():
    # fixed top-10 out of 200 keys: expected recall == 10/200 for random truths
    cfg = FeatureConfig(dim=16, hash_buckets=256)
    params = zero_params(cfg)
    kb = KnowledgeBase([KnowledgeItem(f"key{i:03d}", str(i)) for i in range(200)])
    rng = np.random.default_rng(71)
    labeled = []
    for _ in range(1000):
        true_key = f"key{int(rng.integers(0, 200)):03d}"
        labeled.append(([true_key, "noise"], [true_key]))
    recall = eval_recall(params, labeled, kb, k=10)
    assert recall == pytest.approx(0.05, abs=0.03)


def test_kb_round_trip(tmp_path):
    kb = KnowledgeBase(
        [KnowledgeItem("伊辛模型", "Ising model"), KnowledgeItem("q", "explanation here")]
    )
    path = tmp_path / "kb.tsv"
    path.write_text("\n".join(kb.to_tsv()) + "\n", encoding="utf-8")
    back = KnowledgeBase.from_tsv(str(path))
    assert back == kb


def test_kb_rejects_duplicates():
    with pytest.raises(ValueError, match="duplicate"):
        KnowledgeBase([KnowledgeItem("a", "1"), KnowledgeItem("a", "2")])


def test_params_json_round_trip():
    cfg = FeatureConfig(dim=8, hash_buckets=64)
    params = init_params(cfg, seed=4)
    back = FusionParams.from_json(params.to_json())
    assert back.cfg == cfg
    assert np.array_equal(back.W_q, params.W_q)
    assert np.array_equal(back.w, params.w)
    assert back.b == params.b
