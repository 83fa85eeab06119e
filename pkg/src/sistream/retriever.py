"""Terminology retrieval over the incoming stream.

Keys and window tokens are embedded with a frozen hashed-n-gram projection;
a trainable fusion layer (multi-head attention with key-derived queries,
mean pooling, linear head) scores the probability that a key is present in
the window. Training minimizes binary cross entropy on present/absent pairs.
Retrieval is exhaustive scoring at desk scale; the interface leaves room for
an index drop-in later.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import KnowledgeItem

MEAN_POOL = "mean"
MAX_POOL = "max"


@dataclass(frozen=True)
class KnowledgeBase:
    """Terminology store with unique keys and stable insertion order."""

    items: tuple[KnowledgeItem, ...]

    def __init__(self, items):
        items = tuple(items)
        seen = set()
        for it in items:
            if not it.key:
                raise ValueError("knowledge keys must be nonempty")
            if it.key in seen:
                raise ValueError(f"duplicate knowledge key {it.key!r}")
            seen.add(it.key)
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)

    def get(self, key: str) -> KnowledgeItem | None:
        for it in self.items:
            if it.key == key:
                return it
        return None

    @classmethod
    def from_tsv(cls, path: str) -> "KnowledgeBase":
        items = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "\t" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key<TAB>value")
                key, value = line.split("\t", 1)
                items.append(KnowledgeItem(key=key, value=value))
        return cls(items)

    def to_tsv(self) -> list[str]:
        return [f"{it.key}\t{it.value}" for it in self.items]


@dataclass(frozen=True)
class FeatureConfig:
    """Frozen token-embedding scheme: hashed character n-grams, random projection."""

    n_gram: int = 3
    hash_buckets: int = 4096
    dim: int = 64
    heads: int = 1
    projection_seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.hash_buckets < self.dim:
            raise ValueError("hash_buckets must be >= dim")

    def to_dict(self) -> dict:
        return {
            "n_gram": self.n_gram,
            "hash_buckets": self.hash_buckets,
            "dim": self.dim,
            "heads": self.heads,
            "projection_seed": self.projection_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


@lru_cache(maxsize=8)
def _projection(buckets: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(buckets, dim)).astype(np.float64) * 2.0 - 1.0
    return signs / np.sqrt(dim)


def _grams(token: str, n: int) -> list[str]:
    padded = "^" + token + "$"
    if len(padded) <= n:
        return [padded]
    return [padded[i : i + n] for i in range(len(padded) - n + 1)]


def _bucket(gram: str, buckets: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % buckets


@lru_cache(maxsize=65536)
def _token_vector(token: str, n_gram: int, buckets: int, dim: int, seed: int) -> tuple:
    proj = _projection(buckets, dim, seed)
    vec = np.zeros(dim)
    for gram in _grams(token, n_gram):
        vec += proj[_bucket(gram, buckets)]
    return tuple(vec)


def featurize(text_or_tokens, cfg: FeatureConfig) -> np.ndarray:
    """Embed each token as a d-dim vector; deterministic for a fixed seed."""
    if isinstance(text_or_tokens, str):
        tokens = text_or_tokens.split()
    else:
        tokens = list(text_or_tokens)
    if not tokens:
        raise ValueError("nothing to encode")
    rows = [
        _token_vector(t, cfg.n_gram, cfg.hash_buckets, cfg.dim, cfg.projection_seed)
        for t in tokens
    ]
    return np.array(rows, dtype=np.float64)


@dataclass
class FusionParams:
    """Trainable attention-fusion scorer weights."""

    cfg: FeatureConfig
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    w: np.ndarray
    b: float
    pooling: str = MEAN_POOL

    def copy(self) -> "FusionParams":
        return FusionParams(
            cfg=self.cfg,
            W_q=self.W_q.copy(),
            W_k=self.W_k.copy(),
            W_v=self.W_v.copy(),
            w=self.w.copy(),
            b=self.b,
            pooling=self.pooling,
        )

    def check(self) -> None:
        d = self.cfg.dim
        for name, m in (("W_q", self.W_q), ("W_k", self.W_k), ("W_v", self.W_v)):
            if m.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} has non-finite entries")
        if self.w.shape != (d,):
            raise ValueError(f"w must have length {d}")
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise ValueError("w or b has non-finite entries")

    def to_json(self) -> str:
        return json.dumps(
            {
                "cfg": self.cfg.to_dict(),
                "pooling": self.pooling,
                "W_q": self.W_q.tolist(),
                "W_k": self.W_k.tolist(),
                "W_v": self.W_v.tolist(),
                "w": self.w.tolist(),
                "b": self.b,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FusionParams":
        d = json.loads(text)
        params = cls(
            cfg=FeatureConfig.from_dict(d["cfg"]),
            W_q=np.array(d["W_q"], dtype=np.float64),
            W_k=np.array(d["W_k"], dtype=np.float64),
            W_v=np.array(d["W_v"], dtype=np.float64),
            w=np.array(d["w"], dtype=np.float64),
            b=float(d["b"]),
            pooling=d.get("pooling", MEAN_POOL),
        )
        params.check()
        return params


def init_params(
    cfg: FeatureConfig, seed: int = 0, scale: float = 0.1, tie_qk: bool = True
) -> FusionParams:
    """Random initial weights.

    By default the query and key projections start tied (W_k == W_q), which
    gives every exact key/window token match a positive attention logit
    (f W W^T f == ||W^T f||^2) from the first step. Untied random inits have
    to discover that alignment first and converge far less reliably. The
    matrices remain independent parameters during training.
    """
    rng = np.random.default_rng(seed)
    d = cfg.dim
    W_q = rng.normal(0.0, scale, size=(d, d))
    W_k = W_q.copy() if tie_qk else rng.normal(0.0, scale, size=(d, d))
    return FusionParams(
        cfg=cfg,
        W_q=W_q,
        W_k=W_k,
        W_v=rng.normal(0.0, scale, size=(d, d)),
        w=rng.normal(0.0, scale, size=d),
        b=0.0,
    )


@dataclass(frozen=True)
class TrainExample:
    window_tokens: tuple[str, ...]
    key: str
    label: int  # 1 == key present in the window, 0 == absent

    def __init__(self, window_tokens, key: str, label: int):
        if label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        object.__setattr__(self, "window_tokens", tuple(window_tokens))
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "label", label)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    ez = np.exp(z)
    return ez / (1.0 + ez)


def _forward(params: FusionParams, key_vecs: np.ndarray, window_vecs: np.ndarray):
    """Attention fusion forward pass; returns probability plus the cache
    needed for backprop."""
    cfg = params.cfg
    d, h = cfg.dim, cfg.heads
    dh = d // h
    Q = key_vecs @ params.W_q  # m x d
    K = window_vecs @ params.W_k  # L x d
    V = window_vecs @ params.W_v  # L x d
    m = key_vecs.shape[0]
    H = np.empty((m, d))
    attn = []
    for i in range(h):
        sl = slice(i * dh, (i + 1) * dh)
        S = Q[:, sl] @ K[:, sl].T / np.sqrt(dh)
        A = _softmax_rows(S)
        H[:, sl] = A @ V[:, sl]
        attn.append(A)
    if params.pooling == MEAN_POOL:
        hbar = H.mean(axis=0)
    elif params.pooling == MAX_POOL:
        hbar = H.max(axis=0)
    else:
        raise ValueError(f"unknown pooling {params.pooling!r}")
    z = float(params.w @ hbar + params.b)
    p = _sigmoid(z)
    cache = (Q, K, V, H, attn, hbar)
    return p, cache


def score(params: FusionParams, key_vecs: np.ndarray, window_vecs: np.ndarray) -> float:
    """Probability in (0,1) that the key is present in the window."""
    if key_vecs.ndim != 2 or window_vecs.ndim != 2:
        raise ValueError("key_vecs and window_vecs must be 2-D")
    if key_vecs.shape[1] != params.cfg.dim or window_vecs.shape[1] != params.cfg.dim:
        raise ValueError(
            f"vector dim mismatch: expected {params.cfg.dim}, got "
            f"{key_vecs.shape[1]} / {window_vecs.shape[1]}"
        )
    if key_vecs.shape[0] < 1 or window_vecs.shape[0] < 1:
        raise ValueError("need at least one key vector and one window vector")
    p, _ = _forward(params, key_vecs, window_vecs)
    return p


def bce_loss(p: float, label: int) -> tuple[float, float]:
    """Binary cross entropy and its gradient w.r.t. the pre-sigmoid logit."""
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    clamped = min(max(p, 1e-7), 1.0 - 1e-7)
    loss = -(label * np.log(clamped) + (1 - label) * np.log(1.0 - clamped))
    return float(loss), p - label


@dataclass
class Gradients:
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    w: np.ndarray
    b: float

    def scale(self, a: float) -> None:
        self.W_q *= a
        self.W_k *= a
        self.W_v *= a
        self.w *= a
        self.b *= a

    def add(self, other: "Gradients") -> None:
        self.W_q += other.W_q
        self.W_k += other.W_k
        self.W_v += other.W_v
        self.w += other.w
        self.b += other.b


def example_gradients(
    params: FusionParams, key_vecs: np.ndarray, window_vecs: np.ndarray, label: int
) -> tuple[float, Gradients]:
    """Loss and analytic gradients for one example.

    Backpropagates through the sigmoid head, pooling, attention softmax,
    and the three projection matrices. Mean pooling only: max pooling is a
    scoring-time option, not a training path.
    """
    if params.pooling != MEAN_POOL:
        raise ValueError("training requires mean pooling")
    cfg = params.cfg
    d, h = cfg.dim, cfg.heads
    dh = d // h
    p, (Q, K, V, H, attn, hbar) = _forward(params, key_vecs, window_vecs)
    loss, dz = bce_loss(p, label)
    m = key_vecs.shape[0]

    dw = dz * hbar
    db = dz
    dH = np.tile((dz / m) * params.w, (m, 1))  # mean-pool backward

    dQ = np.empty_like(Q)
    dK = np.empty_like(K)
    dV = np.empty_like(V)
    for i in range(h):
        sl = slice(i * dh, (i + 1) * dh)
        A = attn[i]
        dH_h = dH[:, sl]
        dA = dH_h @ V[:, sl].T
        dV[:, sl] = A.T @ dH_h
        dS = A * (dA - (dA * A).sum(axis=1, keepdims=True))
        dQ[:, sl] = dS @ K[:, sl] / np.sqrt(dh)
        dK[:, sl] = dS.T @ Q[:, sl] / np.sqrt(dh)

    grads = Gradients(
        W_q=key_vecs.T @ dQ,
        W_k=window_vecs.T @ dK,
        W_v=window_vecs.T @ dV,
        w=dw,
        b=db,
    )
    return loss, grads


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 0.05
    epochs: int = 20
    batch: int = 16
    seed: int = 0


@dataclass(frozen=True)
class TrainResult:
    params: FusionParams
    epoch_losses: tuple[float, ...]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def train(
    params_init: FusionParams,
    examples: list[TrainExample],
    hyper: TrainHyper = TrainHyper(),
) -> TrainResult:
    """Mini-batch gradient descent on BCE; deterministic for a fixed seed."""
    if not examples:
        raise ValueError("no training examples")
    labels = {e.label for e in examples}
    if labels != {0, 1}:
        raise ValueError("both classes required (got only labels %s)" % sorted(labels))
    cfg = params_init.cfg
    feats = [
        (featurize(e.key, cfg), featurize(e.window_tokens, cfg), e.label)
        for e in examples
    ]
    params = params_init.copy()
    rng = np.random.default_rng(hyper.seed)
    order = np.arange(len(feats))
    epoch_losses = []
    for _ in range(hyper.epochs):
        rng.shuffle(order)
        total = 0.0
        for start in range(0, len(order), hyper.batch):
            batch = order[start : start + hyper.batch]
            acc: Gradients | None = None
            for idx in batch:
                kv, wv, label = feats[idx]
                loss, g = example_gradients(params, kv, wv, label)
                total += loss
                if acc is None:
                    acc = g
                else:
                    acc.add(g)
            assert acc is not None
            acc.scale(hyper.lr / len(batch))
            params.W_q -= acc.W_q
            params.W_k -= acc.W_k
            params.W_v -= acc.W_v
            params.w -= acc.w
            params.b -= acc.b
        mean_loss = total / len(feats)
        if not np.isfinite(mean_loss):
            raise ValueError("training diverged (loss is not finite); lower the lr")
        epoch_losses.append(mean_loss)
    return TrainResult(params=params, epoch_losses=tuple(epoch_losses))


def top_k(
    params: FusionParams, kb: KnowledgeBase, window_vecs: np.ndarray, k: int
) -> list[KnowledgeItem]:
    """k best-scoring knowledge items; ties break toward the smaller key."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(kb) == 0:
        return []
    scored = []
    for item in kb.items:
        key_vecs = featurize(item.key, params.cfg)
        scored.append((-score(params, key_vecs, window_vecs), item.key, item))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [item for _, _, item in scored[:k]]


def eval_recall(
    params: FusionParams,
    labeled_windows: list[tuple[list[str], list[str]]],
    kb: KnowledgeBase,
    k: int,
) -> float:
    """Fraction of true keys retrieved in their window's top-k list."""
    hits = 0
    total = 0
    for window_tokens, true_keys in labeled_windows:
        if not true_keys:
            raise ValueError("each labeled window needs at least one true key")
        for key in true_keys:
            if kb.get(key) is None:
                raise ValueError(f"true key {key!r} missing from the knowledge base")
        window_vecs = featurize(window_tokens, params.cfg)
        retrieved = {item.key for item in top_k(params, kb, window_vecs, k)}
        for key in true_keys:
            total += 1
            if key in retrieved:
                hits += 1
    return hits / total


class TerminologyRetriever:
    """Bundles trained params with a knowledge base for use in sessions."""

    def __init__(self, params: FusionParams, kb: KnowledgeBase):
        self.params = params
        self.kb = kb

    def retrieve(self, window_tokens: list[str], k: int) -> list[KnowledgeItem]:
        if not window_tokens or len(self.kb) == 0:
            return []
        window_vecs = featurize(window_tokens, self.params.cfg)
        return top_k(self.params, self.kb, window_vecs, k)
