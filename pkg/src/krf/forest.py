"""Multi-output random-forest regressor with ensemble-variance uncertainty.

Tree growth runs in the compiled kernel ``krf._tree_ext`` when it was
built, else in the numpy fallback ``krf._tree_py``; both grow identical
trees. ``BACKEND`` names the one selected at import.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _tree_py
from .preprocess import FEATURES

try:
    from . import _tree_ext
except ImportError:  # pragma: no cover - exercised only without a compiler
    _tree_ext = None

BACKEND = "compiled" if _tree_ext is not None else "python"

_MAGIC = b"KRFFOREST\x00"
_FORMAT_VERSION = 1


class ForestError(ValueError):
    pass


def get_builder(backend: str | None = None):
    backend = backend or BACKEND
    if backend == "compiled":
        if _tree_ext is None:
            raise ForestError("compiled tree kernel is not available")
        return _tree_ext.build_tree
    if backend == "python":
        return _tree_py.build_tree
    raise ForestError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 171
    max_depth: int = 25
    min_samples_split: int = 2
    min_samples_leaf: int = 10
    m_try: int = 3  # ceil(sqrt(8))
    seed: int = 0

    def validate(self, n_features: int = len(FEATURES)):
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise ForestError("max_depth must be >= 0")
        if self.min_samples_split < 2:
            raise ForestError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ForestError("min_samples_leaf must be >= 1")
        if not 1 <= self.m_try <= n_features:
            raise ForestError(f"m_try must lie in [1, {n_features}]")
        return self

    def replace(self, **kw) -> "Hyperparams":
        d = asdict(self)
        d.update(kw)
        return Hyperparams(**d)


@dataclass
class DecisionTree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs) mean label of the node's rows
    n_node_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_outputs(self) -> int:
        return self.value.shape[1]

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row (``x <= threshold`` goes left)."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always come after parents
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaves(self) -> np.ndarray:
        return np.nonzero(self.feature < 0)[0]


def tree_stream(seed: int, i: int) -> np.random.Generator:
    """Random stream of tree ``i``; depends only on ``(seed, i)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(i)])))


def bootstrap_sample(n_rows: int, rng: np.random.Generator) -> np.ndarray:
    if n_rows < 1:
        raise ForestError("bootstrap needs at least one row")
    return rng.integers(0, n_rows, size=n_rows)


def fit_tree(X, Y, hp: Hyperparams, rng: np.random.Generator, samples=None,
             backend: str | None = None) -> DecisionTree:
    """Greedy multi-output CART on ``samples`` (default: every row once)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0:
        raise ForestError("cannot fit a tree on no rows")
    hp.validate(X.shape[1])
    if samples is None:
        samples = np.arange(len(X))
    split_seed = int(rng.integers(0, 2 ** 64, dtype=np.uint64))
    arrays = get_builder(backend)(X, Y, np.asarray(samples, dtype=np.int64), hp.max_depth,
                                  hp.min_samples_split, hp.min_samples_leaf, hp.m_try, split_seed)
    return DecisionTree(*arrays)


def _canonical_order(X, Y):
    # fixes the stored row order so training does not depend on input order
    keys = [Y[:, k] for k in range(Y.shape[1] - 1, -1, -1)] + \
           [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


@dataclass
class Forest:
    trees: list
    hyperparams: Hyperparams
    features: tuple = FEATURES
    normalize_output: bool = True
    bootstraps: list | None = field(default=None, repr=False)  # in-memory only

    @property
    def n_outputs(self) -> int:
        return self.trees[0].n_outputs

    def predict_trees(self, X) -> np.ndarray:
        """Raw tree outputs, shape ``(n_trees, n_rows, n_outputs)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.features):
            raise ForestError(f"expected {len(self.features)} features, got {X.shape[1]}")
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X):
        """Forest mean and per-component population variance of tree outputs."""
        T = self.predict_trees(X)
        n = T.shape[0]
        mean = T.sum(axis=0) / n
        var = ((T - mean) ** 2).sum(axis=0) / n
        if self.normalize_output:
            mean = normalize_fractions(mean)
        return mean, var

    def oob_predict(self, X):
        """Out-of-bag mean per training row (NaN where every tree saw it)."""
        if self.bootstraps is None:
            raise ForestError("bootstrap indices are not available for this forest")
        X = np.asarray(X, dtype=float)
        acc = np.zeros((len(X), self.n_outputs))
        cnt = np.zeros(len(X))
        for tree, boot in zip(self.trees, self.bootstraps):
            out = np.ones(len(X), dtype=bool)
            out[boot] = False
            acc[out] += tree.predict(X[out])
            cnt[out] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return acc / cnt[:, None]


def normalize_fractions(F) -> np.ndarray:
    """Clamp negatives to 0 and rescale rows to sum 1 (near-unit rows untouched)."""
    F = np.array(F, dtype=float, copy=True)
    single = F.ndim == 1
    F = np.atleast_2d(F)
    neg = F < 0
    F[neg] = 0.0
    s = F.sum(axis=1)
    fix = (neg.any(axis=1) | (np.abs(s - 1.0) > 1e-12)) & (s > 0)
    F[fix] /= s[fix, None]
    return F[0] if single else F


def fit_forest(X, Y, hp: Hyperparams = Hyperparams(), n_jobs: int = 1,
               backend: str | None = None, features=None) -> Forest:
    """Bagged ensemble; tree ``i`` uses the stream ``tree_stream(hp.seed, i)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0 or len(X) != len(Y):
        raise ForestError("need a non-empty dataset with one label row per record")
    features = tuple(features) if features is not None else (
        FEATURES if X.shape[1] == len(FEATURES) else tuple(f"x{j}" for j in range(X.shape[1])))
    hp.validate(X.shape[1])
    order = _canonical_order(X, Y)
    Xc, Yc = X[order], Y[order]
    build = get_builder(backend)

    def grow(i):
        rng = tree_stream(hp.seed, i)
        boot = bootstrap_sample(len(Xc), rng)
        split_seed = int(rng.integers(0, 2 ** 64, dtype=np.uint64))
        arrays = build(Xc, Yc, boot, hp.max_depth, hp.min_samples_split,
                       hp.min_samples_leaf, hp.m_try, split_seed)
        return DecisionTree(*arrays), order[boot]

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            grown = list(pool.map(grow, range(hp.n_trees)))
    else:
        grown = [grow(i) for i in range(hp.n_trees)]
    normalize = Y.shape[1] > 1 and bool(np.all(Y >= 0)) and bool(
        np.all(np.abs(Y.sum(axis=1) - 1.0) <= 1e-9))
    return Forest([g[0] for g in grown], hp, features, normalize, [g[1] for g in grown])


# --------------------------------------------------------------------------
# persistence: magic, u64 header length, JSON header, little-endian arrays

def forest_to_bytes(f: Forest) -> bytes:
    header = {
        "format": "krf-forest",
        "version": _FORMAT_VERSION,
        "hyperparams": asdict(f.hyperparams),
        "features": list(f.features),
        "n_outputs": f.n_outputs,
        "normalize_output": f.normalize_output,
        "tree_nodes": [t.n_nodes for t in f.trees],
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [_MAGIC, struct.pack("<Q", len(hdr)), hdr]
    for t in f.trees:
        parts += [t.feature.astype("<i8").tobytes(), t.threshold.astype("<f8").tobytes(),
                  t.left.astype("<i8").tobytes(), t.right.astype("<i8").tobytes(),
                  t.value.astype("<f8").tobytes(), t.n_node_samples.astype("<i8").tobytes()]
    return b"".join(parts)


def forest_from_bytes(data: bytes) -> Forest:
    if not data.startswith(_MAGIC):
        raise ForestError("not a forest model file")
    pos = len(_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    if header.get("version") != _FORMAT_VERSION:
        raise ForestError(f"unsupported forest format version {header.get('version')}")
    k = header["n_outputs"]

    def take(dtype, count):
        nonlocal pos
        size = np.dtype(dtype).itemsize * count
        if pos + size > len(data):
            raise ForestError("truncated forest model file")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(dtype[1:]).copy()
        pos += size
        return arr

    trees = []
    for n in header["tree_nodes"]:
        feat = take("<i8", n)
        thr = take("<f8", n)
        lft = take("<i8", n)
        rgt = take("<i8", n)
        val = take("<f8", n * k).reshape(n, k)
        cnt = take("<i8", n)
        trees.append(DecisionTree(feat, thr, lft, rgt, val, cnt))
    if pos != len(data):
        raise ForestError("trailing bytes in forest model file")
    return Forest(trees, Hyperparams(**header["hyperparams"]), tuple(header["features"]),
                  bool(header["normalize_output"]))


def default_m_try(n_features: int) -> int:
    return math.ceil(math.sqrt(n_features))
