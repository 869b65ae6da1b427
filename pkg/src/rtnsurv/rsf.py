"""Random survival forest: bootstrap trees split by the log-rank statistic,
Nelson-Aalen cumulative hazards in the leaves, ensemble averaging, and
permutation variable importance with random daughter assignment.

Split candidates are 10 random threshold values per chosen feature; mtry
defaults to ceil(sqrt(p)) and the minimum leaf size to 15. All randomness is
counter-based and keyed on (seed, tree) or (seed, tree, sample), so forests
are reproducible regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import SurvivalCurve, TimeGrid, curve_from_cdf
from .metrics import cindex_static

__all__ = [
    "ForestParams",
    "SurvTree",
    "Forest",
    "logrank_split_score",
    "grow_forest",
    "forest_predict",
    "forest_chf",
    "oob_error",
    "permutation_importance",
]

N_THRESHOLDS = 10


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 1000
    mtry: int | None = None             # default ceil(sqrt(p))
    min_leaf: int = 15
    n_thresholds: int = N_THRESHOLDS
    seed: int = 0


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(0x5244 << 32 | tree_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _coin_rng(seed: int, tree_index: int, sample_index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64((tree_index << 24) ^ sample_index ^ (0x434F494E << 28))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _logrank_vectorized(times, events, membership):
    """Standardized log-rank scores for several candidate left-memberships.

    membership: (m, k) booleans, one column per candidate split. Returns (k,)
    absolute standardized statistics; zero-variance candidates score 0.
    """
    order = np.argsort(times, kind="mergesort")
    ts = times[order]
    es = events[order].astype(float)
    ms = membership[order].astype(float)

    starts = np.flatnonzero(np.concatenate([[True], ts[1:] != ts[:-1]]))
    m = len(ts)
    n_at_risk = (m - starts).astype(float)
    d = np.add.reduceat(es, starts)

    # suffix sums give the left-group at-risk counts at each distinct time
    suffix = np.cumsum(ms[::-1], axis=0)[::-1]
    n_left = suffix[starts]
    d_left = np.add.reduceat(ms * es[:, None], starts, axis=0)

    with_events = d > 0
    dd = d[with_events]
    nn = n_at_risk[with_events]
    nl = n_left[with_events]
    dl = d_left[with_events]

    frac = nl / nn[:, None]
    numer = (dl - dd[:, None] * frac).sum(axis=0)
    multi = nn > 1
    var_terms = np.zeros_like(frac)
    if multi.any():
        nn_m = nn[multi][:, None]
        dd_m = dd[multi][:, None]
        frac_m = frac[multi]
        var_terms[multi] = dd_m * frac_m * (1.0 - frac_m) * (nn_m - dd_m) / (nn_m - 1.0)
    var = var_terms.sum(axis=0)
    out = np.zeros(membership.shape[1])
    ok = var > 0
    out[ok] = np.abs(numer[ok]) / np.sqrt(var[ok])
    return out


def logrank_split_score(times_left, events_left, times_right, events_right) -> float:
    """Two-sample standardized log-rank statistic magnitude (larger = better)."""
    tl = np.asarray(times_left, dtype=float)
    tr = np.asarray(times_right, dtype=float)
    if tl.size == 0 or tr.size == 0:
        raise ValueError("both sides must be non-empty")
    el = np.asarray(events_left, dtype=bool)
    er = np.asarray(events_right, dtype=bool)
    if el.sum() + er.sum() == 0:
        raise ValueError("need at least one event")
    times = np.concatenate([tl, tr])
    events = np.concatenate([el, er])
    member = np.zeros((times.size, 1), dtype=bool)
    member[: tl.size, 0] = True
    return float(_logrank_vectorized(times, events, member)[0])


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    leaf_times: np.ndarray | None = None
    leaf_chf: np.ndarray | None = None


@dataclass(frozen=True)
class SurvTree:
    nodes: tuple
    inbag: np.ndarray                   # original row ids drawn by the bootstrap
    oob: np.ndarray                     # original row ids never drawn

    def leaf_for(self, x, coin_feature: int = -1,
                 coin: np.random.Generator | None = None) -> _Node:
        node = self.nodes[0]
        while node.feature >= 0:
            if node.feature == coin_feature and coin is not None:
                go_left = bool(coin.random() < 0.5)
            else:
                go_left = x[node.feature] <= node.threshold
            node = self.nodes[node.left if go_left else node.right]
        return node

    def chf_at(self, x, offsets: np.ndarray, coin_feature: int = -1,
               coin: np.random.Generator | None = None) -> np.ndarray:
        leaf = self.leaf_for(x, coin_feature, coin)
        idx = np.searchsorted(leaf.leaf_times, offsets, side="right") - 1
        return np.where(idx >= 0, leaf.leaf_chf[np.clip(idx, 0, len(leaf.leaf_chf) - 1)], 0.0)


@dataclass(frozen=True)
class Forest:
    trees: tuple
    params: ForestParams
    n_features: int


def _nelson_aalen(times, events):
    order = np.argsort(times, kind="mergesort")
    ts = times[order]
    es = events[order].astype(float)
    starts = np.flatnonzero(np.concatenate([[True], ts[1:] != ts[:-1]]))
    n_at_risk = (len(ts) - starts).astype(float)
    d = np.add.reduceat(es, starts)
    keep = d > 0
    return ts[starts][keep], np.cumsum(d[keep] / n_at_risk[keep])


def _grow_tree(X, times, events, params: ForestParams, tree_index: int) -> SurvTree:
    n, p = X.shape
    rng = _tree_rng(params.seed, tree_index)
    draw = rng.integers(0, n, size=n)
    inbag = np.unique(draw)
    oob = np.setdiff1d(np.arange(n), inbag, assume_unique=True)
    mtry = params.mtry or int(math.ceil(math.sqrt(p)))

    Xb, tb, eb = X[draw], times[draw], events[draw]
    nodes = []
    stack = [(np.arange(len(draw)), 0)]
    nodes.append(_Node())
    while stack:
        idx, node_id = stack.pop()
        node = nodes[node_id]
        if len(idx) < 2 * params.min_leaf or events[draw[idx]].sum() == 0:
            lt, chf = _nelson_aalen(tb[idx], eb[idx])
            node.leaf_times, node.leaf_chf = lt, chf
            continue
        features = rng.choice(p, size=min(mtry, p), replace=False)
        best_score, best_feature, best_threshold, best_mask = 0.0, -1, 0.0, None
        t_node, e_node = tb[idx], eb[idx]
        for f in features:
            v = Xb[idx, f]
            thresholds = rng.choice(v, size=params.n_thresholds, replace=True)
            member = v[:, None] <= thresholds[None, :]
            counts = member.sum(axis=0)
            valid = (counts >= params.min_leaf) & (len(idx) - counts >= params.min_leaf)
            if not valid.any():
                continue
            scores = np.zeros(len(thresholds))
            scores[valid] = _logrank_vectorized(t_node, e_node, member[:, valid])
            best_local = int(np.argmax(scores))
            if scores[best_local] > best_score:
                best_score = float(scores[best_local])
                best_feature = int(f)
                best_threshold = float(thresholds[best_local])
                best_mask = member[:, best_local]
        if best_feature < 0 or best_score <= 0.0:
            lt, chf = _nelson_aalen(tb[idx], eb[idx])
            node.leaf_times, node.leaf_chf = lt, chf
            continue
        node.feature = best_feature
        node.threshold = best_threshold
        node.left = len(nodes)
        nodes.append(_Node())
        node.right = len(nodes)
        nodes.append(_Node())
        stack.append((idx[best_mask], node.left))
        stack.append((idx[~best_mask], node.right))
    return SurvTree(tuple(nodes), inbag=draw, oob=oob)


def grow_forest(X, times, events, params: ForestParams | None = None) -> Forest:
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    params = params or ForestParams()
    if len(X) < 2:
        raise ValueError("need at least 2 samples")
    trees = tuple(
        _grow_tree(X, times, events, params, b) for b in range(params.n_trees)
    )
    return Forest(trees=trees, params=params, n_features=X.shape[1])


def forest_chf(forest: Forest, x, offsets: np.ndarray) -> np.ndarray:
    """Ensemble cumulative hazard: mean of per-tree leaf CHFs at the offsets."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(len(offsets))
    for tree in forest.trees:
        total += tree.chf_at(x, offsets)
    return total / len(forest.trees)


def forest_predict(forest: Forest, x, grid: TimeGrid) -> SurvivalCurve:
    chf = forest_chf(forest, x, grid.offsets())
    return curve_from_cdf(grid, 1.0 - np.exp(-chf))


def _oob_cdf_matrix(forest: Forest, X, grid: TimeGrid, coin_feature: int = -1):
    """Per-sample OOB ensemble CDFs (rows with no OOB tree are skipped)."""
    n = len(X)
    offsets = grid.offsets()
    total = np.zeros((n, len(offsets)))
    counts = np.zeros(n)
    for ti, tree in enumerate(forest.trees):
        for i in tree.oob:
            coin = (_coin_rng(forest.params.seed, ti, int(i))
                    if coin_feature >= 0 else None)
            total[i] += tree.chf_at(X[i], offsets, coin_feature, coin)
            counts[i] += 1
    have = counts > 0
    chf = total[have] / counts[have, None]
    return 1.0 - np.exp(-chf), have


def oob_error(forest: Forest, X, times, coin_feature: int = -1) -> float:
    """1 - OOB concordance, optionally with splits on one feature randomized."""
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    grid = TimeGrid(0.0, 1, int(np.ceil(times.max())) + 1)
    cdf, have = _oob_cdf_matrix(forest, X, grid, coin_feature)
    value, _ = cindex_static(cdf, grid, times[have])
    return 1.0 - value


def permutation_importance(forest: Forest, X, times) -> np.ndarray:
    """Per-feature importance: error increase when that feature's splits are
    decided by a fair coin, normalized so the largest importance is 1."""
    base = oob_error(forest, X, times)
    used = set()
    for tree in forest.trees:
        for node in tree.nodes:
            if node.feature >= 0:
                used.add(node.feature)
    raw = np.zeros(forest.n_features)
    for f in range(forest.n_features):
        if f not in used:
            continue  # routing unchanged: importance exactly 0
        raw[f] = oob_error(forest, X, times, coin_feature=f) - base
    top = np.abs(raw).max()
    if top > 0:
        raw = raw / top
    return raw
