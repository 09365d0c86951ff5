"""Context-tree weighting over the maximal count tree.

The tree is stored level by level.  Level ``k`` holds every depth-``k``
context realised in the data; node ``i`` of level ``k`` has parent
``parent[i]`` in level ``k - 1`` and is reached from it through the symbol
``symbol[i]`` (the ``k``-th most recent symbol of the context).  Children
that the data never visits are not stored; they behave as zero-count nodes
with ``log_pe = log_pw = 0``.

All probabilities are natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import gammaln

from .errors import EmptyInputError, UsageError
from .models import TreeModel, context_label
from .sequence import Sequence

DEFAULT_DEPTH = 10

# children are kept in dense m-slot tables up to this alphabet size
_TABLE_MAX_M = 8


def default_beta(m: int) -> float:
    return 1.0 - 2.0 ** (-m + 1)


@dataclass(frozen=True)
class PriorConfig:
    m: int
    depth: int = DEFAULT_DEPTH
    beta: float | None = None

    def __post_init__(self):
        if self.m < 2:
            raise UsageError("alphabet size must be at least 2")
        if self.depth < 0:
            raise UsageError("depth bound must be non-negative")
        if self.beta is None:
            object.__setattr__(self, "beta", default_beta(self.m))
        if not 0.0 < self.beta < 1.0:
            raise UsageError(f"beta must lie in (0, 1), got {self.beta}")

    @property
    def alpha(self) -> float:
        return (1.0 - self.beta) ** (1.0 / (self.m - 1))

    @property
    def log_beta(self) -> float:
        return math.log(self.beta)

    @property
    def log_1mbeta(self) -> float:
        return math.log1p(-self.beta)


def log_pe(counts) -> float:
    """Log of the Krichevsky-Trofimov marginal likelihood of a count vector."""
    a = np.asarray(counts, dtype=float)
    m = a.size
    total = a.sum()
    if total == 0:
        return 0.0
    return float(gammaln(a + 0.5).sum() - m * gammaln(0.5)
                 - gammaln(total + m / 2.0) + gammaln(m / 2.0))


def _log_pe_rows(counts: np.ndarray) -> np.ndarray:
    m = counts.shape[1]
    c = counts.astype(float)
    out = (gammaln(c + 0.5).sum(axis=1) - m * gammaln(0.5)
           - gammaln(c.sum(axis=1) + m / 2.0) + gammaln(m / 2.0))
    out[counts.sum(axis=1) == 0] = 0.0
    return out


def update_log_pe(counts, j: int) -> float:
    """Log KT probability of seeing ``j`` next, given the counts so far."""
    a = np.asarray(counts)
    return math.log((a[j] + 0.5) / (a.sum() + a.size / 2.0))


def log_prior(tree: TreeModel, depth: int, beta: float | None = None) -> float:
    """Log prior probability of a proper tree among trees of depth <= ``depth``."""
    m = tree.m
    if beta is None:
        beta = default_beta(m)
    if tree.depth > depth:
        return -math.inf
    alpha = (1.0 - beta) ** (1.0 / (m - 1))
    leaves = len(tree)
    return (leaves - 1) * math.log(alpha) + (leaves - tree.leaves_at_depth(depth)) * math.log(beta)


@dataclass
class Level:
    parent: np.ndarray
    symbol: np.ndarray
    counts: np.ndarray
    log_pe: np.ndarray
    log_pw: np.ndarray | None = None
    # (nodes, m) child index table, -1 for absent; None when keys are used
    child_table: np.ndarray | None = None

    def __len__(self):
        return self.parent.size


class ContextTree:
    """Maximal count tree with estimated and weighted probabilities."""

    def __init__(self, cfg: PriorConfig, levels: list[Level], n: int):
        self.cfg = cfg
        self.levels = levels
        self.n = n
        self._keys = [None] + [lv.parent * cfg.m + lv.symbol for lv in levels[1:]]
        for k in range(len(levels) - 1):
            if cfg.m <= _TABLE_MAX_M:
                table = np.full((len(levels[k]), cfg.m), -1, dtype=np.int64)
                nxt = levels[k + 1]
                table[nxt.parent, nxt.symbol] = np.arange(len(nxt))
                levels[k].child_table = table

    @property
    def m(self) -> int:
        return self.cfg.m

    @property
    def depth(self) -> int:
        return self.cfg.depth

    @property
    def root_counts(self) -> np.ndarray:
        return self.levels[0].counts[0]

    @property
    def log_pw_root(self) -> float:
        return float(self.levels[0].log_pw[0])

    def node_count(self) -> int:
        return sum(len(lv) for lv in self.levels)

    def children(self, k: int, idx) -> np.ndarray:
        """Child indices in level ``k + 1`` for nodes ``idx`` of level ``k``; -1 if absent.

        Returns an array of shape ``(len(idx), m)``.
        """
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        m = self.m
        if k >= self.depth:
            return np.full((idx.size, m), -1, dtype=np.int64)
        table = self.levels[k].child_table
        if table is not None:
            return table[idx]
        keys = self._keys[k + 1]
        if keys.size == 0:
            return np.full((idx.size, m), -1, dtype=np.int64)
        want = idx[:, None] * m + np.arange(m)[None, :]
        pos = np.minimum(np.searchsorted(keys, want), keys.size - 1)
        return np.where(keys[pos] == want, pos, -1)

    def context(self, k: int, i: int) -> tuple:
        out = []
        while k > 0:
            lv = self.levels[k]
            out.append(int(lv.symbol[i]))
            i = int(lv.parent[i])
            k -= 1
        return tuple(reversed(out))

    def find(self, s) -> tuple[int, int] | None:
        """Locate context ``s``; returns ``(level, index)`` or None if virtual."""
        i = 0
        for k, c in enumerate(s):
            if k >= self.depth:
                return None
            i = int(self.children(k, [i])[0, c])
            if i < 0:
                return None
        return len(s), i

    def counts_for(self, s) -> np.ndarray:
        loc = self.find(s)
        if loc is None:
            return np.zeros(self.m, dtype=np.int64)
        return self.levels[loc[0]].counts[loc[1]]

    def log_branch(self, k: int) -> np.ndarray:
        """Log stopping probability ``log(beta * P_e / P_w)`` for every node of level ``k``."""
        lv = self.levels[k]
        return np.minimum(self.cfg.log_beta + lv.log_pe - lv.log_pw, 0.0)

    def iter_nodes(self) -> Iterator[tuple[tuple, int, int]]:
        """Depth-first walk yielding ``(context, level, index)`` in symbol order."""
        stack = [((), 0, 0)]
        while stack:
            s, k, i = stack.pop()
            yield s, k, i
            if k < self.depth and len(self.levels[k + 1]):
                kids = self.children(k, [i])[0]
                for c in range(self.m - 1, -1, -1):
                    if kids[c] >= 0:
                        stack.append((s + (c,), k + 1, int(kids[c])))

    def dump(self) -> str:
        """Line-oriented text dump: context, counts, log_pe, log_pw."""
        lines = [f"# m={self.m} D={self.depth} beta={self.cfg.beta!r} n={self.n}",
                 "# context\tcounts\tlog_pe\tlog_pw"]
        for s, k, i in self.iter_nodes():
            lv = self.levels[k]
            counts = ",".join(map(str, lv.counts[i].tolist()))
            pw = "nan" if lv.log_pw is None else repr(float(lv.log_pw[i]))
            lines.append(f"{context_label(s)}\t{counts}\t{float(lv.log_pe[i])!r}\t{pw}")
        return "\n".join(lines) + "\n"


def _build_levels(context: np.ndarray, data: np.ndarray, m: int, depth: int) -> list[Level]:
    n = data.size
    full = np.concatenate([context, data]).astype(np.int64)
    y = data.astype(np.int64)
    counts = np.bincount(y, minlength=m).reshape(1, m)
    levels = [Level(np.zeros(1, np.int64), np.zeros(1, np.int64), counts, _log_pe_rows(counts))]
    ids = np.zeros(n, dtype=np.int64)
    for k in range(1, depth + 1):
        if n == 0:
            empty = np.zeros(0, np.int64)
            levels.append(Level(empty, empty, np.zeros((0, m), np.int64), np.zeros(0)))
            continue
        # x_{i-k} for every data position i
        sym = full[depth - k: depth - k + n]
        keys, ids = np.unique(ids * m + sym, return_inverse=True)
        counts = np.bincount(ids * m + y, minlength=keys.size * m).reshape(-1, m)
        levels.append(Level(keys // m, keys % m, counts, _log_pe_rows(counts)))
    return levels


def compute_weighted(tree: ContextTree) -> ContextTree:
    """Fill ``log_pw`` bottom-up; returns the same tree."""
    cfg = tree.cfg
    levels = tree.levels
    levels[-1].log_pw = levels[-1].log_pe.copy()
    for k in range(len(levels) - 2, -1, -1):
        lv, below = levels[k], levels[k + 1]
        kids = np.bincount(below.parent, weights=below.log_pw, minlength=len(lv))
        # P_w is a probability; the clip removes rounding above 1 at zero counts
        lv.log_pw = np.minimum(np.logaddexp(cfg.log_beta + lv.log_pe, cfg.log_1mbeta + kids), 0.0)
    return tree


def build_tmax(x: Sequence, cfg: PriorConfig) -> ContextTree:
    """Count tree of all depth-``D`` contexts in ``x``, weighted probabilities filled."""
    if x.m != cfg.m:
        raise UsageError(f"sequence alphabet {x.m} differs from prior alphabet {cfg.m}")
    context, data = x.split_context(cfg.depth)
    if data.size == 0:
        raise EmptyInputError("no data symbols to count")
    tree = ContextTree(cfg, _build_levels(context, data, cfg.m, cfg.depth), int(data.size))
    return compute_weighted(tree)


def empty_tree(cfg: PriorConfig) -> ContextTree:
    """Count tree for no observations; sampling from it draws from the prior."""
    levels = _build_levels(np.zeros(cfg.depth, np.int64), np.zeros(0, np.int64), cfg.m, cfg.depth)
    return compute_weighted(ContextTree(cfg, levels, 0))


def prior_predictive(x: Sequence, cfg: PriorConfig) -> float:
    """Log of the data probability averaged over all models and parameters."""
    return build_tmax(x, cfg).log_pw_root


def ctw_entropy_estimate(x: Sequence, cfg: PriorConfig) -> float:
    """Naive CTW entropy-rate estimate in nats per symbol."""
    tree = build_tmax(x, cfg)
    return -tree.log_pw_root / tree.n
