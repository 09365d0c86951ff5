"""Comparison estimators: plug-in, increasing-window match length, PPM.

The naive CTW estimator lives in :mod:`bctentropy.ctw`.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BlockLengthError, EmptyInputError, InsufficientDataError, UsageError
from .sequence import Sequence

LZ_VARIANT = "increasing-window, Lambda_i / log i averaged over i >= max(2, ceil(n/10))"
PPM_VARIANT = "interpolated blend, escape weight = distinct successors (min 1), base 1/m"
DEFAULT_PPM_DEPTH = 10


def block_distribution(x: Sequence, k: int) -> dict:
    """Empirical law of the overlapping ``k``-blocks, keyed by block tuple."""
    n = len(x)
    if not 1 <= k <= n:
        raise BlockLengthError(f"block length {k} must lie in 1..{n}")
    blocks, counts = _block_counts(x.symbols, x.m, k)
    total = n - k + 1
    return {tuple(b): c / total for b, c in zip(blocks.tolist(), counts.tolist())}


def _block_counts(sym: np.ndarray, m: int, k: int):
    windows = sliding_window_view(sym, k)
    if k * math.log2(m) < 62:
        codes = windows @ (m ** np.arange(k - 1, -1, -1, dtype=np.int64))
        uniq, counts = np.unique(codes, return_counts=True)
        blocks = (uniq[:, None] // m ** np.arange(k - 1, -1, -1, dtype=np.int64)) % m
        return blocks, counts
    return np.unique(windows, axis=0, return_counts=True)


def plugin_estimate(x: Sequence, k: int) -> float:
    """Entropy of the empirical ``k``-block law divided by ``k`` (nats/symbol)."""
    n = len(x)
    if not 1 <= k <= n:
        raise BlockLengthError(f"block length {k} must lie in 1..{n}")
    _, counts = _block_counts(x.symbols, x.m, k)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum() / k)


# -- increasing-window match lengths -----------------------------------------

class _SuffixAutomaton:
    """Online suffix automaton; ``extend`` returns the clone created, if any."""

    def __init__(self):
        self.next = [{}]
        self.link = [-1]
        self.len = [0]
        self.last = 0

    def extend(self, c: int) -> tuple[int, int]:
        nxt, link, ln = self.next, self.link, self.len
        cur = len(ln)
        nxt.append({})
        ln.append(ln[self.last] + 1)
        link.append(-1)
        p = self.last
        while p != -1 and c not in nxt[p]:
            nxt[p][c] = cur
            p = link[p]
        split = (-1, -1)
        if p == -1:
            link[cur] = 0
        else:
            q = nxt[p][c]
            if ln[p] + 1 == ln[q]:
                link[cur] = q
            else:
                clone = len(ln)
                nxt.append(dict(nxt[q]))
                ln.append(ln[p] + 1)
                link.append(link[q])
                while p != -1 and nxt[p].get(c) == q:
                    nxt[p][c] = clone
                    p = link[p]
                link[q] = link[cur] = clone
                split = (q, clone)
        self.last = cur
        return split


def match_lengths(x: Sequence, naive: bool = False) -> np.ndarray:
    """``Lambda_i`` for ``i = 1..n`` (returned 0-based).

    ``Lambda_i`` is one more than the length of the longest prefix of
    ``x_i x_{i+1} ...`` occurring as a block inside ``x_1 .. x_{i-1}``,
    capped at ``n - i + 1``.
    """
    sym = x.symbols.tolist()
    n = len(sym)
    out = np.empty(n, dtype=np.int64)
    if naive:
        for i in range(n):
            best = 0
            past = sym[:i]
            for j in range(i):
                length = 0
                while j + length < i and i + length < n and past[j + length] == sym[i + length]:
                    length += 1
                best = max(best, length)
            out[i] = min(best + 1, n - i)
        return out
    sam = _SuffixAutomaton()
    nxt, link, ln = sam.next, sam.link, sam.len
    v, length = 0, 0
    for i in range(n):
        # (v, length) holds x_i .. x_{i+length-1}, a substring of x_1 .. x_{i-1}
        while i + length < n:
            w = nxt[v].get(sym[i + length])
            if w is None:
                break
            v, length = w, length + 1
        out[i] = min(length + 1, n - i)
        if length > 0:
            length -= 1
            if length <= ln[link[v]]:
                v = link[v]
        q, clone = sam.extend(sym[i])
        if v == q and length <= ln[clone]:
            v = clone
        if length == 0:
            v = 0
    return out


def lz_start(n: int) -> int:
    return max(2, math.ceil(n / 10))


def lz_estimate(x: Sequence, naive: bool = False) -> float:
    """Increasing-window match-length estimate (nats/symbol)."""
    n = len(x)
    n0 = lz_start(n)
    if n < 4 * n0:
        raise InsufficientDataError(f"need at least {4 * n0} symbols, got {n}")
    lam = match_lengths(x, naive=naive)
    i = np.arange(n0, n + 1)
    ratio = lam[n0 - 1:] / np.log(i)
    return float(1.0 / ratio.mean())


# -- PPM ----------------------------------------------------------------------

def _context_ids(sym: np.ndarray, m: int, depth: int) -> list[np.ndarray]:
    """Per order ``k``, an id for the length-``k`` history before each position.

    Positions with fewer than ``k`` past symbols get id -1.
    """
    n = sym.size
    ids = [np.zeros(n, dtype=np.int64)]
    cur = np.zeros(n, dtype=np.int64)
    for k in range(1, depth + 1):
        if k > n - 1:
            ids.append(np.full(n, -1, dtype=np.int64))
            continue
        prev = np.full(n, 0, dtype=np.int64)
        prev[k:] = sym[:n - k]
        key = cur * m + prev
        key[:k] = -1
        valid = key >= 0
        out = np.full(n, -1, dtype=np.int64)
        _, out[valid] = np.unique(key[valid], return_inverse=True)
        ids.append(out)
        cur = np.where(valid, out, 0)
    return ids


def ppm_log_prob(x: Sequence, depth: int = DEFAULT_PPM_DEPTH) -> float:
    """Natural log of the sequential interpolated-PPM probability of ``x``."""
    n, m = len(x), x.m
    if n == 0:
        raise EmptyInputError("empty sequence")
    if depth < 0:
        raise UsageError("PPM depth must be non-negative")
    sym = x.symbols
    ids = [a.tolist() for a in _context_ids(sym, m, depth)]
    counts = [dict() for _ in range(depth + 1)]
    ys = sym.tolist()
    total = 0.0
    base = 1.0 / m
    for i, y in enumerate(ys):
        top = min(depth, i)
        q = base
        rows = []
        for k in range(top + 1):
            node = ids[k][i]
            row = counts[k].get(node)
            if row is None:
                row = counts[k][node] = [0] * m + [0, 0]  # per-symbol, total, distinct
            rows.append(row)
            e = row[m + 1] or 1
            q = (row[y] + e * q) / (row[m] + e)
        total += math.log(q)
        for row in rows:
            if row[y] == 0:
                row[m + 1] += 1
            row[y] += 1
            row[m] += 1
    return total


def ppm_estimate(x: Sequence, depth: int = DEFAULT_PPM_DEPTH) -> float:
    """``-(1/n) log Q(x)`` for the interpolated PPM probability ``Q`` (nats/symbol)."""
    return -ppm_log_prob(x, depth) / len(x)
