"""Entropy rate of a variable-memory chain, and posterior summaries.

A tree model is turned into a first-order chain on a set of history
states.  ``stationary_distribution`` uses the full block space ``A^d``.
``entropy_rate_exact`` instead uses the smallest refinement of the tree's
leaves that is closed under the shift (the next state is determined by the
current state and the emitted symbol); this is an exact lumping of the
block chain and is usually far smaller than ``m^d``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BudgetError, DegenerateChainError, InsufficientSampleError, UsageError
from .models import ChainSpec, TreeModel
from .posterior import PosteriorSampleSet

log = logging.getLogger(__name__)

DENSE_MAX_STATES = 2_000
POWER_MAX_STATES = 1_000_000
POWER_TOL = 1e-10
POWER_MAX_ITER = 100_000
DEFAULT_MC_LENGTH = 1_000_000
RESIDUAL_TOL = 1e-10
_BATCH_MAX_STATES = 64
_BATCH_ROWS = 4096

WORKERS_ENV = "BCT_WORKERS"


@dataclass(frozen=True)
class StateChain:
    """First-order chain on history states (contexts, most recent first)."""

    states: tuple
    leaf: np.ndarray        # tree-leaf index governing each state
    next_state: np.ndarray  # (S, m): state reached after emitting each symbol

    def __len__(self):
        return len(self.states)


def _leaf_of(tree: TreeModel, s) -> int:
    node = tree.lookup
    k = 0
    while type(node) is list:
        node = node[s[k]]
        k += 1
    return node


def _state_chain(tree: TreeModel, states) -> StateChain:
    states = tuple(sorted(states))
    index = {s: i for i, s in enumerate(states)}
    m = tree.m
    nxt = np.empty((len(states), m), dtype=np.int64)
    for i, s in enumerate(states):
        for j in range(m):
            t = (j,) + s
            for k in range(len(t) + 1):
                hit = index.get(t[:k])
                if hit is not None:
                    nxt[i, j] = hit
                    break
            else:
                raise AssertionError(f"state set not closed at {s} -> {j}")
    leaf = np.array([_leaf_of(tree, s) for s in states], dtype=np.int64)
    return StateChain(states, leaf, nxt)


def _closed_states(tree: TreeModel, limit: int):
    # States always form a proper tree, so a shifted context j+s is either
    # covered by a state of length <= len(s) + 1 or is an internal node.
    m = tree.m
    states = set(tree.leaves)
    internal = {s[:k] for s in states for k in range(len(s))}
    work = sorted(states)
    while work:
        s = work.pop()
        if s not in states:
            continue
        if any((j,) + s in internal for j in range(m)):
            states.discard(s)
            internal.add(s)
            kids = [s + (c,) for c in range(m)]
            states.update(kids)
            work.extend(kids)
            if s[1:] in states:
                work.append(s[1:])
            if len(states) > limit:
                return None
    return states


@lru_cache(maxsize=8192)
def closed_chain(tree: TreeModel, limit: int = POWER_MAX_STATES) -> StateChain | None:
    """Shift-closed refinement of the tree's leaves; None if it exceeds ``limit`` states."""
    states = _closed_states(tree, limit)
    return None if states is None else _state_chain(tree, states)


@lru_cache(maxsize=64)
def block_chain(tree: TreeModel, d: int) -> StateChain:
    """Chain on all ``m^d`` blocks; state code ``sum(s[l] * m**l)``."""
    m = tree.m
    codes = np.arange(m ** d)
    digits = [(codes // m ** l) % m for l in range(d)]
    states = [tuple(int(dg[c]) for dg in digits) for c in range(m ** d)]
    nxt = (codes[:, None] * m + np.arange(m)[None, :]) % (m ** d) if d else np.zeros((1, m), np.int64)
    leaf = np.array([_leaf_of(tree, s) for s in states], dtype=np.int64)
    # states listed by code, so this ordering differs from _state_chain's sort
    return StateChain(tuple(states), leaf, nxt.astype(np.int64))


def _check_positive(theta: np.ndarray):
    if np.any(theta <= 0):
        raise DegenerateChainError(
            "some transition probability is zero, so the stationary distribution may not be "
            "unique; use the Monte Carlo method or floor the parameters")


def _dense(chain: StateChain, probs: np.ndarray) -> np.ndarray:
    S = len(chain)
    P = np.zeros((S, S))
    np.add.at(P, (np.repeat(np.arange(S), probs.shape[1]), chain.next_state.ravel()), probs.ravel())
    A = P.T - np.eye(S)
    A[-1, :] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def _step(chain: StateChain, probs: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return np.bincount(chain.next_state.ravel(), weights=(pi[:, None] * probs).ravel(),
                       minlength=len(chain))


def _power(chain: StateChain, probs: np.ndarray, tol: float, max_iter: int):
    S = len(chain)
    pi = np.full(S, 1.0 / S)
    for _ in range(max_iter):
        new = _step(chain, probs, pi)
        new /= new.sum()
        if np.abs(new - pi).sum() <= tol:
            return new
        pi = new
    return None


def residual(chain: StateChain, theta: np.ndarray, pi: np.ndarray) -> float:
    """L1 norm of ``pi P - pi``."""
    return float(np.abs(_step(chain, theta[chain.leaf], pi) - pi).sum())


def _solve(chain: StateChain, theta: np.ndarray, dense_max: int, power_max: int,
           tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> np.ndarray:
    S = len(chain)
    probs = theta[chain.leaf]
    if S <= dense_max:
        pi = _dense(chain, probs)
    elif S <= power_max:
        pi = _power(chain, probs, tol, max_iter)
        if pi is None:
            raise BudgetError(f"power iteration did not converge in {max_iter} steps")
    else:
        raise BudgetError(f"{S} states exceed the exact-mode budget of {power_max}")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution(spec: ChainSpec, dense_max: int = DENSE_MAX_STATES,
                            power_max: int = POWER_MAX_STATES) -> np.ndarray:
    """Stationary law of the order-``d`` block chain, indexed by block code.

    Entry ``c`` is the probability that the last ``d`` symbols are
    ``x_t = c % m``, ``x_{t-1} = (c // m) % m``, and so on.
    """
    _check_positive(spec.theta)
    d = spec.depth
    if spec.m ** d > power_max:
        raise BudgetError(f"{spec.m}^{d} block states exceed the exact-mode budget; "
                          "use the Monte Carlo method")
    return _solve(block_chain(spec.tree, d), spec.theta, dense_max, power_max)


def leaf_entropies(theta: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each row, with 0 log 0 = 0."""
    t = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(t > 0, -t * np.log(t), 0.0)
    return terms.sum(axis=-1)


def _clip_entropy(h: float, m: int) -> float:
    return float(min(max(h, 0.0), math.log(m)))


def entropy_rate_exact(spec: ChainSpec, dense_max: int = DENSE_MAX_STATES,
                       power_max: int = POWER_MAX_STATES) -> float:
    """Entropy rate in nats per symbol from the stationary distribution."""
    _check_positive(spec.theta)
    chain = closed_chain(spec.tree, power_max)
    if chain is None:
        raise BudgetError("state space exceeds the exact-mode budget; use the Monte Carlo method")
    pi = _solve(chain, spec.theta, dense_max, power_max)
    h = leaf_entropies(spec.theta)
    return _clip_entropy(float(pi @ h[chain.leaf]), spec.m)


def entropy_rate_mc(spec: ChainSpec, length: int = DEFAULT_MC_LENGTH, seed=0,
                    batches: int = 100) -> tuple[float, float]:
    """Monte Carlo entropy rate ``-(1/M) log P(Y_1^M | context)`` and its standard error.

    The path starts from a burned-in context.  The standard error uses
    non-overlapping batch means, which accounts for serial correlation.
    """
    from .simulator import SimulationRequest, generate, run_chain

    if length < 1:
        raise UsageError("Monte Carlo length must be at least 1")
    rng = np.random.default_rng(seed)
    warm = generate(SimulationRequest(spec, 1, seed=int(rng.integers(2**63))))
    history = np.concatenate([warm.initial_context, warm.symbols]).tolist()
    syms, leaves = run_chain(spec, history, rng.random(length))
    p = spec.theta[leaves, syms]
    if np.any(p <= 0):
        raise RuntimeError("simulated a transition of probability zero")
    terms = -np.log(p)
    h = float(terms.mean())
    b = min(batches, length)
    if b < 2:
        return _clip_entropy(h, spec.m), math.nan
    size = length // b
    means = terms[: b * size].reshape(b, size).mean(axis=1)
    return _clip_entropy(h, spec.m), float(means.std(ddof=1) / math.sqrt(b))


@dataclass(frozen=True)
class EntropyPolicy:
    dense_max: int = DENSE_MAX_STATES
    power_max: int = POWER_MAX_STATES
    mc_length: int = DEFAULT_MC_LENGTH
    seed: int = 0


def _batched_entropy(chains: list, thetas: list, leaf_h: list) -> np.ndarray:
    """Exact entropies for parameter sets whose state chains share one small size.

    ``leaf_h[i]`` holds the per-leaf entropies of ``thetas[i]``.
    """
    S = len(chains[0])
    m = thetas[0].shape[1]
    out = np.empty(len(chains))
    rows = np.repeat(np.arange(S), m)
    for a in range(0, len(chains), _BATCH_ROWS):
        ch, th = chains[a:a + _BATCH_ROWS], thetas[a:a + _BATCH_ROWS]
        lh = leaf_h[a:a + _BATCH_ROWS]
        G = len(ch)
        probs = np.stack([t[c.leaf] for c, t in zip(ch, th)])
        cols = np.stack([c.next_state.ravel() for c in ch])
        P = np.zeros((G, S, S))
        np.add.at(P, (np.arange(G)[:, None], rows[None, :], cols), probs.reshape(G, -1))
        A = np.transpose(P, (0, 2, 1)) - np.eye(S)
        A[:, -1, :] = 1.0
        b = np.zeros((G, S, 1))
        b[:, -1, 0] = 1.0
        pi = np.clip(np.linalg.solve(A, b)[..., 0], 0.0, None)
        pi /= pi.sum(axis=1, keepdims=True)
        h = np.stack([hh[c.leaf] for c, hh in zip(ch, lh)])
        out[a:a + G] = (pi * h).sum(axis=1)
    return np.clip(out, 0.0, math.log(m))


def _one(tree: TreeModel, theta: np.ndarray, index: int, policy: EntropyPolicy):
    chain = closed_chain(tree, policy.power_max)
    if chain is not None and np.all(theta > 0):
        try:
            pi = _solve(chain, theta, policy.dense_max, policy.power_max)
            h = leaf_entropies(theta)
            return _clip_entropy(float(pi @ h[chain.leaf]), tree.m), "exact"
        except BudgetError as exc:
            log.warning("sample %d: %s; falling back to Monte Carlo", index, exc)
    h, _ = entropy_rate_mc(ChainSpec(tree, theta), policy.mc_length, seed=[policy.seed, index])
    return h, "mc"


def _fill_chunk(items, policy: EntropyPolicy):
    """Entropy for ``(tree, theta, index)`` items; returns parallel lists."""
    H = [math.nan] * len(items)
    methods = ["failed"] * len(items)
    if not items:
        return H, methods
    flat_h = leaf_entropies(np.concatenate([it[1] for it in items]))
    cuts = np.cumsum([len(it[0]) for it in items])[:-1]
    leaf_h = np.split(flat_h, cuts)
    buckets = {}
    for pos, (tree, theta, index) in enumerate(items):
        chain = closed_chain(tree, policy.power_max)
        if chain is not None and len(chain) <= _BATCH_MAX_STATES and np.all(theta > 0):
            buckets.setdefault(len(chain), []).append((pos, chain))
            continue
        try:
            H[pos], methods[pos] = _one(tree, theta, index, policy)
        except Exception as exc:  # counted and reported, batch continues
            log.error("sample %d: entropy failed: %s", index, exc)
    for S, members in sorted(buckets.items()):
        vals = _batched_entropy([c for _, c in members], [items[p][1] for p, _ in members],
                                [leaf_h[p] for p, _ in members])
        for (p, _), v in zip(members, vals.tolist()):
            H[p], methods[p] = v, "exact"
    return H, methods


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer") from None


def fill_entropy(samples: PosteriorSampleSet, policy: EntropyPolicy | None = None,
                 workers: int | None = None) -> PosteriorSampleSet:
    """Compute ``H`` for every sample in place; failures are counted, not raised."""
    policy = policy or EntropyPolicy(seed=samples.seed)
    workers = worker_count() if workers is None else workers
    items = [(s.tree, s.theta, s.index) for s in samples]
    if workers > 1 and len(items) > 1:
        size = -(-len(items) // workers)
        chunks = [items[a:a + size] for a in range(0, len(items), size)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_fill_chunk, chunks, [policy] * len(chunks)))
        H = [h for part in parts for h in part[0]]
        methods = [mt for part in parts for mt in part[1]]
    else:
        H, methods = _fill_chunk(items, policy)
    failed = 0
    for s, h, mt in zip(samples, H, methods):
        s.entropy, s.method = h, mt
        failed += mt == "failed"
    samples.failed = failed
    return samples


@dataclass(frozen=True)
class EntropySummary:
    n: int
    mean: float
    std: float
    level: float
    lo: float
    hi: float
    edges: np.ndarray
    freqs: np.ndarray
    min: float
    max: float


def summarize(values, level: float = 0.95, bins: int = 50) -> EntropySummary:
    """Mean, unbiased std, equal-tailed interval and normalised histogram."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size < 2:
        raise InsufficientSampleError(f"need at least 2 values to summarise, got {v.size}")
    if not 0.0 < level < 1.0:
        raise UsageError("credible level must lie in (0, 1)")
    if bins < 1:
        raise UsageError("bin count must be positive")
    lo, hi = np.quantile(v, [(1 - level) / 2, (1 + level) / 2])
    vmin, vmax = float(v.min()), float(v.max())
    if vmin == vmax:
        edges, freqs = np.array([vmin, vmax]), np.array([1.0])
    else:
        counts, edges = np.histogram(v, bins=bins, range=(vmin, vmax))
        freqs = counts / v.size
    return EntropySummary(int(v.size), float(v.mean()), float(v.std(ddof=1)), level,
                          float(lo), float(hi), edges, freqs, vmin, vmax)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def format_summary(summary: EntropySummary, header: dict | None = None) -> str:
    """Key-value document followed by the histogram table."""
    lines = ["format-version: 1"]
    for k, v in (header or {}).items():
        lines.append(f"{k}: {v}")
    lines += [
        f"values: {summary.n}",
        f"mean: {_fmt(summary.mean)}",
        f"std: {_fmt(summary.std)}",
        f"credible-level: {_fmt(summary.level)}",
        f"credible-lo: {_fmt(summary.lo)}",
        f"credible-hi: {_fmt(summary.hi)}",
        f"min: {_fmt(summary.min)}",
        f"max: {_fmt(summary.max)}",
        f"histogram-bins: {summary.freqs.size}",
        "histogram:",
        "  bin_lo\tbin_hi\tfrequency",
    ]
    for a, b, f in zip(summary.edges[:-1], summary.edges[1:], summary.freqs):
        lines.append(f"  {_fmt(a)}\t{_fmt(b)}\t{_fmt(f)}")
    return "\n".join(lines) + "\n"


def histogram_csv(summary: EntropySummary) -> str:
    lines = ["bin_lo,bin_hi,frequency"]
    edges, freqs = summary.edges.tolist(), summary.freqs.tolist()
    for a, b, f in zip(edges[:-1], edges[1:], freqs):
        lines.append(f"{a!r},{b!r},{f!r}")
    return "\n".join(lines) + "\n"
