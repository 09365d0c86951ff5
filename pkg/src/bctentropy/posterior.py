"""Exact i.i.d. sampling from the joint posterior over trees and parameters.

Trees are drawn top-down: at every node the sampler stops (marks a leaf)
with the branching probability ``beta * P_e / P_w`` and otherwise opens all
``m`` children.  Nodes outside the count tree have ``P_e = P_w = 1`` and so
stop with probability ``beta``.  Leaf parameters are Dirichlet with the
half-count prior added to the leaf's counts.

All samples are processed together node by node.  Every random decision
comes from :mod:`bctentropy.streams`, keyed by sample index and by the
node's context, so a sample's value never depends on which other samples
were drawn alongside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincinv

from . import streams
from .ctw import ContextTree
from .errors import BudgetError, UsageError
from .models import ChainSpec, TreeModel, context_label, parse_context_label

DEFAULT_SAMPLES = 100_000
DEFAULT_MEMORY_BUDGET = 4 * 2**30


@dataclass(slots=True)
class JointSample:
    index: int
    tree: TreeModel
    theta: np.ndarray
    entropy: float = math.nan
    method: str = ""

    @property
    def chain(self) -> ChainSpec:
        return ChainSpec(self.tree, self.theta)


@dataclass
class PosteriorSampleSet:
    m: int
    depth: int
    seed: int
    samples: list = field(default_factory=list)
    failed: int = 0

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def entropies(self) -> np.ndarray:
        return np.array([s.entropy for s in self.samples])

    def distinct_trees(self) -> dict:
        out = {}
        for s in self.samples:
            out[s.tree] = out.get(s.tree, 0) + 1
        return out

    def merged(self, other: "PosteriorSampleSet") -> "PosteriorSampleSet":
        return PosteriorSampleSet(self.m, self.depth, self.seed,
                                  self.samples + other.samples, self.failed + other.failed)


def path_key(s) -> np.uint64:
    key = streams.ROOT_KEY
    for c in s:
        key = streams.child_key(key, c)
    return key


def branch_prob(tree: ContextTree, s) -> float:
    """Probability that the sampler stops at context ``s``."""
    if len(s) >= tree.depth:
        return 1.0
    loc = tree.find(s)
    if loc is None:
        return tree.cfg.beta
    k, i = loc
    return float(math.exp(tree.log_branch(k)[i]))


def expected_leaves(tree: ContextTree) -> float:
    """Expected number of leaves of a posterior tree draw."""
    cfg, m, D = tree.cfg, tree.m, tree.depth
    virtual = [1.0] * (D + 1)
    for k in range(D - 1, -1, -1):
        virtual[k] = cfg.beta + (1 - cfg.beta) * m * virtual[k + 1]
    below = np.ones(len(tree.levels[D]))
    for k in range(D - 1, -1, -1):
        lv, nxt = tree.levels[k], tree.levels[k + 1]
        pb = np.exp(tree.log_branch(k))
        kids = np.bincount(nxt.parent, weights=below, minlength=len(lv))
        n_kids = np.bincount(nxt.parent, minlength=len(lv))
        below = pb + (1 - pb) * (kids + (m - n_kids) * virtual[k + 1])
    return float(below[0])


def _draw_structure(tree: ContextTree, key, sample_ids: np.ndarray):
    """Traverse nodes with the set of samples reaching each.

    Returns leaf contexts, their counts and keys, and the (sample, leaf)
    incidence as two parallel arrays.
    """
    m, D, beta = tree.m, tree.depth, tree.cfg.beta
    log_pb = [tree.log_branch(k) for k in range(D)]
    contexts, counts, keys = [], [], []
    hit_samples, hit_leaves = [], []
    zero = np.zeros(m, dtype=np.int64)
    stack = [((), 0, 0, streams.ROOT_KEY, sample_ids)]
    while stack:
        s, k, i, node_key, reach = stack.pop()
        if k == D:
            stop = np.ones(reach.size, dtype=bool)
        else:
            pb = math.exp(log_pb[k][i]) if i >= 0 else beta
            stop = streams.uniforms(key, reach, node_key) < pb
        if stop.any():
            leaf = len(contexts)
            contexts.append(s)
            counts.append(tree.levels[k].counts[i] if i >= 0 else zero)
            keys.append(node_key)
            stopped = reach[stop]
            hit_samples.append(stopped)
            hit_leaves.append(np.full(stopped.size, leaf, dtype=np.int64))
        go = reach[~stop]
        if go.size:
            kids = tree.children(k, [i])[0] if i >= 0 else (-1,) * m
            for c in range(m - 1, -1, -1):
                stack.append((s + (c,), k + 1, int(kids[c]),
                              streams.child_key(node_key, c), go))
    return (contexts, np.array(counts, dtype=np.int64).reshape(-1, m),
            np.array(keys, dtype=np.uint64), np.concatenate(hit_samples),
            np.concatenate(hit_leaves))


def _dirichlet(counts: np.ndarray, key, samples: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """Dirichlet(counts + 1/2) rows via inverse-CDF Gamma draws, normalised."""
    m = counts.shape[1]
    u = np.empty(counts.shape)
    for j in range(m):
        u[:, j] = streams.uniforms(key, samples, sites, lane=j + 1)
    g = gammaincinv(counts + 0.5, u)
    return g / g.sum(axis=1, keepdims=True)


def sample_joint(tree: ContextTree, n_samples: int, seed: int, start: int = 0,
                 memory_budget: float = DEFAULT_MEMORY_BUDGET) -> PosteriorSampleSet:
    """Draw samples ``start .. start + n_samples - 1`` from the joint posterior.

    Entropy fields are left unfilled.  Splitting an index range into pieces
    and merging the pieces reproduces the unsplit draw exactly.
    """
    if n_samples < 1:
        raise UsageError("number of samples must be at least 1")
    m = tree.m
    est = n_samples * expected_leaves(tree) * (8 * m + 64)
    if est > memory_budget:
        raise BudgetError(
            f"about {est / 2**20:.0f} MiB needed for {n_samples} samples, "
            f"budget is {memory_budget / 2**20:.0f} MiB")
    key = streams.seed_key(seed)
    ids = np.arange(start, start + n_samples, dtype=np.int64)
    contexts, counts, keys, hit_s, hit_l = _draw_structure(tree, key, ids)

    # relabel leaves so that within a sample they come out in context order
    order = sorted(range(len(contexts)), key=lambda i: contexts[i])
    rank = np.empty(len(contexts), dtype=np.int64)
    rank[order] = np.arange(len(contexts))
    contexts = [contexts[i] for i in order]
    counts, keys = counts[order], keys[order]
    hit_l = rank[hit_l]
    perm = np.lexsort((hit_l, hit_s))
    hit_s, hit_l = hit_s[perm], hit_l[perm]

    theta = _dirichlet(counts[hit_l], key, hit_s, keys[hit_l])
    bounds = np.flatnonzero(np.diff(hit_s)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [hit_s.size]])

    interned = {}
    out = []
    for a, b in zip(starts.tolist(), stops.tolist()):
        sig = hit_l[a:b].tobytes()
        tm = interned.get(sig)
        if tm is None:
            tm = TreeModel(m, tuple(contexts[j] for j in hit_l[a:b]))
            interned[sig] = tm
        out.append(JointSample(int(hit_s[a]), tm, theta[a:b]))
    return PosteriorSampleSet(m, tree.depth, seed, out)


def sample_tree(tree: ContextTree, seed: int, index: int = 0) -> TreeModel:
    """One posterior tree draw (sample ``index`` of the stream ``seed``)."""
    key = streams.seed_key(seed)
    contexts, _, _, _, hit_l = _draw_structure(tree, key, np.array([index], dtype=np.int64))
    return TreeModel(tree.m, tuple(contexts[j] for j in hit_l))


def sample_params(model: TreeModel, tree: ContextTree, seed: int, index: int = 0) -> np.ndarray:
    """Leaf parameters for ``model`` drawn from their Dirichlet full conditionals.

    Rows follow ``model.leaves``; leaves the data never reached use zero counts.
    """
    key = streams.seed_key(seed)
    counts = np.array([tree.counts_for(s) for s in model.leaves], dtype=np.int64)
    sites = np.array([path_key(s) for s in model.leaves], dtype=np.uint64)
    samples = np.full(len(model), index, dtype=np.int64)
    return _dirichlet(counts, key, samples, sites)


def format_samples(samples: PosteriorSampleSet) -> str:
    """One record per line: index, H, method, leaf contexts, flattened theta."""
    lines = [f"# format-version: 1", f"# m: {samples.m}", f"# depth: {samples.depth}",
             f"# seed: {samples.seed}", "# index\tH\tmethod\tleaves\ttheta"]
    for s in samples:
        leaves = ",".join(context_label(c) for c in s.tree.leaves)
        theta = ",".join(repr(float(v)) for v in s.theta.ravel())
        lines.append(f"{s.index}\t{s.entropy!r}\t{s.method or '-'}\t{leaves}\t{theta}")
    return "\n".join(lines) + "\n"


def parse_samples(text: str) -> PosteriorSampleSet:
    header = {}
    records = []
    for line in text.splitlines():
        if line.startswith("#"):
            if ":" in line:
                k, v = line[1:].split(":", 1)
                header[k.strip()] = v.strip()
            continue
        if line.strip():
            records.append(line.split("\t"))
    m = int(header["m"])
    out = PosteriorSampleSet(m, int(header["depth"]), int(header["seed"]))
    for idx, h, method, leaves, theta in records:
        tm = TreeModel(m, tuple(parse_context_label(c) for c in leaves.split(",")))
        th = np.array([float(v) for v in theta.split(",")]).reshape(len(tm), m)
        out.samples.append(JointSample(int(idx), tm, th, float(h), "" if method == "-" else method))
    return out
