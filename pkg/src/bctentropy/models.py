"""Variable-memory chain models: proper context trees and their parameters.

Contexts are tuples listed most-recent-symbol first, so the context
``(1, 0)`` matches a past ending ``..., 0, 1``.  The root (empty context)
is ``()``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence as Seq

import numpy as np

from .errors import UsageError


def context_label(s) -> str:
    """Compact printable form of a context; the root prints as ``-``."""
    if not s:
        return "-"
    if max(s) < 10:
        return "".join(map(str, s))
    return ".".join(map(str, s))


def parse_context_label(label: str) -> tuple:
    if label == "-":
        return ()
    if "." in label:
        return tuple(int(t) for t in label.split("."))
    return tuple(int(ch) for ch in label)


@dataclass(frozen=True, eq=False)
class TreeModel:
    """A proper m-ary tree, stored as its sorted tuple of leaf contexts."""

    m: int
    leaves: tuple
    _lookup: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        leaves = tuple(sorted(tuple(int(c) for c in s) for s in self.leaves))
        object.__setattr__(self, "leaves", leaves)
        if not leaves:
            raise UsageError("a tree needs at least one leaf")
        for s in leaves:
            if any(not 0 <= c < self.m for c in s):
                raise UsageError(f"context {s} has a symbol outside 0..{self.m - 1}")
        leafset = set(leaves)
        if len(leafset) != len(leaves):
            raise UsageError("duplicate leaf context")
        for s in leaves:
            for k in range(len(s)):
                if s[:k] in leafset:
                    raise UsageError(f"leaf {s[:k]} is a prefix of leaf {s}: tree is not proper")
        d = max(len(s) for s in leaves)
        if sum(self.m ** (d - len(s)) for s in leaves) != self.m ** d:
            raise UsageError("leaves do not form a proper tree (some internal node lacks children)")
        object.__setattr__(self, "_lookup", _nested(leaves, self.m))

    def __eq__(self, other):
        if not isinstance(other, TreeModel):
            return NotImplemented
        return self.m == other.m and self.leaves == other.leaves

    def __hash__(self):
        return hash((self.m, self.leaves))

    def __len__(self):
        return len(self.leaves)

    @property
    def depth(self) -> int:
        return max(len(s) for s in self.leaves)

    def leaves_at_depth(self, d: int) -> int:
        return sum(1 for s in self.leaves if len(s) == d)

    def index(self, s) -> int:
        return self.leaves.index(tuple(s))

    def leaf_for_history(self, history: Seq[int]) -> int:
        """Index of the leaf suffixing ``history`` (given in time order)."""
        node = self._lookup
        k = 1
        while type(node) is list:
            node = node[history[-k]]
            k += 1
        return node

    @property
    def lookup(self):
        """Nested lists for fast leaf search; a leaf is its integer index."""
        return self._lookup

    @classmethod
    def empty(cls, m: int) -> "TreeModel":
        return cls(m, ((),))

    @classmethod
    def full(cls, m: int, depth: int) -> "TreeModel":
        leaves = [()]
        for _ in range(depth):
            leaves = [s + (c,) for s in leaves for c in range(m)]
        return cls(m, tuple(leaves))


def _nested(leaves, m):
    index = {s: i for i, s in enumerate(leaves)}

    def build(prefix):
        if prefix in index:
            return index[prefix]
        return [build(prefix + (c,)) for c in range(m)]

    return build(())


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """A fully specified chain: tree plus one next-symbol distribution per leaf.

    ``theta[i]`` belongs to ``tree.leaves[i]``.
    """

    tree: TreeModel
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (len(self.tree), self.tree.m):
            raise UsageError(
                f"theta has shape {theta.shape}, expected {(len(self.tree), self.tree.m)}")
        if np.any(~np.isfinite(theta)) or np.any(theta < 0):
            raise UsageError("theta entries must be finite and non-negative")
        if np.any(np.abs(theta.sum(axis=1) - 1.0) > 1e-12):
            raise UsageError("every theta row must sum to 1")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_dict(cls, m: int, params: dict) -> "ChainSpec":
        tree = TreeModel(m, tuple(params))
        theta = [params[s] for s in tree.leaves]
        return cls(tree, np.array(theta, dtype=float))

    @property
    def m(self) -> int:
        return self.tree.m

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def positive(self) -> bool:
        return bool(np.all(self.theta > 0))

    def params(self, s) -> np.ndarray:
        return self.theta[self.tree.index(s)]

    def __eq__(self, other):
        if not isinstance(other, ChainSpec):
            return NotImplemented
        return self.tree == other.tree and np.array_equal(self.theta, other.theta)

    def __hash__(self):
        return hash((self.tree, self.theta.tobytes()))

    def __repr__(self):
        return f"ChainSpec(m={self.m}, leaves={[context_label(s) for s in self.tree.leaves]})"
