"""Sampling paths from variable-memory chains, fixture chains, chain files."""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ContextError, FixtureError, SpecParseError, UsageError
from .models import ChainSpec, TreeModel, context_label, parse_context_label
from .sequence import Sequence

FIXTURE_FILE = "fixtures.json"
DEFAULT_BURN_IN = 1000


@dataclass(frozen=True)
class SimulationRequest:
    spec: ChainSpec
    n: int
    seed: int = 0
    context: tuple | None = None      # "given" policy when set
    context_length: int | None = None  # symbols of realised context to return
    burn_in: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("simulation length must be at least 1")
        d = self.spec.depth
        if self.context is not None and len(self.context) < d:
            raise ContextError(f"given context has {len(self.context)} symbols, chain depth is {d}")
        if self.context is None and self.burn_in is not None and self.burn_in < 10 * d:
            raise UsageError(f"burn-in must be at least {10 * d} steps for a depth-{d} chain")


def run_chain(spec: ChainSpec, history, u: np.ndarray):
    """Advance the chain once per uniform in ``u``.

    ``history`` (time order) must hold at least ``spec.depth`` symbols.
    Returns the new symbols and the index of the leaf used at each step.
    """
    theta = spec.theta
    n = u.size
    lookup = spec.tree.lookup
    if type(lookup) is not list:
        cum = np.cumsum(theta[0])
        cum[-1] = 1.0
        sym = np.searchsorted(cum, u, side="right")
        return sym.astype(np.int64), np.zeros(n, dtype=np.int64)
    cums = []
    for row in theta:
        c = np.cumsum(row)
        c[-1] = 1.0
        cums.append(c.tolist())
    hist = [int(c) for c in history]
    leaves = [0] * n
    start = len(hist)
    for t, ut in enumerate(u.tolist()):
        node = lookup
        k = 1
        while type(node) is list:
            node = node[hist[-k]]
            k += 1
        hist.append(bisect_right(cums[node], ut))
        leaves[t] = node
    return np.array(hist[start:], dtype=np.int64), np.array(leaves, dtype=np.int64)


def generate(req: SimulationRequest) -> Sequence:
    """Simulate ``req.n`` symbols; the realised context is attached to the result.

    Without a given context the chain starts from all zeros and discards a
    burn-in of ``1000 + 10 * depth`` steps (or ``req.burn_in``).
    """
    spec = req.spec
    d = spec.depth
    ctx_len = d if req.context_length is None else req.context_length
    rng = np.random.default_rng(req.seed)
    if req.context is not None:
        given = [int(c) for c in req.context]
        if any(not 0 <= c < spec.m for c in given):
            raise ContextError("given context has a symbol outside the alphabet")
        if len(given) < ctx_len:
            raise ContextError(f"given context has {len(given)} symbols, {ctx_len} requested")
        syms, _ = run_chain(spec, given, rng.random(req.n))
        return Sequence(syms, spec.m, initial_context=given[len(given) - ctx_len:])
    burn = DEFAULT_BURN_IN + 10 * d if req.burn_in is None else req.burn_in
    total = burn + ctx_len + req.n
    syms, _ = run_chain(spec, [0] * d, rng.random(total))
    return Sequence(syms[burn + ctx_len:], spec.m, initial_context=syms[burn:burn + ctx_len])


def simulate(spec: ChainSpec, n: int, seed: int = 0, context_length: int | None = None) -> Sequence:
    return generate(SimulationRequest(spec, n, seed, context_length=context_length))


# -- chain spec files ---------------------------------------------------------

def format_chain(spec: ChainSpec) -> str:
    lines = ["# variable-memory chain", "format-version: 1", f"alphabet: {spec.m}"]
    for s, row in zip(spec.tree.leaves, spec.theta):
        lines.append(f"leaf {context_label(s)}: " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_chain(text: str) -> ChainSpec:
    m = None
    params = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise SpecParseError(f"expected 'key: value', got {line!r}", lineno)
        key, value = (p.strip() for p in line.split(":", 1))
        if key == "format-version":
            if value != "1":
                raise SpecParseError(f"unsupported format version {value}", lineno)
        elif key == "alphabet":
            try:
                m = int(value)
            except ValueError:
                raise SpecParseError(f"bad alphabet size {value!r}", lineno) from None
        elif key.startswith("leaf "):
            if m is None:
                raise SpecParseError("alphabet must be declared before leaves", lineno)
            try:
                s = parse_context_label(key[5:].strip())
                row = [float(v) for v in value.split()]
            except ValueError:
                raise SpecParseError(f"bad leaf line {raw!r}", lineno) from None
            if len(row) != m:
                raise SpecParseError(f"leaf has {len(row)} probabilities, alphabet is {m}", lineno)
            if s in params:
                raise SpecParseError(f"duplicate leaf {key[5:].strip()}", lineno)
            params[s] = row
        else:
            raise SpecParseError(f"unknown key {key!r}", lineno)
    if m is None or not params:
        raise SpecParseError("chain file needs an alphabet and at least one leaf")
    try:
        return ChainSpec.from_dict(m, params)
    except UsageError as exc:
        raise SpecParseError(str(exc)) from None


def read_chain(path) -> ChainSpec:
    try:
        return parse_chain(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


# -- fixtures -----------------------------------------------------------------

@dataclass(frozen=True)
class Fixture:
    name: str
    spec: ChainSpec
    entropy: float
    description: str = ""


def _fixture_table(path=None) -> dict:
    if path is None:
        text = resources.files("bctentropy").joinpath("data").joinpath(FIXTURE_FILE).read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def fixture_names() -> list[str]:
    return sorted(_fixture_table())


def fixture_chain(name: str) -> Fixture:
    table = _fixture_table()
    if name not in table:
        raise FixtureError(f"unknown fixture {name!r}; choose from {', '.join(sorted(table))}")
    entry = table[name]
    params = {parse_context_label(k): v for k, v in entry["leaves"].items()}
    spec = ChainSpec.from_dict(entry["m"], params)
    return Fixture(name, spec, float(entry["entropy"]), entry.get("description", ""))


def regenerate_fixtures(path) -> dict:
    """Recompute and rewrite the pinned entropy of every fixture in ``path``."""
    from .entropy import entropy_rate_exact

    table = _fixture_table(path)
    for entry in table.values():
        params = {parse_context_label(k): v for k, v in entry["leaves"].items()}
        entry["entropy"] = entropy_rate_exact(ChainSpec.from_dict(entry["m"], params))
    Path(path).write_text(json.dumps(table, indent=2) + "\n")
    return table


def random_chain(m: int, max_depth: int, concentration: float = 1.0, seed: int = 0) -> ChainSpec:
    """Random positive chain: tree grown with split probability 1/2, symmetric Dirichlet leaves."""
    if m < 2 or max_depth < 0 or concentration <= 0:
        raise UsageError("need m >= 2, max_depth >= 0 and a positive concentration")
    rng = np.random.default_rng(seed)
    leaves = []
    stack = [()]
    while stack:
        s = stack.pop()
        if len(s) < max_depth and rng.random() < 0.5:
            stack.extend(s + (c,) for c in range(m))
        else:
            leaves.append(s)
    tree = TreeModel(m, tuple(leaves))
    theta = np.empty((len(tree), m))
    for i in range(len(tree)):
        row = rng.dirichlet(np.full(m, concentration))
        while not np.all(row > 0):
            row = rng.dirichlet(np.full(m, concentration))
        theta[i] = row
    # exact renormalisation so rows pass the simplex check
    theta /= theta.sum(axis=1, keepdims=True)
    return ChainSpec(tree, theta)

