"""End-to-end runs shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import baselines
from .ctw import PriorConfig, build_tmax, empty_tree
from .entropy import EntropyPolicy, EntropySummary, fill_entropy, summarize
from .errors import UsageError
from .posterior import PosteriorSampleSet, sample_joint
from .sequence import Sequence

ESTIMATORS = ("bct", "ctw", "ppm", "lz", "plugin")
DEFAULT_PLUGIN_K = (5, 6, 7)


@dataclass
class PosteriorRun:
    samples: PosteriorSampleSet
    summary: EntropySummary
    n: int

    @property
    def method_counts(self) -> dict:
        out = {}
        for s in self.samples:
            out[s.method] = out.get(s.method, 0) + 1
        return dict(sorted(out.items()))


def posterior_entropy(x: Sequence, cfg: PriorConfig, n_samples: int, seed: int,
                      policy: EntropyPolicy | None = None, level: float = 0.95,
                      bins: int = 50, workers: int | None = None) -> PosteriorRun:
    tree = build_tmax(x, cfg)
    samples = sample_joint(tree, n_samples, seed)
    fill_entropy(samples, policy or EntropyPolicy(seed=seed), workers=workers)
    return PosteriorRun(samples, summarize(samples.entropies(), level, bins), tree.n)


def prior_entropy(cfg: PriorConfig, n_samples: int, seed: int,
                  policy: EntropyPolicy | None = None, level: float = 0.95,
                  bins: int = 50, workers: int | None = None) -> PosteriorRun:
    samples = sample_joint(empty_tree(cfg), n_samples, seed)
    fill_entropy(samples, policy or EntropyPolicy(seed=seed), workers=workers)
    return PosteriorRun(samples, summarize(samples.entropies(), level, bins), 0)


def parse_estimators(spec: str) -> list[str]:
    names = [s.strip() for s in spec.split(",") if s.strip()]
    bad = [s for s in names if s not in ESTIMATORS]
    if bad or not names:
        raise UsageError(f"unknown estimator(s) {bad}; choose from {','.join(ESTIMATORS)}")
    return names


@dataclass
class EstimateRow:
    name: str
    value: float
    std: float = math.nan
    lo: float = math.nan
    hi: float = math.nan


def run_estimators(x: Sequence, cfg: PriorConfig, names, plugin_k=DEFAULT_PLUGIN_K,
                   n_samples: int = 100_000, seed: int = 0,
                   policy: EntropyPolicy | None = None, level: float = 0.95,
                   bins: int = 50) -> tuple[list[EstimateRow], PosteriorRun | None]:
    """Point estimates, in nats, for each selected estimator.

    BCT and CTW consume the depth-``D`` context convention of
    :meth:`Sequence.split_context`; the other estimators use the data symbols.
    """
    rows = []
    run = None
    for name in names:
        if name == "bct":
            run = posterior_entropy(x, cfg, n_samples, seed, policy, level, bins)
            s = run.summary
            rows.append(EstimateRow("bct", s.mean, s.std, s.lo, s.hi))
        elif name == "ctw":
            tree = build_tmax(x, cfg)
            rows.append(EstimateRow("ctw", -tree.log_pw_root / tree.n))
        elif name == "ppm":
            rows.append(EstimateRow("ppm", baselines.ppm_estimate(x, cfg.depth)))
        elif name == "lz":
            rows.append(EstimateRow("lz", baselines.lz_estimate(x)))
        elif name == "plugin":
            for k in plugin_k:
                rows.append(EstimateRow(f"plugin-k{k}", baselines.plugin_estimate(x, k)))
    return rows, run


def median_abs_error(values, truth: float) -> float:
    return float(np.median(np.abs(np.asarray(values) - truth)))
