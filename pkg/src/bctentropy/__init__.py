"""Bayesian entropy-rate estimation for discrete time series.

Samples the posterior over variable-memory Markov chains (Bayesian context
trees), maps each draw to its entropy rate, and provides the usual baseline
estimators for comparison.
"""

from .ctw import PriorConfig, build_tmax, ctw_entropy_estimate, prior_predictive
from .entropy import entropy_rate_exact, entropy_rate_mc, fill_entropy, summarize
from .models import ChainSpec, TreeModel
from .posterior import sample_joint
from .sequence import Alphabet, Sequence, parse_sequence, quantize_ternary

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "ChainSpec", "PriorConfig", "Sequence", "TreeModel",
    "build_tmax", "ctw_entropy_estimate", "entropy_rate_exact", "entropy_rate_mc",
    "fill_entropy", "parse_sequence", "prior_predictive", "quantize_ternary",
    "sample_joint", "summarize",
]
