"""Counter-based uniform streams.

A uniform is a pure function of ``(seed, sample index, site key, lane)``, so
any subset of samples can be drawn in any order, in any process, and the
values agree bit for bit.  Mixing uses the 64-bit MurmurHash3 finaliser in
two chained rounds per input word.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xFF51AFD7ED558CCD)
_C2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

ROOT_KEY = np.uint64(0x243F6A8885A308D3)


def _fmix(h: np.ndarray) -> np.ndarray:
    h = h ^ (h >> _S33)
    h = h * _C1
    h = h ^ (h >> _S33)
    h = h * _C2
    return h ^ (h >> _S33)


def _u64(x) -> np.ndarray:
    return np.asarray(x).astype(np.uint64, copy=False).reshape(np.shape(x))


def seed_key(seed: int) -> np.uint64:
    with np.errstate(over="ignore"):
        h = _fmix(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)
        return _fmix(h ^ np.uint64((int(seed) >> 64) & 0xFFFFFFFFFFFFFFFF))[0]


def child_key(parent, symbol: int):
    """Key of the child reached from ``parent`` through ``symbol``."""
    with np.errstate(over="ignore"):
        p = np.array([parent], dtype=np.uint64)
        return _fmix(_fmix(p + np.uint64(symbol + 1) * _GOLDEN) ^ ROOT_KEY)[0]


def uniforms(key: np.uint64, samples, site, lane: int = 0) -> np.ndarray:
    """Uniforms on (0, 1) for each sample index at one site (or per-sample sites)."""
    s = _u64(samples)
    with np.errstate(over="ignore"):
        h = _fmix(s * _GOLDEN ^ key)
        h = _fmix(h + _u64(site))
        h = _fmix(h ^ (np.uint64(lane) + np.uint64(1)) * _C2)
    return ((h >> _S11).astype(np.float64) + 0.5) * _INV53
