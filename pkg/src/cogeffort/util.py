"""Shared numerics: seeded substreams and Pearson correlation."""

import math

import numpy as np

# Domain tags keeping independent random streams from colliding. Every consumer
# of randomness derives its generator from (seed, domain, *indices), so results
# do not depend on the order in which streams are created or consumed.
DOMAIN_PARTICIPANT = 1
DOMAIN_TRIAL = 2
DOMAIN_INIT = 3
DOMAIN_SHUFFLE = 4
DOMAIN_DROPOUT = 5
DOMAIN_SMOTE = 6
DOMAIN_GRID = 7
DOMAIN_FOREST = 8
DOMAIN_GBT = 9
DOMAIN_SHAP = 10

_U64 = (1 << 64) - 1


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator identified by (seed, key).

    Streams with distinct keys are statistically independent and stable across
    runs, so callers may draw from them in any order (or in parallel) without
    changing results.
    """
    entropy = int(seed) & _U64
    spawn_key = tuple(int(k) & _U64 for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key))


def derive_seed(seed: int, *key: int) -> int:
    """Stable 63-bit integer seed derived from (seed, key)."""
    words = np.random.SeedSequence(entropy=int(seed) & _U64,
                                   spawn_key=tuple(int(k) & _U64 for k in key)).generate_state(2)
    return int((int(words[0]) | (int(words[1]) << 32)) & ((1 << 63) - 1))


def pearson(x, y) -> tuple[float, bool]:
    """Pearson correlation via centered cross/auto sums.

    Returns ``(r, True)``, or ``(0.0, False)`` when either input has zero
    variance (r is undefined there; callers decide how to flag it). Computing
    r as sum(dx*dy)/sqrt(sum(dx^2)*sum(dy^2)) makes r exactly 1.0 for
    element-wise identical inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs two equal-length vectors, got {x.shape} and {y.shape}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx <= 0.0 or syy <= 0.0:
        return 0.0, False
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r)), True


def population_sd(values) -> float:
    """Standard deviation with the population (1/N) convention."""
    arr = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(np.mean((arr - arr.mean()) ** 2)))


def participant_sort_key(pid: str):
    """Natural ordering for ids like P2 < P10; falls back to plain strings."""
    if len(pid) > 1 and pid[0] == "P" and pid[1:].isdigit():
        return (0, int(pid[1:]), pid)
    return (1, 0, pid)
