"""Fit the vector-mode noise scale so that a synthetic corpus reproduces a
profile's measured reusability under a brute-force similarity scan."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DatasetProfile
from .workload import substream, zipf_weights


class CalibrationError(RuntimeError):
    def __init__(self, msg: str, closest_noise: float, closest_value: float):
        super().__init__(msg)
        self.closest_noise = closest_noise
        self.closest_value = closest_value


@dataclass(frozen=True)
class CalibrationResult:
    profile: str
    threshold: float
    target: float
    noise_scale: float
    achieved: float
    samples: int
    cluster_count: int
    dimension: int
    iterations: int

    def config_fragment(self) -> str:
        return (
            "[workload]\n"
            f"profile = {self.profile}\n"
            "mode = vector\n"
            f"similarity_threshold = {self.threshold:g}\n"
            f"cluster_count = {self.cluster_count}\n"
            f"noise_scale = {self.noise_scale:.6g}\n"
            "\n[lsh]\n"
            f"dimension = {self.dimension}\n"
        )


def empirical_reusability(x: np.ndarray, threshold: float, chunk: int = 2048) -> float:
    """Fraction of rows with an earlier row at cosine similarity >= threshold."""
    n = len(x)
    if n == 0:
        return 0.0
    u = x / np.linalg.norm(x, axis=1, keepdims=True)
    hits = 0
    for start in range(0, n, chunk):
        block = u[start:start + chunk]
        g = block @ u[:start + len(block)].T
        rows = np.arange(len(block))[:, None]
        g[np.arange(g.shape[1])[None, :] >= start + rows] = -np.inf
        hits += int(np.count_nonzero(g.max(axis=1) >= threshold))
    return hits / n


class _Corpus:
    """Fixed draws (centres, assignments, unit noise) reused for every noise
    level, so reusability is a smooth function of the noise scale."""

    def __init__(self, seed: int, n: int, clusters: int, dim: int, zipf_s: float):
        # Same draw order as cluster_vectors, so a fitted noise level carries over
        # to a vector-mode workload with the same seed.
        rng = substream(seed, "vectors")
        self.clusters = clusters
        if clusters == 0:
            self.base = np.zeros((n, dim))
            self.unit_noise = rng.standard_normal((n, dim))
            return
        centres = rng.standard_normal((clusters, dim))
        centres /= np.linalg.norm(centres, axis=1, keepdims=True)
        which = rng.choice(clusters, size=n, p=zipf_weights(clusters, zipf_s))
        self.base = centres[which]
        self.unit_noise = rng.standard_normal((n, dim)) / np.sqrt(dim)

    def at(self, noise: float) -> np.ndarray:
        if self.clusters == 0:
            return self.unit_noise
        return self.base + noise * self.unit_noise


def calibrate(profile: DatasetProfile, threshold: float, samples: int = 2000, cluster_count: int = 16,
              dimension: int = 32, zipf_s: float = 0.8, seed: int = 0, tolerance: float = 0.02,
              max_iter: int = 60, target: float = None) -> CalibrationResult:
    if target is None:
        target = profile.reusability(threshold)
    corpus = _Corpus(seed, samples, cluster_count, dimension, zipf_s)
    measure = lambda s: empirical_reusability(corpus.at(s), threshold)
    best = (float("inf"), 0.0, 0.0)

    def consider(s, value):
        nonlocal best
        if abs(value - target) < best[0]:
            best = (abs(value - target), s, value)
        return abs(value - target) <= tolerance

    def done(s, value, it):
        return CalibrationResult(profile.name, threshold, target, s, value, samples,
                                 cluster_count, dimension, it)

    lo, hi = 0.0, 1.0
    v_lo = measure(lo)
    if consider(lo, v_lo):
        return done(lo, v_lo, 1)
    v_hi = measure(hi)
    it = 2
    while v_hi > target and it < max_iter and cluster_count > 0:
        if consider(hi, v_hi):
            return done(hi, v_hi, it)
        lo, hi = hi, hi * 2
        v_hi = measure(hi)
        it += 1
    if consider(hi, v_hi):
        return done(hi, v_hi, it)
    while it < max_iter and cluster_count > 0 and v_lo > target:
        mid = 0.5 * (lo + hi)
        v = measure(mid)
        it += 1
        if consider(mid, v):
            return done(mid, v, it)
        if v > target:
            lo = mid
        else:
            hi = mid
    _, s, value = best
    raise CalibrationError(
        f"no noise_scale within +/-{tolerance} of {target:g} after {it} evaluations; "
        f"closest {value:.4f} at noise_scale={s:.6g}", s, value)
