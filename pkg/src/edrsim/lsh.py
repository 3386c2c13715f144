"""Random-hyperplane (sign projection) LSH for cosine similarity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import BucketId, FeatureVector, StoredEntry

MAX_HYPERPLANES = 30


class LshConfigError(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LshConfig:
    dimension: int
    num_tables: int = 4
    hyperplanes_per_table: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.dimension <= 0:
            raise LshConfigError(f"dimension must be positive, got {self.dimension}")
        if self.num_tables <= 0:
            raise LshConfigError(f"num_tables must be positive, got {self.num_tables}")
        if not 0 < self.hyperplanes_per_table <= MAX_HYPERPLANES:
            raise LshConfigError(
                f"hyperplanes_per_table must be in 1..{MAX_HYPERPLANES}, got {self.hyperplanes_per_table}"
            )


class LshIndex:
    """Immutable set of hyperplane families, one per table."""

    def __init__(self, cfg: LshConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        planes = rng.standard_normal((cfg.num_tables, cfg.hyperplanes_per_table, cfg.dimension))
        planes.setflags(write=False)
        self.planes = planes
        self._weights = (1 << np.arange(cfg.hyperplanes_per_table, dtype=np.int64))

    def hash_matrix(self, x: np.ndarray) -> np.ndarray:
        """Hash rows of ``x``; returns an int64 array of shape (n, num_tables)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.cfg.dimension:
            raise DimensionMismatch(f"expected dimension {self.cfg.dimension}, got {x.shape[1]}")
        proj = np.einsum("tkd,nd->ntk", self.planes, x)
        return ((proj > 0).astype(np.int64) * self._weights).sum(axis=2)

    def hash_vector(self, v: FeatureVector) -> list:
        row = self.hash_matrix(v.components[None, :])[0]
        return [BucketId(t, int(h)) for t, h in enumerate(row)]


def build_index(cfg: LshConfig) -> LshIndex:
    return LshIndex(cfg)


def hash_vector(index: LshIndex, v: FeatureVector) -> list:
    return index.hash_vector(v)


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimensions differ: {a.dimension} vs {b.dimension}")
    if a.norm == 0 or b.norm == 0:
        raise ValueError("cosine similarity undefined for zero vectors")
    sim = float(np.dot(a.components, b.components) / (a.norm * b.norm))
    return max(-1.0, min(1.0, sim))


def collision_probability(cos_sim: float, hyperplanes: int) -> float:
    """Closed-form probability that two vectors share a table's sign pattern."""
    theta = float(np.arccos(np.clip(cos_sim, -1.0, 1.0)))
    return (1.0 - theta / np.pi) ** hyperplanes


def nearest_similar(
    entries: Iterable[StoredEntry], v: FeatureVector, threshold: float
) -> Optional[tuple]:
    """Most similar stored entry to ``v`` if its similarity reaches ``threshold``.

    Returns ``(entry, similarity)`` or ``None``. Ties go to the earliest ``stored_at``.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"similarity threshold must be in (0, 1], got {threshold}")
    cands: Sequence[StoredEntry] = [e for e in entries if e.vector is not None]
    if not cands:
        return None
    mat = np.vstack([e.vector.components for e in cands])
    norms = np.array([e.vector.norm for e in cands])
    sims = np.clip(mat @ v.components / (norms * v.norm), -1.0, 1.0)
    best = float(sims.max())
    if best < threshold:
        return None
    tied = np.flatnonzero(sims == best)
    winner = min(tied, key=lambda i: (cands[i].stored_at, i))
    return cands[winner], best
