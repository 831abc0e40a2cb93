"""Seeded synthetic datasets so benchmarks and CI stay hermetic."""

from __future__ import annotations

import numpy as np

from .io import VectorStore
from .errors import ParameterError
from .validation import check_positive


def gaussian_mixture(n: int, n_queries: int, dim: int, clusters: int = 32,
                     seed: int = 0, center_scale: float = 1.0,
                     cluster_scale: float = 1.0, spectrum_decay: float = 0.5):
    """Base and query vectors drawn from one seeded Gaussian mixture.

    Returns (base, queries) as float32 VectorStores; queries come from the
    same mixture so they land inside the indexed distribution.

    Two knobs keep the default geometry representative of real embedding
    sets rather than adversarial: the center spread keeps clusters
    overlapping (isolated islands defeat any greedy graph traversal), and
    per-axis scales decay as (axis+1)**-spectrum_decay, mimicking the
    sharply decaying variance spectrum of descriptor data.  An isotropic
    spectrum (decay 0) at high dimension concentrates all pairwise
    distances and is a worst case for every proximity-graph method.
    """
    check_positive("n", n)
    check_positive("dim", dim)
    check_positive("clusters", clusters)
    if spectrum_decay < 0:
        raise ParameterError("spectrum_decay must be >= 0")
    rng = np.random.default_rng(seed)
    axis = (np.arange(dim) + 1.0) ** -float(spectrum_decay)
    centers = rng.normal(0.0, center_scale, size=(clusters, dim)) * axis

    def draw(count: int) -> np.ndarray:
        which = rng.integers(0, clusters, size=count)
        noise = rng.normal(0.0, cluster_scale, size=(count, dim)) * axis
        return (centers[which] + noise).astype(np.float32)

    base = VectorStore(draw(n))
    queries = VectorStore(draw(n_queries)) if n_queries else VectorStore.empty()
    return base, queries
