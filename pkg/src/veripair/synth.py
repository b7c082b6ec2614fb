"""Seeded synthetic datasets: multi-view Gaussian identities + stripe descriptors.

Each identity gets a center on the unit sphere and `views` appearance
modes offset from it (stand-ins for camera viewpoints), so clusterings
tend to both fragment identities across modes and mix close identities
within one cluster -- the two error types the annotation loop corrects.
`overlap` is the ratio of the per-sample noise norm to the typical
center separation (~sqrt(2) for random unit centers).

Each identity also carries a characteristic stripe pattern (an integer
stripe index per channel) from which per-sample g-descriptors are drawn
with a few randomly flipped channels.
"""

from __future__ import annotations

import numpy as np

from .dataset import EmbeddingDataset


def make_synthetic(num_identities, per_identity, overlap, seed,
                   feature_dim=32, g_dim=8, g_stripes=6, g_flip_rate=0.1,
                   views=2, view_spread=0.4):
    """Generate an EmbeddingDataset with ground-truth identities."""
    if num_identities < 1 or per_identity < 1:
        raise ValueError("need at least one identity and one sample per identity")
    rng = np.random.default_rng(seed)
    n = num_identities * per_identity

    centers = rng.standard_normal((num_identities, feature_dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    separation = np.sqrt(2.0)
    noise_per_dim = overlap * separation / np.sqrt(feature_dim)

    offsets = rng.standard_normal((num_identities, views, feature_dim))
    offsets /= np.linalg.norm(offsets, axis=2, keepdims=True)
    mode_centers = centers[:, None, :] + view_spread * separation * offsets

    identities = np.repeat(np.arange(num_identities), per_identity)
    sample_view = rng.integers(0, views, size=n)
    features = (mode_centers[identities, sample_view]
                + noise_per_dim * rng.standard_normal((n, feature_dim)))

    patterns = rng.integers(0, g_stripes, size=(num_identities, g_dim))
    g = patterns[identities].astype(np.float64)
    flips = rng.random((n, g_dim)) < g_flip_rate
    g[flips] = rng.integers(0, g_stripes, size=int(flips.sum())).astype(np.float64)

    return EmbeddingDataset(features, g, identities,
                            num_identities=num_identities)
