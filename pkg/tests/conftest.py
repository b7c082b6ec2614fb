"""Shared fixtures: manifest writing and tiny cluster-set builders."""

import json

import numpy as np
import pytest

from veripair.clustering import build_clusters


def write_manifest(tmp_path, features, g=None, labels=None, name="data",
                   blob_override=None, extra=None):
    """Write a dataset manifest plus blobs into tmp_path, return the path."""
    features = np.asarray(features, dtype=np.float64)
    n, dim = features.shape
    manifest = {"n": n, "feature_dim": dim, "features_path": f"{name}.features.f32"}
    blob = features.astype("<f4").tobytes() if blob_override is None else blob_override
    (tmp_path / manifest["features_path"]).write_bytes(blob)
    if g is not None:
        g = np.asarray(g, dtype=np.float64)
        manifest["g_dim"] = g.shape[1]
        manifest["g_path"] = f"{name}.g.f32"
        (tmp_path / manifest["g_path"]).write_bytes(g.astype("<f4").tobytes())
    if labels is not None:
        manifest["labels_path"] = f"{name}.labels.txt"
        (tmp_path / manifest["labels_path"]).write_text(
            "\n".join(str(int(v)) for v in labels) + "\n")
    if extra:
        manifest.update(extra)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(manifest))
    return path


def clusters_from_assignment(assignment, features, g=None, gamma=0.1):
    return build_clusters(np.asarray(assignment), np.asarray(features, dtype=float),
                          None if g is None else np.asarray(g, dtype=float), gamma)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
