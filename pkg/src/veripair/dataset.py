"""Embedding dataset loading, validation, and query/gallery splitting.

A dataset is described by a JSON manifest (keys: n, feature_dim,
features_path, optional g_dim, g_path, labels_path, images_dir) next to raw
row-major little-endian float32 blobs. Ground-truth identities, when
present, are held behind an access guard: selection and training code must
never read them, only the simulated oracle and the evaluator may unlock.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OUTLIER = -1


class DatasetError(ValueError):
    """Malformed manifest, blob, or labels file."""


class LabelAccessError(RuntimeError):
    """Ground-truth identities were read outside an unlocked scope."""


class _LabelVault:
    """Gate around ground-truth identities shared by a dataset's samples."""

    def __init__(self):
        self._depth = 0
        self.reads = 0

    @property
    def locked(self):
        return self._depth == 0

    def check(self):
        if self.locked:
            raise LabelAccessError(
                "ground-truth identities are locked; only the oracle and the "
                "evaluator may read them (use dataset.unlocked_labels())"
            )
        self.reads += 1

    @contextmanager
    def unlocked(self):
        self._depth += 1
        try:
            yield
        finally:
            self._depth -= 1


@dataclass
class Sample:
    """One item: an id, its base feature, and optional g-descriptor/identity."""

    id: int
    base_feature: np.ndarray
    g_descriptor: np.ndarray | None = None
    image_ref: str | None = None
    _identity: int | None = field(default=None, repr=False)
    _vault: _LabelVault | None = field(default=None, repr=False)

    @property
    def identity(self) -> int | None:
        if self._vault is not None:
            self._vault.check()
        return self._identity

    @property
    def has_identity(self) -> bool:
        return self._identity is not None


class EmbeddingDataset:
    """Ordered collection of samples with dense feature/descriptor matrices.

    Immutable after construction; safe for concurrent reads. `features`
    and `g_descriptors` are float64 matrices (row i = sample i).
    """

    def __init__(self, features, g_descriptors=None, identities=None,
                 image_refs=None, num_identities=None, cameras=None):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise DatasetError("features must be a 2-d array")
        self.features = features
        self.n = features.shape[0]
        self.feature_dim = features.shape[1]
        self._vault = _LabelVault()

        if g_descriptors is not None:
            g_descriptors = np.asarray(g_descriptors, dtype=np.float64)
            if g_descriptors.shape[0] != self.n:
                raise DatasetError("g-descriptor count differs from sample count")
        self.g_descriptors = g_descriptors

        if identities is not None:
            identities = np.asarray(identities, dtype=np.int64)
            if identities.shape != (self.n,):
                raise DatasetError("labels length differs from sample count")
            if (identities < 0).any():
                raise DatasetError("identities must be non-negative integers")
            if num_identities is None:
                num_identities = int(identities.max()) + 1 if self.n else 0
            elif (identities >= num_identities).any():
                raise DatasetError("identity out of range for num_identities")
        self._identities = identities
        self.num_identities = num_identities
        self.image_refs = image_refs

        if cameras is not None:
            cameras = np.asarray(cameras, dtype=np.int64)
            if cameras.shape != (self.n,):
                raise DatasetError("camera list length differs from sample count")
        self.cameras = cameras

        self.samples = [
            Sample(
                id=i,
                base_feature=self.features[i],
                g_descriptor=None if g_descriptors is None else g_descriptors[i],
                image_ref=None if image_refs is None else image_refs[i],
                _identity=None if identities is None else int(identities[i]),
                _vault=self._vault,
            )
            for i in range(self.n)
        ]

    @property
    def has_identities(self) -> bool:
        return self._identities is not None

    @property
    def identities(self) -> np.ndarray:
        """Ground-truth identity array; raises LabelAccessError when locked."""
        self._vault.check()
        if self._identities is None:
            raise DatasetError("dataset carries no ground-truth identities")
        return self._identities

    def unlocked_labels(self):
        """Context manager granting identity access (oracle/evaluator only)."""
        return self._vault.unlocked()

    @property
    def label_reads(self) -> int:
        return self._vault.reads


def load_dataset(manifest_path) -> EmbeddingDataset:
    """Load and validate a dataset from its JSON manifest."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DatasetError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest is not valid JSON: {exc}")

    for key in ("n", "feature_dim", "features_path"):
        if key not in manifest:
            raise DatasetError(f"manifest missing required key {key!r}")
    n = int(manifest["n"])
    dim = int(manifest["feature_dim"])
    root = manifest_path.parent

    features = _read_blob(root / manifest["features_path"], n, dim, "feature")

    g = None
    if manifest.get("g_path"):
        if "g_dim" not in manifest:
            raise DatasetError("manifest has g_path but no g_dim")
        g = _read_blob(root / manifest["g_path"], n, int(manifest["g_dim"]), "g-descriptor")

    identities = None
    if manifest.get("labels_path"):
        labels_file = root / manifest["labels_path"]
        if not labels_file.exists():
            raise DatasetError(f"labels file not found: {labels_file}")
        lines = [ln for ln in labels_file.read_text().splitlines() if ln.strip()]
        if len(lines) != n:
            raise DatasetError(f"labels file has {len(lines)} entries, expected {n}")
        identities = np.array([int(ln) for ln in lines], dtype=np.int64)

    image_refs = None
    if manifest.get("images_dir"):
        images_dir = manifest["images_dir"]
        image_refs = [f"{images_dir}/{i:06d}.jpg" for i in range(n)]

    cameras = None
    if manifest.get("cameras_path"):
        cam_file = root / manifest["cameras_path"]
        if not cam_file.exists():
            raise DatasetError(f"cameras file not found: {cam_file}")
        cam_lines = [ln for ln in cam_file.read_text().splitlines() if ln.strip()]
        if len(cam_lines) != n:
            raise DatasetError(f"cameras file has {len(cam_lines)} entries, expected {n}")
        cameras = np.array([int(ln) for ln in cam_lines], dtype=np.int64)

    return EmbeddingDataset(features, g, identities, image_refs, cameras=cameras)


def _read_blob(path, n, dim, what):
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{what} blob not found: {path}")
    raw = path.read_bytes()
    expected = n * dim * 4
    if len(raw) != expected:
        raise DatasetError(
            f"{what} blob size mismatch: {path} holds {len(raw)} bytes, "
            f"manifest implies {n}x{dim}x4 = {expected}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(n, dim)
    return arr.astype(np.float64)


def write_dataset(dataset: EmbeddingDataset, out_dir, name="dataset") -> Path:
    """Write manifest + blobs; returns the manifest path.

    Feature values are stored as little-endian float32, so a dataset that
    was loaded (not renormalized) round-trips bit-identically.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n": dataset.n,
        "feature_dim": dataset.feature_dim,
        "features_path": f"{name}.features.f32",
    }
    (out_dir / manifest["features_path"]).write_bytes(
        dataset.features.astype("<f4").tobytes()
    )
    if dataset.g_descriptors is not None:
        manifest["g_dim"] = int(dataset.g_descriptors.shape[1])
        manifest["g_path"] = f"{name}.g.f32"
        (out_dir / manifest["g_path"]).write_bytes(
            dataset.g_descriptors.astype("<f4").tobytes()
        )
    if dataset.has_identities:
        manifest["labels_path"] = f"{name}.labels.txt"
        (out_dir / manifest["labels_path"]).write_text(
            "\n".join(str(int(v)) for v in dataset._identities) + "\n"
        )
    manifest_path = out_dir / f"{name}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def l2_normalize(dataset: EmbeddingDataset) -> EmbeddingDataset:
    """Return a copy of the dataset with unit-norm base features."""
    norms = np.linalg.norm(dataset.features, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise DatasetError(f"cannot normalize zero-norm feature of sample {zero[0]}")
    return EmbeddingDataset(
        dataset.features / norms[:, None],
        dataset.g_descriptors,
        dataset._identities,
        dataset.image_refs,
        dataset.num_identities,
        cameras=dataset.cameras,
    )


def split_query_gallery(dataset: EmbeddingDataset, query_fraction, seed):
    """Deterministic query/gallery split keeping every query identity in the gallery.

    Requires identities with at least two samples each; returns two sorted
    id arrays that are disjoint and jointly cover the dataset.
    """
    if not 0.0 < query_fraction < 1.0:
        raise DatasetError("query_fraction must be in (0, 1)")
    with dataset.unlocked_labels():
        identities = np.array(dataset.identities)
    counts = np.bincount(identities)
    lonely = np.nonzero(counts == 1)[0]
    if lonely.size:
        raise DatasetError(
            "identities with a single sample cannot be split: "
            + ", ".join(str(i) for i in lonely.tolist())
        )

    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.n)
    target = max(1, int(round(dataset.n * query_fraction)))
    gallery_left = counts.astype(np.int64).copy()
    query = []
    for idx in order:
        if len(query) >= target:
            break
        ident = identities[idx]
        if gallery_left[ident] >= 2:  # keep at least one gallery match
            query.append(int(idx))
            gallery_left[ident] -= 1
    query_ids = np.array(sorted(query), dtype=np.int64)
    mask = np.ones(dataset.n, dtype=bool)
    mask[query_ids] = False
    gallery_ids = np.nonzero(mask)[0].astype(np.int64)
    return query_ids, gallery_ids
