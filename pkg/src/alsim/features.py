"""Distances over feature views and PCA compression.

Selection operates in a fused metric: a nonnegative-weighted sum of
per-view cosine distances. Views can optionally be PCA-compressed per
round before distances are taken.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .records import InstanceRecord, ViewSpec

__all__ = [
    "cosine_distance",
    "cosine_distance_matrix",
    "fused_distance",
    "FusedCosineMetric",
    "PcaModel",
    "pca_fit",
    "pca_transform",
    "compress_views",
]

logger = logging.getLogger(__name__)


def cosine_distance(u, v) -> float:
    """Cosine distance 1 - u.v / (|u||v|), in [0, 2].

    A zero-norm vector carries no direction; distances against it are
    defined as 1 so fused sums stay total.

    Raises:
        ValueError: on dimension mismatch.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 1.0
    sim = float(np.dot(u, v)) / (nu * nv)
    sim = max(-1.0, min(1.0, sim))
    return 1.0 - sim


def cosine_distance_matrix(A, B) -> np.ndarray:
    """Pairwise cosine distances between the rows of A and of B.

    Zero-norm rows follow the same convention as ``cosine_distance``:
    distance 1 against everything.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    # Zero rows normalize to zero vectors, whose similarity is 0 and
    # distance therefore exactly 1.
    na = np.where(na == 0.0, 1.0, na)
    nb = np.where(nb == 0.0, 1.0, nb)
    sims = (A / na[:, None]) @ (B / nb[:, None]).T
    np.clip(sims, -1.0, 1.0, out=sims)
    return 1.0 - sims


def fused_distance(a: InstanceRecord, b: InstanceRecord, views: Sequence[ViewSpec]) -> float:
    """Weighted sum of per-view cosine distances between two instances.

    Raises:
        ValueError: if either record is missing one of the views.
    """
    total = 0.0
    for v in views:
        fa = a.features.get(v.name)
        fb = b.features.get(v.name)
        if fa is None or fb is None:
            missing = a.instance_id if fa is None else b.instance_id
            raise ValueError(f"instance {missing}: missing feature view {v.name!r}")
        total += v.lam * cosine_distance(fa, fb)
    return total


class FusedCosineMetric:
    """Callable fused-cosine distance with a vectorized pairwise path.

    Weights are used exactly as configured; a warning is logged when they
    do not sum to 1 since the reference configuration is normalized.
    """

    def __init__(self, views: Sequence[ViewSpec]):
        if not views:
            raise ValueError("metric needs at least one view")
        self.views = tuple(views)
        total = sum(v.lam for v in self.views)
        if abs(total - 1.0) > 1e-9:
            logger.warning("view weights sum to %.12g, not 1; using them as configured", total)

    def __call__(self, a: InstanceRecord, b: InstanceRecord) -> float:
        return fused_distance(a, b, self.views)

    def pairwise(self, xs: Sequence[InstanceRecord], zs: Sequence[InstanceRecord]) -> np.ndarray:
        """Fused distances between two record sequences, shape (len(xs), len(zs))."""
        out = np.zeros((len(xs), len(zs)), dtype=np.float64)
        if not len(xs) or not len(zs):
            return out
        for v in self.views:
            A = np.stack([x.features[v.name] for x in xs])
            B = np.stack([z.features[v.name] for z in zs])
            out += v.lam * cosine_distance_matrix(A, B)
        return out


@dataclass(frozen=True)
class PcaModel:
    """Fitted principal components: row-orthonormal basis plus mean."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(X, var_keep: float) -> PcaModel:
    """Fit PCA keeping the smallest component count whose cumulative
    explained-variance ratio reaches ``var_keep``.

    Components follow a deterministic sign convention: the coefficient of
    largest magnitude in each component is positive.

    Raises:
        ValueError: for fewer than 2 rows, ``var_keep`` outside (0, 1],
            or data with zero variance.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    n, dim = X.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {n}")
    if not 0.0 < var_keep <= 1.0:
        raise ValueError(f"var_keep must be in (0, 1], got {var_keep}")

    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)

    scale = float(np.abs(X).max()) or 1.0
    tol = max(n, dim) * np.finfo(np.float64).eps * scale
    if s.size == 0 or s[0] <= tol:
        raise ValueError("zero variance: all rows are identical")

    variances = s**2
    ratio = variances / variances.sum()
    cumulative = np.cumsum(ratio)
    k = int(np.searchsorted(cumulative, var_keep - 1e-12) + 1)
    k = min(k, len(ratio))

    components = Vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    return PcaModel(mean=mean, components=components, explained_variance_ratio=ratio[:k].copy())


def pca_transform(m: PcaModel, X) -> np.ndarray:
    """Project rows of X onto the fitted components: (X - mean) @ C.T.

    Raises:
        ValueError: if X's column count differs from the fit dimension.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[1] != m.mean.shape[0]:
        raise ValueError(f"dimension mismatch: fit dim {m.mean.shape[0]}, got {X.shape[1]}")
    return (X - m.mean) @ m.components.T


def compress_views(
    records: Sequence[InstanceRecord], views: Sequence[ViewSpec], var_keep: float
) -> list[InstanceRecord]:
    """PCA-compress each view over all given records jointly.

    Fits one model per view on the stacked feature matrix of ``records``
    and returns copies of the records carrying the compressed vectors.
    Distances taken afterwards live in the compressed space.
    """
    import dataclasses

    models = {}
    for v in views:
        X = np.stack([r.features[v.name] for r in records])
        models[v.name] = pca_fit(X, var_keep)

    out = []
    for r in records:
        feats = dict(r.features)
        for v in views:
            m = models[v.name]
            feats[v.name] = pca_transform(m, r.features[v.name][None, :])[0]
        out.append(dataclasses.replace(r, features=feats))
    return out
