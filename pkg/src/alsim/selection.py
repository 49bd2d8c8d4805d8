"""Acquisition strategies: diversity-greedy selection and baselines.

The diversity strategies run greedy k-center (farthest-point) selection
in a fused feature metric: repeatedly pick the pool instance with the
largest minimum distance to the reference set, then fold the pick into
the reference set. An incremental per-candidate min-distance cache makes
a k-pick batch cost O(k * |pool|) distance evaluations instead of
recomputing every candidate-reference pair each step.

Candidate scoring is order-independent and may be parallelized; the
greedy pick itself is a sequential reduction whose lowest-id tie rule
keeps results deterministic regardless of scoring order.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import islice
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .geometry import associate_ensemble
from .records import InstanceRecord, ViewSpec

__all__ = [
    "STRATEGY_KINDS",
    "CORESET_KINDS",
    "DepthFilters",
    "StrategyConfig",
    "SelectionRequest",
    "coreset_score",
    "coreset_select",
    "iter_coreset_picks",
    "select_random",
    "select_confidence",
    "select_ens_depth_var",
    "select_depth_extreme",
    "ensemble_depth_variance",
    "score_pool",
    "image_level_select",
    "rank_pool",
    "validate_strategy_setup",
    "with_ensemble_depths",
]

STRATEGY_KINDS = (
    "random",
    "confidence",
    "ens_depth_var",
    "close_depth",
    "far_depth",
    "coreset",
    "coreset_box3d",
    "ideal",
)

# All three run the same greedy selector; they differ only in which
# feature views the config fuses (classification features, pre-3D-head
# features, or detector views plus the visual view).
CORESET_KINDS = ("coreset", "coreset_box3d", "ideal")

DistanceFn = Callable[[InstanceRecord, InstanceRecord], float]


@dataclass(frozen=True)
class DepthFilters:
    """Eligibility filter for the far-depth baseline."""

    min_px_height: float = 25.0
    max_depth: float = 50.0


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    views: tuple[ViewSpec, ...] = ()
    seed: int = 0
    far_depth_filters: DepthFilters = field(default_factory=DepthFilters)

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; valid: {', '.join(STRATEGY_KINDS)}")
        if self.kind in CORESET_KINDS and not self.views:
            raise ValueError(f"strategy {self.kind!r} needs a nonempty view list")


@dataclass(frozen=True)
class SelectionRequest:
    """A labeling proposal handed to the oracle."""

    instance_id: int
    image_id: str
    req_center: tuple[float, float]
    pred_depth: float | None
    pred_class: int
    score: float


def _pairwise(dist, xs: Sequence[InstanceRecord], zs: Sequence[InstanceRecord]) -> np.ndarray:
    pw = getattr(dist, "pairwise", None)
    if pw is not None:
        return pw(xs, zs)
    out = np.empty((len(xs), len(zs)), dtype=np.float64)
    for i, x in enumerate(xs):
        for j, z in enumerate(zs):
            out[i, j] = dist(x, z)
    return out


def coreset_score(x: InstanceRecord, labeled: Sequence[InstanceRecord], dist: DistanceFn) -> float:
    """Minimum distance from one candidate to the labeled set.

    Raises:
        ValueError: if the labeled set is empty.
    """
    if not len(labeled):
        raise ValueError("labeled set must be nonempty")
    return min(dist(x, z) for z in labeled)


def iter_coreset_picks(
    pool: Sequence[InstanceRecord],
    labeled: Sequence[InstanceRecord],
    dist: DistanceFn,
) -> Iterator[tuple[InstanceRecord, float]]:
    """Yield pool instances in greedy farthest-first order with their scores.

    The yielded score is the instance's minimum distance to the reference
    set at pick time (labeled set plus earlier picks). Ties resolve to the
    lowest instance_id. The min-distance cache is updated only against the
    newest pick, so a full traversal costs O(|pool|^2) distance
    evaluations and a k-pick prefix O(k * |pool|).
    """
    if not len(labeled):
        raise ValueError("labeled set must be nonempty")
    if not len(pool):
        return

    ids = np.array([r.instance_id for r in pool], dtype=np.int64)
    mins = _pairwise(dist, pool, labeled).min(axis=1)
    active = np.ones(len(pool), dtype=bool)

    for _ in range(len(pool)):
        masked = np.where(active, mins, -np.inf)
        best = masked.max()
        tie = np.flatnonzero(active & (masked == best))
        pick = int(tie[np.argmin(ids[tie])])
        yield pool[pick], float(mins[pick])
        active[pick] = False
        if not active.any():
            return
        mins = np.minimum(mins, _pairwise(dist, pool, [pool[pick]])[:, 0])


def coreset_select(
    pool: Sequence[InstanceRecord],
    labeled: Sequence[InstanceRecord],
    dist: DistanceFn,
    k: int,
) -> list[int]:
    """Greedy k-center batch: the first k farthest-first picks, in order.

    Raises:
        ValueError: on an empty labeled set or k > |pool|.
    """
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    return [r.instance_id for r, _ in islice(iter_coreset_picks(pool, labeled, dist), k)]


def select_random(pool: Sequence[InstanceRecord], k: int, seed: int) -> list[int]:
    """Uniform sample of k instance ids without replacement, seed-reproducible."""
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[int(i)].instance_id for i in idx]


def _combined_confidence(r: InstanceRecord, depth_confidence: Mapping[int, float] | None) -> float:
    parts = []
    if r.confidence is not None:
        parts.append(float(r.confidence))
    if depth_confidence is not None:
        dc = depth_confidence.get(r.instance_id)
        if dc is not None:
            parts.append(float(dc))
    if not parts:
        raise ValueError(f"instance {r.instance_id}: no confidence available")
    out = 1.0
    for p in parts:
        out *= p
    return out


def select_confidence(
    pool: Sequence[InstanceRecord],
    k: int,
    depth_confidence: Mapping[int, float] | None = None,
) -> list[int]:
    """Lowest combined confidence first.

    The combined score is the product of the class confidence carried on
    the record and the optional per-id depth confidence; with only one of
    the two available, that one is used alone. Ties resolve to the lowest
    instance_id.
    """
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    vals = np.array([_combined_confidence(r, depth_confidence) for r in pool])
    ids = np.array([r.instance_id for r in pool])
    order = np.lexsort((ids, vals))
    return [pool[int(i)].instance_id for i in order[:k]]


def ensemble_depth_variance(r: InstanceRecord) -> float:
    """Population variance of the main and associated auxiliary depths.

    Instances with fewer than two depth readings score 0.
    """
    depths: list[float] = []
    if r.pred_depth is not None:
        depths.append(float(r.pred_depth))
    if r.aux_depths:
        depths.extend(float(d) for d in r.aux_depths)
    if len(depths) < 2:
        return 0.0
    return float(np.var(depths))


def select_ens_depth_var(pool: Sequence[InstanceRecord], k: int) -> list[int]:
    """Highest ensemble depth variance first; ties by lowest instance_id."""
    if k > len(pool):
        raise ValueError(f"k={k} exceeds pool size {len(pool)}")
    vals = np.array([ensemble_depth_variance(r) for r in pool])
    ids = np.array([r.instance_id for r in pool])
    order = np.lexsort((ids, -vals))
    return [pool[int(i)].instance_id for i in order[:k]]


def _require_depth(pool: Sequence[InstanceRecord]) -> None:
    missing = [r.instance_id for r in pool if r.pred_depth is None]
    if missing:
        raise ValueError(f"instances missing pred_depth: {missing}")


def select_depth_extreme(
    pool: Sequence[InstanceRecord],
    k: int,
    mode: str,
    filters: DepthFilters = DepthFilters(),
) -> list[int]:
    """Closest-first or farthest-first depth heuristic.

    Far mode only considers instances with 2D pixel height at least
    ``filters.min_px_height`` and depth strictly below
    ``filters.max_depth``; fewer than k eligible instances yield a
    shorter list.
    """
    if mode not in ("close", "far"):
        raise ValueError(f"mode must be 'close' or 'far', got {mode!r}")
    _require_depth(pool)
    if mode == "far":
        eligible = [
            r for r in pool
            if r.box2d.h >= filters.min_px_height and r.pred_depth < filters.max_depth
        ]
        sign = -1.0
    else:
        eligible = list(pool)
        sign = 1.0
    vals = np.array([sign * r.pred_depth for r in eligible])
    ids = np.array([r.instance_id for r in eligible])
    order = np.lexsort((ids, vals)) if len(eligible) else []
    return [eligible[int(i)].instance_id for i in list(order)[:k]]


def score_pool(
    pool: Sequence[InstanceRecord],
    cfg: StrategyConfig,
    labeled: Sequence[InstanceRecord] | None = None,
    metric: DistanceFn | None = None,
) -> np.ndarray:
    """Static informativeness scores under a strategy; higher means
    selected earlier. Used by image-level wrappers where the per-image
    score is the best contained instance.
    """
    n = len(pool)
    if cfg.kind == "random":
        return np.random.default_rng(cfg.seed).random(n)
    if cfg.kind == "confidence":
        return -np.array([_combined_confidence(r, None) for r in pool])
    if cfg.kind == "ens_depth_var":
        return np.array([ensemble_depth_variance(r) for r in pool])
    if cfg.kind == "close_depth":
        _require_depth(pool)
        return -np.array([r.pred_depth for r in pool])
    if cfg.kind == "far_depth":
        _require_depth(pool)
        f = cfg.far_depth_filters
        return np.array([
            r.pred_depth
            if (r.box2d.h >= f.min_px_height and r.pred_depth < f.max_depth)
            else -np.inf
            for r in pool
        ])
    # greedy-diversity kinds: score is the current min distance to labeled
    if labeled is None or metric is None:
        raise ValueError(f"strategy {cfg.kind!r} needs a labeled set and a metric")
    if not len(labeled):
        raise ValueError("labeled set must be nonempty")
    return _pairwise(metric, pool, labeled).min(axis=1)


def image_level_select(
    pool: Sequence[InstanceRecord],
    scores: np.ndarray,
    labelable_counts: Mapping[str, int],
    budget_instances: int,
) -> tuple[list[str], int]:
    """Image-level wrapper with instance-budget accounting.

    Each image scores as its highest-scoring contained instance. Images
    are taken in descending score until the charged instances (the sum of
    each selected image's labelable ground-truth count) first reach or
    exceed the budget, so the budget may be overshot but never undershot
    while images remain.

    Returns:
        Selected image ids in order, and the total charged instances.
    """
    if len(scores) != len(pool):
        raise ValueError("scores and pool lengths differ")
    per_image: dict[str, float] = {}
    for r, s in zip(pool, scores):
        if r.image_id not in per_image or s > per_image[r.image_id]:
            per_image[r.image_id] = float(s)

    order = sorted(per_image.items(), key=lambda kv: (-kv[1], kv[0]))
    selected: list[str] = []
    charged = 0
    for image_id, _ in order:
        if charged >= budget_instances:
            break
        selected.append(image_id)
        charged += int(labelable_counts[image_id])
    return selected, charged


def validate_strategy_setup(cfg: StrategyConfig, pool: Sequence[InstanceRecord]) -> None:
    """Reject pools missing the fields a strategy depends on.

    Diversity strategies only need features, so datasets without
    confidence or depth stay usable for them.
    """
    if cfg.kind == "confidence":
        missing = [r.instance_id for r in pool if r.confidence is None]
        if missing:
            raise ValueError(f"confidence strategy: instances missing confidence: {missing}")
    if cfg.kind in ("close_depth", "far_depth", "ens_depth_var"):
        _require_depth(pool)
    if cfg.kind in CORESET_KINDS and pool:
        names = set(pool[0].features)
        absent = [v.name for v in cfg.views if v.name not in names]
        if absent:
            raise ValueError(f"strategy {cfg.kind!r}: pool lacks feature views {absent}")


def rank_pool(
    pool: Sequence[InstanceRecord],
    cfg: StrategyConfig,
    labeled: Sequence[InstanceRecord] | None = None,
    metric: DistanceFn | None = None,
    seed: int | None = None,
) -> Iterator[tuple[InstanceRecord, float]]:
    """Yield (record, score) pairs best-first under the given strategy.

    Greedy-diversity kinds rank lazily so callers can stop as soon as a
    round budget is filled; the remaining kinds sort once up front.
    ``seed`` overrides the config seed for per-round randomness.
    """
    validate_strategy_setup(cfg, pool)
    if cfg.kind in CORESET_KINDS:
        if labeled is None or metric is None:
            raise ValueError(f"strategy {cfg.kind!r} needs a labeled set and a metric")
        yield from iter_coreset_picks(pool, labeled, metric)
        return

    if cfg.kind == "random":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        scores = rng.random(len(pool))
        ids = np.array([r.instance_id for r in pool])
        order = np.lexsort((ids, -scores))
        for i in order:
            yield pool[int(i)], float(scores[int(i)])
        return

    if cfg.kind == "far_depth":
        f = cfg.far_depth_filters
        _require_depth(pool)
        eligible = [
            r for r in pool
            if r.box2d.h >= f.min_px_height and r.pred_depth < f.max_depth
        ]
        vals = np.array([r.pred_depth for r in eligible])
        ids = np.array([r.instance_id for r in eligible])
        order = np.lexsort((ids, -vals)) if len(eligible) else []
        for i in order:
            yield eligible[int(i)], float(vals[int(i)])
        return

    scores = score_pool(pool, cfg, labeled=labeled, metric=metric)
    ids = np.array([r.instance_id for r in pool])
    order = np.lexsort((ids, -scores))
    for i in order:
        yield pool[int(i)], float(scores[int(i)])


def with_ensemble_depths(
    main: Sequence[InstanceRecord],
    aux_models: Sequence[Sequence[InstanceRecord]],
    iou_threshold: float = 0.5,
) -> list[InstanceRecord]:
    """Attach associated auxiliary depth predictions to main predictions.

    Associates each auxiliary model's predictions image by image via
    ``associate_ensemble`` and returns main records whose ``aux_depths``
    carry the matched depths. Records with no match are returned as is.
    """
    by_image_main: dict[str, list[InstanceRecord]] = defaultdict(list)
    for r in main:
        by_image_main[r.image_id].append(r)

    depth_lists: dict[int, list[float]] = {r.instance_id: [] for r in main}
    for aux in aux_models:
        by_image_aux: dict[str, list[InstanceRecord]] = defaultdict(list)
        for a in aux:
            by_image_aux[a.image_id].append(a)
        for image_id, mains in by_image_main.items():
            candidates = by_image_aux.get(image_id, [])
            if not candidates:
                continue
            assoc = associate_ensemble(mains, candidates, iou_threshold)
            aux_by_id = {a.instance_id: a for a in candidates}
            for main_id, aux_id in assoc.items():
                d = aux_by_id[aux_id].pred_depth
                if d is not None:
                    depth_lists[main_id].append(float(d))

    return [
        r.with_aux_depths(depth_lists[r.instance_id]) if depth_lists[r.instance_id] else r
        for r in main
    ]
