"""K-means over rating vectors, elbow selection, and decision histograms.

Lloyd iterations with k-means++ style seeding, best SSE across restarts,
farthest-point reseeding for empty clusters, and ties broken toward the
lowest centroid index.  ``sse_curve`` warm-starts each k with the previous
solution plus the farthest point, which keeps the curve nonincreasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfigError
from .rng import Stream, derive_key
from .sessions import SessionLog

MAX_LLOYD_ITERATIONS = 300
HISTOGRAM_NORMALIZATIONS = ("category", "month")


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, d)
    labels: np.ndarray  # (n,)
    sse: float


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def assign_to_centroids(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid label per point (ties go to the lowest index)."""
    points = np.asarray(points, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    if len(centroids) == 0:
        raise InvalidConfigError("need at least one centroid")
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    return _squared_distances(points, centroids).argmin(axis=1).astype(np.int64)


def _sse(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float((diff * diff).sum())


def _seed_plus_plus(points: np.ndarray, k: int, stream: Stream) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[stream.randint(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = points[stream.randint(n)]
            continue
        target = stream.uniform() * total
        idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
        idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    labels = assign_to_centroids(points, centroids)
    for _ in range(MAX_LLOYD_ITERATIONS):
        new_centroids = centroids.copy()
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
            else:
                # reseed an empty cluster at the point farthest from its centroid
                far = int(((points - new_centroids[labels]) ** 2).sum(axis=1).argmax())
                new_centroids[j] = points[far]
        new_labels = assign_to_centroids(points, new_centroids)
        centroids = new_centroids
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return centroids, labels, _sse(points, centroids, labels)


def kmeans(
    points: Sequence[Sequence[float]],
    k: int,
    seed: int = 0,
    restarts: int = 10,
    warm_start: np.ndarray | None = None,
) -> ClusterModel:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise InvalidConfigError("points must be a 2-d array")
    if k < 1:
        raise InvalidConfigError(f"k must be >= 1, got {k}")
    if len(pts) < k:
        raise InvalidConfigError(f"need at least k={k} points, got {len(pts)}")
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    inits: list[np.ndarray] = []
    for r in range(restarts):
        inits.append(_seed_plus_plus(pts, k, Stream(derive_key(seed, "kmeans", k, r))))
    if warm_start is not None and len(warm_start) == k:
        inits.append(np.asarray(warm_start, dtype=float))
    for init in inits:
        centroids, labels, sse = _lloyd(pts, init)
        if best is None or sse < best[0] - 1e-12:
            best = (sse, centroids, labels)
    assert best is not None
    return ClusterModel(k=k, centroids=best[1], labels=best[2], sse=best[0])


def sse_curve(
    points: Sequence[Sequence[float]],
    k_range: Sequence[int],
    seed: int = 0,
    restarts: int = 10,
) -> list[tuple[int, float]]:
    """(k, sse) per k; warm starts keep the curve nonincreasing in k."""
    ks = list(k_range)
    if not ks:
        raise InvalidConfigError("k_range must be nonempty")
    pts = np.asarray(points, dtype=float)
    curve: list[tuple[int, float]] = []
    prev: ClusterModel | None = None
    for k in sorted(ks):
        warm = None
        if prev is not None and k == prev.k + 1:
            far = int(((pts - prev.centroids[prev.labels]) ** 2).sum(axis=1).argmax())
            warm = np.vstack([prev.centroids, pts[far]])
        model = kmeans(pts, k, seed=seed, restarts=restarts, warm_start=warm)
        curve.append((k, model.sse))
        prev = model
    return curve


def select_k_elbow(curve: Sequence[tuple[int, float]]) -> int:
    """k with the largest discrete second difference of SSE (ties -> smaller
    k); needs at least four consecutive k values."""
    pts = sorted(curve)
    if len(pts) < 4:
        raise InvalidConfigError("elbow selection needs at least 4 k values")
    ks = [k for k, _ in pts]
    if ks != list(range(ks[0], ks[0] + len(ks))):
        raise InvalidConfigError("elbow selection needs consecutive k values")
    sses = [s for _, s in pts]
    best_k, best_gain = None, -np.inf
    for i in range(1, len(pts) - 1):
        gain = sses[i - 1] - 2.0 * sses[i] + sses[i + 1]
        if gain > best_gain + 1e-12:
            best_gain = gain
            best_k = ks[i]
    assert best_k is not None
    return best_k


@dataclass(frozen=True)
class DecisionHistogram:
    """Proportions of decisions per level category (rows 0..3) across months
    (columns 1..6), under the stated normalization convention."""

    proportions: np.ndarray  # (4, months)
    counts: np.ndarray  # (4, months) raw decision counts
    normalization: str
    months: int = 6


def monthly_decision_histograms(
    logs: Sequence[SessionLog],
    labels: Sequence[int],
    rate: float,
    normalize: str = "category",
    months: int = 6,
) -> dict[int, DecisionHistogram]:
    """Per-cluster histograms of post-decision levels by month at one rate.

    ``normalize="category"``: each level row sums to 1 over months (empty
    rows stay zero).  ``normalize="month"``: each month column sums to 1.
    """
    if len(logs) != len(labels):
        raise InvalidConfigError("labels must align with logs")
    if not logs:
        raise InvalidConfigError("need at least one session log")
    if normalize not in HISTOGRAM_NORMALIZATIONS:
        raise InvalidConfigError(f"normalize must be one of {HISTOGRAM_NORMALIZATIONS}")
    counts: dict[int, np.ndarray] = {}
    for log, label in zip(logs, labels):
        grid = counts.setdefault(int(label), np.zeros((4, months)))
        for record in log.records:
            if record.rate == rate and 1 <= record.month <= months:
                grid[record.level_after, record.month - 1] += 1
    out: dict[int, DecisionHistogram] = {}
    for label, grid in sorted(counts.items()):
        props = grid.copy()
        if normalize == "category":
            sums = props.sum(axis=1, keepdims=True)
            np.divide(props, sums, out=props, where=sums > 0)
        else:
            sums = props.sum(axis=0, keepdims=True)
            np.divide(props, sums, out=props, where=sums > 0)
        out[label] = DecisionHistogram(proportions=props, counts=grid, normalization=normalize, months=months)
    return out


def histogram_kl_by_category(
    p: DecisionHistogram, q: DecisionHistogram, smoothing: float = 1e-9
) -> list[float]:
    """KL(p || q) per level category across months (nats); rows that are
    empty in both inputs give 0."""
    from .stats import kl_divergence

    if p.normalization != q.normalization:
        raise InvalidConfigError("histograms use different normalizations")
    out = []
    for level in range(4):
        prow, qrow = p.proportions[level], q.proportions[level]
        if prow.sum() == 0.0 and qrow.sum() == 0.0:
            out.append(0.0)
            continue
        # an all-zero row smooths to uniform, which keeps the divergence finite
        prow = prow if prow.sum() > 0 else np.full(p.months, 1.0 / p.months)
        qrow = qrow if qrow.sum() > 0 else np.full(q.months, 1.0 / q.months)
        out.append(kl_divergence(prow / prow.sum(), qrow / qrow.sum(), smoothing=smoothing))
    return out
