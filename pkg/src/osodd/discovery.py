"""Novel category discovery over embeddings.

Distances are squared Euclidean throughout. Nearest-centroid ties resolve to
the lowest centroid index. Every randomised step draws from a generator
seeded by the caller, so results are reproducible per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .clustmetrics import clustering_accuracy
from .errors import InsufficientKnownClasses, TooFewPoints


@dataclass(frozen=True, eq=False)
class DiscoveryResult:
    assignments: dict[str, int]
    novel_centroids: np.ndarray
    known_centroids: np.ndarray
    known_classes: tuple[int, ...]
    iterations_run: int
    inertia: float
    working_labels: np.ndarray = field(repr=False, default=None)

    @property
    def k_novel(self) -> int:
        return self.novel_centroids.shape[0]


@dataclass(frozen=True)
class KEstimate:
    k_est: int
    scores_per_k: dict[int, float]
    search_range: tuple[int, int]
    acc_per_k: dict[int, float] = field(default_factory=dict)
    silhouette_per_k: dict[int, float] = field(default_factory=dict)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared distances, shape (n_points, n_centroids), clipped at 0."""
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centroids, centroids)[None, :]
    d = p2 + c2 - 2.0 * points @ centroids.T
    return np.maximum(d, 0.0)


def kmeans_pp_init(points, k: int, seed=0) -> np.ndarray:
    """k-means++ seeding.

    The first centroid is drawn uniformly; each further one with probability
    proportional to the squared distance to its nearest chosen centroid. When
    every remaining distance is zero the draw falls back to uniform.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or k > n:
        raise TooFewPoints(f"cannot pick {k} centroids from {n} points")
    rng = _rng(seed)
    chosen = [int(rng.integers(n))]
    closest = sq_distances(x, x[chosen]).ravel()
    closest[chosen[0]] = 0.0
    for _ in range(1, k):
        total = closest.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d = sq_distances(x, x[idx:idx + 1]).ravel()
        d[idx] = 0.0
        closest = np.minimum(closest, d)
    return x[chosen].copy()


def _reseed_empty(x, labels, centroids, counts, movable):
    """Move each empty centroid onto the movable point farthest from its centroid."""
    taken = set()
    for j in np.flatnonzero(counts == 0):
        d = np.sum((x - centroids[labels]) ** 2, axis=1)
        d[~movable] = -1.0
        for t in taken:
            d[t] = -1.0
        # never empty another cluster while filling this one
        d[counts[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        if d[far] < 0:
            continue
        taken.add(far)
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        centroids[j] = x[far]
    return labels


def _lloyd(
    x: np.ndarray,
    centroids: np.ndarray,
    fixed_labels: np.ndarray,
    n_fixed: int,
    max_iter: int,
    tol: float,
    history: list | None,
    callback: Callable | None,
):
    """Lloyd iterations where the first ``n_fixed`` rows keep ``fixed_labels``.

    Free rows go to their nearest centroid. Returns the labels of the last
    assignment step, the centroids after the last update and the number of
    iterations run.
    """
    k = centroids.shape[0]
    centroids = centroids.copy()
    free = x[n_fixed:]
    movable = np.zeros(x.shape[0], dtype=bool)
    movable[n_fixed:] = True
    it = 0
    labels = None
    for it in range(1, max_iter + 1):
        d = sq_distances(free, centroids)
        free_labels = np.argmin(d, axis=1)
        labels = np.concatenate((fixed_labels, free_labels)).astype(np.int64)
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            labels = _reseed_empty(x, labels, centroids, counts, movable)
        if history is not None:
            history.append(float(np.sum((x - centroids[labels]) ** 2)))
        if callback is not None:
            callback(it, labels[:n_fixed].copy(), labels[n_fixed:].copy())
        new = np.zeros_like(centroids)
        np.add.at(new, labels, x)
        counts = np.bincount(labels, minlength=k)
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        new[~nonempty] = centroids[~nonempty]
        shift = float(np.max(np.sqrt(np.sum((new - centroids) ** 2, axis=1)))) if k else 0.0
        centroids = new
        if shift < tol:
            break
    return labels, centroids, it


def kmeans(
    points,
    k: int,
    init_centroids=None,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed=0,
    n_init: int = 1,
    history: list | None = None,
):
    """Plain Lloyd k-means.

    Returns ``(assignments, centroids, inertia)``; the assignments are the
    nearest-centroid labels for the returned centroids. Without
    ``init_centroids`` the best of ``n_init`` k-means++ starts is kept. Pass a
    list as ``history`` to collect the inertia seen at every assignment step
    (of the first start only).
    """
    x = np.asarray(points, dtype=np.float64)
    if k < 1 or x.shape[0] < k:
        raise TooFewPoints(f"k-means needs at least k={k} points, got {x.shape[0]}")
    if max_iter < 1 or tol < 0 or n_init < 1:
        raise ValueError("max_iter and n_init must be >= 1 and tol >= 0")
    if init_centroids is not None:
        starts = [np.asarray(init_centroids, dtype=np.float64)]
    else:
        rng = _rng(seed)
        starts = [kmeans_pp_init(x, k, rng) for _ in range(n_init)]
    best = None
    for i, init in enumerate(starts):
        if init.shape != (k, x.shape[1]):
            raise ValueError(f"init centroids have shape {init.shape}, expected {(k, x.shape[1])}")
        hist = history if i == 0 else None
        _, centroids, _ = _lloyd(x, init, np.zeros(0, dtype=np.int64), 0, max_iter, tol, hist, None)
        labels = np.argmin(sq_distances(x, centroids), axis=1)
        inertia = float(np.sum((x - centroids[labels]) ** 2))
        if hist is not None:
            hist.append(inertia)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia)
    return best


def constrained_kmeans(
    known_points,
    known_labels,
    working_points,
    k_novel: int,
    seed=0,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
    working_ids: Sequence[str] | None = None,
    callback: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> DiscoveryResult:
    """Semi-supervised k-means with labelled points pinned to their class.

    Known-class centroids start at the class means and novel centroids come
    from k-means++ over the working points. Each iteration keeps labelled
    points in their class cluster, sends working points to the nearest of all
    centroids and recomputes every centroid from its members. A final pass
    assigns each working point to its nearest novel centroid only.

    ``callback(iteration, known_cluster_ids, working_cluster_ids)`` is called
    after every assignment step; cluster ids below the number of known
    classes denote known-class clusters.
    """
    w = np.asarray(working_points, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] == 0:
        raise TooFewPoints("working memory is empty")
    if k_novel < 1 or w.shape[0] < k_novel:
        raise TooFewPoints(f"need at least k_novel={k_novel} working points, got {w.shape[0]}")
    kp = np.asarray(known_points, dtype=np.float64).reshape(-1, w.shape[1])
    kl = np.asarray(known_labels).ravel()
    if kp.shape[0] != kl.shape[0]:
        raise ValueError("known points and labels differ in length")

    classes, fixed = np.unique(kl, return_inverse=True)
    n_known = classes.size
    known_centroids = np.zeros((n_known, w.shape[1]))
    np.add.at(known_centroids, fixed, kp)
    if n_known:
        known_centroids /= np.bincount(fixed, minlength=n_known)[:, None]

    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    x = np.concatenate((kp, w))
    rng = _rng(seed)
    best = None
    for _ in range(n_init):
        centroids0 = np.concatenate((known_centroids, kmeans_pp_init(w, k_novel, rng)))
        _, centroids, iters = _lloyd(
            x, centroids0, fixed.astype(np.int64), kp.shape[0], max_iter, tol, None, callback
        )
        free = np.argmin(sq_distances(w, centroids), axis=1)
        labels = np.concatenate((fixed, free))
        sse = float(np.sum((x - centroids[labels]) ** 2))
        if best is None or sse < best[0]:
            best = (sse, centroids, iters)
    _, centroids, iters = best

    novel = centroids[n_known:]
    d = sq_distances(w, novel)
    final = np.argmin(d, axis=1)
    inertia = float(np.sum((w - novel[final]) ** 2))
    ids = list(working_ids) if working_ids is not None else [str(i) for i in range(w.shape[0])]
    return DiscoveryResult(
        assignments={oid: int(c) for oid, c in zip(ids, final)},
        novel_centroids=novel,
        known_centroids=centroids[:n_known],
        known_classes=tuple(int(c) for c in classes),
        iterations_run=iters,
        inertia=inertia,
        working_labels=final,
    )


# ---------------------------------------------------------------------------
# FINCH


def _first_neighbours(x: np.ndarray) -> np.ndarray:
    d = sq_distances(x, x)
    np.fill_diagonal(d, np.inf)
    return np.argmin(d, axis=1)


def _finch_level(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    nn = _first_neighbours(x)
    rows = np.concatenate((np.arange(n), nn))
    cols = np.concatenate((nn, np.arange(n)))
    # i~j also when they share a first neighbour: both link to it already,
    # so components are unchanged by the extra edge
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    _, comp = connected_components(graph, directed=False)
    return _canonical(comp)


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel so clusters are numbered by first appearance."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


def finch(points) -> list[np.ndarray]:
    """First-neighbour hierarchical clustering.

    Returns one label array per level, finest first; the cluster count
    strictly decreases level to level and the last level is one cluster.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.shape[0] < 2:
        raise TooFewPoints("FINCH needs at least 2 points")
    partitions = []
    labels = _finch_level(x)
    partitions.append(labels)
    while labels.max() > 0:
        k = labels.max() + 1
        means = np.zeros((k, x.shape[1]))
        np.add.at(means, labels, x)
        means /= np.bincount(labels, minlength=k)[:, None]
        merged = _finch_level(means) if k > 1 else np.zeros(1, dtype=np.int64)
        labels = merged[labels]
        partitions.append(labels)
    return partitions


def select_partition(partitions: Sequence[np.ndarray], k: int) -> np.ndarray:
    """Partition whose cluster count is nearest ``k``; ties go to the finer one."""
    if not partitions:
        raise ValueError("no partitions to choose from")
    counts = [int(np.unique(p).size) for p in partitions]
    best = min(range(len(partitions)), key=lambda i: (abs(counts[i] - k), -counts[i]))
    return partitions[best]


# ---------------------------------------------------------------------------
# category number estimation


def silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient (squared-distance-free, Euclidean)."""
    labels = _canonical(np.asarray(labels))
    k = labels.max() + 1
    if k < 2 or k >= points.shape[0]:
        return 0.0
    dist = np.sqrt(sq_distances(points, points))
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((points.shape[0], k))
    for c in range(k):
        sums[:, c] = dist[:, labels == c].sum(axis=1)
    own = labels
    idx = np.arange(points.shape[0])
    a_den = counts[own] - 1
    a = np.divide(sums[idx, own], a_den, out=np.zeros(points.shape[0]), where=a_den > 0)
    mean_other = sums / counts[None, :]
    mean_other[idx, own] = np.inf
    b = mean_other.min(axis=1)
    s = np.where(a_den > 0, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def estimate_class_number(
    known_points,
    known_labels,
    working_points,
    k_min: int,
    k_max: int,
    seed=0,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> KEstimate:
    """Pick the novel-category count by probing with held-out known classes.

    Half of the known classes are hidden among the working points. For each
    candidate ``k`` the constrained clustering runs with ``k`` plus the
    number of hidden classes as novel clusters. The score averages the
    accuracy on the hidden classes with the silhouette of the pooled points;
    ties go to the smaller ``k``.
    """
    if k_min < 1 or k_max < k_min:
        raise ValueError(f"invalid k range [{k_min}, {k_max}]")
    kp = np.asarray(known_points, dtype=np.float64)
    kl = np.asarray(known_labels).ravel()
    w = np.asarray(working_points, dtype=np.float64)
    classes, sizes = np.unique(kl, return_counts=True)
    eligible = classes[sizes >= 2]
    if eligible.size < 2:
        raise InsufficientKnownClasses("need at least 2 known classes with >= 2 samples each")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(eligible)
    n_val = eligible.size // 2
    val_classes = np.sort(perm[:n_val])
    is_val = np.isin(kl, val_classes)
    train_pts, train_lbl = kp[~is_val], kl[~is_val]
    val_pts, val_lbl = kp[is_val], kl[is_val]
    pool = np.concatenate((val_pts, w))
    n_v = val_pts.shape[0]

    scores, accs, sils = {}, {}, {}
    for k in range(k_min, k_max + 1):
        total = k + n_val
        if total > pool.shape[0]:
            break
        res = constrained_kmeans(train_pts, train_lbl, pool, total, seed=seed, max_iter=max_iter, tol=tol)
        assigned = res.working_labels
        acc = clustering_accuracy(assigned[:n_v], val_lbl)
        # scored over the whole pool so a hidden class merged into a novel one is penalised
        sil = silhouette(pool, assigned) if pool.shape[0] > 1 else 0.0
        accs[k], sils[k] = acc, sil
        scores[k] = (acc + sil) / 2.0
    if not scores:
        raise TooFewPoints(f"too few points for k_min={k_min}")
    best = max(scores, key=lambda k: (scores[k], -k))
    return KEstimate(best, scores, (k_min, k_max), accs, sils)
