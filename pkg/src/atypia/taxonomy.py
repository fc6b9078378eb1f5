"""Taxonomy discovery by agglomerative clustering of human response vectors.

Images are embedded by their mean response to each of the 21 fine-grained
abnormality reasons, clustered bottom-up with Ward linkage on Euclidean
distance, and the dendrogram is cut into coarse groups.  Each reason is then
assigned to the image cluster where it is most strongly reported.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .exceptions import DimensionMismatch, InvalidK, TooFewVectors

REASON_NAMES = (
    "Strange object contour",
    "Object in the shape of another object",
    "Object is not complete",
    "Missing part",
    "Misplaced part",
    "Weird shaped part",
    "Unexpected part",
    "Weird texture",
    "Weird color",
    "Atypical pattern",
    "Strange material",
    "Un-nameable shape",
    "Mixture of object classes",
    "Body posture",
    "Unknown object",
    "Weird combination of objects and scene",
    "Atypical object pose",
    "Strange location of the object",
    "Atypical object size",
    "Strange scene",
    "Strange event happening in the scene",
)

# coarse group of each fine-grained reason, indexed like REASON_NAMES
REASON_GROUPS = ("object",) * 15 + ("context",) * 4 + ("scene",) * 2

LINKAGES = ("ward", "single", "complete", "average")


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    """Merge list in the usual convention.

    Leaves are ``0..N-1``; the cluster created by merge ``t`` gets id ``N + t``.
    """

    n_leaves: int
    merges: list = field(default_factory=list)

    def heights(self):
        return np.array([m.height for m in self.merges])

    def to_linkage_matrix(self):
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float)

    def members(self, node):
        if node < self.n_leaves:
            return [node]
        m = self.merges[node - self.n_leaves]
        return self.members(m.left) + self.members(m.right)

    def to_dict(self):
        return {
            "n_leaves": self.n_leaves,
            "merges": [
                {"left": m.left, "right": m.right, "height": m.height, "size": m.size}
                for m in self.merges
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_leaves"]), [Merge(int(m["left"]), int(m["right"]), float(m["height"]), int(m["size"]))
                                        for m in d["merges"]])

    def render_text(self, labels=None):
        """Indented tree, root first; leaves show their label."""
        labels = list(labels) if labels is not None else [str(i) for i in range(self.n_leaves)]
        lines = []
        if not self.merges:
            return labels[0] if labels else ""
        stack = [(self.n_leaves + len(self.merges) - 1, 0)]
        while stack:
            node, depth = stack.pop()
            pad = "  " * depth
            if node < self.n_leaves:
                lines.append(f"{pad}- {labels[node]}")
                continue
            m = self.merges[node - self.n_leaves]
            lines.append(f"{pad}+ node {node} (height={m.height:.6g}, size={m.size})")
            stack.append((m.right, depth + 1))
            stack.append((m.left, depth + 1))
        return "\n".join(lines)


def _lance_williams(linkage, d_ka, d_kb, d_ab, n_a, n_b, n_k):
    if linkage == "ward":
        # operates on squared distances
        return ((n_a + n_k) * d_ka + (n_b + n_k) * d_kb - n_k * d_ab) / (n_a + n_b + n_k)
    if linkage == "single":
        return np.minimum(d_ka, d_kb)
    if linkage == "complete":
        return np.maximum(d_ka, d_kb)
    if linkage == "average":
        return (n_a * d_ka + n_b * d_kb) / (n_a + n_b)
    raise ValueError(f"unknown linkage {linkage!r}")


def linkage_tree(vectors, linkage="ward"):
    """Agglomerative clustering with the Lance-Williams update.

    At each step the active pair with the smallest linkage distance merges;
    exact ties go to the smallest ``(left_id, right_id)``.  For Ward linkage
    a singleton pair merges at its Euclidean distance.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch("vectors must form a 2-D array of equal-length rows")
    N = X.shape[0]
    if N < 2:
        raise TooFewVectors(f"need at least 2 vectors, got {N}")
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")

    metric = "sqeuclidean" if linkage == "ward" else "euclidean"
    D = squareform(pdist(X, metric))
    np.fill_diagonal(D, np.inf)

    slot_id = np.arange(N)
    size = np.ones(N, dtype=int)
    active = np.ones(N, dtype=bool)
    merges = []
    for t in range(N - 1):
        best = D.min()
        rows, cols = np.nonzero(np.triu(D == best, 1))
        pairs = sorted(
            (min(slot_id[a], slot_id[b]), max(slot_id[a], slot_id[b]), a, b) for a, b in zip(rows, cols)
        )
        left, right, a, b = pairs[0]
        n_a, n_b = size[a], size[b]
        height = float(np.sqrt(best)) if linkage == "ward" else float(best)
        merges.append(Merge(int(left), int(right), height, int(n_a + n_b)))

        others = active.copy()
        others[[a, b]] = False
        ks = np.nonzero(others)[0]
        new = np.maximum(_lance_williams(linkage, D[ks, a], D[ks, b], best, n_a, n_b, size[ks]), 0.0)
        keep, drop = min(a, b), max(a, b)
        D[keep, ks] = new
        D[ks, keep] = new
        D[drop, :] = np.inf
        D[:, drop] = np.inf
        active[drop] = False
        size[keep] = n_a + n_b
        slot_id[keep] = N + t
    return Dendrogram(N, merges)


def ward_linkage(vectors):
    return linkage_tree(vectors, "ward")


def cut_k(dendrogram, k):
    """Cluster ids after undoing the last ``k - 1`` merges.

    Clusters are numbered in order of their smallest member index.
    """
    N = dendrogram.n_leaves
    if not 1 <= k <= N:
        raise InvalidK(f"k must lie in [1, {N}], got {k}")
    parent = list(range(2 * N - 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for t, m in enumerate(dendrogram.merges[: N - k]):
        node = N + t
        parent[find(m.left)] = node
        parent[find(m.right)] = node
    roots = [find(i) for i in range(N)]
    order = {}
    for r in roots:
        order.setdefault(r, len(order))
    return np.array([order[r] for r in roots], dtype=int)


def group_reasons(values, assignment):
    """Cluster id for each reason column: where its mean response peaks.

    Ties go to the lower cluster id.
    """
    V = np.asarray(values, dtype=float)
    a = np.asarray(assignment, dtype=int)
    if V.ndim != 2 or V.shape[0] != a.size:
        raise DimensionMismatch("assignment length must equal the number of rows")
    k = int(a.max()) + 1
    means = np.vstack([V[a == c].mean(axis=0) if np.any(a == c) else np.full(V.shape[1], -np.inf)
                       for c in range(k)])
    return np.argmax(means, axis=0)


@dataclass(eq=False)
class AnnotationMatrix:
    image_ids: list
    reason_names: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.image_ids = [str(i) for i in self.image_ids]
        self.reason_names = [str(r) for r in self.reason_names]
        if self.values.ndim != 2 or self.values.shape != (len(self.image_ids), len(self.reason_names)):
            raise DimensionMismatch("annotation values do not match ids and reason names")
        if self.values.shape[0] < 2:
            raise TooFewVectors("annotation matrix needs at least two images")
        if np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values)):
            raise DimensionMismatch("annotation responses must lie in [0, 1]")

    @classmethod
    def from_csv(cls, text):
        """Parse a delimited table; an ``image_id`` first column is optional."""
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if r]
        if len(rows) < 2:
            raise TooFewVectors("annotation table has no data rows")
        header = rows[0]
        has_id = header[0].strip().lower() == "image_id"
        names = header[1:] if has_id else header
        ids, vals = [], []
        for i, r in enumerate(rows[1:]):
            if len(r) != len(header):
                raise DimensionMismatch(f"row {i + 2} has {len(r)} fields, header has {len(header)}")
            ids.append(r[0] if has_id else str(i))
            try:
                vals.append([float(v) for v in (r[1:] if has_id else r)])
            except ValueError as exc:
                raise DimensionMismatch(f"row {i + 2}: {exc}") from exc
        return cls(ids, names, np.array(vals))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["image_id", *self.reason_names])
        for iid, row in zip(self.image_ids, self.values):
            w.writerow([iid, *[repr(float(v)) for v in row]])
        return buf.getvalue()


class WardClustering(BaseEstimator, ClusterMixin):
    """Agglomerative clustering estimator with a deterministic dendrogram.

    Parameters
    ----------
    n_clusters : int, default=3
    linkage : {"ward", "single", "complete", "average"}, default="ward"

    Attributes
    ----------
    dendrogram_ : Dendrogram
    labels_ : ndarray of shape (n_samples,)
    """

    def __init__(self, n_clusters=3, linkage="ward"):
        self.n_clusters = n_clusters
        self.linkage = linkage

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        self.dendrogram_ = linkage_tree(X, self.linkage)
        self.labels_ = cut_k(self.dendrogram_, self.n_clusters)
        return self

    def group_reasons(self, X):
        return group_reasons(X, self.labels_)
