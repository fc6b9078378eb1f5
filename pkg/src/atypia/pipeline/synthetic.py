"""Synthetic populations of normal and abnormal images with known structure.

A planted model fixes which object categories belong in which scenes, the
attribute profile of every category, which attribute classifiers are
trustworthy, and where each category sits in the frame.  Normal images are
sampled from it; abnormal images break exactly one of the three reason
groups:

* object-centric: the relevant attributes a reliable classifier can see are
  displaced by ``attr_displacement`` training standard deviations;
* context-centric: one object is swapped for a category that never occurs
  in the scene (with probability ``cooccurrence_inversion``) and its box is
  moved ``location_displacement`` grid cells from the usual place;
* scene-centric: the relevant, reliably classified scene attributes are
  displaced by ``attr_displacement`` standard deviations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from ..evaluation import ground_truth_reason_scores
from ..evidence import CategoryVocab, ImageEvidence, NormalTrainingRecord, ObjectEvidence
from ..taxonomy import REASON_GROUPS, REASON_NAMES, AnnotationMatrix

_HIGH, _LOW = 0.75, 0.25


@dataclass
class SyntheticSpec:
    n_object_categories: int = 4
    n_scene_categories: int = 4
    n_object_attributes: int = 12
    n_scene_attributes: int = 12
    grid_size: int = 8
    n_train_normal: int = 500
    n_test_normal: int = 200
    n_abnormal_object: int = 100
    n_abnormal_context: int = 100
    n_abnormal_scene: int = 100
    attr_displacement: float = 3.0
    cooccurrence_inversion: float = 0.5
    location_displacement: float = 3.0
    objects_per_image: tuple = (2, 2)
    attr_noise: float = 0.07
    unreliable_outlier_rate: float = 0.2
    reliable_fraction: float = 2.0 / 3.0
    relevant_scene_fraction: float = 2.0 / 3.0
    classifier_concentration: float = 200.0
    position_jitter: float = 0.03
    clutter_fraction: float = 0.05
    clutter_size_quantile: float = 0.005
    target_size_band: tuple = (0.1, 0.9)
    n_annotators: int = 6

    def __post_init__(self):
        counts = (self.n_train_normal, self.n_test_normal, self.n_abnormal_object,
                  self.n_abnormal_context, self.n_abnormal_scene)
        if any(c < 0 for c in counts):
            raise ValueError("image counts must be non-negative")
        if min(self.attr_displacement, self.cooccurrence_inversion, self.location_displacement) < 0:
            raise ValueError("anomaly magnitudes must be non-negative")
        if self.cooccurrence_inversion > 1:
            raise ValueError("cooccurrence_inversion is a probability")
        if not 0 <= self.clutter_fraction < 1:
            raise ValueError("clutter_fraction must lie in [0, 1)")
        if not 0 < self.clutter_size_quantile <= 1:
            raise ValueError("clutter_size_quantile must lie in (0, 1]")
        if self.n_object_categories < 3 or self.n_scene_categories < 2:
            raise ValueError("need at least 3 object and 2 scene categories")
        lo, hi = self.objects_per_image
        if not 1 <= lo <= hi:
            raise ValueError("objects_per_image must satisfy 1 <= min <= max")
        self.objects_per_image = (int(lo), int(hi))
        a, b = self.target_size_band
        if not 0 <= a < b <= 1:
            raise ValueError("target_size_band must satisfy 0 <= low < high <= 1")
        self.target_size_band = (float(a), float(b))

    def to_dict(self):
        d = asdict(self)
        d["objects_per_image"] = list(self.objects_per_image)
        d["target_size_band"] = list(self.target_size_band)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "objects_per_image" in d:
            d["objects_per_image"] = tuple(d["objects_per_image"])
        if "target_size_band" in d:
            d["target_size_band"] = tuple(d["target_size_band"])
        return cls(**d)


@dataclass(eq=False)
class PlantedModel:
    object_given_scene: np.ndarray  # (V, J)
    object_attr_mean: np.ndarray  # (n, V)
    object_attr_reliable: np.ndarray  # (n,)
    scene_attr_mean: np.ndarray  # (m, J); NaN marks an uninformative attribute
    scene_attr_reliable: np.ndarray  # (m,)
    location_center: np.ndarray  # (V, 2)
    size_shape: np.ndarray  # (V,)
    size_scale: np.ndarray  # (V,)


@dataclass(eq=False)
class SyntheticDataset:
    vocab: CategoryVocab
    planted: PlantedModel
    train: list
    test: list
    labels: list  # dicts: image_id, abnormal, reason
    annotations: AnnotationMatrix | None = None
    gt_scores: dict = field(default_factory=dict)


def plant_model(spec, rng):
    V, J = spec.n_object_categories, spec.n_scene_categories
    n, m = spec.n_object_attributes, spec.n_scene_attributes

    # each scene hosts two categories; the rest never appear in it
    table = np.zeros((V, J))
    for j in range(J):
        first, second = j % V, (j + 1) % V
        w = rng.uniform(0.4, 0.6)
        table[first, j] = w
        table[second, j] = 1.0 - w

    # Balanced design: every category (scene) has the same number of
    # relevant attributes among reliable and unreliable channels alike, so
    # normal surprise scores share one offset across categories.
    obj_rel = rng.permutation(np.arange(n) < round(spec.reliable_fraction * n))
    obj_mean = np.full((n, V), _LOW)
    for c in range(V):
        for pool in (np.flatnonzero(obj_rel), np.flatnonzero(~obj_rel)):
            obj_mean[rng.choice(pool, size=pool.size // 2, replace=False), c] = _HIGH

    scene_rel = rng.permutation(np.arange(m) < round(spec.reliable_fraction * m))
    scene_mean = np.where(rng.random((m, J)) < 0.5, _HIGH, _LOW)
    for j in range(J):
        for pool in (np.flatnonzero(scene_rel), np.flatnonzero(~scene_rel)):
            k = pool.size - round(spec.relevant_scene_fraction * pool.size)
            scene_mean[rng.choice(pool, size=k, replace=False), j] = np.nan

    centers = rng.uniform(0.3, 0.7, size=(V, 2))
    size_shape = rng.uniform(6.0, 10.0, size=V)
    size_mean = rng.uniform(0.04, 0.10, size=V)
    return PlantedModel(table, obj_mean, obj_rel, scene_mean, scene_rel, centers,
                        size_shape, size_mean / size_shape)


class _Sampler:
    def __init__(self, spec, planted, rng):
        self.spec = spec
        self.p = planted
        self.rng = rng
        self.V, self.J = planted.object_given_scene.shape

    def simplex(self, k, size):
        alpha = np.full(size, 1.0)
        alpha[k] = self.spec.classifier_concentration
        return self.rng.dirichlet(alpha)

    def responses(self, latent, reliable):
        # unreliable classifiers ignore the image content and now and then
        # answer with arbitrary confidence
        noise = np.clip(self.rng.normal(0.5, self.spec.attr_noise, size=latent.size), 0.0, 1.0)
        wild = self.rng.random(latent.size) < self.spec.unreliable_outlier_rate
        noise = np.where(wild, self.rng.random(latent.size), noise)
        return np.where(reliable, latent, noise)

    def object_latent(self, c):
        mean = self.p.object_attr_mean[:, c]
        return np.clip(mean + self.rng.normal(0.0, self.spec.attr_noise, size=mean.size), 0.0, 1.0)

    def scene_latent(self, j):
        mean = self.p.scene_attr_mean[:, j]
        informative = ~np.isnan(mean)
        gauss = np.where(informative, mean, 0.5) + self.rng.normal(0.0, self.spec.attr_noise, size=mean.size)
        uniform = self.rng.random(mean.size)
        return np.clip(np.where(informative, gauss, uniform), 0.0, 1.0)

    def size(self, c, lo=0.0, hi=1.0):
        # inverse-CDF draw restricted to the quantile band [lo, hi)
        u = self.rng.uniform(lo, hi)
        r = special.gammaincinv(self.p.size_shape[c], u) * self.p.size_scale[c]
        return float(np.clip(r, 0.004, 0.5))

    def box(self, c, r, shift_cells=0.0, anywhere=False):
        side = np.sqrt(r)
        if anywhere:
            center = self.rng.uniform(side / 2, 1 - side / 2, size=2)
        else:
            center = self.p.location_center[c] + self.rng.normal(0.0, self.spec.position_jitter, size=2)
        if shift_cells > 0:
            center = self._displace(center, side, shift_cells / self.spec.grid_size)
        x, y = np.clip(center - side / 2, 0.0, 1.0 - side)
        return np.array([x, y, side, side]), side * side

    def _displace(self, center, side, dist):
        angles = self.rng.permutation(8) * (np.pi / 4)
        best, best_room = None, -np.inf
        for a in angles:
            moved = center + dist * np.array([np.cos(a), np.sin(a)])
            room = min(moved.min() - side / 2, 1 - side / 2 - moved.max())
            if room >= 0:
                return moved
            if room > best_room:
                best, best_room = moved, room
        return best

    def image(self, image_id, reason=None, labeled=False):
        spec, p, rng = self.spec, self.p, self.rng
        j = int(rng.integers(self.J))
        s_latent = self.scene_latent(j)
        if reason == "scene":
            mean = p.scene_attr_mean[:, j]
            hit = p.scene_attr_reliable & ~np.isnan(mean)
            direction = np.where(np.nan_to_num(mean) > 0.5, -1.0, 1.0)
            s_latent = np.clip(s_latent + hit * direction * spec.attr_displacement * spec.attr_noise, 0.0, 1.0)
        s_resp = self.responses(s_latent, p.scene_attr_reliable)

        lo, hi = spec.objects_per_image
        K = int(rng.integers(lo, hi + 1))
        target = int(rng.integers(K)) if reason in ("object", "context") else -1
        objects = []
        for k in range(K):
            c = int(rng.choice(self.V, p=p.object_given_scene[:, j]))
            shift, clutter = 0.0, False
            if k == target and reason == "context":
                if rng.random() < spec.cooccurrence_inversion:
                    never = np.flatnonzero(p.object_given_scene[:, j] == p.object_given_scene[:, j].min())
                    c = int(rng.choice(never))
                shift = spec.location_displacement
            # a small share of objects are incidental background clutter: any
            # category, anywhere, at the bottom of its size range
            if k != target and rng.random() < spec.clutter_fraction:
                clutter = True
                c = int(rng.integers(self.V))
                r = self.size(c, 0.0, spec.clutter_size_quantile)
            elif k == target:
                # the object that makes an image abnormal is noticeably sized
                r = self.size(c, *spec.target_size_band)
            else:
                r = self.size(c)
            latent = self.object_latent(c)
            if k == target and reason == "object":
                hit = p.object_attr_reliable & (p.object_attr_mean[:, c] == _HIGH)
                latent = np.clip(latent - hit * spec.attr_displacement * spec.attr_noise, 0.0, 1.0)
            bbox, size = self.box(c, r, shift, anywhere=clutter)
            kwargs = dict(
                object_probs=self.simplex(c, self.V),
                object_attrs=self.responses(latent, p.object_attr_reliable),
                bbox=bbox,
                relative_size=size,
            )
            if labeled:
                kwargs.update(object_label=c, attr_labels=(latent >= 0.5).astype(float))
            objects.append(ObjectEvidence(**kwargs))

        common = dict(image_id=image_id, scene_probs=self.simplex(j, self.J), scene_attrs=s_resp, objects=objects)
        if labeled:
            return NormalTrainingRecord(scene_label=j, scene_attr_labels=(s_latent >= 0.5).astype(float), **common)
        return ImageEvidence(**common)

    def annotation(self, reason):
        # mean of binary reason selections over several annotators
        groups = np.asarray(REASON_GROUPS)
        prob = np.where(groups == reason, 0.55, 0.04)
        votes = self.rng.random((self.spec.n_annotators, len(REASON_NAMES))) < prob
        return votes.mean(axis=0)


def synth_generate(spec, seed):
    """Draw a planted model, a normal training set, and a labeled test set.

    Returns a :class:`SyntheticDataset`; identical ``(spec, seed)`` give
    identical output.
    """
    rng = np.random.default_rng(seed)
    planted = plant_model(spec, rng)
    vocab = CategoryVocab.generic(spec.n_object_categories, spec.n_scene_categories,
                                  spec.n_object_attributes, spec.n_scene_attributes)
    sampler = _Sampler(spec, planted, rng)

    train = [sampler.image(f"train-{i:05d}", labeled=True) for i in range(spec.n_train_normal)]

    plan = [None] * spec.n_test_normal
    plan += ["object"] * spec.n_abnormal_object
    plan += ["context"] * spec.n_abnormal_context
    plan += ["scene"] * spec.n_abnormal_scene
    plan = [plan[i] for i in rng.permutation(len(plan))]

    test, labels, ann_ids, ann_rows, gt = [], [], [], [], {}
    for i, reason in enumerate(plan):
        iid = f"test-{i:05d}"
        test.append(sampler.image(iid, reason=reason))
        labels.append({"image_id": iid, "abnormal": int(reason is not None), "reason": reason})
        if reason is not None:
            row = sampler.annotation(reason)
            ann_ids.append(iid)
            ann_rows.append(row)
    annotations = None
    if len(ann_ids) >= 2:
        annotations = AnnotationMatrix(ann_ids, list(REASON_NAMES), np.array(ann_rows))
    for iid, row in zip(ann_ids, ann_rows):
        gt[iid] = ground_truth_reason_scores(row)
    return SyntheticDataset(vocab, planted, train, test, labels, annotations, gt)


def synth_normals(spec, planted, n, seed, prefix="normal"):
    """Draw ``n`` further unlabeled normal images from an existing planted model."""
    sampler = _Sampler(spec, planted, np.random.default_rng(seed))
    return [sampler.image(f"{prefix}-{i:05d}") for i in range(n)]
