"""Evaluation metrics: AUC, reason KL-divergence, confusion matrices, ablations."""

from __future__ import annotations

import csv
import io

import numpy as np
from scipy.stats import rankdata

from .exceptions import InvalidSimplex, LengthMismatch, SingleClassSample
from .surprise import REASONS, VARIANTS, SurpriseScorer
from .taxonomy import REASON_GROUPS

KL_FLOOR = 1e-6
SIMPLEX_TOL = 1e-9


def auc(scores, labels):
    """Area under the ROC curve in Mann-Whitney form; ties earn half credit."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassSample("AUC needs both positive and negative examples")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _check_simplex(p, name):
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidSimplex(f"{name} is not a probability vector: {p}")
    return p


def kl_divergence(p, q):
    """KL(p || q) in nats, with 0 * log(0 / q) taken as 0."""
    p = _check_simplex(p, "p")
    q = _check_simplex(q, "q")
    if p.shape != q.shape:
        raise InvalidSimplex("p and q have different lengths")
    nz = p > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))


def smooth_simplex(values, floor=KL_FLOOR):
    """Normalize non-negative scores, floor each entry, renormalize."""
    v = np.clip(np.asarray(values, dtype=float).ravel(), 0.0, None)
    total = v.sum()
    v = v / total if total > 0 else np.full(v.size, 1.0 / v.size)
    v = np.maximum(v, floor)
    return v / v.sum()


def ground_truth_reason_scores(responses, groups=REASON_GROUPS):
    """Group-mean human responses over (object, context, scene), as a simplex."""
    r = np.asarray(responses, dtype=float).ravel()
    g = np.asarray(groups)
    if r.size != g.size:
        raise LengthMismatch(f"{r.size} responses for {g.size} grouped reasons")
    means = np.array([r[g == name].mean() for name in REASONS])
    total = means.sum()
    if total <= 0:
        return np.full(3, 1.0 / 3.0)
    return means / total


def confusion_matrix(predicted, truth, labels=REASONS):
    """Counts with rows indexed by prediction and columns by ground truth."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predictions for {len(truth)} labels")
    index = {lab: i for i, lab in enumerate(labels)}
    out = np.zeros((len(labels), len(labels)), dtype=int)
    for p, t in zip(predicted, truth):
        out[index[p], index[t]] += 1
    return out


def run_ablation(evidence, reasons, model, variants=tuple(VARIANTS), clamp_max=30.0):
    """AUC of each reason's raw score under each ablation variant.

    ``reasons[i]`` is the abnormality reason of ``evidence[i]`` or ``None``
    for a normal image.  For the row of reason ``r`` the positives are the
    images abnormal for ``r``; every other image is a negative.

    Returns ``{reason: {variant: auc}}``.
    """
    evidence = list(evidence)
    reasons = list(reasons)
    if len(evidence) != len(reasons):
        raise LengthMismatch("one reason label per evidence record is required")
    scores = {}
    for v in variants:
        abl = VARIANTS[v]
        scorer = SurpriseScorer(model, abl.use_relevance, abl.use_reliability,
                                abl.use_location, abl.use_size_modulation, clamp_max)
        scores[v] = scorer.transform(evidence)
    table = {}
    for r, name in enumerate(REASONS):
        labels = np.array([1 if x == name else 0 for x in reasons])
        if labels.sum() == 0:
            raise SingleClassSample(f"ablation row {name!r} has no abnormal images")
        table[name] = {v: auc(scores[v][:, r], labels) for v in variants}
    return table


def build_report(normalized, abnormal, true_reasons=None, gt_scores=None, threshold=0.95):
    """Assemble the evaluation document from normalized triples and labels.

    Parameters
    ----------
    normalized : array of shape (n, 3)
        Normalized (CDF) scores in REASONS order.
    abnormal : array of shape (n,)
        1 for abnormal images.
    true_reasons : sequence of str or None, optional
        Ground-truth reason of each image (``None`` for normal ones).
    gt_scores : array of shape (n, 3) or None, optional
        Ground-truth reason simplices; rows of NaN are skipped.
    """
    normalized = np.asarray(normalized, dtype=float)
    abnormal = np.asarray(abnormal, dtype=int)
    final = normalized.max(axis=1)
    predicted = [REASONS[i] for i in np.argmax(normalized, axis=1)]
    report = {
        "n_images": int(normalized.shape[0]),
        "n_abnormal": int(abnormal.sum()),
        "threshold": float(threshold),
        "abnormality_auc": auc(final, abnormal),
        "predicted_abnormal": int(np.sum(final > threshold)),
    }
    if true_reasons is not None:
        idx = [i for i, r in enumerate(true_reasons) if r is not None]
        if idx:
            cm = confusion_matrix([predicted[i] for i in idx], [true_reasons[i] for i in idx])
            report["reason_accuracy"] = float(np.trace(cm) / cm.sum())
            report["confusion_matrix"] = {"rows": "predicted", "columns": "truth",
                                          "labels": list(REASONS), "counts": cm.tolist()}
            per_reason = {}
            for r, name in enumerate(REASONS):
                labels = np.array([1 if t == name else 0 for t in true_reasons])
                if 0 < labels.sum() < labels.size:
                    per_reason[name] = auc(normalized[:, r], labels)
            report["per_reason_auc"] = per_reason
    if gt_scores is not None:
        gt = np.asarray(gt_scores, dtype=float)
        keep = ~np.any(np.isnan(gt), axis=1)
        if keep.any():
            kls = [kl_divergence(gt[i], smooth_simplex(normalized[i])) for i in np.nonzero(keep)[0]]
            report["reason_kl"] = {"mean": float(np.mean(kls)), "n": int(len(kls))}
    return report


def report_summary_csv(report):
    """Flat ``metric,value`` table of the scalar entries of a report."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in obj:
                walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
        elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
            w.writerow([prefix, repr(obj)])

    walk("", report)
    return buf.getvalue()
