"""Acceptance criteria, each at its stated tolerance and runtime budget.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""

import itertools
import json
import time

import numpy as np
import pytest
from scipy import integrate, stats
from sklearn.metrics import adjusted_rand_score

from atypia import distributions as dist
from atypia.evaluation import auc, build_report, kl_divergence, run_ablation, smooth_simplex
from atypia.pipeline.config import EngineConfig
from atypia.pipeline.engine import Engine
from atypia.pipeline.io import dumps_line
from atypia.pipeline.synthetic import SyntheticSpec, synth_generate, synth_normals
from atypia.reasoning import ReasoningModel
from atypia.surprise import REASONS, SurpriseScorer
from atypia.taxonomy import REASON_GROUPS, cut_k, group_reasons, ward_linkage

SEED = 0


def _check(record_property, measured, failures):
    record_property("measured", measured)
    assert not failures, "; ".join(failures)


# criterion 1 ---------------------------------------------------------------

def test_criterion_1_inverse_gaussian(record_property):
    start = time.perf_counter()
    failures = []
    x = np.random.default_rng(SEED).wald(2.0, 5.0, 10_000)
    p = dist.fit(dist.INVERSE_GAUSSIAN, x)
    err_mu, err_lam = abs(p.mean - 2) / 2, abs(p.shape - 5) / 5
    if max(err_mu, err_lam) >= 0.05:
        failures.append(f"relative errors {err_mu:.4f}, {err_lam:.4f}")

    grid = list(itertools.product([0.5, 2.0], [0.5, 5.0], [0.1, 0.5, 1.0, 2.5, 6.0]))
    assert len(grid) == 20
    worst = 0.0
    for mu, lam, t in grid:
        params = dist.InverseGaussianParams(mu, lam)
        quad, _ = integrate.quad(lambda u: dist.pdf(params, u), 0, t, epsabs=1e-13, epsrel=1e-13, limit=200)
        worst = max(worst, abs(float(dist.cdf(params, t)) - quad))
    if worst >= 1e-6:
        failures.append(f"cdf error {worst:.2e}")
    elapsed = time.perf_counter() - start
    if elapsed >= 2:
        failures.append(f"runtime {elapsed:.2f}s")
    _check(record_property,
           f"mean err {err_mu:.4f}, shape err {err_lam:.4f}, max cdf err {worst:.1e}, {elapsed:.2f}s", failures)


# criterion 2 ---------------------------------------------------------------

def test_criterion_2_aic_selection(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    wins = sum(dist.select_family(rng.wald(1.0, 2.0, 1000))[0] == dist.INVERSE_GAUSSIAN for _ in range(100))
    elapsed = time.perf_counter() - start
    failures = []
    if wins < 90:
        failures.append(f"inverse-Gaussian chosen {wins}/100")
    if elapsed >= 5:
        failures.append(f"runtime {elapsed:.2f}s")
    _check(record_property, f"inverse-Gaussian chosen {wins}/100, {elapsed:.2f}s", failures)


# criterion 3 ---------------------------------------------------------------

def _ward_from_scratch(X):
    """Recompute every cluster pair's Ward distance from centroids at each step."""
    clusters = [frozenset([i]) for i in range(len(X))]
    out = []
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            A, B = sorted(clusters[a]), sorted(clusters[b])
            gap = X[A].mean(axis=0) - X[B].mean(axis=0)
            d = np.sqrt(2 * len(A) * len(B) / (len(A) + len(B)) * gap @ gap)
            if best is None or d < best[0]:
                best = (d, a, b)
        d, a, b = best
        merged = clusters[a] | clusters[b]
        out.append((merged, d))
        clusters = [c for i, c in enumerate(clusters) if i not in (a, b)] + [merged]
    return out


def test_criterion_3_ward_oracle(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    mismatched, worst = 0, 0.0
    for _ in range(50):
        n, d = int(rng.integers(2, 9)), int(rng.integers(1, 5))
        X = rng.random((n, d))
        tree = ward_linkage(X)
        ours = [(frozenset(tree.members(n + t)), m.height) for t, m in enumerate(tree.merges)]
        ref = _ward_from_scratch(X)
        if [s for s, _ in ours] != [s for s, _ in ref]:
            mismatched += 1
        worst = max(worst, max(abs(h1 - h2) for (_, h1), (_, h2) in zip(ours, ref)))
    elapsed = time.perf_counter() - start
    failures = []
    if mismatched:
        failures.append(f"{mismatched} instances with different merges")
    if worst > 1e-9:
        failures.append(f"height error {worst:.2e}")
    if elapsed >= 2:
        failures.append(f"runtime {elapsed:.2f}s")
    _check(record_property, f"50/50 merge sets {'identical' if not mismatched else 'differ'}, "
                            f"max height err {worst:.1e}, {elapsed:.2f}s", failures)


# criterion 4 ---------------------------------------------------------------

def test_criterion_4_taxonomy_recovery(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    groups = np.array(REASON_GROUPS)
    names = ("object", "context", "scene")
    truth = np.repeat(np.arange(3), 20)
    X = np.vstack([
        np.clip(np.where(groups == names[g], 0.75, 0.1) + rng.normal(0, 0.08, 21), 0, 1) for g in truth
    ])
    clusters = cut_k(ward_linkage(X), 3)
    ari = adjusted_rand_score(truth, clusters)
    cluster_name = {int(np.bincount(clusters[truth == g]).argmax()): names[g] for g in range(3)}
    recovered = [cluster_name.get(int(c)) for c in group_reasons(X, clusters)]
    exact = recovered == list(REASON_GROUPS)
    elapsed = time.perf_counter() - start
    failures = []
    if ari != 1.0:
        failures.append(f"adjusted Rand {ari:.4f}")
    if not exact:
        failures.append("reason grouping differs")
    if elapsed >= 1:
        failures.append(f"runtime {elapsed:.2f}s")
    _check(record_property, f"adjusted Rand {ari:.3f}, reason grouping exact={exact}, {elapsed:.2f}s", failures)


# criteria 5, 6, 9 ----------------------------------------------------------

def _run_suite(spec, seed):
    """synth -> train -> priors -> score -> reason -> eval, as the command line does."""
    ds = synth_generate(spec, seed)
    engine = Engine.train(ds.train, ds.vocab, EngineConfig(seed=seed))
    scores = engine.score_records(ds.test)
    reasons = engine.reason_records(scores)
    normalized = np.array([[r["normalized"][k] for k in REASONS] for r in reasons])
    abnormal = np.array([lab["abnormal"] for lab in ds.labels])
    true_reasons = [lab["reason"] for lab in ds.labels]
    report = build_report(normalized, abnormal, true_reasons, threshold=engine.config.decision_threshold)
    return ds, engine, scores, report


@pytest.fixture(scope="module")
def suite():
    start = time.perf_counter()
    result = _run_suite(SyntheticSpec(), SEED)
    return result, time.perf_counter() - start


def test_criterion_5_end_to_end(suite, record_property):
    (ds, engine, scores, report), elapsed = suite
    start = time.perf_counter()
    null_spec = SyntheticSpec(attr_displacement=0.0, location_displacement=0.0, cooccurrence_inversion=0.0)
    null_report = _run_suite(null_spec, SEED)[3]
    null_elapsed = time.perf_counter() - start
    a, acc, a0 = report["abnormality_auc"], report["reason_accuracy"], null_report["abnormality_auc"]
    failures = []
    if a < 0.95:
        failures.append(f"AUC {a:.4f}")
    if acc < 0.85:
        failures.append(f"reason accuracy {acc:.4f}")
    if not 0.45 <= a0 <= 0.55:
        failures.append(f"null AUC {a0:.4f}")
    if max(elapsed, null_elapsed) >= 30:
        failures.append(f"runtime {elapsed:.1f}s / {null_elapsed:.1f}s")
    _check(record_property, f"AUC {a:.4f}, reason accuracy {acc:.4f}, null AUC {a0:.4f}, "
                            f"{elapsed:.1f}s + {null_elapsed:.1f}s", failures)


def test_criterion_6_ablation_ordering(suite, record_property):
    (ds, engine, _, _), _ = suite
    table = run_ablation(ds.test, [lab["reason"] for lab in ds.labels], engine.typicality,
                         clamp_max=engine.config.clamp_max)
    failures = []
    for reason, row in table.items():
        for variant, value in row.items():
            if row["full"] < value:
                failures.append(f"{reason}: full {row['full']:.4f} < {variant} {value:.4f}")
    measured = "; ".join(
        f"{r} " + "/".join(f"{row[v]:.3f}" for v in ("var1", "var2", "var3", "full")) for r, row in table.items()
    )
    _check(record_property, f"var1/var2/var3/full: {measured}", failures)


def test_criterion_9_determinism(suite, record_property):
    (_, _, scores, report), _ = suite
    again = _run_suite(SyntheticSpec(), SEED)
    first = "".join(dumps_line(r) for r in scores), json.dumps(report, indent=1)
    second = "".join(dumps_line(r) for r in again[2]), json.dumps(again[3], indent=1)
    failures = []
    if first[0] != second[0]:
        failures.append("score records differ")
    if first[1] != second[1]:
        failures.append("report differs")
    _check(record_property, f"score records identical={first[0] == second[0]}, "
                            f"report identical={first[1] == second[1]}", failures)


# criterion 7 ---------------------------------------------------------------

def _pair_count(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (pos.size * neg.size)


def test_criterion_7_metric_oracles(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    auc_mismatch = 0
    for _ in range(100):
        n = int(rng.integers(2, 101))
        s = rng.integers(0, 20, n) / 20
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        if auc(s, y) != _pair_count(s, y):
            auc_mismatch += 1

    kl_bad = 0
    for _ in range(1000):
        p = smooth_simplex(rng.dirichlet(np.ones(3)))
        q = smooth_simplex(rng.dirichlet(np.ones(3)))
        if kl_divergence(p, q) <= 0 or abs(kl_divergence(p, p)) > 1e-12:
            kl_bad += 1
    hand = kl_divergence([0.5, 0.25, 0.25], [1 / 3, 1 / 3, 1 / 3])
    elapsed = time.perf_counter() - start
    failures = []
    if auc_mismatch:
        failures.append(f"{auc_mismatch} AUC mismatches")
    if kl_bad:
        failures.append(f"{kl_bad} KL violations")
    if abs(hand - 0.05889) > 1e-4:
        failures.append(f"hand KL {hand:.5f}")
    if elapsed >= 2:
        failures.append(f"runtime {elapsed:.2f}s")
    _check(record_property, f"AUC exact 100/100={auc_mismatch == 0}, KL violations {kl_bad}/1000, "
                            f"hand KL {hand:.5f}, {elapsed:.2f}s", failures)


# criterion 8 ---------------------------------------------------------------

def _transform_panel(lo, spread):
    # strictly increasing on every score >= lo
    return {
        "affine": lambda x: 3.0 * x + 7.0,
        "sqrt": lambda x: np.sqrt(x - lo + spread),
        "log": lambda x: np.log(x - lo + spread),
        "exp": lambda x: np.exp((x - lo) / (4.0 * spread)),
        "cube": lambda x: (x - lo + spread) ** 3,
    }


def test_criterion_8_normalization(record_property):
    start = time.perf_counter()
    spec = SyntheticSpec()
    ds = synth_generate(spec, SEED)
    engine = Engine.train(ds.train, ds.vocab, EngineConfig(seed=SEED))
    scorer = SurpriseScorer(engine.typicality)
    prior_pop = scorer.transform(synth_normals(spec, ds.planted, 2000, SEED + 1000))
    held_out = scorer.transform(synth_normals(spec, ds.planted, 2000, SEED + 2000))
    model = ReasoningModel().fit(prior_pop)
    Z = model.transform(held_out)
    ks = [stats.kstest(Z[:, r], "uniform").statistic for r in range(3)]
    failures = [f"KS {REASONS[r]} {k:.4f}" for r, k in enumerate(ks) if k >= 0.05]

    # 1000 test triples: the labeled test suite plus fresh normals
    test = np.vstack([scorer.transform(ds.test), scorer.transform(synth_normals(spec, ds.planted, 500, SEED + 3000))])
    assert test.shape[0] == 1000
    decisions, reasons = model.predict(test), model.predict_reason(test)
    worst = (1.0, "")
    for r in range(3):
        lo = min(prior_pop[:, r].min(), test[:, r].min())
        spread = prior_pop[:, r].std()
        for name, f in _transform_panel(lo, spread).items():
            p2, t2 = prior_pop.copy(), test.copy()
            p2[:, r], t2[:, r] = f(p2[:, r]), f(t2[:, r])
            m2 = ReasoningModel().fit(p2)
            agree = min(np.mean(m2.predict(t2) == decisions), np.mean(m2.predict_reason(t2) == reasons))
            if agree < 0.99:
                failures.append(f"{name} on {REASONS[r]}: agreement {agree:.3f}")
            worst = min(worst, (agree, f"{name} on {REASONS[r]}"))
    elapsed = time.perf_counter() - start
    if elapsed >= 10:
        failures.append(f"runtime {elapsed:.1f}s")
    _check(record_property, "KS " + "/".join(f"{k:.4f}" for k in ks)
           + f", lowest agreement {worst[0]:.3f} ({worst[1]}), {elapsed:.1f}s", failures)
