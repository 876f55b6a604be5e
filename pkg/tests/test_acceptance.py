"""Acceptance gate: one test and one printed pass/fail line per criterion.

Every expected value here is computed by an independent oracle inside the
test (exhaustive enumeration, full re-sort, naive recount, closed forms),
never read back from the code under test.
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np

from conftest import make_record, make_set, random_library, random_set
from protoevolve.anchors import PrototypeSet, select_anchors
from protoevolve.gating import confusion_matrix, gate_top_n
from protoevolve.inference import classify, evaluate
from protoevolve.modulation import (
    ModulationParams,
    PARAM_NAMES,
    SemanticFeatures,
    init_params,
    layer_norm_row,
    modulate,
    softmax_rows,
)
from protoevolve.store import NUM_GRADES
from protoevolve.synth import SynthConfig, generate, run_benchmark
from protoevolve.training import TrainConfig, classification_loss, finite_difference_check


def _report(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{name}: {detail}"


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _random_params(rng, d_v: int, d_t: int, d_p: int, scale: float = 0.4) -> ModulationParams:
    return ModulationParams(
        wq1=scale * rng.normal(size=(d_v, d_p)),
        wk1=scale * rng.normal(size=(d_t, d_p)),
        wv1=scale * rng.normal(size=(d_t, d_v)),
        wq2=scale * rng.normal(size=(d_v, d_p)),
        wk2=scale * rng.normal(size=(d_t, d_p)),
        wv2=scale * rng.normal(size=(d_t, d_v)),
        wp=scale * rng.normal(size=(d_v, d_t)),
    )


def _random_features(rng, n_div: int, d_t: int) -> SemanticFeatures:
    return SemanticFeatures(
        diverse=rng.normal(size=(NUM_GRADES, n_div, d_t)),
        differentiated=rng.normal(size=(NUM_GRADES, NUM_GRADES - 1, d_t)),
    )


def test_a1_anchor_selection_matches_exhaustive_search(capsys):
    """10 records per grade; alpha 1..3; brute-force subset minimization."""
    start = time.perf_counter()
    rng = _rng(41)
    eset = random_set(rng, n_per_grade=10, n_s=3, d_v=6, with_gating=False)

    ok = True
    for alpha in (1, 2, 3):
        selection = select_anchors(eset, alpha=alpha)
        for grade in range(NUM_GRADES):
            members = [r for r in eset.records if r.grade == grade]
            mean = np.mean([r.tokens for r in members], axis=0)
            score = {r.id: float(np.mean((r.tokens - mean) ** 2)) for r in members}
            best = min(
                itertools.combinations(sorted(score), alpha),
                key=lambda subset: sum(score[rid] for rid in subset),
            )
            ok = ok and sorted(selection.ids(grade)) == sorted(best)
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 1.0
    _report(capsys, "A1", ok, f"selection equals exhaustive subset minimization for alpha 1-3 ({elapsed:.2f}s)")


def test_a2_gating_matches_full_sort_and_ignores_scale(capsys):
    """20 families, top 11; re-sorted oracle; power-of-two rescaling is a no-op."""
    rng = _rng(42)
    library = random_library(rng, n_families=20, d_t=6)
    anchors = list(random_set(rng, n_per_grade=2, n_s=2, d_v=3, d_t=6).records)

    result = gate_top_n(library, anchors, n_div=11)

    oracle = {}
    for fam in library.families:
        per_anchor = []
        for a in anchors:
            sims = [
                float(a.gating @ v / (np.linalg.norm(a.gating) * np.linalg.norm(v)))
                for v in fam.variants
            ]
            own = sims[a.grade]
            rest = (sum(sims) - own) / (NUM_GRADES - 1)
            per_anchor.append(1.0 / (1.0 + math.exp(-(own - rest))))
        oracle[fam.family_id] = np.mean(per_anchor)
    expected = [
        fid for fid, _ in sorted(oracle.items(), key=lambda kv: (-kv[1], kv[0]))
    ][:11]

    ok = result.selected == expected
    ok = ok and len(result.selected) == 11
    ok = ok and all(0.0 < s < 1.0 for s in result.scores.values())

    scaled_lib = random_library(_rng(42), n_families=20, d_t=6)
    scaled_lib.families[5].variants *= 4.0
    for fam in scaled_lib.families:
        fam.variants *= 2.0
    scaled_anchors = [
        make_record(a.id, a.grade, a.tokens, a.gating * (0.25 if a.id == "g3-0" else 1.0))
        for a in anchors
    ]
    rescaled = gate_top_n(scaled_lib, scaled_anchors, n_div=11)
    ok = ok and rescaled.selected == result.selected
    ok = ok and all(rescaled.scores[f] == result.scores[f] for f in result.scores)
    _report(capsys, "A2", ok, "top-11 of 20 families equals full-sort oracle; scores in (0,1); exact under positive rescaling")


def test_a3_zero_value_projections_leave_prototypes_unchanged(capsys):
    rng = _rng(43)
    proto = PrototypeSet(stage="base", matrices=rng.normal(size=(NUM_GRADES, 4, 6)))
    feats = _random_features(rng, n_div=3, d_t=5)
    params = init_params(d_v=6, d_t=5, d_p=4, seed=43)
    enhanced, _ = modulate(proto, feats, params)
    gap = float(np.max(np.abs(enhanced.matrices - proto.matrices)))
    ok = gap <= 1e-12 and enhanced.stage == "dpe"
    _report(capsys, "A3", ok, f"freshly initialized modulation is the identity (max deviation {gap:.2e})")


def test_a4_analytic_gradients_match_finite_differences(capsys):
    """All seven projection matrices at the stated dims, h = 1e-5."""
    start = time.perf_counter()
    rng = _rng(44)
    n_s, d_v, d_t, d_p, n_div = 3, 8, 6, 4, 3
    proto = PrototypeSet(stage="base", matrices=rng.normal(size=(NUM_GRADES, n_s, d_v)))
    feats = _random_features(rng, n_div=n_div, d_t=d_t)
    params = _random_params(rng, d_v, d_t, d_p)
    records = [
        make_record(f"r{c}", c, rng.normal(size=(n_s, d_v))) for c in range(NUM_GRADES)
    ]
    errors = finite_difference_check(proto, feats, params, records, tau=1.0, h=1e-5)
    elapsed = time.perf_counter() - start
    worst = max(errors.values())
    ok = set(errors) == set(PARAM_NAMES) and worst <= 1e-4 and elapsed < 10.0
    _report(capsys, "A4", ok, f"worst relative gradient error {worst:.2e} over all 7 matrices ({elapsed:.2f}s)")


def test_a5_numerical_invariants(capsys):
    rng = _rng(45)

    rows = softmax_rows(30.0 * rng.normal(size=(7, 9)))
    sums_ok = np.max(np.abs(rows.sum(axis=1) - 1.0)) <= 1e-9

    proto = PrototypeSet(stage="base", matrices=rng.normal(size=(NUM_GRADES, 3, 6)))
    feats = _random_features(rng, n_div=4, d_t=5)
    params = _random_params(rng, d_v=6, d_t=5, d_p=3)
    _, tape = modulate(proto, feats, params)
    for attn in (tape.psi.a1, tape.dpe.a2):
        sums_ok = sums_ok and np.max(np.abs(attn.sum(axis=-1) - 1.0)) <= 1e-9

    ln_ok = True
    for _ in range(20):
        out = layer_norm_row(12.0 * rng.normal(size=16) + 3.0)
        ln_ok = ln_ok and abs(out.mean()) <= 1e-9 and abs(out.var() - 1.0) <= 1e-6

    uniform_ok = True
    for level in (0.0, 0.3, -2.0):
        for label in range(NUM_GRADES):
            loss = classification_loss(np.full(NUM_GRADES, level), label, tau=0.7)
            uniform_ok = uniform_ok and abs(loss - math.log(NUM_GRADES)) <= 1e-9

    ok = sums_ok and ln_ok and uniform_ok
    _report(capsys, "A5", ok, "softmax rows sum to 1; layer-norm rows standardized; uniform-score loss equals ln 5")


def test_a6_synthetic_benchmark_gain_and_determinism(capsys):
    start = time.perf_counter()
    first = run_benchmark(generate(SynthConfig()), TrainConfig())
    second = run_benchmark(generate(SynthConfig()), TrainConfig())
    elapsed = time.perf_counter() - start

    ok = 0.40 < first.baseline < 0.70
    ok = ok and first.trained >= first.baseline + 0.10
    ok = ok and second.baseline == first.baseline
    ok = ok and second.trained == first.trained
    ok = ok and second.report.best_val_loss == first.report.best_val_loss
    ok = ok and elapsed < 60.0
    _report(
        capsys,
        "A6",
        ok,
        f"baseline {first.baseline:.3f} in (0.40, 0.70), trained {first.trained:.3f} "
        f"(gain {first.trained - first.baseline:+.3f} >= 0.10), reruns identical ({elapsed:.1f}s)",
    )


def test_a7_adjacent_grades_confuse_more_than_distant_ones(capsys):
    matrix = confusion_matrix(generate(SynthConfig()).library)
    ok = matrix[1, 2] > matrix[1, 4] and matrix[2, 3] > matrix[2, 0]
    _report(
        capsys,
        "A7",
        ok,
        f"confusion(1,2)={matrix[1, 2]:.3f} > confusion(1,4)={matrix[1, 4]:.3f} and "
        f"confusion(2,3)={matrix[2, 3]:.3f} > confusion(2,0)={matrix[2, 0]:.3f}",
    )


def test_a8_classification_is_scale_invariant(capsys):
    rng = _rng(48)
    protos = PrototypeSet(stage="dpe", matrices=rng.normal(size=(NUM_GRADES, 3, 7)))
    mismatches = 0
    for k in range(100):
        tokens = rng.normal(size=(3, 7))
        factor = float(rng.uniform(0.05, 20.0))
        plain = classify(make_record(f"q{k}", None, tokens), protos)
        scaled = classify(make_record(f"q{k}", None, tokens * factor), protos)
        mismatches += plain.grade != scaled.grade
    ok = mismatches == 0
    _report(capsys, "A8", ok, f"100 random records keep their prediction under positive scaling ({mismatches} mismatches)")


def test_a9_metrics_match_naive_recount(capsys):
    ok = True
    for seed in (490, 491, 492):
        rng = _rng(seed)
        protos = PrototypeSet(stage="dpe", matrices=rng.normal(size=(NUM_GRADES, 2, 6)))
        records = [
            make_record(f"r{k}", int(rng.integers(NUM_GRADES)), rng.normal(size=(2, 6)))
            for k in range(50)
        ]
        report = evaluate(make_set(records, n_s=2, d_v=6), protos)

        preds = [classify(r, protos).grade for r in records]
        truths = [r.grade for r in records]
        correct = sum(1 for p, t in zip(preds, truths) if p == t)
        f1s = []
        for c in range(NUM_GRADES):
            tp = sum(1 for p, t in zip(preds, truths) if p == c and t == c)
            n_pred = sum(1 for p in preds if p == c)
            n_true = sum(1 for t in truths if t == c)
            precision = tp / n_pred if n_pred else 0.0
            recall = tp / n_true if n_true else 0.0
            denom = precision + recall
            f1s.append(2.0 * precision * recall / denom if denom else 0.0)

        ok = ok and report.accuracy == correct / 50
        ok = ok and report.macro_f1 == np.mean(np.array(f1s))
    _report(capsys, "A9", ok, "accuracy and macro-F1 equal a naive recount on three 50-record sets")
