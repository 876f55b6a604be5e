"""Variance-minimizing anchor selection and initial prototype construction.

Each grade's anchors are the records whose token matrices deviate least from
the grade's mean embedding; averaging them gives the base prototype matrix
that the two modulation stages later refine.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .store import NUM_GRADES, EmbeddingRecord, EmbeddingSet

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 5

PROTO_STAGES = ("base", "psi", "dpe")


@dataclass
class PrototypeSet:
    """Per-grade token matrices at one evolution stage."""

    stage: str                    # "base", "psi", or "dpe"
    matrices: np.ndarray          # (NUM_GRADES, n_s, d_v) float64

    def __post_init__(self):
        if self.stage not in PROTO_STAGES:
            raise ValueError(f"unknown prototype stage {self.stage!r}")
        if not np.all(np.isfinite(self.matrices)):
            raise ValueError("prototype matrices contain non-finite values")


@dataclass
class AnchorSelection:
    """Selected record ids and their variance scores, per grade, scores ascending."""

    alpha: int
    per_grade: dict[int, list[tuple[str, float]]]

    def ids(self, grade: int) -> list[str]:
        return [rid for rid, _ in self.per_grade[grade]]

    def all_ids(self) -> list[str]:
        return [rid for grade in sorted(self.per_grade) for rid in self.ids(grade)]


def per_sample_variance_score(record: EmbeddingRecord, class_mean: np.ndarray) -> float:
    """Mean squared deviation of the record's tokens from the class mean."""
    if record.tokens.shape != class_mean.shape:
        raise ValueError(
            f"record {record.id!r}: token shape {record.tokens.shape} "
            f"!= class mean shape {class_mean.shape}"
        )
    diff = record.tokens - class_mean
    return float(np.mean(diff * diff))


def class_means(eset: EmbeddingSet) -> dict[int, np.ndarray]:
    """Mean token matrix per grade over all labeled records of that grade."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for rec in eset.labeled():
        if rec.grade in sums:
            sums[rec.grade] += rec.tokens
            counts[rec.grade] += 1
        else:
            sums[rec.grade] = rec.tokens.copy()
            counts[rec.grade] = 1
    return {g: sums[g] / counts[g] for g in sums}


def select_anchors(eset: EmbeddingSet, alpha: int = DEFAULT_ALPHA) -> AnchorSelection:
    """Pick the alpha smallest-variance records per grade, ties by ascending id.

    The summed-variance objective is separable per sample, so the per-sample
    sort is exactly the subset minimizer.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    means = class_means(eset)
    missing = [g for g in range(NUM_GRADES) if g not in means]
    if missing:
        raise ValueError(f"grades with zero labeled records: {missing}")

    per_grade: dict[int, list[tuple[str, float]]] = {}
    for grade in range(NUM_GRADES):
        scored = sorted(
            (per_sample_variance_score(rec, means[grade]), rec.id)
            for rec in eset.labeled()
            if rec.grade == grade
        )
        if len(scored) < alpha:
            log.warning(
                "grade %d has %d records, fewer than alpha=%d; selecting all",
                grade, len(scored), alpha,
            )
        per_grade[grade] = [(rid, score) for score, rid in scored[:alpha]]
    return AnchorSelection(alpha=alpha, per_grade=per_grade)


def build_initial_prototypes(selection: AnchorSelection, eset: EmbeddingSet) -> PrototypeSet:
    """Element-wise mean of each grade's anchor token matrices, stage `base`."""
    index = {rec.id: rec for rec in eset.records}
    matrices = np.zeros((NUM_GRADES, eset.n_s, eset.d_v))
    for grade in range(NUM_GRADES):
        ids = selection.ids(grade)
        if not ids:
            raise ValueError(f"grade {grade}: empty anchor selection")
        stack = []
        for rid in ids:
            if rid not in index:
                raise KeyError(f"anchor record {rid!r} not in embedding set")
            stack.append(index[rid].tokens)
        matrices[grade] = np.mean(stack, axis=0)
    return PrototypeSet(stage="base", matrices=matrices)
