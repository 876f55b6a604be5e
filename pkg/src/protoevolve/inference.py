"""Classification against enhanced prototypes, metrics, and analysis matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import PrototypeSet
from .store import NUM_GRADES, EmbeddingRecord, EmbeddingSet
from .training import grade_similarities

@dataclass
class Prediction:
    record_id: str
    grade: int
    scores: np.ndarray  # (NUM_GRADES,) mean per-token cosine per grade

    def to_dict(self) -> dict:
        return {
            "id": self.record_id,
            "grade": self.grade,
            "scores": [float(s) for s in self.scores],
        }


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    precision: np.ndarray  # (NUM_GRADES,)
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray  # (NUM_GRADES, NUM_GRADES) counts, rows true, cols predicted

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": [float(x) for x in self.precision],
            "recall": [float(x) for x in self.recall],
            "f1": [float(x) for x in self.f1],
            "confusion": self.confusion.tolist(),
        }


def classify(query: EmbeddingRecord, protos: PrototypeSet) -> Prediction:
    """Argmax of mean per-token cosine; ties go to the lowest grade id."""
    scores = grade_similarities(query.tokens, protos.matrices)
    return Prediction(record_id=query.id, grade=int(np.argmax(scores)), scores=scores)


def classify_set(eset: EmbeddingSet, protos: PrototypeSet) -> list[Prediction]:
    return [classify(rec, protos) for rec in eset.records]


def evaluate(eset: EmbeddingSet, protos: PrototypeSet) -> MetricReport:
    """Accuracy, per-class precision/recall/F1 and macro-F1 over labeled records.

    A grade absent from both truth and prediction contributes F1 = 0 to the
    macro average rather than being skipped.
    """
    records = eset.labeled()
    if len(records) != len(eset.records) or not records:
        raise ValueError("evaluate requires a non-empty, fully labeled set")
    confusion = np.zeros((NUM_GRADES, NUM_GRADES), dtype=np.int64)
    for rec in records:
        pred = classify(rec, protos)
        confusion[rec.grade, pred.grade] += 1

    correct = np.trace(confusion)
    total = confusion.sum()
    precision = np.zeros(NUM_GRADES)
    recall = np.zeros(NUM_GRADES)
    f1 = np.zeros(NUM_GRADES)
    for c in range(NUM_GRADES):
        tp = confusion[c, c]
        predicted = confusion[:, c].sum()
        actual = confusion[c, :].sum()
        precision[c] = tp / predicted if predicted else 0.0
        recall[c] = tp / actual if actual else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2.0 * precision[c] * recall[c] / denom if denom else 0.0

    return MetricReport(
        accuracy=float(correct / total),
        macro_f1=float(f1.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=confusion,
    )


def token_correlation(protos: PrototypeSet) -> np.ndarray:
    """Per-grade token-row cosine matrices, shape (NUM_GRADES, n_s, n_s).

    Each matrix is symmetric with a unit diagonal.
    """
    m = protos.matrices
    norms = np.linalg.norm(m, axis=2)
    if np.any(norms == 0):
        grade, row = np.argwhere(norms == 0)[0]
        raise ValueError(f"zero-norm token row {row} in grade {grade} prototype")
    unit = m / norms[:, :, None]
    return unit @ unit.transpose(0, 2, 1)


@dataclass
class DescriptorAlignment:
    record_id: str
    grade: int                 # predicted grade of the query
    similarities: np.ndarray   # cosine per descriptor, values in [-1, 1]


def descriptor_alignment(
    query: EmbeddingRecord,
    descriptors: list[np.ndarray],
    protos: PrototypeSet,
    wp: np.ndarray,
) -> DescriptorAlignment:
    """Cosine of the predicted grade's projected global token to each descriptor."""
    if not descriptors:
        raise ValueError("descriptor list is empty")
    pred = classify(query, protos)
    g = protos.matrices[pred.grade, 0, :] @ wp
    gn = np.linalg.norm(g)
    if gn == 0:
        raise ValueError("projected global token has zero norm")
    sims = np.empty(len(descriptors))
    for i, desc in enumerate(descriptors):
        dn = np.linalg.norm(desc)
        if dn == 0:
            raise ValueError(f"descriptor {i} has zero norm")
        sims[i] = float(g @ desc / (gn * dn))
    return DescriptorAlignment(record_id=query.id, grade=pred.grade, similarities=sims)
