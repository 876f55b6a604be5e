"""Discriminative prompt gating and semantic-confusion diagnostics.

Families are scored by how sharply an anchor's shared-space image embedding
prefers its own grade's variant over the other grades' variants; the top
scorers per family form the diverse semantic feature matrix fed to the
first modulation stage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .store import NUM_GRADES, EmbeddingRecord, PromptFamily, PromptLibrary

DEFAULT_N_DIV = 11


@dataclass
class GatingResult:
    """Kept families ordered by descending score, with the per-grade feature rows."""

    selected: list[str]
    scores: dict[str, float]
    e_prime: np.ndarray           # (NUM_GRADES, n_kept, d_t); row order = selection order

    @property
    def n_kept(self) -> int:
        return len(self.selected)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def discriminative_score(family: PromptFamily, anchor: EmbeddingRecord) -> float:
    """Logistic margin of the anchor's own-grade variant over the other grades.

    The anchor must carry a shared-space gating embedding of the same
    dimension as the family variants. Output is strictly inside (0, 1).
    """
    if anchor.grade is None:
        raise ValueError(f"anchor {anchor.id!r} is unlabeled")
    if anchor.gating is None:
        raise ValueError(f"anchor {anchor.id!r} has no gating embedding")
    if anchor.gating.shape[0] != family.variants.shape[1]:
        raise ValueError(
            f"anchor {anchor.id!r}: gating dim {anchor.gating.shape[0]} "
            f"!= variant dim {family.variants.shape[1]}"
        )
    sims = np.array([cosine_similarity(anchor.gating, family.variants[c]) for c in range(NUM_GRADES)])
    own = sims[anchor.grade]
    others = np.delete(sims, anchor.grade)
    return float(sigmoid(own - others.mean()))


def gate_top_n(
    library: PromptLibrary, anchors: list[EmbeddingRecord], n_div: int
) -> GatingResult:
    """Keep the min(n_div, K) families with the highest mean anchor score.

    Ties break by ascending family id; the kept families' grade variants are
    stacked in selection order to form each grade's feature matrix.
    """
    if n_div < 1:
        raise ValueError(f"n_div must be >= 1, got {n_div}")
    if not library.families:
        raise ValueError("empty prompt library")
    if not anchors:
        raise ValueError("empty anchor list")

    scores = {
        fam.family_id: float(np.mean([discriminative_score(fam, a) for a in anchors]))
        for fam in library.families
    }
    order = sorted(library.families, key=lambda f: (-scores[f.family_id], f.family_id))
    kept = order[: min(n_div, len(order))]

    e_prime = np.stack(
        [np.stack([fam.variants[c] for fam in kept]) for c in range(NUM_GRADES)]
    )
    return GatingResult(
        selected=[f.family_id for f in kept],
        scores=scores,
        e_prime=e_prime,
    )


def confusion_degree(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    """Mean cosine over all cross pairs of two prompt-embedding sets."""
    if not a or not b:
        raise ValueError("confusion degree over an empty set")
    return float(np.mean([[cosine_similarity(x, y) for y in b] for x in a]))


def grade_variant_set(library: PromptLibrary, grade: int) -> list[np.ndarray]:
    """All cls and desc variants of one grade, in family order."""
    return [fam.variants[grade] for fam in library.families]


def confusion_matrix(library: PromptLibrary) -> np.ndarray:
    """Pairwise confusion degrees between all grades' variant sets. Symmetric."""
    sets = [grade_variant_set(library, g) for g in range(NUM_GRADES)]
    out = np.zeros((NUM_GRADES, NUM_GRADES))
    for c in range(NUM_GRADES):
        for c2 in range(c, NUM_GRADES):
            value = confusion_degree(sets[c], sets[c2])
            out[c, c2] = value
            out[c2, c] = value
    return out


def build_semantic_features(library: PromptLibrary, gating: GatingResult):
    """Bundle the gated diverse rows with the stacked pairwise difference rows.

    Difference rows for grade c are ordered by ascending contrasting grade,
    matching the adaptive-weight column convention downstream.
    """
    from .modulation import SemanticFeatures

    differentiated = np.stack([library.diff_matrix(c) for c in range(NUM_GRADES)])
    return SemanticFeatures(diverse=gating.e_prime, differentiated=differentiated)
