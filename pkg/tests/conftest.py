"""Shared builders for small deterministic fixtures."""
from __future__ import annotations

import numpy as np
import pytest

from protoevolve.store import (
    NUM_GRADES,
    EmbeddingRecord,
    EmbeddingSet,
    PromptFamily,
    PromptLibrary,
)


def make_record(rid, grade, tokens, gating=None):
    return EmbeddingRecord(
        id=rid,
        grade=grade,
        tokens=np.asarray(tokens, dtype=np.float64),
        gating=None if gating is None else np.asarray(gating, dtype=np.float64),
    )


def make_set(records, n_s, d_v, d_t=4):
    return EmbeddingSet(n_s=n_s, d_v=d_v, d_t=d_t, records=records)


def random_set(rng, n_per_grade=4, n_s=3, d_v=5, d_t=4, with_gating=True):
    records = []
    for grade in range(NUM_GRADES):
        for k in range(n_per_grade):
            records.append(
                make_record(
                    f"g{grade}-{k}",
                    grade,
                    rng.normal(size=(n_s, d_v)),
                    rng.normal(size=d_t) if with_gating else None,
                )
            )
    return make_set(records, n_s, d_v, d_t)


def random_library(rng, n_families=6, d_t=4):
    families = []
    for f in range(n_families):
        families.append(
            PromptFamily(
                family_id=f"fam-{f:02d}",
                kind="desc" if f % 2 == 0 else "cls",
                variants=rng.normal(size=(NUM_GRADES, d_t)),
            )
        )
    diff = {}
    for c in range(NUM_GRADES):
        for c2 in range(NUM_GRADES):
            if c2 != c:
                diff[(c, c2)] = rng.normal(size=d_t)
    return PromptLibrary(d_t=d_t, families=families, diff=diff)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))
