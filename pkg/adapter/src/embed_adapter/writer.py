"""Writers for the manifest+blob interchange format.

One JSON manifest plus a sibling `.bin` blob of little-endian float32
values, row-major per record, offsets ascending. This is the on-disk
contract consumed by the prototype toolkit's loaders; the contract tests
validate every export through those loaders.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
NUM_GRADES = 5


class _Blob:
    def __init__(self):
        self.chunks: list[bytes] = []
        self.offset = 0

    def put(self, vec: np.ndarray) -> tuple[int, int]:
        data = np.ascontiguousarray(vec, dtype="<f4").tobytes()
        start = self.offset
        self.chunks.append(data)
        self.offset += len(data)
        return start, len(data)

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


def _write(manifest_path: Path, doc: dict, blob: _Blob) -> None:
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n")
    manifest_path.with_suffix(".bin").write_bytes(blob.bytes())


def write_embeddings(
    manifest_path: str | Path,
    n_s: int,
    d_v: int,
    d_t: int,
    records: list[tuple[str, int, np.ndarray, np.ndarray | None]],
    generator: dict | None = None,
) -> None:
    """Write (id, grade, tokens, gating) records; order is preserved."""
    blob = _Blob()
    entries = []
    seen: set[str] = set()
    for rid, grade, tokens, gating in records:
        if rid in seen:
            raise ValueError(f"duplicate record id {rid!r}")
        seen.add(rid)
        if tokens.shape != (n_s, d_v):
            raise ValueError(f"record {rid!r}: token shape {tokens.shape} != ({n_s}, {d_v})")
        offset, length = blob.put(tokens)
        entry = {"id": rid, "grade": grade, "offset": offset, "length": length}
        if gating is not None:
            if gating.shape != (d_t,):
                raise ValueError(f"record {rid!r}: gating shape {gating.shape} != ({d_t},)")
            goff, glen = blob.put(gating)
            entry["gating_offset"] = goff
            entry["gating_length"] = glen
        entries.append(entry)

    doc = {
        "format_version": FORMAT_VERSION,
        "n_s": n_s,
        "d_v": d_v,
        "d_t": d_t,
        "records": entries,
    }
    if generator is not None:
        doc["generator"] = generator
    _write(Path(manifest_path), doc, blob)


def write_prompts(
    manifest_path: str | Path,
    d_t: int,
    families: list[tuple[str, str, np.ndarray]],
    diff: dict[tuple[int, int], np.ndarray],
) -> None:
    """Write (family_id, kind, variants) families and ordered pair vectors."""
    blob = _Blob()
    fam_entries = []
    for family_id, kind, variants in families:
        if variants.shape != (NUM_GRADES, d_t):
            raise ValueError(
                f"family {family_id!r}: variants shape {variants.shape} != ({NUM_GRADES}, {d_t})"
            )
        fam_entries.append(
            {
                "family_id": family_id,
                "kind": kind,
                "variants": [blob.put(variants[g])[0] for g in range(NUM_GRADES)],
            }
        )

    expected = {(a, b) for a in range(NUM_GRADES) for b in range(NUM_GRADES) if a != b}
    if set(diff) != expected:
        missing = sorted(expected - set(diff))
        raise ValueError(f"missing differentiated pairs: {missing}")
    pair_entries = [
        {"from_grade": a, "to_grade": b, "offset": blob.put(vec)[0]}
        for (a, b), vec in sorted(diff.items())
    ]

    doc = {
        "format_version": FORMAT_VERSION,
        "d_t": d_t,
        "families": fam_entries,
        "diff_pairs": pair_entries,
    }
    _write(Path(manifest_path), doc, blob)
