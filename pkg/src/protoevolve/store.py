"""On-disk format for embeddings, prompt libraries, and parameter checkpoints.

One JSON manifest plus one flat binary blob of little-endian float32 values,
row-major per record. The blob is the sibling of the manifest with a `.bin`
extension. All tensors are widened to float64 after load; storage stays
float32, so save -> load -> save is byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
NUM_GRADES = 5
FLOAT_BYTES = 4


class StoreError(ValueError):
    """A manifest or blob failed validation."""


def blob_path(manifest_path: str | Path) -> Path:
    return Path(manifest_path).with_suffix(".bin")


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Parse a flat `key = value` config file. Blank lines and # comments skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise StoreError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.split("#", 1)[0].strip()
    return out


# ---------------------------------------------------------------------------
# Embedding sets
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingRecord:
    """One token-embedding record. Token row 0 is the global summary slot."""

    id: str
    grade: int | None
    tokens: np.ndarray            # (n_s, d_v) float64
    gating: np.ndarray | None = None   # (d_t,) float64, shared-space image embedding


@dataclass
class Manifest:
    format_version: int
    n_s: int
    d_v: int
    d_t: int
    records: list[dict]
    generator: dict | None = None


@dataclass
class EmbeddingSet:
    n_s: int
    d_v: int
    d_t: int
    records: list[EmbeddingRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self, record_id: str) -> EmbeddingRecord:
        for rec in self.records:
            if rec.id == record_id:
                return rec
        raise KeyError(record_id)

    def labeled(self) -> list[EmbeddingRecord]:
        return [r for r in self.records if r.grade is not None]

    def grades_present(self) -> set[int]:
        return {r.grade for r in self.records if r.grade is not None}

    def subset(self, ids: list[str]) -> "EmbeddingSet":
        index = {r.id: r for r in self.records}
        missing = [i for i in ids if i not in index]
        if missing:
            raise KeyError(f"record ids not in set: {missing[:5]}")
        return EmbeddingSet(self.n_s, self.d_v, self.d_t, [index[i] for i in ids])


def _check_grade(grade, record_id: str):
    if grade is None:
        return None
    if not isinstance(grade, int) or isinstance(grade, bool) or not 0 <= grade < NUM_GRADES:
        raise StoreError(f"record {record_id!r}: grade {grade!r} outside 0..{NUM_GRADES - 1}")
    return grade


def _read_segment(blob: bytes, offset: int, length: int, what: str) -> np.ndarray:
    if offset < 0 or length < 0 or offset + length > len(blob):
        raise StoreError(
            f"{what}: segment at offset {offset} (+{length} bytes) exceeds blob of {len(blob)} bytes"
        )
    return np.frombuffer(blob, dtype="<f4", count=length // FLOAT_BYTES, offset=offset)


def _check_overlaps(segments: list[tuple[int, int, str]]):
    ordered = sorted(segments)
    for (o1, l1, w1), (o2, _l2, w2) in zip(ordered, ordered[1:]):
        if o1 + l1 > o2:
            raise StoreError(f"overlapping blob segments: {w1} and {w2}")


def load_manifest(manifest_path: str | Path) -> Manifest:
    path = Path(manifest_path)
    if not path.exists():
        raise StoreError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StoreError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("format_version", "n_s", "d_v", "d_t", "records"):
        if key not in doc:
            raise StoreError(f"{path}: manifest missing key {key!r}")
    for dim in ("n_s", "d_v", "d_t"):
        if not isinstance(doc[dim], int) or doc[dim] <= 0:
            raise StoreError(f"{path}: {dim} must be a positive integer, got {doc[dim]!r}")
    return Manifest(
        format_version=doc["format_version"],
        n_s=doc["n_s"],
        d_v=doc["d_v"],
        d_t=doc["d_t"],
        records=doc["records"],
        generator=doc.get("generator"),
    )


def load_embedding_set(manifest_path: str | Path) -> EmbeddingSet:
    """Load and validate an embedding set; iteration order is manifest order."""
    manifest = load_manifest(manifest_path)
    bpath = blob_path(manifest_path)
    if not bpath.exists():
        raise StoreError(f"blob not found: {bpath}")
    blob = bpath.read_bytes()

    n_s, d_v, d_t = manifest.n_s, manifest.d_v, manifest.d_t
    token_bytes = n_s * d_v * FLOAT_BYTES
    gating_bytes = d_t * FLOAT_BYTES

    seen: set[str] = set()
    segments: list[tuple[int, int, str]] = []
    records: list[EmbeddingRecord] = []
    prev_offset = -1
    for entry in manifest.records:
        rid = str(entry["id"])
        if rid in seen:
            raise StoreError(f"duplicate record id {rid!r}")
        seen.add(rid)
        grade = _check_grade(entry.get("grade"), rid)
        offset, length = int(entry["offset"]), int(entry["length"])
        if length != token_bytes:
            raise StoreError(
                f"record {rid!r} at offset {offset}: length {length} != n_s*d_v*4 = {token_bytes}"
            )
        if offset <= prev_offset:
            raise StoreError(f"record {rid!r}: offsets not sorted ascending")
        prev_offset = offset
        flat = _read_segment(blob, offset, length, f"record {rid!r}")
        tokens = flat.astype(np.float64).reshape(n_s, d_v)
        if not np.all(np.isfinite(tokens)):
            raise StoreError(f"record {rid!r} at offset {offset}: non-finite token value")
        segments.append((offset, length, f"record {rid!r}"))

        gating = None
        if "gating_offset" in entry:
            goff, glen = int(entry["gating_offset"]), int(entry.get("gating_length", gating_bytes))
            if glen != gating_bytes:
                raise StoreError(
                    f"record {rid!r}: gating length {glen} != d_t*4 = {gating_bytes}"
                )
            gating = _read_segment(blob, goff, glen, f"record {rid!r} gating").astype(np.float64)
            if not np.all(np.isfinite(gating)):
                raise StoreError(f"record {rid!r}: non-finite gating value")
            segments.append((goff, glen, f"record {rid!r} gating"))
        records.append(EmbeddingRecord(rid, grade, tokens, gating))

    _check_overlaps(segments)
    return EmbeddingSet(n_s, d_v, d_t, records)


def save_embedding_set(
    eset: EmbeddingSet, manifest_path: str | Path, generator: dict | None = None
) -> None:
    """Write manifest + blob. Round-trip load yields bit-identical tensors."""
    seen: set[str] = set()
    for rec in eset.records:
        if rec.id in seen:
            raise StoreError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.tokens.shape != (eset.n_s, eset.d_v):
            raise StoreError(
                f"record {rec.id!r}: token shape {rec.tokens.shape} != ({eset.n_s}, {eset.d_v})"
            )
        if not np.all(np.isfinite(rec.tokens)):
            raise StoreError(f"record {rec.id!r}: non-finite token value")
        if rec.gating is not None and rec.gating.shape != (eset.d_t,):
            raise StoreError(f"record {rec.id!r}: gating shape {rec.gating.shape} != ({eset.d_t},)")

    chunks: list[bytes] = []
    entries: list[dict] = []
    offset = 0
    for rec in eset.records:
        data = np.ascontiguousarray(rec.tokens, dtype="<f4").tobytes()
        entry = {"id": rec.id, "grade": rec.grade, "offset": offset, "length": len(data)}
        chunks.append(data)
        offset += len(data)
        if rec.gating is not None:
            gdata = np.ascontiguousarray(rec.gating, dtype="<f4").tobytes()
            entry["gating_offset"] = offset
            entry["gating_length"] = len(gdata)
            chunks.append(gdata)
            offset += len(gdata)
        entries.append(entry)

    doc = {
        "format_version": FORMAT_VERSION,
        "n_s": eset.n_s,
        "d_v": eset.d_v,
        "d_t": eset.d_t,
        "records": entries,
    }
    if generator is not None:
        doc["generator"] = generator
    path = Path(manifest_path)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    blob_path(path).write_bytes(b"".join(chunks))


# ---------------------------------------------------------------------------
# Prompt libraries
# ---------------------------------------------------------------------------

FAMILY_KINDS = ("cls", "desc")


@dataclass
class PromptFamily:
    """One description template instantiated once per grade."""

    family_id: str
    kind: str
    variants: np.ndarray          # (NUM_GRADES, d_t) float64


@dataclass
class PromptLibrary:
    d_t: int
    families: list[PromptFamily]
    diff: dict[tuple[int, int], np.ndarray]   # (from_grade, to_grade) -> (d_t,) float64

    def family_ids(self) -> list[str]:
        return [f.family_id for f in self.families]

    def diff_matrix(self, grade: int) -> np.ndarray:
        """Differentiated rows for `grade`, ordered by ascending contrasting grade."""
        rows = [self.diff[(grade, other)] for other in range(NUM_GRADES) if other != grade]
        return np.stack(rows)


@dataclass
class PromptSummary:
    families: int
    variants: int
    diff_pairs: int


def load_prompt_library(manifest_path: str | Path) -> PromptLibrary:
    path = Path(manifest_path)
    if not path.exists():
        raise StoreError(f"prompt manifest not found: {path}")
    doc = json.loads(path.read_text())
    for key in ("d_t", "families", "diff_pairs"):
        if key not in doc:
            raise StoreError(f"{path}: prompt manifest missing key {key!r}")
    d_t = doc["d_t"]
    if not isinstance(d_t, int) or d_t <= 0:
        raise StoreError(f"{path}: d_t must be a positive integer")
    bpath = blob_path(path)
    if not bpath.exists():
        raise StoreError(f"prompt blob not found: {bpath}")
    blob = bpath.read_bytes()
    vec_bytes = d_t * FLOAT_BYTES

    seen: set[str] = set()
    segments: list[tuple[int, int, str]] = []
    families: list[PromptFamily] = []
    for fam in doc["families"]:
        fid = str(fam["family_id"])
        if fid in seen:
            raise StoreError(f"duplicate family id {fid!r}")
        seen.add(fid)
        kind = fam.get("kind")
        if kind not in FAMILY_KINDS:
            raise StoreError(f"family {fid!r}: kind {kind!r} not in {FAMILY_KINDS}")
        offsets = fam.get("variants")
        if not isinstance(offsets, list) or len(offsets) != NUM_GRADES:
            got = len(offsets) if isinstance(offsets, list) else offsets
            raise StoreError(f"family {fid!r}: expected {NUM_GRADES} grade variants, got {got}")
        rows = []
        for grade, off in enumerate(offsets):
            vec = _read_segment(blob, int(off), vec_bytes, f"family {fid!r} grade {grade}")
            if not np.all(np.isfinite(vec)):
                raise StoreError(f"family {fid!r} grade {grade}: non-finite value")
            if not np.any(vec):
                raise StoreError(f"family {fid!r} grade {grade}: all-zero variant")
            rows.append(vec.astype(np.float64))
            segments.append((int(off), vec_bytes, f"family {fid!r} grade {grade}"))
        families.append(PromptFamily(fid, kind, np.stack(rows)))

    diff: dict[tuple[int, int], np.ndarray] = {}
    for pair in doc["diff_pairs"]:
        src, dst = int(pair["from_grade"]), int(pair["to_grade"])
        if not (0 <= src < NUM_GRADES and 0 <= dst < NUM_GRADES) or src == dst:
            raise StoreError(f"diff pair ({src}, {dst}): invalid grade pair")
        if (src, dst) in diff:
            raise StoreError(f"diff pair ({src}, {dst}): duplicate")
        vec = _read_segment(blob, int(pair["offset"]), vec_bytes, f"diff pair ({src}, {dst})")
        if not np.all(np.isfinite(vec)):
            raise StoreError(f"diff pair ({src}, {dst}): non-finite value")
        diff[(src, dst)] = vec.astype(np.float64)

    expected = {(a, b) for a in range(NUM_GRADES) for b in range(NUM_GRADES) if a != b}
    missing = expected - set(diff)
    if missing:
        raise StoreError(f"missing differentiated embeddings for pairs: {sorted(missing)[:5]}")
    return PromptLibrary(d_t, families, diff)


def validate_prompt_file(manifest_path: str | Path) -> PromptSummary:
    """Load with full validation and report family/variant/pair counts."""
    lib = load_prompt_library(manifest_path)
    return PromptSummary(
        families=len(lib.families),
        variants=sum(f.variants.shape[0] for f in lib.families),
        diff_pairs=len(lib.diff),
    )


def save_prompt_library(lib: PromptLibrary, manifest_path: str | Path) -> None:
    chunks: list[bytes] = []
    offset = 0

    def put(vec: np.ndarray) -> int:
        nonlocal offset
        data = np.ascontiguousarray(vec, dtype="<f4").tobytes()
        chunks.append(data)
        start = offset
        offset += len(data)
        return start

    fam_entries = []
    seen_ids: set[str] = set()
    for fam in lib.families:
        if fam.family_id in seen_ids:
            raise StoreError(f"duplicate family id {fam.family_id!r}")
        seen_ids.add(fam.family_id)
        if fam.kind not in ("cls", "desc"):
            raise StoreError(f"family {fam.family_id!r}: kind must be cls or desc, got {fam.kind!r}")
        if fam.variants.shape != (NUM_GRADES, lib.d_t):
            raise StoreError(
                f"family {fam.family_id!r}: variants shape {fam.variants.shape} "
                f"!= ({NUM_GRADES}, {lib.d_t})"
            )
        if not np.all(np.isfinite(fam.variants)):
            raise StoreError(f"family {fam.family_id!r}: non-finite variant value")
        if np.any(np.all(fam.variants == 0.0, axis=1)):
            raise StoreError(f"family {fam.family_id!r}: zero variant vector")
        fam_entries.append(
            {
                "family_id": fam.family_id,
                "kind": fam.kind,
                "variants": [put(fam.variants[g]) for g in range(NUM_GRADES)],
            }
        )

    expected_pairs = {
        (src, dst) for src in range(NUM_GRADES) for dst in range(NUM_GRADES) if src != dst
    }
    if set(lib.diff) != expected_pairs:
        missing = sorted(expected_pairs - set(lib.diff))
        extra = sorted(set(lib.diff) - expected_pairs)
        raise StoreError(f"diff pairs wrong: missing {missing}, extra {extra}")
    for pair, vec in lib.diff.items():
        if vec.shape != (lib.d_t,) or not np.all(np.isfinite(vec)):
            raise StoreError(f"diff pair {pair}: expected finite ({lib.d_t},) vector")
    pair_entries = [
        {"from_grade": src, "to_grade": dst, "offset": put(vec)}
        for (src, dst), vec in sorted(lib.diff.items())
    ]
    doc = {
        "format_version": FORMAT_VERSION,
        "d_t": lib.d_t,
        "families": fam_entries,
        "diff_pairs": pair_entries,
    }
    path = Path(manifest_path)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    blob_path(path).write_bytes(b"".join(chunks))


# ---------------------------------------------------------------------------
# Parameter checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    manifest_path: str | Path,
    tensors: dict[str, np.ndarray],
    dims: dict[str, int],
) -> None:
    """Write named 2-D tensors in the manifest+blob convention."""
    chunks: list[bytes] = []
    entries = []
    offset = 0
    for name, arr in tensors.items():
        if arr.ndim != 2 or not np.all(np.isfinite(arr)):
            raise StoreError(f"tensor {name!r}: expected finite 2-D array")
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append(
            {
                "name": name,
                "rows": arr.shape[0],
                "cols": arr.shape[1],
                "offset": offset,
                "length": len(data),
            }
        )
        chunks.append(data)
        offset += len(data)
    doc = {"format_version": FORMAT_VERSION, "kind": "checkpoint", "dims": dims, "tensors": entries}
    path = Path(manifest_path)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    blob_path(path).write_bytes(b"".join(chunks))


def load_checkpoint(manifest_path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    path = Path(manifest_path)
    if not path.exists():
        raise StoreError(f"checkpoint not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("kind") != "checkpoint":
        raise StoreError(f"{path}: not a checkpoint manifest")
    blob = blob_path(path).read_bytes()
    tensors: dict[str, np.ndarray] = {}
    for entry in doc["tensors"]:
        name = entry["name"]
        rows, cols = int(entry["rows"]), int(entry["cols"])
        length = int(entry["length"])
        if length != rows * cols * FLOAT_BYTES:
            raise StoreError(f"tensor {name!r}: length {length} != rows*cols*4")
        flat = _read_segment(blob, int(entry["offset"]), length, f"tensor {name!r}")
        arr = flat.astype(np.float64).reshape(rows, cols)
        if not np.all(np.isfinite(arr)):
            raise StoreError(f"tensor {name!r}: non-finite value")
        tensors[name] = arr
    return tensors, dict(doc["dims"])
