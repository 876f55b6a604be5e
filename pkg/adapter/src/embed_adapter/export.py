"""Batch extraction of image and prompt embeddings into interchange files."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import (
    AdapterError,
    HashedTextEncoder,
    SharedSpaceProjector,
    VisualEncoder,
)
from .writer import NUM_GRADES, write_embeddings, write_prompts

logger = logging.getLogger(__name__)


@dataclass
class ExtractionJob:
    images: list[tuple[str, int]]        # (path, grade), output order
    prompts_path: str
    out_dir: str
    checkpoint: str | None = None
    seed: int = 0


@dataclass
class ExportReport:
    paths: dict[str, Path]
    exported: int
    failures: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "paths": {k: str(p) for k, p in self.paths.items()},
            "exported": self.exported,
            "failures": [{"item": item, "error": msg} for item, msg in self.failures],
        }


def read_image_list(csv_path: str | Path) -> list[tuple[str, int]]:
    """Parse a `path,grade` CSV; grades must be integers in 0..4."""
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "grade"} <= set(reader.fieldnames):
            raise AdapterError(f"{csv_path}: expected CSV header with path,grade columns")
        images = []
        seen: set[str] = set()
        for row in reader:
            path = row["path"].strip()
            if not path:
                raise AdapterError(f"{csv_path}: empty path in row {reader.line_num}")
            if path in seen:
                raise AdapterError(f"{csv_path}: duplicate path {path!r}")
            seen.add(path)
            try:
                grade = int(row["grade"])
            except ValueError as exc:
                raise AdapterError(
                    f"{csv_path}: grade {row['grade']!r} for {path!r} is not an integer"
                ) from exc
            if not 0 <= grade < NUM_GRADES:
                raise AdapterError(f"{csv_path}: grade {grade} for {path!r} outside 0..4")
            images.append((path, grade))
    if not images:
        raise AdapterError(f"{csv_path}: no image rows")
    return images


def read_prompt_texts(path: str | Path):
    """Parse the prompt text document.

    Returns (families, pairs): families as (family_id, kind, texts-by-grade)
    and pairs as an (a, b) -> sentence-list dict covering all ordered pairs.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AdapterError(f"cannot read prompt texts {path}: {exc}") from exc

    families = []
    for fam in doc.get("families", []):
        fid = str(fam.get("family_id", ""))
        kind = fam.get("kind")
        if not fid:
            raise AdapterError(f"{path}: family without a family_id")
        if kind not in ("cls", "desc"):
            raise AdapterError(f"{path}: family {fid!r} kind {kind!r} must be cls or desc")
        variants = fam.get("variants", {})
        texts = []
        for grade in range(NUM_GRADES):
            text = variants.get(str(grade))
            if not text or not str(text).strip():
                raise AdapterError(f"{path}: family {fid!r} is missing grade {grade} text")
            texts.append(str(text))
        families.append((fid, kind, texts))
    if not families:
        raise AdapterError(f"{path}: no prompt families")

    pairs: dict[tuple[int, int], list[str]] = {}
    for entry in doc.get("diff_pairs", []):
        key = (int(entry["from_grade"]), int(entry["to_grade"]))
        sentences = entry.get("sentences")
        if isinstance(sentences, str):
            sentences = [sentences]
        if not sentences:
            raise AdapterError(f"{path}: pair {key} has no sentences")
        pairs[key] = [str(s) for s in sentences]
    expected = {(a, b) for a in range(NUM_GRADES) for b in range(NUM_GRADES) if a != b}
    missing = sorted(expected - set(pairs))
    if missing:
        raise AdapterError(f"{path}: missing differentiated pairs {missing[:5]}")
    return families, pairs


def run_export(job: ExtractionJob, visual=None, text=None) -> ExportReport:
    """Encode everything and write the two manifest+blob pairs.

    Unreadable images are reported in the result and skipped; the job
    continues. Encoder construction failures abort the job.
    """
    families_text, pairs_text = read_prompt_texts(job.prompts_path)
    visual = visual or VisualEncoder(checkpoint=job.checkpoint, seed=job.seed)
    text = text or HashedTextEncoder()
    projector = SharedSpaceProjector(d_v=visual.d_v, d_t=text.d_t, seed=job.seed)

    families = [
        (fid, kind, np.stack([text.encode(t) for t in texts]))
        for fid, kind, texts in families_text
    ]
    diff = {key: text.encode_pooled(sentences) for key, sentences in pairs_text.items()}

    records = []
    failures: list[tuple[str, str]] = []
    for path, grade in job.images:
        try:
            tokens = visual.encode_path(path)
        except AdapterError as exc:
            logger.error("skipping %s: %s", path, exc)
            failures.append((path, str(exc)))
            continue
        gating = projector.project(tokens[0])
        records.append((path, grade, tokens, gating))
    if not records:
        raise AdapterError("no image could be encoded")

    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"embeddings": out / "embeddings.json", "prompts": out / "prompts.json"}
    generator = {
        "name": "vit-b-16",
        "weights": visual.weights_name,
        "text_encoder": f"hashed-bow-{text.d_t}",
        "seed": job.seed,
    }
    write_embeddings(
        paths["embeddings"], visual.n_s, visual.d_v, text.d_t, records, generator
    )
    write_prompts(paths["prompts"], text.d_t, families, diff)
    logger.info(
        "exported %d of %d images and %d families -> %s",
        len(records), len(job.images), len(families), out,
    )
    return ExportReport(paths=paths, exported=len(records), failures=failures)
