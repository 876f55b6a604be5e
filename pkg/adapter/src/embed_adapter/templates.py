"""Prompt templates and the bundled sample prompt text file.

Text generation itself happens offline; this module only carries the
template strings and can expand them into a complete prompt-text document
covering every grade and every ordered grade pair.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

NUM_GRADES = 5

GRADE_NAMES = (
    "no diabetic retinopathy",
    "mild nonproliferative diabetic retinopathy",
    "moderate nonproliferative diabetic retinopathy",
    "severe nonproliferative diabetic retinopathy",
    "proliferative diabetic retinopathy",
)

# typical findings per grade, used to give the sample description texts
# grade-specific content beyond the class name
GRADE_FINDINGS = (
    "no visible lesions",
    "microaneurysms only",
    "microaneurysms with dot and blot hemorrhages or hard exudates",
    "extensive hemorrhages, venous beading, or intraretinal microvascular abnormalities",
    "neovascularization or preretinal and vitreous hemorrhage",
)

CLASS_TEMPLATE = "This image is {class}"
DESCRIPTION_TEMPLATE = (
    "Describe the typical distribution of lesions in a {class} diabetic "
    "retinopathy image showing"
)
DIFFERENCE_TEMPLATE = (
    "Describe the significant pathological feature differences between "
    "diabetic retinopathy {class1} and {class2}"
)


def class_prompt(grade: int) -> str:
    return CLASS_TEMPLATE.format_map({"class": GRADE_NAMES[grade]})


def description_prompt(grade: int) -> str:
    return DESCRIPTION_TEMPLATE.format_map({"class": GRADE_NAMES[grade]})


def difference_prompt(grade_a: int, grade_b: int) -> str:
    return DIFFERENCE_TEMPLATE.format_map(
        {"class1": GRADE_NAMES[grade_a], "class2": GRADE_NAMES[grade_b]}
    )


def default_prompt_texts() -> dict:
    """A complete prompt-text document built from the templates.

    One class-name family, one description family, and all ordered grade
    pairs. Pair entries carry a list of sentences; the exporter mean-pools
    them into a single vector.
    """
    families = [
        {
            "family_id": "class-name",
            "kind": "cls",
            "variants": {str(g): class_prompt(g) for g in range(NUM_GRADES)},
        },
        {
            "family_id": "lesion-distribution",
            "kind": "desc",
            "variants": {
                str(g): f"{description_prompt(g)} {GRADE_FINDINGS[g]}"
                for g in range(NUM_GRADES)
            },
        },
    ]
    pairs = []
    for a in range(NUM_GRADES):
        for b in range(NUM_GRADES):
            if a == b:
                continue
            sentences = [difference_prompt(a, b)]
            if abs(a - b) == 1:
                # adjacent grades get a second, findings-level contrast line
                sentences.append(
                    f"The first shows {GRADE_FINDINGS[a]} while the second "
                    f"shows {GRADE_FINDINGS[b]}."
                )
            pairs.append({"from_grade": a, "to_grade": b, "sentences": sentences})
    return {"families": families, "diff_pairs": pairs}


def sample_prompts_path() -> Path:
    """Filesystem path of the bundled sample prompt text file."""
    return Path(resources.files("embed_adapter") / "sample" / "prompts.json")
