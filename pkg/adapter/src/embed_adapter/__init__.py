"""Embedding exporter for the prototype-evolution toolkit's file formats."""

from .encoders import (
    AdapterError,
    HashedTextEncoder,
    SharedSpaceProjector,
    VisualEncoder,
)
from .export import ExportReport, ExtractionJob, read_image_list, read_prompt_texts, run_export
from .templates import (
    CLASS_TEMPLATE,
    DESCRIPTION_TEMPLATE,
    DIFFERENCE_TEMPLATE,
    GRADE_NAMES,
    class_prompt,
    default_prompt_texts,
    description_prompt,
    difference_prompt,
    sample_prompts_path,
)
from .writer import write_embeddings, write_prompts

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "CLASS_TEMPLATE",
    "DESCRIPTION_TEMPLATE",
    "DIFFERENCE_TEMPLATE",
    "ExportReport",
    "ExtractionJob",
    "GRADE_NAMES",
    "HashedTextEncoder",
    "SharedSpaceProjector",
    "VisualEncoder",
    "class_prompt",
    "default_prompt_texts",
    "description_prompt",
    "difference_prompt",
    "read_image_list",
    "read_prompt_texts",
    "run_export",
    "sample_prompts_path",
    "write_embeddings",
    "write_prompts",
]
