"""Prototype evolution toolkit for ordinal grade classification.

Variance-selected anchor prototypes, discriminatively gated prompt features,
and a two-stage attention modulation trained with exact manual gradients.
"""
from .anchors import (
    DEFAULT_ALPHA,
    AnchorSelection,
    PrototypeSet,
    build_initial_prototypes,
    class_means,
    per_sample_variance_score,
    select_anchors,
)
from .gating import (
    DEFAULT_N_DIV,
    GatingResult,
    build_semantic_features,
    confusion_degree,
    confusion_matrix,
    discriminative_score,
    gate_top_n,
)
from .inference import (
    DescriptorAlignment,
    MetricReport,
    Prediction,
    classify,
    classify_set,
    descriptor_alignment,
    evaluate,
    token_correlation,
)
from .modulation import (
    ModulationParams,
    ModulationTape,
    SemanticFeatures,
    adaptive_weights,
    dpe_forward,
    init_params,
    layer_norm_row,
    modulate,
    modulation_backward,
    psi_forward,
    softmax_rows,
)
from .store import (
    NUM_GRADES,
    EmbeddingRecord,
    EmbeddingSet,
    PromptFamily,
    PromptLibrary,
    StoreError,
    load_checkpoint,
    load_embedding_set,
    load_prompt_library,
    save_checkpoint,
    save_embedding_set,
    save_prompt_library,
    validate_prompt_file,
)
from .synth import SynthConfig, SynthData, baseline_accuracy, generate, run_benchmark
from .training import (
    Adam,
    TrainConfig,
    TrainReport,
    classification_loss,
    finite_difference_check,
    grade_similarities,
    similarity,
    train,
)

__version__ = "0.1.0"
