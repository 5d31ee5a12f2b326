"""Hierarchical multitask offensive/hate-speech classification toolkit.

One shared text encoder feeds three task heads (offensive detection, hate
detection, fine-grained hate classification) trained under a joint
negative-log-likelihood objective. Predictions from several trained models
are combined by probability product, and inter-head contradictions in the
fine-grained output are repaired by self-consistency correction.
"""

from .corpus import (
    ClassStats,
    Corpus,
    CorpusFormatError,
    HsCategory,
    LabelTriple,
    Sample,
    compute_stats,
    load_corpus,
    normalize_text,
    save_corpus,
    split_corpus,
)
from .encoder import EncoderConfig, EncoderParams, FeatureVector, encode, hash_features, tokenize
from .ensemble import PredictionTriple, ensemble_combine, predict
from .consistency import CorrectionOutcome, correct_batch, self_consistency_correct
from .evaluation import (
    EvaluationReport,
    MacroMetrics,
    build_report,
    compare_runs,
    contradiction_rates,
    fp_fn_rates,
    macro_metrics,
)
from .model import (
    HeadConfig,
    HeadParams,
    ModelConfig,
    ModelParams,
    ProbTriple,
    gelu,
    head_forward,
    init_model_params,
    joint_nll,
    layer_norm,
    model_forward,
)
from .synthetic import generate_corpus
from .training import (
    Checkpoint,
    GridSpec,
    TrainConfig,
    TrainResult,
    adamw_step,
    finetune_hsc,
    grid_search,
    lr_at,
    read_checkpoint,
    train,
    write_checkpoint,
)

__version__ = "0.1.0"
