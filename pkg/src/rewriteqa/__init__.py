"""Entity-aware question rewriting for outside-knowledge VQA.

The pipeline filters annotated visual questions, rewrites each one around
its detected image entities (either ranking masked substitutions with a
language model or running a trained seq2seq rewriter), answers the rewrite
with a text QA backend, and scores the results with exact match, embedding
similarity, and aggregated human grades.
"""

from .agnostic import (
    CandidateGenConfig,
    RewriteCandidate,
    RewriteDecision,
    SpanSub,
    build_concat_input,
    concat_decision,
    enumerate_candidates,
    passthrough_decision,
    rank_candidates,
    rewrite_agnostic,
)
from .aware import (
    BackendSuite,
    ExplorationConfig,
    RewardedLot,
    TrainingConfig,
    compute_lot_reward,
    edit_penalty,
    explore,
    rewrite_aware,
    select_lot,
    train,
    train_step,
)
from .data import (
    EntityLabel,
    FilterSpec,
    VisualQuestion,
    load_dataset,
    normalize_answer,
    tokenize,
)
from .evaluation import (
    AnswerPrediction,
    EvaluationReport,
    GradeRecord,
    ReportRow,
    answer_dataset,
    bert_similarity,
    build_report,
    exact_match,
    human_eval_score,
    render_report,
)
from .ports import (
    AnswerEmbedder,
    GenerationRequest,
    LanguageModelScorer,
    Seq2SeqRewriter,
    SequenceScore,
    TextQA,
    TrainableRewriter,
    WeightedCandidate,
    cosine,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerEmbedder",
    "AnswerPrediction",
    "BackendSuite",
    "CandidateGenConfig",
    "EntityLabel",
    "EvaluationReport",
    "ExplorationConfig",
    "FilterSpec",
    "GenerationRequest",
    "GradeRecord",
    "LanguageModelScorer",
    "ReportRow",
    "RewardedLot",
    "RewriteCandidate",
    "RewriteDecision",
    "Seq2SeqRewriter",
    "SequenceScore",
    "SpanSub",
    "TextQA",
    "TrainableRewriter",
    "TrainingConfig",
    "VisualQuestion",
    "WeightedCandidate",
    "answer_dataset",
    "bert_similarity",
    "build_concat_input",
    "build_report",
    "compute_lot_reward",
    "concat_decision",
    "cosine",
    "edit_penalty",
    "enumerate_candidates",
    "exact_match",
    "explore",
    "human_eval_score",
    "load_dataset",
    "normalize_answer",
    "passthrough_decision",
    "rank_candidates",
    "render_report",
    "rewrite_agnostic",
    "rewrite_aware",
    "select_lot",
    "tokenize",
    "train",
    "train_step",
]
