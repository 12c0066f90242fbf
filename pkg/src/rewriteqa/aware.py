"""QA-model-aware rewriting: explore rewrite candidates per entity, reward
them by answer quality, and push a trainable rewriter toward the winners.

The training signal is REINFORCE-style: each candidate's log-likelihood
gradient is weighted by its (optionally baseline-centered) reward, where the
reward is the cosine similarity between the embeddings of the predicted and
gold answers.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .agnostic import (
    CandidateGenConfig,
    RewriteCandidate,
    RewriteDecision,
    build_concat_input,
    enumerate_candidates,
    rank_candidates,
)
from .data import EntityLabel, VisualQuestion, join_tokens, tokenize
from .errors import (
    BackendError,
    ConfigError,
    ConfigMismatchError,
    InvalidInputError,
    NoCandidatesError,
    TrainStepError,
)
from .ports import (
    AnswerEmbedder,
    GenerationRequest,
    LanguageModelScorer,
    Seq2SeqRewriter,
    TextQA,
    TrainableRewriter,
    WeightedCandidate,
    cosine,
)

REWARD_AGGREGATIONS = ("max_over_golds", "first_gold")
BASELINES = ("none", "batch_mean")


@dataclass(frozen=True)
class ExplorationConfig:
    """How many temporary rewrites to keep per entity (``t``) and how many
    beams the rewriter expands each one into (``k`` of ``beam_width``)."""

    t: int = 10
    k: int = 3
    beam_width: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"t must be >= 1, got {self.t}")
        if self.k < 1 or self.k > self.beam_width:
            raise ValueError(f"need 1 <= k <= beam_width, got k={self.k} width={self.beam_width}")


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 16
    total_steps: int = 9600
    learning_rate: float = 0.1
    edit_penalty_weight: float = 0.1
    baseline: str = "batch_mean"
    seed: int = 0
    checkpoint_every: int = 500
    reward_aggregation: str = "max_over_golds"
    # Optional extras beyond the core recipe: a self-supervised denoising
    # phase before step 1, and an input-anchored likelihood term that
    # regularizes the policy toward copying (the alternative reading of the
    # edit penalty).  Both default off.
    warmup_steps: int = 0
    input_anchor_weight: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.edit_penalty_weight < 0 or self.input_anchor_weight < 0:
            raise ValueError("penalty weights must be >= 0")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.reward_aggregation not in REWARD_AGGREGATIONS:
            raise ValueError(f"reward_aggregation must be one of {REWARD_AGGREGATIONS}")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")


@dataclass(frozen=True)
class LotCandidate:
    rewrite_text: str
    predicted_answer: str
    reward: float


@dataclass(frozen=True)
class RewardedLot:
    """All candidates generated for one entity, with their QA rewards."""

    entity: EntityLabel | None
    candidates: tuple[LotCandidate, ...]
    average_reward: float

    def __post_init__(self):
        if self.candidates:
            mean = sum(c.reward for c in self.candidates) / len(self.candidates)
            if abs(mean - self.average_reward) > 1e-9:
                raise ValueError("average_reward must be the mean of member rewards")
        elif self.average_reward != 0.0:
            raise ValueError("empty lot must carry average_reward 0.0")


def empty_lot(entity: EntityLabel | None) -> RewardedLot:
    return RewardedLot(entity=entity, candidates=(), average_reward=0.0)


@dataclass(frozen=True)
class EntityExploration:
    entity: EntityLabel
    temporary_rewrites: tuple[str, ...]
    candidates: tuple[str, ...]


@dataclass(frozen=True)
class StepReport:
    mean_reward: float
    loss: float


@dataclass
class BackendSuite:
    """The frozen read-only backends a training run consults."""

    scorer: LanguageModelScorer
    qa: TextQA
    embedder: AnswerEmbedder


def derive_seed(base: int, *parts) -> int:
    """Stable per-call seed so nested generation stays reproducible."""
    text = ":".join(str(p) for p in (base, *parts))
    digest = hashlib.md5(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def explore(
    question: VisualQuestion,
    scorer: LanguageModelScorer,
    rewriter: Seq2SeqRewriter,
    cfg: ExplorationConfig,
    gen_cfg: CandidateGenConfig | None = None,
) -> list[EntityExploration]:
    """Per entity: rank that entity's span substitutions, keep the top ``t``
    as temporary rewrites, and expand each through the rewriter's beams.

    An entity with no valid spans yields an empty lot rather than an error.
    """
    gen_cfg = gen_cfg or CandidateGenConfig()
    if not question.entities:
        raise InvalidInputError(f"question {question.question_id!r} has no entities")
    results = []
    for entity in sorted(question.entities, key=lambda e: e.rank):
        spans = enumerate_candidates(question, gen_cfg, entities=[entity])
        if spans:
            ranked = rank_candidates(spans, scorer, gen_cfg)
            temps = tuple(c.text for c in ranked[: cfg.t])
        else:
            temps = ()
        lot: list[str] = []
        for position, temp in enumerate(temps):
            request = GenerationRequest(
                input_text=temp,
                k=cfg.k,
                beam_width=cfg.beam_width,
                seed=derive_seed(cfg.seed, entity.rank, position),
            )
            lot.extend(rewriter.generate(request))
        results.append(
            EntityExploration(entity=entity, temporary_rewrites=temps, candidates=tuple(lot))
        )
    return results


def compute_lot_reward(
    lot_texts: Sequence[str],
    gold_answers: Sequence[str],
    qa: TextQA,
    embedder: AnswerEmbedder,
    aggregation: str = "max_over_golds",
    entity: EntityLabel | None = None,
) -> RewardedLot:
    """Answer every candidate and reward it by gold-answer similarity.

    ``max_over_golds`` rewards the best-matching gold answer;
    ``first_gold`` compares against the first gold only.
    """
    if not lot_texts:
        raise InvalidInputError("lot must contain at least one candidate")
    if not gold_answers:
        raise InvalidInputError("gold_answers must be non-empty")
    if aggregation not in REWARD_AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {REWARD_AGGREGATIONS}")
    gold_vectors = [embedder.embed(gold) for gold in gold_answers]
    dim = gold_vectors[0].shape
    candidates = []
    for text in lot_texts:
        predicted = qa.answer(text)
        predicted_vector = embedder.embed(predicted)
        if predicted_vector.shape != dim:
            raise ConfigError(
                f"embedding dimension mismatch: gold {dim} vs predicted {predicted_vector.shape}"
            )
        if aggregation == "first_gold":
            raw = cosine(gold_vectors[0], predicted_vector)
        else:
            raw = max(cosine(g, predicted_vector) for g in gold_vectors)
        reward = max(-1.0, min(1.0, raw))
        candidates.append(
            LotCandidate(rewrite_text=text, predicted_answer=predicted, reward=reward)
        )
    average = sum(c.reward for c in candidates) / len(candidates)
    return RewardedLot(entity=entity, candidates=tuple(candidates), average_reward=average)


def select_lot(lots: Sequence[RewardedLot]) -> RewardedLot:
    """The lot with the greatest average reward; ties favor the better-ranked
    entity.  Empty lots are never selected."""
    best = None
    best_key = None
    for position, lot in enumerate(lots):
        if not lot.candidates:
            continue
        rank = lot.entity.rank if lot.entity is not None else math.inf
        key = (-lot.average_reward, rank, position)
        if best_key is None or key < best_key:
            best, best_key = lot, key
    if best is None:
        raise NoCandidatesError("every lot is empty")
    return best


def edit_penalty(candidate_text: str, input_text: str, smoothing: float = 1.0) -> float:
    """Cross-entropy of the input's token distribution under the candidate's
    (add-one smoothed) token distribution.  Grows as the candidate drops
    input tokens; 0 only in the degenerate single-token-copy case."""
    input_tokens = tokenize(input_text)
    if not input_tokens:
        return 0.0
    candidate_counts = Counter(tokenize(candidate_text))
    reference = Counter(input_tokens)
    support = set(reference) | set(candidate_counts)
    denominator = sum(candidate_counts.values()) + smoothing * len(support)
    total = 0.0
    for token, count in reference.items():
        probability = (candidate_counts.get(token, 0) + smoothing) / denominator
        total -= (count / len(input_tokens)) * math.log(probability)
    return total


def train_step(
    batch: Sequence[VisualQuestion],
    rewriter: TrainableRewriter,
    backends: BackendSuite,
    cfg: TrainingConfig,
    ecfg: ExplorationConfig,
    gen_cfg: CandidateGenConfig | None = None,
) -> StepReport:
    """One optimization step over a batch of questions.

    For each question: explore, reward, select the winning lot, then update
    the rewriter with per-candidate weights ``reward - baseline``.  The
    reported loss adds the edit penalty scaled by ``edit_penalty_weight``.
    """
    if not batch:
        raise InvalidInputError("batch must be non-empty")
    gen_cfg = gen_cfg or CandidateGenConfig()
    winners: list[tuple[VisualQuestion, RewardedLot]] = []
    for question in batch:
        try:
            explorations = explore(question, backends.scorer, rewriter, ecfg, gen_cfg)
            lots = [
                compute_lot_reward(
                    result.candidates,
                    question.gold_answers,
                    backends.qa,
                    backends.embedder,
                    cfg.reward_aggregation,
                    entity=result.entity,
                )
                if result.candidates
                else empty_lot(result.entity)
                for result in explorations
            ]
            winners.append((question, select_lot(lots)))
        except (BackendError, NoCandidatesError) as exc:
            raise TrainStepError(question.question_id, str(exc)) from exc

    mean_reward = sum(lot.average_reward for _, lot in winners) / len(winners)
    baseline = mean_reward if cfg.baseline == "batch_mean" else 0.0

    losses = []
    for question, lot in winners:
        input_text = build_concat_input(question)
        weighted = [
            WeightedCandidate(text=c.rewrite_text, weight=c.reward - baseline)
            for c in lot.candidates
        ]
        if cfg.input_anchor_weight > 0.0:
            weighted.append(WeightedCandidate(text=input_text, weight=cfg.input_anchor_weight))
        try:
            policy_loss = rewriter.update(input_text, weighted)
        except BackendError as exc:
            raise TrainStepError(question.question_id, str(exc)) from exc
        penalty = sum(edit_penalty(c.rewrite_text, input_text) for c in lot.candidates) / len(
            lot.candidates
        )
        losses.append(policy_loss + cfg.edit_penalty_weight * penalty)

    return StepReport(mean_reward=mean_reward, loss=sum(losses) / len(losses))


def warmup_denoise(
    rewriter: TrainableRewriter, dataset: Sequence[VisualQuestion], steps: int
) -> None:
    """Self-supervised pre-phase: teach the rewriter to strip the appended
    entities by targeting the bare question given the concatenated input."""
    for i in range(steps):
        question = dataset[i % len(dataset)]
        target = join_tokens(tokenize(question.question))
        rewriter.update(build_concat_input(question), [WeightedCandidate(target, 1.0)])


# -- training loop with checkpoint/resume ------------------------------------


@dataclass
class TrainState:
    step: int
    rewriter_snapshot: bytes
    running_mean_reward: float
    rng_state: dict


def training_config_hash(
    cfg: TrainingConfig, ecfg: ExplorationConfig, gen_cfg: CandidateGenConfig
) -> str:
    """Digest of everything that shapes the parameter trajectory.

    ``total_steps`` is excluded on purpose: it is the run horizon, not a
    learning parameter, so a resumed run may extend it.
    """
    training = {k: v for k, v in asdict(cfg).items() if k != "total_steps"}
    payload = {
        "training": training,
        "exploration": asdict(ecfg),
        "candidates": asdict(gen_cfg),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """The shuffle for one epoch, derived from (seed, epoch) so any step of a
    run can be reproduced without replaying earlier epochs."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def _checkpoint_dir(root: Path, step: int) -> Path:
    return root / f"step-{step:06d}"


def save_checkpoint(
    root: Path,
    step: int,
    rewriter: TrainableRewriter,
    running_mean_reward: float,
    rng_state: dict,
    config_hash: str,
) -> Path:
    target = _checkpoint_dir(root, step)
    target.mkdir(parents=True, exist_ok=True)
    (target / "params.bin").write_bytes(rewriter.snapshot())
    state = {
        "step": step,
        "running_mean_reward": running_mean_reward,
        "rng_state": rng_state,
        "config_hash": config_hash,
    }
    meta = getattr(rewriter, "checkpoint_meta", None)
    if callable(meta):
        state["model"] = meta()
    (target / "state.json").write_text(json.dumps(state, sort_keys=True), encoding="utf-8")
    (root / "latest.json").write_text(
        json.dumps({"step": step, "dir": target.name}), encoding="utf-8"
    )
    return target


def load_checkpoint(root: Path, step: int | None = None) -> tuple[dict, bytes]:
    """Return (state, params) for the given step, or the latest one."""
    root = Path(root)
    if step is None:
        latest = root / "latest.json"
        if not latest.exists():
            raise ConfigError(f"no checkpoint found under {root}")
        target = root / json.loads(latest.read_text(encoding="utf-8"))["dir"]
    else:
        target = _checkpoint_dir(root, step)
    if not target.exists():
        raise ConfigError(f"checkpoint directory {target} does not exist")
    state = json.loads((target / "state.json").read_text(encoding="utf-8"))
    params = (target / "params.bin").read_bytes()
    return state, params


def train(
    dataset: Sequence[VisualQuestion],
    rewriter: TrainableRewriter,
    backends: BackendSuite,
    cfg: TrainingConfig,
    ecfg: ExplorationConfig,
    out_dir: str | Path,
    gen_cfg: CandidateGenConfig | None = None,
    resume: bool = False,
) -> TrainState:
    """Run ``cfg.total_steps`` steps over seeded epoch shuffles of the
    dataset, logging one metrics line per step and checkpointing every
    ``cfg.checkpoint_every`` steps (plus a final checkpoint).

    With ``resume=True`` the run continues bit-exactly from the latest
    checkpoint in ``out_dir``; a checkpoint written under a different
    configuration is rejected.
    """
    if not dataset:
        raise InvalidInputError("dataset must be non-empty")
    gen_cfg = gen_cfg or CandidateGenConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_root = out_dir / "checkpoints"
    metrics_path = out_dir / "metrics.jsonl"
    config_hash = training_config_hash(cfg, ecfg, gen_cfg)

    if hasattr(rewriter, "learning_rate"):
        rewriter.learning_rate = cfg.learning_rate

    if resume:
        state, params = load_checkpoint(checkpoint_root)
        if state["config_hash"] != config_hash:
            raise ConfigMismatchError(
                f"checkpoint config hash {state['config_hash'][:12]} does not match "
                f"current configuration {config_hash[:12]}"
            )
        rewriter.restore(params)
        step = state["step"]
        epoch = state["rng_state"]["epoch"]
        pos = state["rng_state"]["pos"]
        running = state["running_mean_reward"]
        log_mode = "a"
    else:
        step, epoch, pos, running = 0, 0, 0, 0.0
        if cfg.warmup_steps:
            warmup_denoise(rewriter, dataset, cfg.warmup_steps)
        log_mode = "w"

    n = len(dataset)
    batches_per_epoch = math.ceil(n / cfg.batch_size)
    order = epoch_order(cfg.seed, epoch, n)

    with metrics_path.open(log_mode, encoding="utf-8", newline="\n") as log:
        while step < cfg.total_steps:
            if pos >= batches_per_epoch:
                epoch += 1
                pos = 0
                order = epoch_order(cfg.seed, epoch, n)
            indices = order[pos * cfg.batch_size : (pos + 1) * cfg.batch_size]
            batch = [dataset[i] for i in indices]
            report = train_step(batch, rewriter, backends, cfg, ecfg, gen_cfg)
            step += 1
            pos += 1
            running += (report.mean_reward - running) / step
            log.write(
                json.dumps(
                    {
                        "step": step,
                        "mean_reward": report.mean_reward,
                        "loss": report.loss,
                        "lr": cfg.learning_rate,
                        "seed": cfg.seed,
                    }
                )
            )
            log.write("\n")
            if step % cfg.checkpoint_every == 0:
                save_checkpoint(
                    checkpoint_root, step, rewriter, running, {"epoch": epoch, "pos": pos}, config_hash
                )

    save_checkpoint(checkpoint_root, step, rewriter, running, {"epoch": epoch, "pos": pos}, config_hash)
    return TrainState(
        step=step,
        rewriter_snapshot=rewriter.snapshot(),
        running_mean_reward=running,
        rng_state={"epoch": epoch, "pos": pos},
    )


def rewrite_aware(
    question: VisualQuestion,
    rewriter: Seq2SeqRewriter,
    ecfg: ExplorationConfig | None = None,
) -> RewriteDecision:
    """Inference path: the rewriter consumes the concatenated input directly
    and the first beam is the rewrite."""
    ecfg = ecfg or ExplorationConfig()
    request = GenerationRequest(
        input_text=build_concat_input(question), k=1, beam_width=ecfg.beam_width, seed=ecfg.seed
    )
    texts = rewriter.generate(request)
    if not texts:
        raise BackendError(f"rewriter produced no candidates for {question.question_id!r}")
    chosen = RewriteCandidate(text=texts[0])
    return RewriteDecision(
        question_id=question.question_id, chosen=chosen, ranked=(chosen,), mode="aware"
    )
