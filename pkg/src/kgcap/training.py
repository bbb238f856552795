"""Plain stochastic gradient descent for the caption model and the encoder.

One schedule serves both: the learning rate starts at ``initial_lr``, decays
exponentially per epoch, and is divided by ``lr_shrink`` when the iteration
counter crosses each scheduled milestone (fractions of the iteration budget).
Runs are bit-reproducible for a fixed seed: initialization, shuffling, and
arithmetic order are all deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .caption_model import (
    CaptionModelParams,
    ConditioningMode,
    EmbeddingInputs,
    ModelDims,
    caption_loss_and_gradients,
    conditioning_for_record,
    init_caption_params,
)
from .dataset_io import Dataset, ImageRecord, encode_caption, shuffled_index_batches
from .errors import ConfigurationError, NumericError, ValidationError
from .retrofit import VectorStore
from .term_encoder import (
    PretrainExample,
    TermEncoderParams,
    encode_terms,
    init_term_encoder,
    pretrain_loss_and_gradients,
)
from .term_expansion import TermSets
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 2.0
    decay: float = 1.0            # per-epoch exponential factor
    lr_shrink: float = 5.0        # divisor applied at each milestone
    milestones: tuple[float, ...] = (0.25, 0.5, 0.75)
    batch_size: int = 32
    max_iterations: int = 1000
    weight_decay: float = 1e-4    # coefficient on ||theta||^2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.initial_lr <= 0:
            raise ConfigurationError(f"initial_lr must be > 0, got {self.initial_lr}")
        if not 0 < self.decay <= 1:
            raise ConfigurationError(f"decay must be in (0, 1], got {self.decay}")
        if self.lr_shrink < 1:
            raise ConfigurationError(f"lr_shrink must be >= 1, got {self.lr_shrink}")
        if list(self.milestones) != sorted(self.milestones) or any(
            not 0 < m < 1 for m in self.milestones
        ):
            raise ConfigurationError("milestones must be sorted fractions inside (0, 1)")
        if len(self.milestones) > 4:
            raise ConfigurationError("at most four shrink milestones are supported")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def milestone_iterations(self) -> list[int]:
        return [int(np.floor(m * self.max_iterations)) for m in self.milestones]

    def learning_rate(self, iteration: int, epoch: int) -> float:
        """Rate for a 0-based iteration within a 0-based epoch."""
        shrinks = sum(1 for m in self.milestone_iterations() if iteration >= m)
        return self.initial_lr * (self.decay ** epoch) / (self.lr_shrink ** shrinks)


@dataclass
class TrainLog:
    """Per-iteration trace of a run."""

    losses: list[float] = field(default_factory=list)
    token_ce: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")

    @property
    def final_token_ce(self) -> float:
        return self.token_ce[-1] if self.token_ce else float("nan")


def sgd_update(params, grads, learning_rate: float) -> None:
    """In-place descent step over matching parameter/gradient trees."""
    for (name, p), (gname, g) in zip(params.named_arrays(), grads.named_arrays()):
        if name != gname:
            raise ValidationError(f"parameter/gradient mismatch: {name} vs {gname}")
        p -= learning_rate * g


def _run_sgd(
    params,
    example_count: int,
    batch_fn: Callable[[np.ndarray], tuple[float, object, float]],
    cfg: TrainConfig,
    label: str,
) -> TrainLog:
    """Drive the epoch/iteration loop; ``batch_fn`` maps an index batch to
    (loss, gradients, mean per-token cross-entropy)."""
    if example_count == 0:
        raise ValidationError("nothing to train on")
    log = TrainLog()
    iteration = 0
    epoch = 0
    while iteration < cfg.max_iterations:
        for index_batch in shuffled_index_batches(
            example_count, cfg.batch_size, (cfg.rng_seed, epoch)
        ):
            if iteration >= cfg.max_iterations:
                break
            lr = cfg.learning_rate(iteration, epoch)
            loss, grads, token_ce = batch_fn(index_batch)
            if not np.isfinite(loss):
                raise NumericError(
                    f"{label}: loss became non-finite at iteration {iteration} "
                    f"(epoch {epoch}, learning rate {lr:g}); lower the learning rate"
                )
            sgd_update(params, grads, lr)
            log.losses.append(loss)
            log.learning_rates.append(lr)
            log.token_ce.append(token_ce)
            iteration += 1
        epoch += 1
    return log


# -- caption-model training ----------------------------------------------------


def prepare_conditioning(
    records: Sequence[ImageRecord],
    mode: ConditioningMode,
    term_sets: dict[str, TermSets] | None = None,
    encoder_direct: TermEncoderParams | None = None,
    encoder_indirect: TermEncoderParams | None = None,
    store: VectorStore | None = None,
) -> dict[str, EmbeddingInputs]:
    """Precompute each record's conditioning vectors for ``mode``.

    Term encodings are computed once with the (frozen) encoders; records
    missing from ``term_sets`` get empty term lists.
    """
    if mode.use_direct and (encoder_direct is None or store is None):
        raise ConfigurationError(f"mode {mode.name!r} needs a direct-term encoder and vectors")
    if mode.use_indirect and (encoder_indirect is None or store is None):
        raise ConfigurationError(f"mode {mode.name!r} needs an indirect-term encoder and vectors")
    conditioning: dict[str, EmbeddingInputs] = {}
    for record in records:
        sets = (term_sets or {}).get(record.image_id)
        direct = indirect = None
        if mode.use_direct:
            direct = encode_terms(encoder_direct, sets.direct_ranked if sets else (), store)
        if mode.use_indirect:
            indirect = encode_terms(encoder_indirect, sets.indirect_ranked if sets else (), store)
        conditioning[record.image_id] = conditioning_for_record(
            mode, record.feature, direct, indirect
        )
    return conditioning


@dataclass
class TrainResult:
    params: CaptionModelParams
    log: TrainLog


def train_caption_model(
    dataset: Dataset,
    vocabulary: Vocabulary,
    mode: ConditioningMode,
    cfg: TrainConfig,
    dims: ModelDims,
    conditioning: dict[str, EmbeddingInputs],
    encoding_dim: int = 0,
) -> TrainResult:
    """Fit a caption model; conditioning vectors are fixed inputs.

    Every (record, reference) pair is one training example. ``encoding_dim``
    is the width of the term encodings when the mode uses them.
    """
    records = [r for r in dataset.records if r.references]
    if not records:
        raise ValidationError("dataset has no reference captions to train on")
    missing = [r.image_id for r in records if r.image_id not in conditioning]
    if missing:
        raise ValidationError(f"no conditioning inputs for image(s): {', '.join(missing[:5])}")

    pairs: list[tuple[EmbeddingInputs, list[int]]] = []
    for record in records:
        inputs = conditioning[record.image_id]
        for reference in record.references:
            pairs.append((inputs, encode_caption(vocabulary, reference)))

    rng = np.random.default_rng(cfg.rng_seed)
    params = init_caption_params(
        mode=mode,
        vocab_size=vocabulary.size,
        feature_dim=dataset.feature_dim,
        direct_dim=encoding_dim,
        indirect_dim=encoding_dim,
        dims=dims,
        rng=rng,
    )

    def batch_fn(index_batch: np.ndarray):
        batch = [pairs[i] for i in index_batch]
        loss, grads = caption_loss_and_gradients(params, batch, cfg.weight_decay)
        tokens = sum(len(caption) - 1 for _, caption in batch)
        data_nll = (loss - cfg.weight_decay * _squared_norm(params)) * len(batch)
        return loss, grads, data_nll / tokens

    log = _run_sgd(params, len(pairs), batch_fn, cfg, f"train[{mode.name}]")
    logger.info(
        "trained %s: %d iterations, final loss %.4f, final per-token CE %.4f",
        mode.name, len(log.losses), log.final_loss, log.final_token_ce,
    )
    return TrainResult(params, log)


def _squared_norm(params) -> float:
    return sum(float((a * a).sum()) for _, a in params.named_arrays())


# -- encoder pretraining ---------------------------------------------------------


def build_pretrain_examples(
    dataset: Dataset,
    vocabulary: Vocabulary,
    term_sets: dict[str, TermSets],
) -> list[PretrainExample]:
    """One example per (record, reference): ranked direct terms -> caption."""
    examples: list[PretrainExample] = []
    for record in dataset.records:
        sets = term_sets.get(record.image_id)
        terms = sets.direct_ranked if sets else ()
        for reference in record.references:
            examples.append(
                PretrainExample(
                    terms=tuple(terms),
                    feature=record.feature,
                    caption=tuple(encode_caption(vocabulary, reference)),
                )
            )
    return examples


@dataclass
class PretrainResult:
    params: TermEncoderParams
    log: TrainLog


def pretrain_term_encoder(
    examples: Sequence[PretrainExample],
    store: VectorStore,
    vocabulary: Vocabulary,
    feature_dim: int,
    cfg: TrainConfig,
    dims: ModelDims,
) -> PretrainResult:
    """Fit the term encoder through its caption head (no weight decay)."""
    if not examples:
        raise ValidationError("no pretraining examples")
    rng = np.random.default_rng(cfg.rng_seed)
    params = init_term_encoder(
        vector_dim=store.dim,
        encoder_embed=dims.encoder_embed,
        encoder_hidden=dims.encoder_hidden,
        feature_dim=feature_dim,
        head_embed=dims.embed_size,
        head_hidden=dims.hidden_size,
        vocab_size=vocabulary.size,
        rng=rng,
    )

    def batch_fn(index_batch: np.ndarray):
        batch = [examples[i] for i in index_batch]
        loss, grads = pretrain_loss_and_gradients(params, batch, store)
        tokens = sum(len(e.caption) - 1 for e in batch)
        return loss, grads, loss * len(batch) / tokens

    log = _run_sgd(params, len(examples), batch_fn, cfg, "pretrain-encoder")
    logger.info(
        "pretrained term encoder: %d iterations, final loss %.4f",
        len(log.losses), log.final_loss,
    )
    return PretrainResult(params, log)
