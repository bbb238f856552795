"""LSTM caption generator conditioned on image and term-set encodings.

The conditioning inputs available to the decoder are an image feature vector
and fixed-width encodings of the direct and indirect related-term sets. A
mode selects which of the three are used; the active ones are concatenated,
passed through a learned affine projection, and fed to the decoder as its
first input. Subsequent steps consume the embedding of the previous caption
token, and each step's hidden state is projected to a softmax over the
vocabulary.

With no active input the projection degenerates to its bias, so that mode is
unconditioned by construction. All gradients are computed analytically by the
backward passes in this module; no autodiff is involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .lstm import INIT_SCALE, LstmParams, log_softmax, lstm_backward, lstm_forward, lstm_step
from .vocab import Vocabulary

# -- conditioning modes -------------------------------------------------------


@dataclass(frozen=True)
class ConditioningMode:
    name: str
    use_image: bool
    use_direct: bool
    use_indirect: bool

    @property
    def uses_terms(self) -> bool:
        return self.use_direct or self.use_indirect


# The fixed ablation order: nothing, each input family alone, then the
# combinations, ending with the full model.
ABLATION_PLAN: tuple[ConditioningMode, ...] = (
    ConditioningMode("none", False, False, False),
    ConditioningMode("image", True, False, False),
    ConditioningMode("direct", False, True, False),
    ConditioningMode("indirect", False, False, True),
    ConditioningMode("direct+image", True, True, False),
    ConditioningMode("indirect+image", True, False, True),
    ConditioningMode("direct+indirect+image", True, True, True),
)

MODES: dict[str, ConditioningMode] = {m.name: m for m in ABLATION_PLAN}
_MODE_ALIASES = {"baseline": "image", "full": "direct+indirect+image"}


def resolve_mode(name: str) -> ConditioningMode:
    key = _MODE_ALIASES.get(name, name)
    if key not in MODES:
        known = ", ".join(sorted(MODES) + sorted(_MODE_ALIASES))
        raise ValidationError(f"unknown mode {name!r}; expected one of: {known}")
    return MODES[key]


@dataclass(frozen=True)
class ModelDims:
    """Network widths; the defaults are desk-scale, not benchmark-scale."""

    embed_size: int = 32
    hidden_size: int = 64
    encoder_embed: int = 16
    encoder_hidden: int = 32

    def __post_init__(self) -> None:
        for name in ("embed_size", "hidden_size", "encoder_embed", "encoder_hidden"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")


# -- model inputs -------------------------------------------------------------


@dataclass
class EmbeddingInputs:
    """Conditioning vectors for one image; unused components may be None."""

    image: np.ndarray | None = None
    direct: np.ndarray | None = None
    indirect: np.ndarray | None = None

    def init_vector(self, model: "CaptionModelParams") -> np.ndarray:
        """Concatenate the mode's active components in image/direct/indirect order."""
        parts: list[np.ndarray] = []
        for active, value, width, label in (
            (model.mode.use_image, self.image, model.feature_dim, "image"),
            (model.mode.use_direct, self.direct, model.direct_dim, "direct"),
            (model.mode.use_indirect, self.indirect, model.indirect_dim, "indirect"),
        ):
            if not active:
                continue
            if value is None:
                if width != 0:
                    raise ValidationError(f"mode {model.mode.name!r} needs the {label} input")
                value = np.zeros(0)
            value = np.asarray(value, dtype=np.float64)
            if value.shape != (width,):
                raise ValidationError(
                    f"{label} input has shape {value.shape}, expected ({width},)"
                )
            parts.append(value)
        return np.concatenate(parts) if parts else np.zeros(0)


# -- parameters ---------------------------------------------------------------


@dataclass
class CaptionModelParams:
    """All trainable tensors plus the widths they were built for."""

    mode: ConditioningMode
    feature_dim: int
    direct_dim: int
    indirect_dim: int
    w_embed: np.ndarray   # (vocab, embed)
    decoder: LstmParams   # input embed, hidden H
    w_out: np.ndarray     # (H, vocab)
    b_out: np.ndarray     # (vocab,)
    w_init: np.ndarray    # (init width, embed); init width may be zero
    b_init: np.ndarray    # (embed,)

    @property
    def vocab_size(self) -> int:
        return self.w_embed.shape[0]

    @property
    def embed_size(self) -> int:
        return self.w_embed.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.decoder.hidden_size

    @property
    def init_width(self) -> int:
        return self.w_init.shape[0]

    @property
    def parameter_count(self) -> int:
        return sum(int(a.size) for _, a in self.named_arrays())

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("w_embed", self.w_embed),
            *self.decoder.named_arrays("decoder."),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
            ("w_init", self.w_init),
            ("b_init", self.b_init),
        ]


def mode_init_width(mode: ConditioningMode, feature_dim: int, encoder_hidden: int) -> int:
    width = 0
    if mode.use_image:
        width += feature_dim
    if mode.use_direct:
        width += encoder_hidden
    if mode.use_indirect:
        width += encoder_hidden
    return width


def init_caption_params(
    mode: ConditioningMode,
    vocab_size: int,
    feature_dim: int,
    direct_dim: int,
    indirect_dim: int,
    dims: ModelDims,
    rng: np.random.Generator,
) -> CaptionModelParams:
    """Fresh parameters, every tensor uniform in [-INIT_SCALE, INIT_SCALE]."""
    if vocab_size < 2:
        raise ValidationError(f"vocabulary of size {vocab_size} lacks the start/end markers")
    feature_dim = feature_dim if mode.use_image else 0
    direct_dim = direct_dim if mode.use_direct else 0
    indirect_dim = indirect_dim if mode.use_indirect else 0
    init_width = feature_dim + direct_dim + indirect_dim
    uniform = lambda *shape: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
    return CaptionModelParams(
        mode=mode,
        feature_dim=feature_dim,
        direct_dim=direct_dim,
        indirect_dim=indirect_dim,
        w_embed=uniform(vocab_size, dims.embed_size),
        decoder=LstmParams.init(dims.embed_size, dims.hidden_size, rng),
        w_out=uniform(dims.hidden_size, vocab_size),
        b_out=uniform(vocab_size),
        w_init=uniform(init_width, dims.embed_size),
        b_init=uniform(dims.embed_size),
    )


def zeros_like_params(model: CaptionModelParams) -> CaptionModelParams:
    return CaptionModelParams(
        mode=model.mode,
        feature_dim=model.feature_dim,
        direct_dim=model.direct_dim,
        indirect_dim=model.indirect_dim,
        w_embed=np.zeros_like(model.w_embed),
        decoder=LstmParams.zeros(model.embed_size, model.hidden_size),
        w_out=np.zeros_like(model.w_out),
        b_out=np.zeros_like(model.b_out),
        w_init=np.zeros_like(model.w_init),
        b_init=np.zeros_like(model.b_init),
    )


# -- forward ------------------------------------------------------------------


def _check_caption(model: CaptionModelParams, caption: Sequence[int]) -> None:
    if len(caption) < 2:
        raise ValidationError("caption must hold at least the start and end markers")
    if caption[0] != 0 or caption[-1] != 1:
        raise ValidationError("caption must start with the start marker and end with the end marker")
    if any(not 0 <= t < model.vocab_size for t in caption):
        raise ValidationError("caption index outside the vocabulary")


def _run_decoder(model: CaptionModelParams, inputs: EmbeddingInputs, caption: Sequence[int]):
    """Shared forward: trace, per-step log-probs, and the projected init input."""
    _check_caption(model, caption)
    v = inputs.init_vector(model)
    x_init = v @ model.w_init + model.b_init
    scored = len(caption) - 1
    xs = np.zeros((scored + 1, model.embed_size))
    xs[0] = x_init
    xs[1:] = model.w_embed[np.asarray(caption[:-1], dtype=np.intp)]
    trace = lstm_forward(model.decoder, xs)
    logits = trace.hs[1:] @ model.w_out + model.b_out
    return v, trace, log_softmax(logits)


def forward_caption(
    model: CaptionModelParams, inputs: EmbeddingInputs, caption: Sequence[int]
) -> np.ndarray:
    """Probability rows for caption positions 1..N (row t scores token t).

    ``caption`` is the full marker-wrapped index sequence; the returned array
    has one softmax row per scored position and each row sums to one.
    """
    _, _, log_probs = _run_decoder(model, inputs, caption)
    return np.exp(log_probs)


def forward_image_conditioned(
    model: CaptionModelParams, feature: np.ndarray, caption: Sequence[int]
) -> np.ndarray:
    """Straight-line forward for the image-only mode.

    Written independently of the generic concatenation path: project the
    feature, feed it, then feed token embeddings. Used to pin the generic
    path's behavior in tests.
    """
    if model.mode.name != "image":
        raise ValidationError("dedicated path only serves the image-only mode")
    _check_caption(model, caption)
    feature = np.asarray(feature, dtype=np.float64)
    state = lstm_step(model.decoder, feature @ model.w_init + model.b_init, None)
    rows = []
    for token in caption[:-1]:
        state = lstm_step(model.decoder, model.w_embed[token], state)
        log_row = log_softmax(state[0] @ model.w_out + model.b_out)
        rows.append(np.exp(log_row))
    return np.stack(rows)


# -- loss and gradients -------------------------------------------------------

Batch = Sequence[tuple[EmbeddingInputs, Sequence[int]]]


def _squared_norm(model: CaptionModelParams) -> float:
    return sum(float((a * a).sum()) for _, a in model.named_arrays())


def caption_loss(model: CaptionModelParams, batch: Batch, weight_decay: float = 1e-4) -> float:
    """Mean per-caption negative log-likelihood plus weight_decay * ||theta||^2."""
    if not batch:
        raise ValidationError("empty batch")
    total = 0.0
    for inputs, caption in batch:
        _, _, log_probs = _run_decoder(model, inputs, caption)
        targets = np.asarray(caption[1:], dtype=np.intp)
        total -= float(log_probs[np.arange(len(targets)), targets].sum())
    return total / len(batch) + weight_decay * _squared_norm(model)


def caption_loss_and_gradients(
    model: CaptionModelParams, batch: Batch, weight_decay: float = 1e-4
) -> tuple[float, CaptionModelParams]:
    """Loss plus exact gradients for every parameter tensor."""
    if not batch:
        raise ValidationError("empty batch")
    grads = zeros_like_params(model)
    share = 1.0 / len(batch)
    total = 0.0
    for inputs, caption in batch:
        v, trace, log_probs = _run_decoder(model, inputs, caption)
        targets = np.asarray(caption[1:], dtype=np.intp)
        scored = len(targets)
        total -= float(log_probs[np.arange(scored), targets].sum())

        d_logits = np.exp(log_probs)
        d_logits[np.arange(scored), targets] -= 1.0
        d_logits *= share
        grads.w_out += trace.hs[1:].T @ d_logits
        grads.b_out += d_logits.sum(axis=0)

        dh_out = np.zeros_like(trace.hs)
        dh_out[1:] = d_logits @ model.w_out.T
        lstm_grads, dxs = lstm_backward(model.decoder, trace, dh_out)
        grads.decoder.w_x += lstm_grads.w_x
        grads.decoder.w_h += lstm_grads.w_h
        grads.decoder.b += lstm_grads.b
        np.add.at(grads.w_embed, np.asarray(caption[:-1], dtype=np.intp), dxs[1:])
        grads.w_init += np.outer(v, dxs[0])
        grads.b_init += dxs[0]

    loss = total / len(batch) + weight_decay * _squared_norm(model)
    for (_, g), (_, p) in zip(grads.named_arrays(), model.named_arrays()):
        g += 2.0 * weight_decay * p
    return loss, grads


def gradients(
    model: CaptionModelParams, batch: Batch, weight_decay: float = 1e-4
) -> CaptionModelParams:
    return caption_loss_and_gradients(model, batch, weight_decay)[1]


# -- incremental decoding interface --------------------------------------------


@dataclass
class DecodeState:
    h: np.ndarray
    c: np.ndarray


def _step_log_probs(model: CaptionModelParams, h: np.ndarray) -> np.ndarray:
    return log_softmax(h @ model.w_out + model.b_out)


def decode_init(
    model: CaptionModelParams, inputs: EmbeddingInputs
) -> tuple[DecodeState, np.ndarray]:
    """Consume the conditioning input and the start marker.

    Returns the decoder state and the log-probability row for the first
    generated token.
    """
    v = inputs.init_vector(model)
    state = lstm_step(model.decoder, v @ model.w_init + model.b_init, None)
    state = lstm_step(model.decoder, model.w_embed[0], state)
    return DecodeState(*state), _step_log_probs(model, state[0])


def decode_step(
    model: CaptionModelParams, state: DecodeState, token: int
) -> tuple[DecodeState, np.ndarray]:
    """Consume one generated token; returns the next state and log-prob row."""
    if not 0 <= token < model.vocab_size:
        raise ValidationError(f"token {token} outside the vocabulary")
    new_state = lstm_step(model.decoder, model.w_embed[token], (state.h, state.c))
    return DecodeState(*new_state), _step_log_probs(model, new_state[0])


def conditioning_for_record(
    model_mode: ConditioningMode,
    feature: np.ndarray,
    direct_encoding: np.ndarray | None,
    indirect_encoding: np.ndarray | None,
) -> EmbeddingInputs:
    """Pack per-record conditioning vectors for the given mode."""
    return EmbeddingInputs(
        image=np.asarray(feature, dtype=np.float64) if model_mode.use_image else None,
        direct=direct_encoding if model_mode.use_direct else None,
        indirect=indirect_encoding if model_mode.use_indirect else None,
    )


def encode_reference(vocabulary: Vocabulary, tokens: Sequence[str]) -> list[int]:
    """Marker-wrapped indices for an already-tokenized reference."""
    return vocabulary.encode_tokens(tokens)
