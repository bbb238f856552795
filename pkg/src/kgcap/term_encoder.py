"""Sequence encoder that turns a ranked term list into a fixed-width vector.

The encoder embeds each term's (retrofitted) vector through a learned matrix
and runs an LSTM over the sequence in rank order; the final hidden state is
the encoding. Terms with no stored vector fall back to a learned unknown-term
vector, and an empty list is encoded as a single learned empty-marker vector.

Pretraining attaches a disposable captioning head: the encoding is
concatenated with the image feature, projected, and fed as the first input of
a second LSTM trained to emit the reference caption. Only the embedding
matrix, the two LSTMs, and the head's projections carry parameters, and all
of their gradients are computed analytically here. After pretraining the head
is dropped and the encoder half is copied wherever term sets need encoding.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .lstm import INIT_SCALE, LstmParams, log_softmax, lstm_backward, lstm_forward
from .retrofit import VectorStore


@dataclass
class TermEncoderParams:
    """Encoder tensors plus the pretraining head.

    ``w_term`` maps stored term vectors into the encoder LSTM; ``r_empty`` and
    ``r_unk`` are learned stand-ins for the empty list and for terms missing
    from the store. The remaining tensors form the pretraining caption head.
    """

    w_term: np.ndarray    # (vector dim, encoder input)
    encoder: LstmParams   # the reusable half
    r_empty: np.ndarray   # (vector dim,)
    r_unk: np.ndarray     # (vector dim,)
    w_embed: np.ndarray   # (vocab, head embed)
    decoder: LstmParams   # pretraining caption head
    w_out: np.ndarray     # (head hidden, vocab)
    b_out: np.ndarray
    w_init: np.ndarray    # (feature dim + encoder hidden, head embed)
    b_init: np.ndarray

    @property
    def vector_dim(self) -> int:
        return self.w_term.shape[0]

    @property
    def encoding_dim(self) -> int:
        return self.encoder.hidden_size

    @property
    def feature_dim(self) -> int:
        return self.w_init.shape[0] - self.encoding_dim

    @property
    def vocab_size(self) -> int:
        return self.w_embed.shape[0]

    @property
    def parameter_count(self) -> int:
        return sum(int(a.size) for _, a in self.named_arrays())

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("w_term", self.w_term),
            *self.encoder.named_arrays("encoder."),
            ("r_empty", self.r_empty),
            ("r_unk", self.r_unk),
            ("w_embed", self.w_embed),
            *self.decoder.named_arrays("decoder."),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
            ("w_init", self.w_init),
            ("b_init", self.b_init),
        ]


def init_term_encoder(
    vector_dim: int,
    encoder_embed: int,
    encoder_hidden: int,
    feature_dim: int,
    head_embed: int,
    head_hidden: int,
    vocab_size: int,
    rng: np.random.Generator,
) -> TermEncoderParams:
    uniform = lambda *shape: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
    return TermEncoderParams(
        w_term=uniform(vector_dim, encoder_embed),
        encoder=LstmParams.init(encoder_embed, encoder_hidden, rng),
        r_empty=uniform(vector_dim),
        r_unk=uniform(vector_dim),
        w_embed=uniform(vocab_size, head_embed),
        decoder=LstmParams.init(head_embed, head_hidden, rng),
        w_out=uniform(head_hidden, vocab_size),
        b_out=uniform(vocab_size),
        w_init=uniform(feature_dim + encoder_hidden, head_embed),
        b_init=uniform(head_embed),
    )


def zeros_like_encoder(params: TermEncoderParams) -> TermEncoderParams:
    return TermEncoderParams(
        w_term=np.zeros_like(params.w_term),
        encoder=LstmParams.zeros(params.encoder.input_size, params.encoder.hidden_size),
        r_empty=np.zeros_like(params.r_empty),
        r_unk=np.zeros_like(params.r_unk),
        w_embed=np.zeros_like(params.w_embed),
        decoder=LstmParams.zeros(params.decoder.input_size, params.decoder.hidden_size),
        w_out=np.zeros_like(params.w_out),
        b_out=np.zeros_like(params.b_out),
        w_init=np.zeros_like(params.w_init),
        b_init=np.zeros_like(params.b_init),
    )


def clone_encoder(params: TermEncoderParams) -> TermEncoderParams:
    """Independent copy, e.g. one per term set the pipeline encodes."""
    return copy.deepcopy(params)


# -- encoding -----------------------------------------------------------------


def _term_rows(
    params: TermEncoderParams, terms: Sequence[str], store: VectorStore
) -> tuple[np.ndarray, list[str]]:
    """Stack input vectors for the term sequence.

    Returns the (L, vector_dim) matrix and a per-row source tag ("store",
    "unk", or "empty") so the backward pass can route gradients into the
    learned stand-in vectors.
    """
    if not terms:
        return np.stack([params.r_empty]), ["empty"]
    rows = []
    sources = []
    for term in terms:
        vec = store.get(term)
        if vec is None:
            rows.append(params.r_unk)
            sources.append("unk")
        else:
            if vec.shape != (params.vector_dim,):
                raise ValidationError(
                    f"vector for {term!r} has shape {vec.shape}, expected ({params.vector_dim},)"
                )
            rows.append(vec)
            sources.append("store")
    return np.stack(rows), sources


def encode_terms(
    params: TermEncoderParams, terms: Sequence[str], store: VectorStore
) -> np.ndarray:
    """Fixed-width encoding of a ranked term list (final LSTM hidden state)."""
    rows, _ = _term_rows(params, terms, store)
    trace = lstm_forward(params.encoder, rows @ params.w_term)
    return trace.hs[-1].copy()


# -- pretraining head -----------------------------------------------------------


@dataclass(frozen=True)
class PretrainExample:
    """One pretraining pair: ranked terms + image feature -> reference caption."""

    terms: tuple[str, ...]
    feature: np.ndarray
    caption: tuple[int, ...]


def _check_caption(params: TermEncoderParams, caption: Sequence[int]) -> None:
    if len(caption) < 2 or caption[0] != 0 or caption[-1] != 1:
        raise ValidationError("caption must be marker-wrapped")
    if any(not 0 <= t < params.vocab_size for t in caption):
        raise ValidationError("caption index outside the vocabulary")


def pretrain_forward(
    params: TermEncoderParams, example: PretrainExample, store: VectorStore
) -> np.ndarray:
    """Probability rows the head assigns to caption positions 1..N."""
    _, _, _, _, log_probs = _pretrain_trace(params, example, store)
    return np.exp(log_probs)


def _pretrain_trace(params: TermEncoderParams, example: PretrainExample, store: VectorStore):
    _check_caption(params, example.caption)
    feature = np.asarray(example.feature, dtype=np.float64)
    if feature.shape != (params.feature_dim,):
        raise ValidationError(
            f"feature has shape {feature.shape}, expected ({params.feature_dim},)"
        )
    rows, sources = _term_rows(params, example.terms, store)
    enc_trace = lstm_forward(params.encoder, rows @ params.w_term)
    joined = np.concatenate([feature, enc_trace.hs[-1]])

    caption = example.caption
    xs = np.zeros((len(caption), params.decoder.input_size))
    xs[0] = joined @ params.w_init + params.b_init
    xs[1:] = params.w_embed[np.asarray(caption[:-1], dtype=np.intp)]
    head_trace = lstm_forward(params.decoder, xs)
    log_probs = log_softmax(head_trace.hs[1:] @ params.w_out + params.b_out)
    return (rows, sources, enc_trace, (joined, head_trace), log_probs)


def pretrain_loss(
    params: TermEncoderParams, batch: Sequence[PretrainExample], store: VectorStore
) -> float:
    """Mean per-caption negative log-likelihood of the pretraining head."""
    if not batch:
        raise ValidationError("empty batch")
    total = 0.0
    for example in batch:
        _, _, _, _, log_probs = _pretrain_trace(params, example, store)
        targets = np.asarray(example.caption[1:], dtype=np.intp)
        total -= float(log_probs[np.arange(len(targets)), targets].sum())
    return total / len(batch)


def pretrain_loss_and_gradients(
    params: TermEncoderParams, batch: Sequence[PretrainExample], store: VectorStore
) -> tuple[float, TermEncoderParams]:
    """Loss plus exact gradients for every tensor, including the stand-ins."""
    if not batch:
        raise ValidationError("empty batch")
    grads = zeros_like_encoder(params)
    share = 1.0 / len(batch)
    total = 0.0
    for example in batch:
        rows, sources, enc_trace, (joined, head_trace), log_probs = _pretrain_trace(
            params, example, store
        )
        caption = example.caption
        targets = np.asarray(caption[1:], dtype=np.intp)
        scored = len(targets)
        total -= float(log_probs[np.arange(scored), targets].sum())

        d_logits = np.exp(log_probs)
        d_logits[np.arange(scored), targets] -= 1.0
        d_logits *= share
        grads.w_out += head_trace.hs[1:].T @ d_logits
        grads.b_out += d_logits.sum(axis=0)

        dh_head = np.zeros_like(head_trace.hs)
        dh_head[1:] = d_logits @ params.w_out.T
        head_grads, dxs = lstm_backward(params.decoder, head_trace, dh_head)
        grads.decoder.w_x += head_grads.w_x
        grads.decoder.w_h += head_grads.w_h
        grads.decoder.b += head_grads.b
        np.add.at(grads.w_embed, np.asarray(caption[:-1], dtype=np.intp), dxs[1:])
        grads.w_init += np.outer(joined, dxs[0])
        grads.b_init += dxs[0]

        d_joined = dxs[0] @ params.w_init.T
        dh_enc = np.zeros_like(enc_trace.hs)
        dh_enc[-1] = d_joined[params.feature_dim :]
        enc_grads, d_enc_inputs = lstm_backward(params.encoder, enc_trace, dh_enc)
        grads.encoder.w_x += enc_grads.w_x
        grads.encoder.w_h += enc_grads.w_h
        grads.encoder.b += enc_grads.b
        grads.w_term += rows.T @ d_enc_inputs
        d_rows = d_enc_inputs @ params.w_term.T
        for row_index, source in enumerate(sources):
            if source == "unk":
                grads.r_unk += d_rows[row_index]
            elif source == "empty":
                grads.r_empty += d_rows[row_index]

    return total / len(batch), grads
