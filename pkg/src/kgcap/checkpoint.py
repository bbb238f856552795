"""Versioned binary checkpoints for trained models.

Layout: the ASCII magic ``KGCAP1`` and a newline, an 8-byte little-endian
header length, the UTF-8 JSON header, then the raw tensor payload. The header
records the container kind, model dimensions, the vocabulary in index order,
and for every tensor its name, shape, and byte offset into the payload.
Tensors are little-endian IEEE-754 doubles in row-major order, so a file is
bit-reproducible for identical parameters and loads to identical arrays.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .caption_model import CaptionModelParams, ModelDims, resolve_mode
from .errors import ValidationError
from .lstm import LstmParams
from .term_encoder import TermEncoderParams
from .vocab import Vocabulary

MAGIC = b"KGCAP1"
FORMAT_VERSION = 1

CAPTION_MODEL_KIND = "caption_model"
TERM_ENCODER_KIND = "term_encoder"


def _atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write via a temp file and rename so readers never see partial files."""
    path = Path(path)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def _pack(kind: str, meta: dict, tensors: Sequence[tuple[str, np.ndarray]]) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for name, array in tensors:
        data = np.ascontiguousarray(array, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(array.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "magic": MAGIC.decode("ascii"),
        "version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return b"".join(
        [MAGIC, b"\n", struct.pack("<Q", len(header_bytes)), header_bytes, *blobs]
    )


def _unpack(payload: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    prefix_len = len(MAGIC) + 1 + 8
    if len(payload) < prefix_len or payload[: len(MAGIC)] != MAGIC:
        raise ValidationError("not a recognized checkpoint (bad magic)")
    (header_len,) = struct.unpack("<Q", payload[len(MAGIC) + 1 : prefix_len])
    header = json.loads(payload[prefix_len : prefix_len + header_len].decode("utf-8"))
    if header.get("magic") != MAGIC.decode("ascii") or header.get("version") != FORMAT_VERSION:
        raise ValidationError("checkpoint header magic/version mismatch")
    body = payload[prefix_len + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = 8 * int(np.prod(shape)) if shape else 8
        raw = body[entry["offset"] : entry["offset"] + size]
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header["kind"], header["meta"], tensors


def save_raw(
    path: str | Path, kind: str, meta: dict, tensors: Sequence[tuple[str, np.ndarray]]
) -> None:
    _atomic_write_bytes(path, _pack(kind, meta, tensors))


def load_raw(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    return _unpack(Path(path).read_bytes())


# -- term encoder -----------------------------------------------------------------


def _encoder_meta(params: TermEncoderParams) -> dict:
    return {
        "vector_dim": params.vector_dim,
        "encoder_embed": params.encoder.input_size,
        "encoder_hidden": params.encoder.hidden_size,
        "feature_dim": params.feature_dim,
        "head_embed": params.decoder.input_size,
        "head_hidden": params.decoder.hidden_size,
        "vocab_size": params.vocab_size,
    }


def save_term_encoder(path: str | Path, params: TermEncoderParams, vocabulary: Vocabulary) -> None:
    meta = _encoder_meta(params)
    meta["vocabulary"] = vocabulary.words()
    save_raw(path, TERM_ENCODER_KIND, meta, params.named_arrays())


def _encoder_from_tensors(tensors: dict[str, np.ndarray], prefix: str = "") -> TermEncoderParams:
    def t(name: str) -> np.ndarray:
        key = prefix + name
        if key not in tensors:
            raise ValidationError(f"checkpoint is missing tensor {key!r}")
        return tensors[key]

    return TermEncoderParams(
        w_term=t("w_term"),
        encoder=LstmParams(t("encoder.w_x"), t("encoder.w_h"), t("encoder.b")),
        r_empty=t("r_empty"),
        r_unk=t("r_unk"),
        w_embed=t("w_embed"),
        decoder=LstmParams(t("decoder.w_x"), t("decoder.w_h"), t("decoder.b")),
        w_out=t("w_out"),
        b_out=t("b_out"),
        w_init=t("w_init"),
        b_init=t("b_init"),
    )


def load_term_encoder(path: str | Path) -> tuple[TermEncoderParams, Vocabulary]:
    kind, meta, tensors = load_raw(path)
    if kind != TERM_ENCODER_KIND:
        raise ValidationError(f"expected a {TERM_ENCODER_KIND} checkpoint, found {kind!r}")
    vocabulary = Vocabulary.from_words(meta["vocabulary"])
    return _encoder_from_tensors(tensors), vocabulary


# -- caption model ------------------------------------------------------------------


def save_caption_model(
    path: str | Path,
    params: CaptionModelParams,
    vocabulary: Vocabulary,
    encoder_direct: TermEncoderParams | None = None,
    encoder_indirect: TermEncoderParams | None = None,
) -> None:
    """One self-contained file: decoder weights plus any frozen term encoders."""
    meta = {
        "mode": params.mode.name,
        "feature_dim": params.feature_dim,
        "direct_dim": params.direct_dim,
        "indirect_dim": params.indirect_dim,
        "embed_size": params.embed_size,
        "hidden_size": params.hidden_size,
        "vocab_size": params.vocab_size,
        "vocabulary": vocabulary.words(),
        "has_direct_encoder": encoder_direct is not None,
        "has_indirect_encoder": encoder_indirect is not None,
    }
    tensors = list(params.named_arrays())
    if encoder_direct is not None:
        meta["direct_encoder"] = _encoder_meta(encoder_direct)
        tensors += [(f"direct_encoder.{n}", a) for n, a in encoder_direct.named_arrays()]
    if encoder_indirect is not None:
        meta["indirect_encoder"] = _encoder_meta(encoder_indirect)
        tensors += [(f"indirect_encoder.{n}", a) for n, a in encoder_indirect.named_arrays()]
    save_raw(path, CAPTION_MODEL_KIND, meta, tensors)


def load_caption_model(
    path: str | Path,
) -> tuple[CaptionModelParams, Vocabulary, TermEncoderParams | None, TermEncoderParams | None]:
    kind, meta, tensors = load_raw(path)
    if kind != CAPTION_MODEL_KIND:
        raise ValidationError(f"expected a {CAPTION_MODEL_KIND} checkpoint, found {kind!r}")

    def t(name: str) -> np.ndarray:
        if name not in tensors:
            raise ValidationError(f"checkpoint is missing tensor {name!r}")
        return tensors[name]

    params = CaptionModelParams(
        mode=resolve_mode(meta["mode"]),
        feature_dim=int(meta["feature_dim"]),
        direct_dim=int(meta["direct_dim"]),
        indirect_dim=int(meta["indirect_dim"]),
        w_embed=t("w_embed"),
        decoder=LstmParams(t("decoder.w_x"), t("decoder.w_h"), t("decoder.b")),
        w_out=t("w_out"),
        b_out=t("b_out"),
        w_init=t("w_init"),
        b_init=t("b_init"),
    )
    vocabulary = Vocabulary.from_words(meta["vocabulary"])
    encoder_direct = (
        _encoder_from_tensors(tensors, "direct_encoder.") if meta["has_direct_encoder"] else None
    )
    encoder_indirect = (
        _encoder_from_tensors(tensors, "indirect_encoder.")
        if meta["has_indirect_encoder"]
        else None
    )
    return params, vocabulary, encoder_direct, encoder_indirect
