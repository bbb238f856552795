"""A single-layer LSTM with hand-written forward and backward passes.

The cell is the standard formulation: sigmoid input/forget/output gates, tanh
candidate, multiplicative memory update. Weights for the four gates are packed
column-wise into one input matrix and one recurrent matrix in the fixed block
order [input, forget, candidate, output]; the backward pass returns exact
gradients for every parameter and for the step inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import NumericError, ValidationError

INIT_SCALE = 0.08  # parameters start uniform in [-INIT_SCALE, INIT_SCALE]


@dataclass
class LstmParams:
    """Packed parameters: w_x (input, 4H), w_h (H, 4H), b (4H,)."""

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    def named_arrays(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        return [(f"{prefix}w_x", self.w_x), (f"{prefix}w_h", self.w_h), (f"{prefix}b", self.b)]

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmParams":
        return cls(
            w_x=rng.uniform(-INIT_SCALE, INIT_SCALE, (input_size, 4 * hidden_size)),
            w_h=rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden_size, 4 * hidden_size)),
            b=rng.uniform(-INIT_SCALE, INIT_SCALE, 4 * hidden_size),
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmParams":
        return cls(
            w_x=np.zeros((input_size, 4 * hidden_size)),
            w_h=np.zeros((hidden_size, 4 * hidden_size)),
            b=np.zeros(4 * hidden_size),
        )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, stabilized by subtracting the row maximum."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _gate_blocks(z: np.ndarray, hidden: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    i = _sigmoid(z[0 * hidden : 1 * hidden])
    f = _sigmoid(z[1 * hidden : 2 * hidden])
    g = np.tanh(z[2 * hidden : 3 * hidden])
    o = _sigmoid(z[3 * hidden : 4 * hidden])
    return i, f, g, o


def lstm_step(
    params: LstmParams,
    x: np.ndarray,
    state: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One cell update; ``state`` is (h, c) and defaults to zeros.

    Returns the new (h, c). Inputs must be finite and match the parameter
    shapes.
    """
    x = np.asarray(x, dtype=np.float64)
    hidden = params.hidden_size
    if x.shape != (params.input_size,):
        raise ValidationError(
            f"input has shape {x.shape}, expected ({params.input_size},)"
        )
    if state is None:
        h = np.zeros(hidden)
        c = np.zeros(hidden)
    else:
        h, c = (np.asarray(s, dtype=np.float64) for s in state)
        if h.shape != (hidden,) or c.shape != (hidden,):
            raise ValidationError(f"state shapes {h.shape}, {c.shape} do not match hidden size {hidden}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("non-finite value in cell input or state")

    z = x @ params.w_x + h @ params.w_h + params.b
    i, f, g, o = _gate_blocks(z, hidden)
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


@dataclass
class LstmTrace:
    """Per-step values cached by the forward pass for the backward pass."""

    xs: np.ndarray      # (T, input)
    hs: np.ndarray      # (T, H) outputs per step
    cs: np.ndarray      # (T, H)
    gates: np.ndarray   # (T, 4H) post-activation [i, f, g, o]
    tanh_c: np.ndarray  # (T, H) tanh of the updated memory


def lstm_forward(params: LstmParams, xs: np.ndarray) -> LstmTrace:
    """Run the cell over a sequence from the zero state, caching every step."""
    xs = np.asarray(xs, dtype=np.float64)
    steps = xs.shape[0]
    hidden = params.hidden_size
    trace = LstmTrace(
        xs=xs,
        hs=np.zeros((steps, hidden)),
        cs=np.zeros((steps, hidden)),
        gates=np.zeros((steps, 4 * hidden)),
        tanh_c=np.zeros((steps, hidden)),
    )
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in range(steps):
        z = xs[t] @ params.w_x + h @ params.w_h + params.b
        i, f, g, o = _gate_blocks(z, hidden)
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        trace.gates[t] = np.concatenate([i, f, g, o])
        trace.cs[t] = c
        trace.tanh_c[t] = tc
        trace.hs[t] = h
    return trace


def lstm_backward(
    params: LstmParams, trace: LstmTrace, dh_out: np.ndarray
) -> tuple[LstmParams, np.ndarray]:
    """Backpropagate through a traced forward run.

    ``dh_out[t]`` is the loss gradient flowing into h_t from outside the
    recurrence (e.g. from an output head). Returns parameter gradients packed
    like LstmParams and the gradient with respect to each step input.
    """
    steps, hidden = trace.hs.shape
    grads = LstmParams.zeros(params.input_size, hidden)
    dxs = np.zeros_like(trace.xs)
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        i = trace.gates[t, 0 * hidden : 1 * hidden]
        f = trace.gates[t, 1 * hidden : 2 * hidden]
        g = trace.gates[t, 2 * hidden : 3 * hidden]
        o = trace.gates[t, 3 * hidden : 4 * hidden]
        tc = trace.tanh_c[t]
        c_prev = trace.cs[t - 1] if t > 0 else np.zeros(hidden)
        h_prev = trace.hs[t - 1] if t > 0 else np.zeros(hidden)

        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ]
        )
        grads.w_x += np.outer(trace.xs[t], dz)
        grads.w_h += np.outer(h_prev, dz)
        grads.b += dz
        dxs[t] = dz @ params.w_x.T
        dh_next = dz @ params.w_h.T
        dc_next = dc * f
    return grads, dxs
