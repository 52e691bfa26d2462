"""Graph aggregation, graph attention, and LSTM layers over the tensor engine.

All three stages treat the URL graph as static: features are per node,
edges are directed (src, dst) pairs, and self-loops are always inserted
before aggregation or attention so isolated nodes stay well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .engine import Tape, Tensor
from .errors import ShapeMismatchError

LEAKY_SLOPE = 0.2


@dataclass
class GnnLayerParams:
    """Aggregation layer weights: w is (F_in, F_out), b is (1, F_out)."""

    w: Tensor
    b: Tensor


@dataclass
class GatHeadParams:
    """One attention head: w is (F_in, F_head), a is (2*F_head, 1)."""

    w: Tensor
    a: Tensor


@dataclass
class GatLayerParams:
    heads: list[GatHeadParams]
    concat: bool = True


@dataclass
class LstmLayerParams:
    """Per-gate weights of one LSTM layer; gate order is f, i, o, c.

    w_* are (D_in, H), u_* are (H, H), b_* are (1, H).
    """

    w_f: Tensor
    w_i: Tensor
    w_o: Tensor
    w_c: Tensor
    u_f: Tensor
    u_i: Tensor
    u_o: Tensor
    u_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor


@dataclass
class LstmParams:
    layers: list[LstmLayerParams]


def with_self_loops(edges: np.ndarray, num_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Edge arrays (src, dst) with one self-loop per node, sorted by (dst, src).

    Sorting fixes the per-node summation order, which keeps forward passes
    reproducible bit for bit.
    """
    loops = np.arange(num_nodes, dtype=np.int64)
    if edges.size:
        src = np.concatenate([edges[:, 0], loops])
        dst = np.concatenate([edges[:, 1], loops])
    else:
        src = loops
        dst = loops.copy()
    order = np.lexsort((src, dst))
    return src[order], dst[order]


def gnn_forward(
    tape: Tape,
    features: Tensor,
    edges: np.ndarray,
    params: GnnLayerParams,
    mode: str = "sym_norm",
) -> Tensor:
    """Degree-normalized neighborhood aggregation with ReLU.

    sym_norm weights neighbor j of node i by 1/sqrt(d_i * d_j); mean
    weights it by 1/d_i.  Degrees count the inserted self-loop.
    """
    num_nodes = features.shape[0]
    if params.w.shape[0] != features.shape[1]:
        raise ShapeMismatchError(
            f"gnn_forward: features {features.shape} vs weight {params.w.shape}"
        )
    src, dst = with_self_loops(edges, num_nodes)
    degree = np.bincount(dst, minlength=num_nodes).astype(np.float64)
    if mode == "sym_norm":
        coeff = 1.0 / np.sqrt(degree[src] * degree[dst])
    elif mode == "mean":
        coeff = 1.0 / degree[dst]
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")

    transformed = tape.matmul(features, params.w)
    messages = tape.scale_rows(
        tape.gather_rows(transformed, src), tape.input(coeff.reshape(-1, 1))
    )
    aggregated = tape.segment_sum(messages, dst, num_nodes)
    return tape.relu(tape.add(aggregated, params.b))


def gat_attention(
    tape: Tape,
    projected: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    num_nodes: int,
    head: GatHeadParams,
) -> Tensor:
    """Per-edge attention weights alpha (Ex1) for one head.

    ``projected`` is features @ head.w.  The first half of the attention
    vector scores the destination (collecting) node, the second half the
    source neighbor; weights normalize over each destination's
    in-neighborhood.
    """
    head_dim = head.w.shape[1]
    if head.a.shape != (2 * head_dim, 1):
        raise ShapeMismatchError(
            f"gat head: attention vector {head.a.shape} vs head width {head_dim}"
        )
    score_dst = tape.matmul(projected, tape.rows(head.a, 0, head_dim))
    score_src = tape.matmul(projected, tape.rows(head.a, head_dim, 2 * head_dim))
    logits = tape.leaky_relu(
        tape.add(tape.gather_rows(score_dst, dst), tape.gather_rows(score_src, src)),
        LEAKY_SLOPE,
    )
    return tape.segment_softmax(logits, dst, num_nodes)


def _gat_head(
    tape: Tape,
    features: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    num_nodes: int,
    head: GatHeadParams,
) -> Tensor:
    projected = tape.matmul(features, head.w)
    alpha = gat_attention(tape, projected, src, dst, num_nodes, head)
    weighted = tape.scale_rows(tape.gather_rows(projected, src), alpha)
    return tape.relu(tape.segment_sum(weighted, dst, num_nodes))


def gat_forward(
    tape: Tape,
    features: Tensor,
    edges: np.ndarray,
    params: GatLayerParams,
) -> Tensor:
    """Multi-head graph attention with ReLU.

    Per head, edge logits are LeakyReLU of the attention form, normalized
    by softmax over each destination's in-neighborhood (self-loop
    included).  Heads are concatenated when ``concat`` else averaged.
    """
    num_nodes = features.shape[0]
    src, dst = with_self_loops(edges, num_nodes)
    outputs = [_gat_head(tape, features, src, dst, num_nodes, h) for h in params.heads]
    if len(outputs) == 1:
        return outputs[0]
    if params.concat:
        return tape.concat_cols(outputs)
    combined = outputs[0]
    for extra in outputs[1:]:
        combined = tape.add(combined, extra)
    return tape.smul(combined, 1.0 / len(outputs))


def lstm_step(
    tape: Tape,
    x_t: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    params: LstmLayerParams,
) -> tuple[Tensor, Tensor]:
    """One LSTM cell update built from engine primitives.

    f = sig(xW_f + hU_f + b_f), i and o likewise, cbar = tanh(xW_c + hU_c
    + b_c), c = f*c_prev + i*cbar, h = o*tanh(c).
    """

    def gate(w: Tensor, u: Tensor, b: Tensor) -> Tensor:
        return tape.add(tape.add(tape.matmul(x_t, w), tape.matmul(h_prev, u)), b)

    f = tape.sigmoid(gate(params.w_f, params.u_f, params.b_f))
    i = tape.sigmoid(gate(params.w_i, params.u_i, params.b_i))
    o = tape.sigmoid(gate(params.w_o, params.u_o, params.b_o))
    cbar = tape.tanh(gate(params.w_c, params.u_c, params.b_c))
    c_t = tape.add(tape.mul(f, c_prev), tape.mul(i, cbar))
    h_t = tape.mul(o, tape.tanh(c_t))
    return h_t, c_t


def _lstm_layer_fused(tape: Tape, x_seq: Tensor, params: LstmLayerParams) -> Tensor:
    """Whole-layer LSTM pass dispatched to the active kernel backend."""
    w = np.hstack([params.w_f.data, params.w_i.data, params.w_o.data, params.w_c.data])
    u = np.hstack([params.u_f.data, params.u_i.data, params.u_o.data, params.u_c.data])
    b = np.hstack([params.b_f.data, params.b_i.data, params.b_o.data, params.b_c.data])
    if x_seq.shape[1] != w.shape[0]:
        raise ShapeMismatchError(f"lstm layer: input {x_seq.shape} vs weight {w.shape}")
    h_seq, cache = kernels.lstm_layer_forward(np.ascontiguousarray(x_seq.data), w, u, b)
    hidden = u.shape[0]

    def backward(g: np.ndarray):
        dx, dw, du, db = kernels.lstm_layer_backward(cache, np.ascontiguousarray(g))
        blocks = [dx]
        for packed in (dw, du, db):
            blocks.extend(packed[:, k * hidden : (k + 1) * hidden] for k in range(4))
        return blocks

    inputs = [
        x_seq,
        params.w_f, params.w_i, params.w_o, params.w_c,
        params.u_f, params.u_i, params.u_o, params.u_c,
        params.b_f, params.b_i, params.b_o, params.b_c,
    ]
    return tape.custom_op(inputs, h_seq, backward)


def lstm_sequence(tape: Tape, seq: Tensor, params: LstmParams) -> Tensor:
    """Run the stacked LSTM over a (T, D) sequence from zero initial state.

    Layer 0 consumes the input sequence; each further layer consumes the
    previous layer's hidden sequence.  Returns the last layer's hidden
    sequence; callers typically keep only the final row.
    """
    out = seq
    for layer in params.layers:
        out = _lstm_layer_fused(tape, out, layer)
    return out


def mean_pool(tape: Tape, features: Tensor) -> Tensor:
    """Column-wise mean over nodes: (L, F) -> (1, F)."""
    return tape.mean_rows(features)


def linear_forward(tape: Tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map x @ w + b."""
    return tape.add(tape.matmul(x, w), b)
