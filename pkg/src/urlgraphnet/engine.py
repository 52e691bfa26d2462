"""Dense 2-D tensors with taped reverse-mode differentiation.

Every value is a row-major float64 matrix.  A :class:`Tape` records each
operation as it runs (define-by-run); :meth:`Tape.backward` replays the
records in reverse, accumulating gradients across fan-out.  A tape and its
tensors form one single-threaded unit of work; distinct tapes are
independent.

Broadcasting is deliberately restricted: the only shape coercion allowed
is adding a 1xN bias row to an MxN matrix.  Everything else must match
exactly or the op raises :class:`ShapeMismatchError`.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .errors import NotScalarLossError, ShapeMismatchError

Array = np.ndarray


class Tensor:
    """A 2-D float64 array plus the tape node that produced it.

    1-D inputs are promoted to a single row.  ``node`` is None for tensors
    created outside a recording tape.
    """

    __slots__ = ("data", "node")

    def __init__(self, data, node: int | None = None) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"tensors are 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.node = node

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, node={self.node})"


def _sigmoid(x: Array) -> Array:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tape:
    """Recorded operation sequence enabling reverse-mode differentiation.

    With ``record=False`` the same ops run (and validate shapes) without
    recording, for inference paths that need no gradients.
    """

    def __init__(self, record: bool = True) -> None:
        self.record = record
        self._next_node = 0
        # Each record: (output node, input nodes, backward rule).  The rule
        # maps the output gradient to one gradient (or None) per input.
        self._records: list[tuple[int, tuple[int | None, ...], Callable[[Array], Sequence[Array | None]]]] = []
        self._param_nodes: list[tuple[int, tuple[int, int]]] = []

    # ------------------------------------------------------------------
    # Node creation

    def _new_node(self) -> int:
        node = self._next_node
        self._next_node += 1
        return node

    def _emit(self, out_data: Array, inputs: Sequence[Tensor],
              backward: Callable[[Array], Sequence[Array | None]]) -> Tensor:
        if not self.record:
            return Tensor(out_data)
        out = Tensor(out_data, self._new_node())
        self._records.append((out.node, tuple(t.node for t in inputs), backward))
        return out

    def leaf(self, data) -> Tensor:
        """Register a tracked parameter; backward always reports its gradient."""
        t = Tensor(data, self._new_node() if self.record else None)
        if self.record:
            self._param_nodes.append((t.node, t.shape))
        return t

    def input(self, data) -> Tensor:
        """Wrap an input or constant; gradients may flow but are not reported."""
        return Tensor(data, self._new_node() if self.record else None)

    # ------------------------------------------------------------------
    # Core operations

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
        ad, bd = a.data, b.data

        def backward(g: Array):
            return g @ bd.T, ad.T @ g

        return self._emit(ad @ bd, (a, b), backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; b may also be a 1xN bias row against MxN a."""
        if a.shape == b.shape:
            def backward(g: Array):
                return g, g
        elif b.shape == (1, a.shape[1]):
            def backward(g: Array):
                return g, g.sum(axis=0, keepdims=True)
        else:
            raise ShapeMismatchError(f"add: {a.shape} + {b.shape}")
        return self._emit(a.data + b.data, (a, b), backward)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatchError(f"sub: {a.shape} - {b.shape}")

        def backward(g: Array):
            return g, -g

        return self._emit(a.data - b.data, (a, b), backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatchError(f"mul: {a.shape} * {b.shape}")
        ad, bd = a.data, b.data

        def backward(g: Array):
            return g * bd, g * ad

        return self._emit(ad * bd, (a, b), backward)

    def div(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatchError(f"div: {a.shape} / {b.shape}")
        ad, bd = a.data, b.data
        out = ad / bd

        def backward(g: Array):
            return g / bd, -g * out / bd

        return self._emit(out, (a, b), backward)

    def smul(self, x: Tensor, c: float) -> Tensor:
        c = float(c)

        def backward(g: Array):
            return (g * c,)

        return self._emit(x.data * c, (x,), backward)

    def scale_rows(self, x: Tensor, s: Tensor) -> Tensor:
        """Multiply row i of x by scalar s[i]; s must be Mx1."""
        if s.shape != (x.shape[0], 1):
            raise ShapeMismatchError(f"scale_rows: {x.shape} by {s.shape}")
        xd, sd = x.data, s.data

        def backward(g: Array):
            return g * sd, (g * xd).sum(axis=1, keepdims=True)

        return self._emit(xd * sd, (x, s), backward)

    # ------------------------------------------------------------------
    # Activations

    def relu(self, x: Tensor) -> Tensor:
        xd = x.data
        mask = xd > 0.0

        def backward(g: Array):
            return (g * mask,)

        return self._emit(np.where(mask, xd, 0.0), (x,), backward)

    def leaky_relu(self, x: Tensor, slope: float = 0.2) -> Tensor:
        """LeakyReLU; the derivative at exactly 0 is the slope."""
        xd = x.data
        pos = xd > 0.0

        def backward(g: Array):
            return (g * np.where(pos, 1.0, slope),)

        return self._emit(np.where(pos, xd, slope * xd), (x,), backward)

    def sigmoid(self, x: Tensor) -> Tensor:
        out = _sigmoid(x.data)

        def backward(g: Array):
            return (g * out * (1.0 - out),)

        return self._emit(out, (x,), backward)

    def tanh(self, x: Tensor) -> Tensor:
        out = np.tanh(x.data)

        def backward(g: Array):
            return (g * (1.0 - out * out),)

        return self._emit(out, (x,), backward)

    def activation(self, x: Tensor, kind: str, slope: float = 0.2) -> Tensor:
        """Dispatch on kind in {relu, leaky_relu, sigmoid, tanh}."""
        if kind == "relu":
            return self.relu(x)
        if kind == "leaky_relu":
            return self.leaky_relu(x, slope)
        if kind == "sigmoid":
            return self.sigmoid(x)
        if kind == "tanh":
            return self.tanh(x)
        raise ValueError(f"unknown activation kind {kind!r}")

    # ------------------------------------------------------------------
    # Row-wise softmax family

    def softmax_rows(self, x: Tensor) -> Tensor:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=1, keepdims=True)

        def backward(g: Array):
            dot = (g * out).sum(axis=1, keepdims=True)
            return (out * (g - dot),)

        return self._emit(out, (x,), backward)

    def log_softmax_rows(self, x: Tensor) -> Tensor:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        out = shifted - lse
        soft = np.exp(out)

        def backward(g: Array):
            return (g - soft * g.sum(axis=1, keepdims=True),)

        return self._emit(out, (x,), backward)

    # ------------------------------------------------------------------
    # Reductions, reshuffles, indexing

    def sum(self, x: Tensor) -> Tensor:
        shape = x.shape

        def backward(g: Array):
            return (np.full(shape, g[0, 0]),)

        return self._emit(np.array([[x.data.sum()]]), (x,), backward)

    def mean_rows(self, x: Tensor) -> Tensor:
        """Column-wise mean: (M, N) -> (1, N)."""
        m = x.shape[0]

        def backward(g: Array):
            return (np.repeat(g / m, m, axis=0),)

        return self._emit(x.data.mean(axis=0, keepdims=True), (x,), backward)

    def concat_cols(self, parts: Sequence[Tensor]) -> Tensor:
        rows = parts[0].shape[0]
        for p in parts:
            if p.shape[0] != rows:
                raise ShapeMismatchError("concat_cols: row counts differ")
        widths = [p.shape[1] for p in parts]
        offsets = np.cumsum([0] + widths)

        def backward(g: Array):
            return [g[:, offsets[i]:offsets[i + 1]] for i in range(len(widths))]

        return self._emit(np.hstack([p.data for p in parts]), tuple(parts), backward)

    def rows(self, x: Tensor, start: int, stop: int) -> Tensor:
        shape = x.shape
        if not 0 <= start < stop <= shape[0]:
            raise ShapeMismatchError(f"rows: [{start}:{stop}] of {shape}")

        def backward(g: Array):
            dx = np.zeros(shape)
            dx[start:stop] = g
            return (dx,)

        return self._emit(x.data[start:stop].copy(), (x,), backward)

    def pick(self, x: Tensor, row: int, col: int) -> Tensor:
        shape = x.shape
        if not (0 <= row < shape[0] and 0 <= col < shape[1]):
            raise ShapeMismatchError(f"pick: ({row},{col}) of {shape}")

        def backward(g: Array):
            dx = np.zeros(shape)
            dx[row, col] = g[0, 0]
            return (dx,)

        return self._emit(np.array([[x.data[row, col]]]), (x,), backward)

    def gather_rows(self, x: Tensor, index: Array) -> Tensor:
        """Select rows x[index]; backward scatter-adds into the sources."""
        index = np.asarray(index, dtype=np.int64)
        shape = x.shape

        def backward(g: Array):
            dx = np.zeros(shape)
            np.add.at(dx, index, g)
            return (dx,)

        return self._emit(x.data[index], (x,), backward)

    def segment_sum(self, x: Tensor, segments: Array, num_segments: int) -> Tensor:
        """Sum rows of x into ``num_segments`` buckets given per-row ids."""
        segments = np.asarray(segments, dtype=np.int64)
        if segments.shape[0] != x.shape[0]:
            raise ShapeMismatchError("segment_sum: one segment id per row required")
        out = np.zeros((num_segments, x.shape[1]))
        np.add.at(out, segments, x.data)

        def backward(g: Array):
            return (g[segments],)

        return self._emit(out, (x,), backward)

    def segment_softmax(self, logits: Tensor, segments: Array, num_segments: int) -> Tensor:
        """Softmax of an Ex1 logit column within each segment.

        Uses per-segment max subtraction for stability; rows sharing a
        segment id sum to 1 in the output.
        """
        if logits.shape[1] != 1:
            raise ShapeMismatchError(f"segment_softmax expects Ex1 logits, got {logits.shape}")
        segments = np.asarray(segments, dtype=np.int64)
        if segments.shape[0] != logits.shape[0]:
            raise ShapeMismatchError("segment_softmax: one segment id per row required")
        col = logits.data[:, 0]
        seg_max = np.full(num_segments, -np.inf)
        np.maximum.at(seg_max, segments, col)
        e = np.exp(col - seg_max[segments])
        denom = np.zeros(num_segments)
        np.add.at(denom, segments, e)
        alpha = (e / denom[segments]).reshape(-1, 1)

        def backward(g: Array):
            weighted = np.zeros(num_segments)
            np.add.at(weighted, segments, (alpha * g)[:, 0])
            return (alpha * (g - weighted[segments].reshape(-1, 1)),)

        return self._emit(alpha, (logits,), backward)

    def custom_op(self, inputs: Sequence[Tensor], out_data: Array,
                  backward: Callable[[Array], Sequence[Array | None]]) -> Tensor:
        """Record an externally computed op with its own backward rule."""
        return self._emit(out_data, tuple(inputs), backward)

    # ------------------------------------------------------------------
    # Reverse sweep

    def backward(self, loss: Tensor) -> dict[int, Array]:
        """Gradients of a scalar loss for every tracked parameter node.

        Untouched parameters get zero gradients.  The returned map also
        contains entries for interior nodes reached by the sweep.
        """
        if loss.data.shape != (1, 1):
            raise NotScalarLossError(f"loss must be 1x1, got {loss.data.shape}")
        if loss.node is None:
            raise NotScalarLossError("loss was computed outside a recording tape")
        grads: dict[int, Array] = {loss.node: np.ones((1, 1))}
        for out_node, in_nodes, rule in reversed(self._records):
            g = grads.get(out_node)
            if g is None:
                continue
            for node, gi in zip(in_nodes, rule(g)):
                if node is None or gi is None:
                    continue
                acc = grads.get(node)
                grads[node] = gi if acc is None else acc + gi
        for node, shape in self._param_nodes:
            if node not in grads:
                grads[node] = np.zeros(shape)
        return grads


def grad_check(
    build: Callable[[Tape, dict[str, Tensor]], Tensor],
    params: dict[str, Array],
    eps: float = 1e-6,
    coords_per_tensor: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error of tape gradients against central differences.

    ``build`` constructs the scalar loss from a tape and leaf tensors named
    like ``params``.  Every coordinate is probed unless
    ``coords_per_tensor`` caps the (seeded, uniform) sample per tensor.
    Relative error per coordinate is |analytic - numeric| divided by
    max(1e-8, |analytic| + |numeric|).
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError("eps must be in (0, 1e-2]")
    work = {name: np.array(a, dtype=np.float64) for name, a in params.items()}

    tape = Tape()
    leaves = {name: tape.leaf(a) for name, a in work.items()}
    loss = build(tape, leaves)
    gmap = tape.backward(loss)
    analytic = {name: gmap[leaves[name].node] for name in work}

    def value() -> float:
        t = Tape(record=False)
        lv = {name: t.leaf(a) for name, a in work.items()}
        return float(build(t, lv).data[0, 0])

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in work.items():
        flat = arr.reshape(-1)
        n = flat.size
        if coords_per_tensor is None or coords_per_tensor >= n:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=coords_per_tensor, replace=False)
        ga = analytic[name].reshape(-1)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            fp = value()
            flat[k] = orig - eps
            fm = value()
            flat[k] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = ga[k]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
