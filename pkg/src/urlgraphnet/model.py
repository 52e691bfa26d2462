"""The GNN-GAT-LSTM URL classifier: assembly, inference, checkpoints.

The pipeline is gnn1 -> gnn2 -> gat1 (4 heads, concatenated) -> gat2
(single head) -> readout (LSTM over the node sequence, or mean pooling)
-> fully connected head -> log-softmax over the four classes.

Parameters live in a flat name -> array mapping with a fixed canonical
order, which makes checkpoints byte-deterministic: identical parameters
always serialize to identical files.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoder import (
    BASE_FEATURES,
    DEFAULT_CHARSET,
    EXTENDED_FEATURES,
    Charset,
    UrlGraph,
    url_to_graph,
)
from .engine import Tape, Tensor
from .errors import (
    EmptyGraphError,
    IncompatibleCheckpointError,
    ShapeMismatchError,
)
from .layers import (
    GatHeadParams,
    GatLayerParams,
    GnnLayerParams,
    LstmLayerParams,
    LstmParams,
    gat_forward,
    gnn_forward,
    linear_forward,
    lstm_sequence,
    mean_pool,
)

CHECKPOINT_MAGIC = b"UGNETCK1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and determinism knobs.

    input_dim selects base (69) or extended (72) node features; hidden is
    the width shared by GAT heads, the LSTM, and the classifier input.
    """

    input_dim: int = BASE_FEATURES
    hidden: int = 64
    gat1_heads: int = 4
    gat2_heads: int = 1
    lstm_layers: int = 2
    classes: int = 4
    aggregation: str = "sym_norm"
    readout: str = "lstm"
    seed: int = 42

    def __post_init__(self) -> None:
        if self.input_dim not in (BASE_FEATURES, EXTENDED_FEATURES):
            raise ValueError(
                f"input_dim must be {BASE_FEATURES} or {EXTENDED_FEATURES},"
                f" got {self.input_dim}"
            )
        if self.classes != 4:
            raise ValueError(f"classifier is fixed at 4 classes, got {self.classes}")
        if self.hidden < 1 or self.gat1_heads < 1 or self.gat2_heads < 1:
            raise ValueError("hidden and head counts must be positive")
        if self.lstm_layers < 1:
            raise ValueError("at least one LSTM layer is required")
        if self.aggregation not in ("sym_norm", "mean"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.readout not in ("lstm", "mean"):
            raise ValueError(f"unknown readout {self.readout!r}")

    @property
    def extended(self) -> bool:
        return self.input_dim == EXTENDED_FEATURES


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Canonical parameter names and shapes, in serialization order."""
    d, h = config.input_dim, config.hidden
    shapes: dict[str, tuple[int, int]] = {
        "gnn1.w": (d, d), "gnn1.b": (1, d),
        "gnn2.w": (d, d), "gnn2.b": (1, d),
    }
    for k in range(config.gat1_heads):
        shapes[f"gat1.h{k}.w"] = (d, h)
        shapes[f"gat1.h{k}.a"] = (2 * h, 1)
    gat2_in = config.gat1_heads * h
    for k in range(config.gat2_heads):
        shapes[f"gat2.h{k}.w"] = (gat2_in, h)
        shapes[f"gat2.h{k}.a"] = (2 * h, 1)
    for layer in range(config.lstm_layers):
        for gate in "fioc":
            shapes[f"lstm.l{layer}.w_{gate}"] = (h, h)
        for gate in "fioc":
            shapes[f"lstm.l{layer}.u_{gate}"] = (h, h)
        for gate in "fioc":
            shapes[f"lstm.l{layer}.b_{gate}"] = (1, h)
    shapes["fc.w"] = (h, config.classes)
    shapes["fc.b"] = (1, config.classes)
    return shapes


@dataclass
class ModelParams:
    """All trainable tensors, addressable by stable dotted names."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def validate(self) -> None:
        expected = param_shapes(self.config)
        if list(self.tensors) != list(expected):
            raise ShapeMismatchError("parameter names do not match the config")
        for name, arr in self.tensors.items():
            if arr.shape != expected[name]:
                raise ShapeMismatchError(
                    f"{name}: expected {expected[name]}, got {arr.shape}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")

    def copy(self) -> ModelParams:
        return ModelParams(
            self.config, {n: a.copy() for n, a in self.tensors.items()}
        )


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded initialization: uniform ±sqrt(6/(fan_in+fan_out)), zero biases.

    Two calls with the same config produce bitwise-identical tensors.
    """
    rng = np.random.default_rng(config.seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.rsplit(".", 1)[1].startswith("b"):
            tensors[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
    params = ModelParams(config, tensors)
    params.validate()
    return params


@dataclass
class BoundModel:
    """Engine tensors for one tape, structured per layer."""

    config: ModelConfig
    gnn1: GnnLayerParams
    gnn2: GnnLayerParams
    gat1: GatLayerParams
    gat2: GatLayerParams
    lstm: LstmParams
    fc_w: Tensor
    fc_b: Tensor
    leaves: dict[str, Tensor] = field(default_factory=dict)


def structure(config: ModelConfig, leaves: dict[str, Tensor]) -> BoundModel:
    """Group a flat name -> Tensor mapping into per-layer parameter objects."""

    def gat(stage: str, heads: int, concat: bool) -> GatLayerParams:
        return GatLayerParams(
            heads=[
                GatHeadParams(w=leaves[f"{stage}.h{k}.w"], a=leaves[f"{stage}.h{k}.a"])
                for k in range(heads)
            ],
            concat=concat,
        )

    lstm = LstmParams(
        layers=[
            LstmLayerParams(
                **{
                    f"{kind}_{gate}": leaves[f"lstm.l{layer}.{kind}_{gate}"]
                    for kind in "wub"
                    for gate in "fioc"
                }
            )
            for layer in range(config.lstm_layers)
        ]
    )
    return BoundModel(
        config=config,
        gnn1=GnnLayerParams(w=leaves["gnn1.w"], b=leaves["gnn1.b"]),
        gnn2=GnnLayerParams(w=leaves["gnn2.w"], b=leaves["gnn2.b"]),
        gat1=gat("gat1", config.gat1_heads, concat=True),
        # A single second-stage head keeps width = hidden; averaging does
        # the same if that stage is ever configured with more heads.
        gat2=gat("gat2", config.gat2_heads, concat=False),
        lstm=lstm,
        fc_w=leaves["fc.w"],
        fc_b=leaves["fc.b"],
        leaves=leaves,
    )


def bind(tape: Tape, params: ModelParams, trainable: bool = True) -> BoundModel:
    """Put every parameter on a tape; trainable leaves report gradients."""
    wrap = tape.leaf if trainable else tape.input
    leaves = {name: wrap(arr) for name, arr in params.tensors.items()}
    return structure(params.config, leaves)


def forward(tape: Tape, graph: UrlGraph, model: BoundModel) -> Tensor:
    """Log-probabilities (1 x 4) for one URL graph."""
    config = model.config
    if graph.num_nodes == 0:
        raise EmptyGraphError("cannot run the model on a graph with no nodes")
    if graph.node_features.shape[1] != config.input_dim:
        raise ShapeMismatchError(
            f"graph features are {graph.node_features.shape[1]}-wide,"
            f" model expects {config.input_dim}"
        )
    x = tape.input(graph.node_features)
    x = gnn_forward(tape, x, graph.edges, model.gnn1, config.aggregation)
    x = gnn_forward(tape, x, graph.edges, model.gnn2, config.aggregation)
    x = gat_forward(tape, x, graph.edges, model.gat1)
    x = gat_forward(tape, x, graph.edges, model.gat2)
    if config.readout == "lstm":
        h_seq = lstm_sequence(tape, x, model.lstm)
        pooled = tape.rows(h_seq, graph.num_nodes - 1, graph.num_nodes)
    else:
        pooled = mean_pool(tape, x)
    logits = linear_forward(tape, pooled, model.fc_w, model.fc_b)
    return tape.log_softmax_rows(logits)


def infer_log_probs(graph: UrlGraph, params: ModelParams) -> np.ndarray:
    """Non-recording forward pass; returns the (1, 4) log-probability array."""
    tape = Tape(record=False)
    model = bind(tape, params, trainable=False)
    return forward(tape, graph, model).data


def predict(
    url: str,
    params: ModelParams,
    charset: Charset = DEFAULT_CHARSET,
) -> tuple[int, np.ndarray]:
    """Class id and the four class probabilities for one raw URL.

    Argmax ties break toward the lowest class id.
    """
    graph = url_to_graph(url, charset, extended=params.config.extended)
    probs = np.exp(infer_log_probs(graph, params)[0])
    return int(np.argmax(probs)), probs


def count_params(params: ModelParams) -> tuple[int, dict[str, int]]:
    """Total scalar count and a per-stage breakdown keyed by name prefix."""
    breakdown: dict[str, int] = {}
    for name, arr in params.tensors.items():
        stage = name.split(".", 1)[0]
        breakdown[stage] = breakdown.get(stage, 0) + arr.size
    return sum(breakdown.values()), breakdown


# ---------------------------------------------------------------------------
# Checkpoints: magic, little-endian header length, canonical JSON header,
# then each tensor's row-major float64 payload in canonical order.


def save_checkpoint(path, params: ModelParams) -> None:
    """Write a deterministic binary checkpoint (config + all tensors)."""
    params.validate()
    shapes = param_shapes(params.config)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "tensors": [{"name": n, "shape": list(s)} for n, s in shapes.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in shapes:
            fh.write(np.ascontiguousarray(params.tensors[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    """Read a checkpoint written by :func:`save_checkpoint`, bit-exactly."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise IncompatibleCheckpointError("not a model checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    if len(raw) < offset + 8:
        raise IncompatibleCheckpointError("truncated checkpoint header")
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IncompatibleCheckpointError(f"unreadable header: {exc}") from exc
    offset += header_len
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(
            f"unsupported format version {header.get('format_version')!r}"
        )
    try:
        config = ModelConfig(**header["config"])
    except (TypeError, ValueError, KeyError) as exc:
        raise IncompatibleCheckpointError(f"bad config in header: {exc}") from exc
    shapes = param_shapes(config)
    stored = [(t["name"], tuple(t["shape"])) for t in header.get("tensors", [])]
    if stored != list(shapes.items()):
        raise IncompatibleCheckpointError("tensor manifest does not match config")
    tensors: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        nbytes = 8 * shape[0] * shape[1]
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise IncompatibleCheckpointError(f"truncated payload at {name}")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").astype(
            np.float64
        ).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise IncompatibleCheckpointError("trailing bytes after final tensor")
    params = ModelParams(config, tensors)
    params.validate()
    return params
