"""Character-graph malicious-URL classifier.

URLs become character graphs, a GNN/GAT/LSTM stack scores them over four
classes (benign, defacement, malware, phishing), and everything down to
the autodiff engine runs on numpy with an optional compiled kernel core.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .data import CLASS_NAMES, load_csv, split
from .encoder import DEFAULT_CHARSET, url_to_graph
from .metrics import classification_report, evaluate_model
from .model import ModelConfig, init_params, load_checkpoint, predict, save_checkpoint
from .trainer import train

__all__ = [
    "CLASS_NAMES",
    "DEFAULT_CHARSET",
    "ModelConfig",
    "__version__",
    "classification_report",
    "evaluate_model",
    "init_params",
    "load_checkpoint",
    "load_csv",
    "predict",
    "save_checkpoint",
    "split",
    "train",
    "url_to_graph",
]
