"""Benchmark the compiled LSTM kernels against the numpy fallback.

Times a single layer call at several sequence lengths, then a full
batch-32 training step of the default model, for both backends.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--skip-train-step]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from urlgraphnet import _kernels_py, trainer
from urlgraphnet.encoder import DEFAULT_CHARSET, url_to_graph
from urlgraphnet.engine import Tape
from urlgraphnet.model import ModelConfig, bind, init_params
from urlgraphnet.synth import generate_corpus

try:
    from urlgraphnet import _kernels_cy
except ImportError:
    _kernels_cy = None


def time_call(fn, repeats: int) -> float:
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_layer(impl, steps: int, in_dim: int, hidden: int, repeats: int):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(steps, in_dim))
    w = rng.normal(size=(in_dim, 4 * hidden), scale=0.3)
    u = rng.normal(size=(hidden, 4 * hidden), scale=0.3)
    b = rng.normal(size=(1, 4 * hidden), scale=0.3)
    gh = rng.normal(size=(steps, hidden))
    _, cache = impl.lstm_layer_forward(x, w, u, b)
    fwd = time_call(lambda: impl.lstm_layer_forward(x, w, u, b), repeats)
    bwd = time_call(lambda: impl.lstm_layer_backward(cache, gh), repeats)
    return fwd, bwd


def bench_train_step(impl, repeats: int) -> float:
    import urlgraphnet.kernels as kernels
    import urlgraphnet.layers as layers

    # Point the layer module at the backend under test for the duration.
    saved = (kernels.lstm_layer_forward, kernels.lstm_layer_backward)
    kernels.lstm_layer_forward = impl.lstm_layer_forward
    kernels.lstm_layer_backward = impl.lstm_layer_backward
    try:
        corpus = generate_corpus(64, seed=42)
        graphs = [url_to_graph(r.url, charset=DEFAULT_CHARSET) for r in corpus.records]
        labels = np.array([r.label for r in corpus.records])
        params = init_params(ModelConfig())
        state = trainer.OptimizerState.for_params(params)

        def step() -> None:
            tape = Tape()
            model = bind(tape, params)
            loss = trainer.batch_loss(tape, model, graphs[:32], labels[:32])
            grad_map = tape.backward(loss)
            grads = {name: grad_map[leaf.node] for name, leaf in model.leaves.items()}
            trainer.adam_step(params, grads, state)

        return time_call(step, repeats)
    finally:
        kernels.lstm_layer_forward, kernels.lstm_layer_backward = saved


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=100,
                        help="timing iterations per measurement")
    parser.add_argument("--skip-train-step", action="store_true",
                        help="only benchmark raw layer calls")
    args = parser.parse_args()

    backends = [("python", _kernels_py)]
    if _kernels_cy is not None:
        backends.append(("cython", _kernels_cy))
    else:
        print("compiled extension not built; benchmarking fallback only")

    hidden = 64
    print(f"LSTM layer call (input dim 69 then {hidden}, hidden {hidden}):")
    print(f"{'steps':>6} {'dim':>4} | " + " | ".join(
        f"{name + ' fwd':>12} {name + ' bwd':>12}" for name, _ in backends))
    for steps in (10, 27, 60):
        for in_dim in (69, hidden):
            cells = []
            for _, impl in backends:
                fwd, bwd = bench_layer(impl, steps, in_dim, hidden, args.repeats)
                cells.append(f"{fwd * 1e6:>9.0f} us {bwd * 1e6:>9.0f} us")
            print(f"{steps:>6} {in_dim:>4} | " + " | ".join(cells))

    if not args.skip_train_step:
        print("\nFull training step (default model, batch 32):")
        times = {}
        for name, impl in backends:
            times[name] = bench_train_step(impl, max(3, args.repeats // 20))
            print(f"  {name:>7}: {times[name] * 1e3:.1f} ms")
        if len(times) == 2:
            print(f"  speedup: {times['python'] / times['cython']:.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
