"""Benchmark the compiled kernels against the pure-numpy fallback, plus one
end-to-end training comparison.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from mmfuse._kernels import HAVE_COMPILED, _fallback

try:
    from mmfuse._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1000.0


def bench_kernels(repeats: int, dtype) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    b, h, t, dh = 64, 2, 150, 32
    w = h * dh
    rows = []

    scores = np.ascontiguousarray(rng.normal(size=(b * h * t, t)), dtype=dtype)
    valid = np.ones((b, t), dtype=np.uint8)
    rows.append(("masked_softmax",
                 timeit(lambda: _fallback.masked_softmax(scores, valid, h * t), repeats),
                 timeit(lambda: _core.masked_softmax(scores, valid, h * t), repeats)))

    probs = _core.masked_softmax(scores, valid, h * t)
    grad = np.ascontiguousarray(rng.normal(size=scores.shape), dtype=dtype)
    rows.append(("masked_softmax_grad",
                 timeit(lambda: _fallback.masked_softmax_grad(probs, grad), repeats),
                 timeit(lambda: _core.masked_softmax_grad(probs, grad), repeats)))

    x = np.ascontiguousarray(rng.normal(size=(b * t, w)), dtype=dtype)
    gamma = np.ones(w, dtype=dtype)
    beta = np.zeros(w, dtype=dtype)
    rows.append(("layer_norm",
                 timeit(lambda: _fallback.layer_norm(x, gamma, beta, 1e-5), repeats),
                 timeit(lambda: _core.layer_norm(x, gamma, beta, 1e-5), repeats)))

    _, xhat, rstd = _core.layer_norm(x, gamma, beta, 1e-5)
    dy = np.ascontiguousarray(rng.normal(size=x.shape), dtype=dtype)
    rows.append(("layer_norm_grad",
                 timeit(lambda: _fallback.layer_norm_grad(xhat, rstd, gamma, dy), repeats),
                 timeit(lambda: _core.layer_norm_grad(xhat, rstd, gamma, dy), repeats)))

    embs = rng.normal(size=(24, 768)).astype(np.float32)
    spans = np.stack([np.arange(0, 144, 6), np.arange(6, 150, 6)], axis=1).astype(np.int64)
    rows.append(("span_fill",
                 timeit(lambda: _fallback.span_fill(embs, spans, t), repeats),
                 timeit(lambda: _core.span_fill(embs, spans, t), repeats)))

    p = np.ascontiguousarray(rng.normal(size=(512, 512)), dtype=dtype)
    g = np.ascontiguousarray(rng.normal(size=(512, 512)), dtype=dtype)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    rows.append(("adamw_update",
                 timeit(lambda: _fallback.adamw_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.01, 3), repeats),
                 timeit(lambda: _core.adamw_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.01, 3), repeats)))

    pre = np.ascontiguousarray(rng.normal(size=(b * t, w)), dtype=dtype)
    rows.append(("gelu",
                 timeit(lambda: _fallback.gelu(pre), repeats),
                 timeit(lambda: _core.gelu(pre), repeats)))
    return rows


_TRAIN_SNIPPET = """
import time
import numpy as np
from mmfuse.classifier import ClassifierConfig, TransformerClassifier

cfg = ClassifierConfig(input_dim=64, num_layers=1, num_heads=2, hidden_dim=64,
                       dropout=0.1, batch_size=64, positional_encoding="none")
rng = np.random.default_rng(0)
x = rng.normal(size=(64, 150, 64)).astype(np.float32)
mask = np.ones((64, 150), dtype=bool)
y = rng.integers(0, 3, size=64)
model = TransformerClassifier(cfg)
step_rng = np.random.default_rng(1)
model.loss_and_grads(x, mask, y, step_rng)
t0 = time.perf_counter()
for _ in range({repeats}):
    model.loss_and_grads(x, mask, y, step_rng)
print((time.perf_counter() - t0) / {repeats} * 1000.0)
"""


def bench_training(repeats: int) -> tuple[float, float]:
    """One optimization step of a realistic configuration, both backends.
    The backend is fixed at import time, so each side runs in a subprocess."""
    import os
    import subprocess
    import sys

    out = []
    for pure in ("1", ""):
        env = dict(os.environ)
        if pure:
            env["MMFUSE_PURE"] = pure
        else:
            env.pop("MMFUSE_PURE", None)
        result = subprocess.run(
            [sys.executable, "-c", _TRAIN_SNIPPET.format(repeats=repeats)],
            capture_output=True, text=True, env=env, check=True,
        )
        out.append(float(result.stdout.strip()))
    return out[0], out[1]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    if not HAVE_COMPILED or _core is None:
        print("compiled kernels not available; nothing to compare")
        return 1

    for dtype in (np.float32, np.float64):
        print(f"\nkernels, dtype={np.dtype(dtype).name} (ms per call, {args.repeats} repeats)")
        print(f"{'kernel':<22} {'fallback':>10} {'compiled':>10} {'speedup':>9}")
        for name, fb, core in bench_kernels(args.repeats, dtype):
            print(f"{name:<22} {fb:>10.3f} {core:>10.3f} {fb / core:>8.2f}x")

    fb, core = bench_training(max(3, args.repeats // 4))
    print(f"\ntraining step (batch 64, T=150, W=64, float32)")
    print(f"{'fallback':>10} {'compiled':>10} {'speedup':>9}")
    print(f"{fb:>10.1f} {core:>10.1f} {fb / core:>8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
