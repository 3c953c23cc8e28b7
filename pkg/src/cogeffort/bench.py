"""Backend benchmark: compiled kernels versus the numpy fallback.

Times the per-batch kernels at the pipeline's production shapes and a short
end-to-end training run under each available backend:

    python -m cogeffort.bench [--batch 4] [--repeats 2000] [--epochs 20]
"""

import argparse
import time

import numpy as np

from .net import Trainer, backend
from .net.model import ModelConfig, init_params, loss_and_grads
from .util import substream


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def _kernel_cases(kern, batch: int):
    rng = substream(12345)
    x12 = rng.normal(size=(batch, 12))
    w_conv = rng.normal(size=(12, 32))
    b32 = rng.normal(size=32)
    feat = rng.normal(size=(batch, 32))
    gamma, beta = np.ones(32), np.zeros(32)
    h8 = np.zeros((batch, 8))
    gru_w = {k: rng.normal(size=(32, 8)) * 0.3 for k in ("wz", "wr", "wh")}
    gru_u = {k: rng.normal(size=(8, 8)) * 0.3 for k in ("uz", "ur", "uh")}
    gru_b = {k: np.zeros(8) for k in ("bz", "br", "bh")}
    dy8 = rng.normal(size=(batch, 8))
    dy32 = rng.normal(size=(batch, 32))

    _, mean, var, xhat = kern.bn_train_fwd(feat, gamma, beta, 1e-5)
    hn, z, r, cand = kern.gru_fwd(x12 @ np.eye(12, 32), h8, *gru_w.values(),
                                  *gru_u.values(), *gru_b.values())
    x32 = np.ascontiguousarray(x12 @ np.eye(12, 32))

    return {
        "affine fwd (12->32)": lambda: kern.affine_fwd(x12, w_conv, b32),
        "affine bwd": lambda: kern.affine_bwd(x12, w_conv, dy32),
        "batchnorm fwd": lambda: kern.bn_train_fwd(feat, gamma, beta, 1e-5),
        "batchnorm bwd": lambda: kern.bn_train_bwd(xhat, var, gamma, dy32, 1e-5),
        "gru fwd (32->8)": lambda: kern.gru_fwd(x32, h8, *gru_w.values(),
                                                *gru_u.values(), *gru_b.values()),
        "gru bwd": lambda: kern.gru_bwd(x32, h8, z, r, cand, *gru_w.values(),
                                        *gru_u.values(), dy8),
        "softmax fwd": lambda: kern.softmax_fwd(dy8[:, :2].copy()),
    }


def _train_case(epochs: int, seed: int = 7):
    rng = substream(seed)
    n = 128
    x = rng.normal(size=(n, 1, 12))
    y = (x[:, 0, 0] + 0.3 * rng.normal(size=n) > 0).astype(int)
    x[:, 0, 0] += y * 0.5
    config = ModelConfig(max_epochs=epochs, patience=epochs, seed=seed)
    val_x, val_y = x[:32], y[:32]

    def run():
        Trainer(config).train(x, y, val_x, val_y)

    return run


def _full_step_case(batch: int, seed: int = 3):
    config = ModelConfig(seed=seed, dropout_rate=0.0)
    params, state = init_params(config)
    rng = substream(seed, 99)
    x = rng.normal(size=(batch, 1, 12))
    onehot = np.zeros((batch, 2))
    onehot[np.arange(batch), rng.integers(0, 2, batch)] = 1.0

    def run():
        loss_and_grads(config, params, state, x, onehot, train=True,
                       update_stats=False)

    return run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=2000)
    parser.add_argument("--epochs", type=int, default=20)
    args = parser.parse_args(argv)

    names = backend.available_backends()
    print(f"available backends: {', '.join(names)} (active: {backend.active_name()})")
    rows = []
    for name in names:
        with backend.use(name) as kern:
            for label, fn in _kernel_cases(kern, args.batch).items():
                rows.append((label, name, _time(fn, args.repeats) * 1e6, "us"))
            rows.append(("full train/backward step", name,
                         _time(_full_step_case(args.batch), max(args.repeats // 4, 1)) * 1e6,
                         "us"))
            rows.append((f"training run ({args.epochs} epochs)", name,
                         _time(_train_case(args.epochs), 1) * 1e3, "ms"))

    width = max(len(r[0]) for r in rows)
    print(f"{'case'.ljust(width)}  backend  time")
    for label, name, value, unit in rows:
        print(f"{label.ljust(width)}  {name:7s}  {value:10.2f} {unit}")
    if len(names) == 2:
        print("\nspeedup (python / cython):")
        by_case = {}
        for label, name, value, _ in rows:
            by_case.setdefault(label, {})[name] = value
        for label, values in by_case.items():
            if {"python", "cython"} <= values.keys():
                print(f"  {label.ljust(width)}  {values['python'] / values['cython']:6.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
