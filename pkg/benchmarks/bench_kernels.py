"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Rows tagged [jit] force the jitted exp/tanh kernels, which the numba
backend only selects when numba reports SVML vector math. The last two
rows time a training step and batched greedy decoding under each backend;
the model looks kernels up on ``ppannot.kernels`` at call time, so the
backend is swapped by patching those module attributes.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from ppannot import kernels, model as model_mod


def kernel_cases(rng):
    a = rng.integers(0, 40, size=60)
    b = rng.integers(0, 40, size=60)
    logits = rng.normal(size=(32, 4, 40, 40)).astype(np.float32)
    y = kernels.numpy_impl.softmax(logits.copy())
    dy = rng.normal(size=y.shape).astype(np.float32)
    x = rng.normal(size=(32, 40, 64)).astype(np.float32)
    g = np.ones(64, np.float32)
    bb = np.zeros(64, np.float32)
    _, xhat, rstd = kernels.numpy_impl.layernorm(x, g, bb, 1e-5)
    dx = rng.normal(size=x.shape).astype(np.float32)
    h = rng.normal(size=(32, 40, 128)).astype(np.float32)
    dh = rng.normal(size=h.shape).astype(np.float32)
    return {
        "levenshtein(60x60)": lambda k: k.levenshtein(a, b),
        "softmax(32x4x40x40)": lambda k: k.softmax(logits.copy()),
        "softmax_backward": lambda k: k.softmax_backward(y, dy),
        "layernorm(32x40x64)": lambda k: k.layernorm(x, g, bb, 1e-5),
        "layernorm_backward": lambda k: k.layernorm_backward(dx, xhat, rstd, g),
        "gelu(32x40x128)": lambda k: k.gelu(h),
        "gelu_backward": lambda k: k.gelu_backward(h, dh),
        "softmax [jit]": lambda k: getattr(k, "softmax_jit", k.softmax)(logits.copy()),
        "gelu [jit]": lambda k: getattr(k, "gelu_jit", k.gelu)(h),
        "gelu_backward [jit]": lambda k: getattr(k, "gelu_backward_jit", k.gelu_backward)(h, dh),
    }


_SWAPPED = ("softmax", "softmax_backward", "layernorm", "layernorm_backward", "gelu", "gelu_backward")


def use_backend(impl) -> None:
    for name in _SWAPPED:
        setattr(kernels, name, getattr(impl, name))
    kernels.levenshtein_ids = impl.levenshtein


def model_cases():
    from ppannot.decoding import greedy_decode
    from ppannot.labels import DEFAULT_INVENTORY
    from ppannot.synth import SpeakerParams, gen_corpus, gen_lexicon
    from ppannot.vocab import build_vocab, encode

    lex = gen_lexicon(100, 0.2, 0.7, 0)
    items = gen_corpus(lex, 32, (1, 3), SpeakerParams(), 1)
    vocab = build_vocab(DEFAULT_INVENTORY)
    m = model_mod.init_model(model_mod.ModelConfig(), vocab, 0)
    batch = model_mod.make_batch([u.features for u in items], [encode(u.labels, vocab) for u in items], vocab.pad)
    xs = [u.features for u in items]
    return {
        "train step (B=32, fwd+bwd)": lambda: model_mod.batch_loss(m, batch),
        "greedy decode (B=32)": lambda: greedy_decode(m, xs),
    }


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up / JIT compile
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    results = []
    for name, case in kernel_cases(rng).items():
        t_np = best_of(lambda: case(kernels.numpy_impl), args.repeat)
        t_nb = best_of(lambda: case(kernels.numba_impl), args.repeat)
        results.append({"case": name, "numpy_ms": 1e3 * t_np, "numba_ms": 1e3 * t_nb, "speedup": t_np / t_nb})
    original = kernels.active
    try:
        for name, case in model_cases().items():
            use_backend(kernels.numpy_impl)
            t_np = best_of(case, max(3, args.repeat // 4))
            use_backend(kernels.numba_impl)
            t_nb = best_of(case, max(3, args.repeat // 4))
            results.append({"case": name, "numpy_ms": 1e3 * t_np, "numba_ms": 1e3 * t_nb, "speedup": t_np / t_nb})
    finally:
        use_backend(original)
    print(f"{'case':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for r in results:
        print(f"{r['case']:32s} {r['numpy_ms']:10.3f} {r['numba_ms']:10.3f} {r['speedup']:8.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
