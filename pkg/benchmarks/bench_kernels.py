"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--hidden H]

Times each kernel at training-sized shapes, then one full training step of
the toy model under each backend.
"""

import argparse
import timeit

import numpy as np

from nepcap import _kernels as K
from nepcap.corpus import build_vocab
from nepcap.datagen import BatchGenerator, make_pairs
from nepcap.seq2seq import Adam, ModelConfig, build_model
from nepcap.toy import toy_features, toy_records


def kernel_cases(B, H, V, rng):
    f32 = np.float32
    z = rng.normal(size=(B, 4 * H)).astype(f32)
    c = rng.normal(size=(B, H)).astype(f32)
    act, _, tanh_c, _ = K.get_backend("python").lstm_cell_forward(z, c)
    xz = rng.normal(size=(B, 3 * H)).astype(f32)
    hz = rng.normal(size=(B, 3 * H)).astype(f32)
    gact = K.get_backend("python").gru_cell_forward(xz, hz, c)[0]
    logits = rng.normal(size=(B * 10, V)).astype(f32)
    targets = rng.integers(0, V, B * 10)
    weights = np.ones(B * 10, f32)
    n = 1280 * 4 * H
    adam = [rng.normal(size=n).astype(f32) for _ in range(2)] + [np.zeros(n, f32), np.zeros(n, f32)]
    return {
        "lstm_cell_forward": lambda k: k.lstm_cell_forward(z, c),
        "lstm_cell_backward": lambda k: k.lstm_cell_backward(c, c, act, c, tanh_c),
        "gru_cell_forward": lambda k: k.gru_cell_forward(xz, hz, c),
        "gru_cell_backward": lambda k: k.gru_cell_backward(c, gact, hz, c),
        "softmax_xent": lambda k: k.softmax_xent(logits, targets, weights),
        "adam_update": lambda k: k.adam_update(*adam, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
    }


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def training_step(decoder, hidden):
    records = toy_records()
    vocab = build_vocab(records)
    feats = toy_features()
    gen = BatchGenerator(make_pairs(records, feats, vocab), feats, vocab, 4, seed=0, prefetch=0)
    batch = next(iter(gen.epoch(0)))
    model = build_model(ModelConfig("synthetic", decoder, hidden, vocab.size), seed=0)
    opt = Adam(model.params)

    def step():
        _, grads = model.loss_and_grads(batch.encoder_input, batch.input_ids, batch.target_ids)
        opt.step(model.params, grads)

    return step


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=512)
    ap.add_argument("--batch", type=int, default=4)
    args = ap.parse_args(argv)

    backends = ["python"] + (["cython"] if K.compiled_available() else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    cases = kernel_cases(args.batch, args.hidden, 40, rng)
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, call in cases.items():
        times = [best_of(lambda k=K.get_backend(b): call(k), args.repeat) for b in backends]
        line = f"{name:<22}" + "".join(f"{t * 1e6:>10.1f}us" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:>11.2f}x"
        print(line)

    print()
    original = K._impl
    try:
        for decoder in ("lstm", "gru", "bilstm"):
            times = []
            for b in backends:
                K._impl = K.get_backend(b)
                times.append(best_of(training_step(decoder, args.hidden), max(1, args.repeat // 2)))
            line = f"{'step ' + decoder:<22}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
            if len(times) == 2:
                line += f"{times[0] / times[1]:>11.2f}x"
            print(line)
    finally:
        K._impl = original


if __name__ == "__main__":
    main()
