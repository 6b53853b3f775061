"""Train the toy MLP fixture once and write it as a tensor-file bundle.

The stored weights are what matter; rerunning with the same seed
regenerates the identical bundle. Usage::

    python scripts/make_fixture.py [--out src/wquant/data/fixture]
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

from wquant.storage import write_tensor

IN, H1, H2, K = 32, 128, 64, 8


def make_data(rng, centers, count, noise):
    y = rng.integers(0, K, size=count)
    x = centers[y] + noise * rng.standard_normal((count, IN))
    # a fixed nonlinear warp so the classes are not linearly separable in raw space
    x = np.tanh(x) + 0.1 * x
    return x.astype(np.float32), y


def reference_forward(layers, x):
    """Slow loop implementation, kept separate from wquant.inference."""
    h = [float(v) for v in x]
    for W, b, act in layers:
        out = []
        for j in range(W.shape[1]):
            s = float(b[j])
            for i in range(W.shape[0]):
                s += h[i] * float(W[i, j])
            out.append(s)
        if act == "relu":
            out = [max(v, 0.0) for v in out]
        elif act == "softmax":
            m = max(out)
            e = [math.exp(v - m) for v in out]
            out = [v / sum(e) for v in e]
        h = out
    return h


def train(x, y, rng, epochs=60, lr=2e-3, l2=1e-4, batch=64):
    sizes = [IN, H1, H2, K]
    params = []
    for a, b in zip(sizes, sizes[1:]):
        params += [rng.standard_normal((a, b)) * math.sqrt(2.0 / a), np.zeros(b)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    onehot = np.eye(K)[y]
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for s in range(0, len(x), batch):
            idx = order[s:s + batch]
            xb, yb = x[idx].astype(np.float64), onehot[idx]
            W1, b1, W2, b2, W3, b3 = params
            z1 = xb @ W1 + b1; h1 = np.maximum(z1, 0)
            z2 = h1 @ W2 + b2; h2 = np.maximum(z2, 0)
            z3 = h2 @ W3 + b3
            p = np.exp(z3 - z3.max(1, keepdims=True)); p /= p.sum(1, keepdims=True)
            g3 = (p - yb) / len(idx)
            gW3 = h2.T @ g3; gb3 = g3.sum(0)
            g2 = (g3 @ W3.T) * (z2 > 0)
            gW2 = h1.T @ g2; gb2 = g2.sum(0)
            g1 = (g2 @ W2.T) * (z1 > 0)
            gW1 = xb.T @ g1; gb1 = g1.sum(0)
            grads = [gW1 + l2 * W1, gb1, gW2 + l2 * W2, gb2, gW3 + l2 * W3, gb3]
            step += 1
            for i, g in enumerate(grads):
                m[i] = 0.9 * m[i] + 0.1 * g
                v[i] = 0.999 * v[i] + 0.001 * g * g
                mh = m[i] / (1 - 0.9**step); vh = v[i] / (1 - 0.999**step)
                params[i] -= lr * mh / (np.sqrt(vh) + 1e-8)
    return params


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/wquant/data/fixture"))
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    centers = 1.2 * rng.standard_normal((K, IN))
    xtr, ytr = make_data(rng, centers, 8000, noise=1.8)
    xte, yte = make_data(rng, centers, 1000, noise=1.8)
    params = train(xtr, ytr, rng)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    acts = ["relu", "relu", "softmax"]
    layers, stored = [], []
    for i, act in enumerate(acts):
        W = params[2 * i].astype(np.float32)
        b = params[2 * i + 1].astype(np.float32)
        write_tensor(out / f"l{i}.weight.wqt", W)
        write_tensor(out / f"l{i}.bias.wqt", b)
        layers.append({"weight": f"l{i}.weight.wqt", "bias": f"l{i}.bias.wqt", "activation": act})
        stored.append((W, b, act))
    write_tensor(out / "inputs.wqt", xte)
    write_tensor(out / "labels.wqt", yte.astype(np.float32))

    correct = 0
    for xi, yi in zip(xte, yte):
        probs = reference_forward(stored, xi)
        correct += int(max(range(K), key=probs.__getitem__) == yi)
    probs0 = reference_forward(stored, xte[0])
    manifest = {
        "layers": layers,
        "dataset": {"inputs": "inputs.wqt", "labels": "labels.wqt", "count": len(yte)},
        "classes": K,
        "float_top1": correct / len(yte),
        "reference": {"input0_argmax": int(np.argmax(probs0)), "input0_probs": probs0},
        "seed": args.seed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"float top1 = {manifest['float_top1']:.3f}, params = {sum(p.size for p in params)}")


if __name__ == "__main__":
    main()
