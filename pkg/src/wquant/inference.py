"""Dense toy networks: forward pass, top-1 evaluation and quantized comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError
from .quantizer import quantize_network
from .storage import read_tensor

ACTIVATIONS = ("relu", "identity", "softmax")


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weight: np.ndarray  # (inputs, outputs)
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise DomainError(f"bias shape {self.bias.shape} does not match weight {self.weight.shape}")


@dataclass(frozen=True, eq=False)
class ToyModel:
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise DomainError(f"layer widths do not chain: {a.weight.shape} -> {b.weight.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"l{i}.weight", layer.weight))
            out.append((f"l{i}.bias", layer.bias))
        return out

    def with_parameters(self, params: dict) -> "ToyModel":
        layers = []
        for i, layer in enumerate(self.layers):
            layers.append(DenseLayer(
                weight=np.asarray(params[f"l{i}.weight"]), bias=np.asarray(params[f"l{i}.bias"]),
                activation=layer.activation,
            ))
        return ToyModel(layers)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z, name):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "softmax":
        return softmax(z)
    return z


def logits(model: ToyModel, inputs) -> np.ndarray:
    """Pre-activation output of the last layer; accepts one vector or a batch."""
    h = np.asarray(inputs, dtype=np.float64)
    if h.shape[-1] != model.input_dim:
        raise DomainError(f"input dimension {h.shape[-1]} != {model.input_dim}")
    for layer in model.layers[:-1]:
        h = _activate(h @ layer.weight + layer.bias, layer.activation)
    last = model.layers[-1]
    return h @ last.weight + last.bias


def forward(model: ToyModel, inputs) -> np.ndarray:
    return _activate(logits(model, inputs), model.layers[-1].activation)


@dataclass
class EvalReport:
    top1: float
    count: int
    per_layer_rho: list = field(default_factory=list)


def evaluate(model: ToyModel, dataset, batch_size: int | None = None) -> EvalReport:
    inputs, labels = dataset
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64).ravel()
    if len(labels) == 0:
        raise DomainError("empty dataset")
    if len(inputs) != len(labels):
        raise DomainError(f"{len(inputs)} inputs vs {len(labels)} labels")
    k = model.layers[-1].weight.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise DomainError(f"labels must lie in [0, {k - 1}]")
    step = batch_size or len(labels)
    pred = np.concatenate([
        np.argmax(logits(model, inputs[i:i + step]), axis=-1) for i in range(0, len(labels), step)
    ])
    correct = int(np.sum(pred == labels))
    return EvalReport(top1=correct / len(labels), count=len(labels))


def quantize_model(model: ToyModel, bits: int, scheme="exponential", rounding="ceil", x0="heuristic"):
    """Quantize weight matrices (biases pass through); returns (model, network result)."""
    result = quantize_network(model.named_parameters(), bits, scheme, rounding, x0=x0)
    return model.with_parameters(result.dequantized()), result


def compare_quantized(model: ToyModel, dataset, bits: int, scheme="exponential", rounding="ceil", x0="heuristic"):
    before = evaluate(model, dataset)
    qmodel, result = quantize_model(model, bits, scheme, rounding, x0)
    after = evaluate(qmodel, dataset)
    after.per_layer_rho = [r.rho for r in result.reports if r.quantized]
    return before, after


@dataclass(frozen=True, eq=False)
class Bundle:
    model: ToyModel
    inputs: np.ndarray
    labels: np.ndarray
    manifest: dict
    root: Path

    @property
    def dataset(self):
        return self.inputs, self.labels


def load_bundle(root) -> Bundle:
    """Load a fixture bundle: per-layer tensor files plus ``manifest.json``."""
    root = Path(root)
    mpath = root / "manifest.json"
    with open(mpath, encoding="utf-8") as fh:
        man = json.load(fh)
    try:
        layers = [
            DenseLayer(
                weight=read_tensor(root / spec["weight"]).astype(np.float64),
                bias=read_tensor(root / spec["bias"]).astype(np.float64),
                activation=spec["activation"],
            )
            for spec in man["layers"]
        ]
        inputs = read_tensor(root / man["dataset"]["inputs"]).astype(np.float64)
        labels = read_tensor(root / man["dataset"]["labels"]).astype(np.int64)
    except KeyError as exc:
        raise FormatError(str(exc.args[0]), "missing manifest field", mpath) from None
    return Bundle(model=ToyModel(layers), inputs=inputs, labels=labels, manifest=man, root=root)


def fixture_path() -> Path:
    return Path(str(resources.files("wquant") / "data" / "fixture"))


def load_fixture() -> Bundle:
    return load_bundle(fixture_path())

