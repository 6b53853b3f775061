"""Command-line interface.

Reports go to stdout as JSON lines, diagnostics to stderr. Exit status is
0 on success, 1 on domain errors (bad parameters) and 2 on I/O or file
format errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, inference, storage
from .errors import DomainError, FormatError
from .quantizer import (
    QuantizedTensor,
    normalize,
    quantize_network,
    quantize_tensor,
    skip_low_rank,
    sweep_x0,
    tensor_report,
)

log = logging.getLogger("wquant")

DEFAULT_SEED = 0


def _emit(obj):
    print(json.dumps(obj, sort_keys=True, default=_jsonable), flush=True)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _clean(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def parse_bits_range(text: str) -> list[int]:
    """Accept ``"4"``, ``"2..6"``, ``"2-6"`` or ``"2,3,5"``."""
    text = text.strip()
    try:
        for sep in ("..", "-"):
            if sep in text:
                lo, hi = text.split(sep)
                return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise DomainError(f"cannot parse bit range {text!r}") from None


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("WQUANT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"WQUANT_THREADS must be an integer, got {env!r}") from None
    return 1


def _ratio_fields(qt: QuantizedTensor, nbytes: int) -> dict:
    raw = 4 * qt.size
    payload = storage.payload_size(qt.size, qt.bits)
    return {
        "file_bytes": nbytes,
        "payload_bytes": payload,
        "payload_ratio": raw / payload if payload else None,
        "ratio": raw / nbytes,
    }


def _load_layers(path: Path) -> tuple[list[tuple[str, np.ndarray]], dict]:
    """Read a network manifest: either ``{name, file}`` layers or a fixture bundle."""
    doc = storage.read_manifest(path)
    root = path.parent
    layers = []
    for i, spec in enumerate(doc["layers"]):
        if "file" in spec:
            layers.append((spec.get("name", f"layer{i}"), storage.read_tensor(root / spec["file"])))
        elif "weight" in spec:
            layers.append((f"l{i}.weight", storage.read_tensor(root / spec["weight"])))
            if "bias" in spec:
                layers.append((f"l{i}.bias", storage.read_tensor(root / spec["bias"])))
        else:
            raise FormatError("layers", f"entry {i} has neither 'file' nor 'weight'", path)
    return layers, doc


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in name)


def cmd_quantize(args, quiet=False):
    src = Path(args.inp)
    if src.suffix == ".json":
        return _quantize_network(args, src)
    weights = storage.read_tensor(src)
    qt = quantize_tensor(weights, args.scheme, args.rounding, args.bits, x0=args.x0)
    out = Path(args.out) if args.out else src.with_suffix(".wqp")
    data = storage.packed_bytes(qt)
    storage.atomic_write(out, data)
    rep = {"file": str(out), "bits": qt.bits, "shape": list(qt.shape)}
    rep.update(_ratio_fields(qt, len(data)))
    if not quiet:
        r = tensor_report(src.stem, weights, qt).as_dict()
        r.pop("quantized", None)
        rep.update(r)
        rep.update(scheme=qt.scheme.value, rounding=qt.codebook.rounding.value, rescale=qt.rescale)
    _emit(_clean(rep))
    return 0


def _quantize_network(args, src: Path):
    layers, _ = _load_layers(src)
    outdir = Path(args.out) if args.out else src.parent / "quantized"
    outdir.mkdir(parents=True, exist_ok=True)
    result = quantize_network(layers, args.bits, args.scheme, args.rounding, skip=skip_low_rank, x0=args.x0)
    entries = []
    for (name, obj), rep in zip(result.layers, result.reports):
        row = rep.as_dict()
        if isinstance(obj, QuantizedTensor):
            fname = _safe_name(name) + ".wqp"
            data = storage.packed_bytes(obj)
            storage.atomic_write(outdir / fname, data)
            row.update(_ratio_fields(obj, len(data)))
        else:
            fname = _safe_name(name) + ".wqt"
            storage.write_tensor(outdir / fname, np.asarray(obj))
            row["bits"] = None
        row["file"] = fname
        _emit(_clean(row))
        entries.append(_clean({k: row[k] for k in ("name", "file", "sigma", "M", "x0", "rho", "bits")}))
    storage.write_manifest(outdir / "manifest.json", entries, quantized_fraction=result.quantized_fraction)
    _emit({"manifest": str(outdir / "manifest.json"), "quantized_fraction": result.quantized_fraction})
    return 0


def cmd_pack(args):
    return cmd_quantize(args, quiet=True)


def cmd_unpack(args):
    qt = storage.unpack(args.inp)
    out = Path(args.out) if args.out else Path(args.inp).with_suffix(".wqt")
    dtype = np.float64 if args.dtype == "float64" else np.float32
    storage.write_tensor(out, qt.dequantize().astype(dtype))
    _emit({"file": str(out), "shape": list(qt.shape), "bits": qt.bits, "dtype": args.dtype})
    return 0


def cmd_info(args):
    _emit(storage.packed_header(args.inp))
    return 0


def cmd_sweep(args):
    if args.inp:
        x = storage.read_tensor(args.inp)
    else:
        spec = experiments.DistributionSpec(kind=args.dist, count=args.count, seed=args.seed)
        x = experiments.sample(spec)
    nt = normalize(x)
    if nt.degenerate:
        raise DomainError("cannot sweep an all-zero tensor")
    sw = sweep_x0(nt.magnitudes, args.scheme, args.rounding, args.bits, signs=nt.signs)
    lines = ["x0_sigma,x0,rho"]
    for gs, g, r in zip(sw.grid_sigma, sw.grid, sw.correlations):
        lines.append(f"{float(gs)!r},{float(g)!r},{float(r)!r}")
    text = "\n".join(lines) + "\n"
    if args.csv:
        storage.atomic_write(args.csv, text.encode())
    else:
        sys.stderr.write(text)
    _emit({"best_x0": sw.best_x0, "best_x0_sigma": sw.best_x0_sigma, "best_rho": sw.best_rho,
           "bits": args.bits, "scheme": args.scheme, "rounding": args.rounding, "points": len(sw.grid)})
    return 0


def cmd_experiment(args):
    bits = parse_bits_range(args.bits)
    template = experiments.DistributionSpec(kind=args.dist, count=args.count, seed=args.seed)
    stats = experiments.run_table_experiment(template, bits, args.trials, threads=_threads(args))
    if args.csv:
        experiments.emit_csv(stats, args.csv)
    for s in stats:
        _emit(s.__dict__)
    return 0


def cmd_eval(args):
    bundle = inference.load_bundle(args.bundle) if args.bundle else inference.load_fixture()
    before, after = inference.compare_quantized(bundle.model, bundle.dataset, args.bits, args.scheme, args.rounding, args.x0)
    _emit({
        "float_top1": before.top1, "quantized_top1": after.top1, "count": before.count,
        "per_layer_rho": after.per_layer_rho, "recorded_float_top1": bundle.manifest.get("float_top1"),
        "bits": args.bits, "scheme": args.scheme, "rounding": args.rounding,
    })
    return 0


def _add_method(p, bits_default=4):
    p.add_argument("--bits", type=int, default=bits_default, help="bits per weight, sign included (2..8)")
    p.add_argument("--scheme", choices=["linear", "exponential"], default="exponential")
    p.add_argument("--rounding", choices=["floor", "ceil", "mean"], default="ceil")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wquant", description="Post-training weight quantization.")
    ap.add_argument("--threads", type=int, default=None, help="worker cap (default: $WQUANT_THREADS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a tensor file or a network manifest")
    p.add_argument("--in", dest="inp", required=True, help=".wqt tensor or .json manifest")
    _add_method(p)
    p.add_argument("--x0", default="heuristic", help="'sweep', 'heuristic' or a value in (0, 1)")
    p.add_argument("--out", help="packed file (tensor input) or directory (manifest input)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("pack", help="quantize and pack one tensor without the quality report")
    p.add_argument("--in", dest="inp", required=True)
    _add_method(p)
    p.add_argument("--x0", default="heuristic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("unpack", help="dequantize a packed file into a tensor file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    p.set_defaults(func=cmd_unpack)

    p = sub.add_parser("info", help="print the header and codebook of a packed file")
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("sweep", help="correlation as a function of x0")
    p.add_argument("--in", dest="inp", help="tensor file; omit to sample --dist")
    p.add_argument("--dist", choices=["laplacian", "gaussian"], default="laplacian")
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_method(p)
    p.add_argument("--csv", help="curve output (x0_sigma,x0,rho); default stderr")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("experiment", help="best correlation and x0 tables over random trials")
    p.add_argument("--dist", choices=["laplacian", "gaussian"], default="laplacian")
    p.add_argument("--bits", default="2..6", help="e.g. 2..6, 2-6 or 2,4,6")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("eval", help="top-1 accuracy before and after quantization")
    p.add_argument("--bundle", help="fixture bundle directory (default: shipped fixture)")
    _add_method(p, bits_default=6)
    p.add_argument("--x0", default="heuristic")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="wquant: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"wquant: format error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"wquant: I/O error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"wquant: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
