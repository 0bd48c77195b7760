"""Command-line front end: ``gsico encode|decode|inspect|bench|gen``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import _kernels, bench, bitstream
from .errors import BadIndex, GsicoError
from .imaging import available_backends
from .model_io import ModelKind, read_model, save_model, write_model
from .quantization import GROUPS, preset
from .synthetic import generate_synthetic

log = logging.getLogger("gsico")

KINDS = {"3dgs": ModelKind.THREEDGS, "scaffold": ModelKind.SCAFFOLD}


def parse_depths(items, kind) -> dict:
    out = {}
    for item in items or ():
        group, sep, bits = item.partition("=")
        if not sep:
            raise BadIndex(f"--depth expects group=bits, got {item!r}")
        if group not in GROUPS[kind]:
            raise BadIndex(f"unknown group {group!r} for {kind.name}; groups: {', '.join(GROUPS[kind])}")
        try:
            b = int(bits)
        except ValueError:
            raise BadIndex(f"bit depth must be an integer, got {bits!r}") from None
        if not 0 <= b <= 16:
            raise BadIndex(f"bit depth for {group} must be in 0..16, got {b}")
        out[group] = b
    return out


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2) if args.json else text)


def cmd_encode(args) -> None:
    model = read_model(args.input, args.mlp_sidecar)
    if args.kind != "auto" and model.kind != KINDS[args.kind]:
        raise bitstream.WrongFlavor(f"input is {model.kind.name}, --kind says {args.kind}")
    point = preset(model.kind, args.rd)
    depths = parse_depths(args.depth, model.kind)
    if depths:
        point = point.with_depths(**depths)
    data = bitstream.encode(model, point, args.backend, args.seed, scaffold_score=args.scaffold_score)
    Path(args.output).write_bytes(data)
    raw = os.path.getsize(args.input)
    if args.mlp_sidecar:
        raw += os.path.getsize(args.mlp_sidecar)
    summary = {"input": str(args.input), "output": str(args.output), "elements_in": len(model),
               "raw_bytes": raw, "container_bytes": len(data), "compression_factor": raw / len(data),
               "rd_index": point.rd_index, "backend": args.backend, "seed": args.seed}
    _emit(args, summary, f"{args.output}: {len(data)} bytes from {raw} "
                         f"(x{raw / len(data):.2f}, {len(model)} elements in)")


def cmd_decode(args) -> None:
    model = bitstream.decode(Path(args.input).read_bytes())
    save_model(model, args.output, args.mlp_sidecar)
    summary = {"input": str(args.input), "output": str(args.output), "kind": model.kind.name,
               "elements": len(model)}
    _emit(args, summary, f"{args.output}: {model.kind.name} model, {len(model)} elements")


def cmd_inspect(args) -> None:
    report = bitstream.inspect(Path(args.input).read_bytes())
    lines = [f"{args.input}: {report['model_kind']} v{report['version']}, {report['n_elements']} elements, "
             f"{report['w_map']}x{report['h_map']} maps, rd {report['rd_index']}, backend {report['backend']}",
             f"total {report['total_bytes']} B = header {report['header_bytes']} + maps {report['maps_bytes']}"
             f" + mlp {report['mlp_bytes']} + crc {report['trailer_bytes']};"
             f" x{report['compression_factor']:.2f} vs raw float32",
             f"{'id':>3} {'name':<16} {'bits':>4} {'codec':<8} {'bytes':>9} {'H(bits)':>8}  range"]
    for m in report["maps"]:
        lines.append(f"{m['param_id']:>3} {m['name']:<16} {m['bit_depth']:>4} {m['codec']:<8} "
                     f"{m['payload_bytes']:>9} {m['entropy_bits']:>8.3f}  [{m['x_min']:.6g}, {m['x_max']:.6g}]")
    _emit(args, report, "\n".join(lines))


def cmd_bench(args) -> None:
    model = read_model(args.input, args.mlp_sidecar)
    point = preset(model.kind, args.rd)
    depths = parse_depths(args.depth, model.kind)
    if depths:
        point = point.with_depths(**depths)
    results = bench.bench_orderings(model, point, args.backend, tuple(args.strategies), args.n_seeds,
                                    args.seed, scaffold_score=args.scaffold_score)
    bench.write_csv(results, args.output, model.kind)
    if args.dump_maps:
        pid = args.dump_param if args.dump_param is not None else bench.feature_map_ids(model.kind)[0]
        bench.dump_maps(results, args.dump_maps, pid)
    summary = bench.summarize(results)
    text = "\n".join(f"{s:<10} runs={v['runs']:<3} median bytes={v['median_total_bytes']:.0f} "
                     f"median gradient={v['median_mean_gradient']:.4g}" for s, v in summary.items())
    _emit(args, {"csv": str(args.output), "summary": summary}, text)


def cmd_gen(args) -> None:
    model = generate_synthetic(KINDS[args.kind], args.n, args.blobs, args.seed)
    save_model(model, args.output, args.mlp_sidecar)
    _emit(args, {"output": str(args.output), "kind": model.kind.name, "elements": len(model),
                 "bytes": len(write_model(model, embed_mlp=args.mlp_sidecar is None))},
          f"{args.output}: synthetic {model.kind.name} model, {len(model)} elements")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsico", description="Compress Gaussian Splatting models as images.")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--mlp-sidecar", help="Scaffold-GS MLP blob file (read or written)")
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    def coding(sp):
        sp.add_argument("--rd", type=int, default=1, choices=range(1, 6), metavar="1..5")
        sp.add_argument("--backend", default="png", choices=available_backends())
        sp.add_argument("--depth", action="append", metavar="GROUP=BITS",
                        help="override a group's bit depth (repeatable)")
        sp.add_argument("--scaffold-score", default="mlp", choices=("mlp", "proxy", "auto"))

    sp = sub.add_parser("encode", help="PLY -> .gsico")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--kind", default="auto", choices=("auto", *KINDS))
    coding(sp)
    common(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help=".gsico -> PLY")
    sp.add_argument("input")
    sp.add_argument("output")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("inspect", help="print a container report")
    sp.add_argument("input")
    sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("bench", help="compare element orderings, write CSV")
    sp.add_argument("input")
    sp.add_argument("output", help="CSV path")
    sp.add_argument("--strategies", nargs="+", default=list(bench.STRATEGIES), choices=bench.STRATEGIES)
    sp.add_argument("--n-seeds", type=int, default=20)
    sp.add_argument("--dump-maps", metavar="DIR", help="write one PNG of a map per run")
    sp.add_argument("--dump-param", type=int, help="parameter id to dump (default: first feature map)")
    coding(sp)
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("gen", help="write a synthetic model")
    sp.add_argument("output")
    sp.add_argument("--kind", default="3dgs", choices=tuple(KINDS))
    sp.add_argument("-n", type=int, default=100_000, help="number of elements")
    sp.add_argument("--blobs", type=int, default=16)
    common(sp)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _kernels.set_threads()
    try:
        args.func(args)
    except GsicoError as exc:
        print(f"gsico {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gsico {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
