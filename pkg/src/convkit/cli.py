"""Command-line front end: decompose, flops, verify, sweep.

Exit codes: 0 success, 1 usage or I/O error, 2 validation error,
3 numeric error. Model arguments are manifest paths; the weight blob
defaults to the manifest path with a .bin suffix.

CONVKIT_THREADS caps worker parallelism for sweeps (0 or unset = auto).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
from pathlib import Path

from .decompose import match_rank, max_rank
from .errors import NumericError, ValidationError
from .graph import (
    DecompositionPlan,
    ModelGraph,
    PlanEntry,
    apply_plan,
    count_macs,
    load_model,
    save_model,
    verify_models,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _blob_path(manifest: str, explicit: str | None) -> Path:
    return Path(explicit) if explicit else Path(manifest).with_suffix(".bin")


def _load(manifest: str, blob: str | None) -> ModelGraph:
    mpath = Path(manifest)
    bpath = _blob_path(manifest, blob)
    for p in (mpath, bpath):
        if not p.exists():
            raise FileNotFoundError(f"no such file: {p}")
    return load_model(mpath, bpath)


def _worker_count() -> int:
    raw = os.environ.get("CONVKIT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"CONVKIT_THREADS must be an integer, got {raw!r}")
    return n if n > 0 else (os.cpu_count() or 1)


def _conv_layers(model: ModelGraph) -> list:
    return [s for s in model.layers if s.kind == "conv2d"]


def _select_layers(model: ModelGraph, selector: str) -> list[str]:
    convs = [s.name for s in _conv_layers(model)]
    if selector == "all":
        return convs
    if selector == "all-but-first":
        return convs[1:]
    if selector.startswith("first:"):
        return convs[: int(selector.split(":", 1)[1])]
    if selector.startswith("last:"):
        k = int(selector.split(":", 1)[1])
        return convs[-k:] if k else []
    raise ValidationError(
        f"bad layer selector {selector!r}; use all | all-but-first | first:K | last:K"
    )


def _layer_shape(model: ModelGraph, name: str) -> tuple[int, int, int, int]:
    spec = next(s for s in model.layers if s.name == name)
    return model.tensors[spec.attrs["weights"]].shape


def _uniform_plan(model: ModelGraph, scheme: str, rank: str, layers: str,
                  match_dac_rank: int | None) -> DecompositionPlan:
    entries = []
    for name in _select_layers(model, layers):
        n, kw, kh, c = _layer_shape(model, name)
        if scheme == "dac":
            if rank is None:
                raise ValidationError("--match-dac-rank only applies to channel/spatial")
            r = min(n, kw * kh) if rank == "full" else int(rank)
        elif match_dac_rank is not None:
            r = match_rank((n, kw, kh, c), match_dac_rank, scheme)
        elif rank == "full":
            r = max_rank(scheme, n, kw, kh, c)
        else:
            r = int(rank)
        entries.append(PlanEntry(name, scheme, r))
    return DecompositionPlan(entries)


def cmd_decompose(args) -> int:
    model = _load(args.model, args.blob)
    if args.plan:
        plan = DecompositionPlan.from_json(json.loads(Path(args.plan).read_text()))
    else:
        if args.rank is None and args.match_dac_rank is None:
            raise ValidationError("either --plan, --rank or --match-dac-rank is required")
        plan = _uniform_plan(model, args.scheme, args.rank, args.layers, args.match_dac_rank)
    out_model, report = apply_plan(model, plan)
    save_model(out_model, args.out, _blob_path(args.out, args.blob_out))
    payload = json.dumps(report.to_json(), indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(payload)
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_flops(args) -> int:
    model = _load(args.model, args.blob)
    counter = count_macs(model)
    width = max((len(n) for n, _ in counter.breakdown), default=5)
    for name, macs in counter.breakdown:
        print(f"{name:<{width}}  {macs:>14d}")
    print(f"{'total':<{width}}  {counter.total:>14d}")
    return EXIT_OK


def cmd_verify(args) -> int:
    a = _load(args.model_a, args.blob_a)
    b = _load(args.model_b, args.blob_b)
    summary = verify_models(a, b, args.n, args.seed)
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def _sweep_row(model: ModelGraph, layer_names: list[str], scheme: str, rank: int,
               n_inputs: int, seed: int) -> dict:
    entries = []
    for name in layer_names:
        n, kw, kh, c = _layer_shape(model, name)
        r = min(rank, max_rank(scheme, n, kw, kh, c))
        entries.append(PlanEntry(name, scheme, r))
    out_model, report = apply_plan(model, DecompositionPlan(entries))
    err = sum(rec.frobenius_error ** 2 for rec in report.records) ** 0.5
    divergence = verify_models(model, out_model, n_inputs, seed)["max_abs_diff"]
    return {
        "layers_decomposed": len(layer_names),
        "rank": rank,
        "saved_ratio": report.saved_ratio,
        "frobenius_error": err,
        "divergence": divergence,
    }


def cmd_sweep(args) -> int:
    model = _load(args.model, args.blob)
    ranks = [int(r) for r in args.ranks.split(",") if r]
    if not ranks:
        raise ValidationError("--ranks must list at least one rank")
    convs = [s.name for s in _conv_layers(model)]

    jobs: list[tuple[list[str], int]] = []
    if args.layer:
        if args.layer not in convs:
            raise ValidationError(f"unknown conv layer {args.layer!r}")
        for r in ranks:
            jobs.append(([args.layer], r))
    else:
        counts = [int(k) for k in args.layer_counts.split(",") if k]
        if not counts:
            raise ValidationError("--layer-counts must list at least one count")
        for r in ranks:
            for k in counts:
                if not 1 <= k <= len(convs):
                    raise ValidationError(f"layer count {k} out of range [1, {len(convs)}]")
                names = convs[:k] if args.direction == "front-to-back" else convs[-k:]
                jobs.append((names, r))

    with concurrent.futures.ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = [
            pool.submit(_sweep_row, model, names, args.scheme, r, args.n, args.seed)
            for names, r in jobs
        ]
        rows = [f.result() for f in futures]  # output order follows config order

    fields = ["layers_decomposed", "rank", "saved_ratio", "frobenius_error", "divergence"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="convkit", description="Data-free convolutional layer factorization")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="factor conv layers of a model")
    d.add_argument("model", help="input manifest path")
    d.add_argument("out", help="output manifest path")
    d.add_argument("--blob", help="input blob (default: manifest with .bin)")
    d.add_argument("--blob-out", help="output blob (default: out manifest with .bin)")
    d.add_argument("--plan", help="JSON plan file; overrides the uniform flags")
    d.add_argument("--scheme", choices=["dac", "channel", "spatial"], default="dac")
    d.add_argument("--rank", help="rank / filter count, or 'full'")
    d.add_argument("--layers", default="all",
                   help="all | all-but-first | first:K | last:K (default: all)")
    d.add_argument("--match-dac-rank", type=int,
                   help="for channel/spatial: pick c' matching this depthwise rank's MACs")
    d.add_argument("--report", help="write the JSON report here instead of stdout")
    d.set_defaults(func=cmd_decompose)

    f = sub.add_parser("flops", help="per-layer MAC table")
    f.add_argument("model")
    f.add_argument("--blob")
    f.set_defaults(func=cmd_flops)

    v = sub.add_parser("verify", help="compare two models on random inputs")
    v.add_argument("model_a")
    v.add_argument("model_b")
    v.add_argument("--blob-a")
    v.add_argument("--blob-b")
    v.add_argument("-n", type=int, default=16)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="rank / layer-count sweeps, CSV output")
    s.add_argument("model")
    s.add_argument("--blob")
    s.add_argument("--scheme", choices=["dac", "channel", "spatial"], default="dac")
    s.add_argument("--ranks", required=True, help="comma-separated rank list")
    s.add_argument("--layer", help="single-layer sweep over this conv layer")
    s.add_argument("--layer-counts", help="comma-separated prefix/suffix lengths")
    s.add_argument("--direction", choices=["front-to-back", "back-to-front"],
                   default="back-to-front")
    s.add_argument("-n", type=int, default=8, help="verification inputs per row")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="CSV output path (default: stdout)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "sweep" and not (args.layer or args.layer_counts):
            raise ValidationError("sweep needs --layer or --layer-counts")
        return args.func(args)
    except (FileNotFoundError, OSError) as exc:
        print(f"convkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"convkit: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"convkit: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
