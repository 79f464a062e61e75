"""Command-line front end.

Subcommands:
  report     size/GOPS/power table for a model grid config
  verify     run the invariant suites (fold | grad | stream | flops | all)
  compare    per-pair size/power/GOPS reductions
  bench      host wall-clock chunk latency / token throughput
  train-toy  train the toy classification task, write the curve CSV

Exit codes: 0 success, 1 failed check or unmet target, 2 usage/config
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import bench_grid
from .config import ConfigError, build_encoder_spec, load_config
from .grids import grid_report, pair_reductions
from .streaming import init_encoder
from .toy import ToyTask, init_head, train_toy
from .verify import SUITE_NAMES, run_suites

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _emit_table(header: list[str], rows: list[list[str]], fmt: str, out) -> None:
    if fmt == "csv":
        out.write(",".join(header) + "\n")
        for row in rows:
            out.write(",".join(row) + "\n")
        return
    widths = [
        max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
        for i, h in enumerate(header)
    ]
    out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    for row in rows:
        out.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    result = grid_report(cfg)
    header = ["model", "folding_layers", "standard_layers", "size_m", "gops", "power_mw"]
    rows = []
    by_name = {m.name: m for m in cfg.models}
    for row in result.rows:
        m = by_name[row.name]
        rows.append(
            [row.name, str(m.folding_layers), str(m.standard_layers),
             _fmt(row.size_m), _fmt(row.gops), _fmt(row.power_mw)]
        )
    out, close = _open_out(args.out)
    _emit_table(header, rows, args.format or cfg.output, out)
    if close:
        out.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITE_NAMES) if args.suite == "all" else [args.suite]
    results = run_suites(names, seed=args.seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f"  ({r.detail})" if (r.detail and not r.passed) else ""
        print(f"[{status}] {r.suite}/{r.name}{detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def cmd_compare(args) -> int:
    pairs_path = Path(args.pairs)
    try:
        doc = json.loads(pairs_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read pairs file {pairs_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{pairs_path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if args.config:
        cfg = load_config(args.config)
    elif "config" in doc:
        cfg = load_config(pairs_path.parent / doc["config"])
    else:
        raise ConfigError("compare needs --config or a 'config' entry in the pairs file")
    pairs = [tuple(p) for p in doc.get("pairs", [])]
    for p in pairs:
        if len(p) != 2:
            raise ConfigError(f"pair {p!r} must have exactly two model ids")

    reductions = pair_reductions(cfg, pairs, prefer_reference=not args.fitted)
    header = ["candidate", "baseline", "size_pct", "power_pct", "gops_pct"]
    rows = [
        [r.candidate, r.baseline, _fmt(r.size_pct), _fmt(r.power_pct), _fmt(r.gops_pct)]
        for r in reductions
    ]
    out, close = _open_out(args.out)
    _emit_table(header, rows, args.format or cfg.output, out)
    if reductions:
        size_lo = min(r.size_pct for r in reductions)
        size_hi = max(r.size_pct for r in reductions)
        power_lo = min(r.power_pct for r in reductions)
        power_hi = max(r.power_pct for r in reductions)
        out.write(
            f"size reduction {size_lo:.1f}%..{size_hi:.1f}%, "
            f"power reduction {power_lo:.1f}%..{power_hi:.1f}%\n"
        )
    if close:
        out.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    rows = bench_grid(cfg, seconds=args.seconds)
    header = ["model", "chunks", "mean_ms", "p95_ms", "tokens_per_s"]
    table = [
        [r.name, str(r.chunks), _fmt(r.mean_ms), _fmt(r.p95_ms), _fmt(r.tokens_per_s)]
        for r in rows
    ]
    out, close = _open_out(args.out)
    _emit_table(header, table, args.format or cfg.output, out)
    if close:
        out.close()
    return EXIT_OK


def cmd_train_toy(args) -> int:
    cfg = load_config(args.config)
    if cfg.toy is None:
        raise ConfigError(f"config {cfg.name!r} has no toy section")
    if len(cfg.models) != 1:
        raise ConfigError("toy training expects exactly one model in the config")
    spec = build_encoder_spec(cfg, cfg.models[0])
    model = init_encoder(spec, seed=cfg.seed)
    head = init_head(spec.width, cfg.toy.num_classes, seed=cfg.seed + 1)
    task = ToyTask(
        seed=cfg.toy.task_seed,
        num_classes=cfg.toy.num_classes,
        seq_len=cfg.toy.seq_len,
        feature_dim=cfg.streaming.feature_dim,
        noise=cfg.toy.noise,
        train_sequences=cfg.toy.train_sequences,
        eval_sequences=cfg.toy.eval_sequences,
    )
    lr = cfg.toy.lr if args.lr is None else args.lr
    result = train_toy(model, head, task, steps=cfg.toy.steps, lr=lr,
                       batch_size=cfg.toy.batch_size)

    out, close = _open_out(args.out)
    out.write("step,loss,accuracy\n")
    for s, l, a in zip(result.steps, result.losses, result.accuracies):
        out.write(f"{s},{l!r},{a!r}\n")
    if close:
        out.close()

    if result.diverged_at is not None:
        print(f"diverged at step {result.diverged_at}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(
        f"final loss {result.final_loss:.4f}, final accuracy {result.final_accuracy:.4f} "
        f"(target {cfg.toy.target_accuracy})",
        file=sys.stderr,
    )
    if result.final_accuracy < cfg.toy.target_accuracy:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foldattn",
        description="Folding attention: cost tables, verification, benchmarks, toy training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("report", help="size/GOPS/power table for a grid config")
    p.add_argument("--config", required=True)
    p.add_argument("--format", choices=["text", "csv"], default=None)
    p.add_argument("--out", default=None, help="output file ('-' for stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("--suite", choices=list(SUITE_NAMES) + ["all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="reduction table over model pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--fitted", action="store_true",
                   help="use fitted predictions even when reference rows exist")
    p.add_argument("--format", choices=["text", "csv"], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="host wall-clock streaming benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--format", choices=["text", "csv"], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-toy", help="train the toy task, write the curve CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--lr", type=float, default=None, help="override the config learning rate")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train_toy)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
