"""Command line interface: ``psc compare | registry | simgen | plot``.

Exit codes: 0 success, 1 invalid input, 2 I/O failure, 3 insufficient data.
Errors go to standard error as a single JSON line; nothing else does.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import simgen
from .analysis import DEFAULT_GRID_SIZE, ComparisonReport, compare
from .errors import IOFailure, PscError, SpecMismatch, ValidationError
from .model import DEFAULT_ORDER, AttackFamily, ComparisonSpec, FixedMetric, MetricKind, Mode, RunContext
from .plot import render_figure, write_svg
from .registry import (
    Provenance,
    RegistryEntry,
    RegistryKey,
    format_for,
    read_records,
    read_report,
    registry_add,
    registry_compare,
    registry_list,
    serialize_records,
    write_report,
)

REGISTRY_ENV = "PSC_REGISTRY"
COMPARE_KEYS = ("records", "format", "x", "y", "fix", "range", "resolution", "order",
                "methods", "grid_size", "out", "plot", "figure")
_LIST_KEYS = ("records", "methods")
_INT_KEYS = ("resolution", "order", "grid_size")


class CliError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError(f"{self.prog}: {message}")


# -- flag parsing ----------------------------------------------------------


def parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise CliError(f"range must look like lo:hi, got {text!r}") from None


def parse_fix(text: str) -> FixedMetric:
    """``asr=99.5~0.5`` keeps records with asr within 99.5 +/- 0.5."""
    try:
        name, rest = text.split("=", 1)
        center, tol = rest.split("~", 1)
        return FixedMetric(MetricKind.parse(name), float(center), float(tol))
    except ValueError:
        raise CliError(f"--fix must look like metric=center~tolerance, got {text!r}") from None


def parse_context(text: str) -> RunContext:
    parts = text.split(",")
    if len(parts) != 4:
        raise CliError("--context must be dataset,model,mode,attack_family")
    return RunContext(*parts)


def read_config(path: str) -> dict[str, Any]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc.strerror or exc}") from None
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in COMPARE_KEYS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _coerce(key: str, value: str) -> Any:
    if key in _LIST_KEYS:
        return [v.strip() for v in value.split(",") if v.strip()]
    if key in _INT_KEYS:
        try:
            return int(value)
        except ValueError:
            raise CliError(f"{key} must be an integer, got {value!r}") from None
    return value


def format_config(config: dict[str, Any]) -> str:
    lines = []
    for key in COMPARE_KEYS:
        value = config.get(key)
        if value is None:
            continue
        if key in _LIST_KEYS:
            value = ",".join(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _merge_config(args: argparse.Namespace) -> dict[str, Any]:
    config: dict[str, Any] = {"order": DEFAULT_ORDER, "grid_size": DEFAULT_GRID_SIZE}
    if getattr(args, "config", None):
        config.update(read_config(args.config))
    for key in COMPARE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def spec_from_config(config: dict[str, Any]) -> ComparisonSpec:
    missing = [k for k in ("x", "y", "range", "resolution") if config.get(k) is None]
    if missing:
        raise CliError("missing required setting(s): " + ", ".join("--" + k for k in missing))
    return ComparisonSpec(
        x_axis=MetricKind.parse(config["x"]),
        y_axis=MetricKind.parse(config["y"]),
        range=parse_range(config["range"]),
        resolution=config["resolution"],
        order=config.get("order", DEFAULT_ORDER),
        fixed=parse_fix(config["fix"]) if config.get("fix") else None,
    )


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--x", help="x-axis metric: l0, l1, l2, linf, asr, queries")
    p.add_argument("--y", help="y-axis metric")
    p.add_argument("--fix", help="fixed-metric band, e.g. l2=3.0~0.1")
    p.add_argument("--range", help="comparison range lo:hi")
    p.add_argument("--resolution", type=int, help="number of equal parts r")
    p.add_argument("--order", type=int, help=f"fitting order d (default {DEFAULT_ORDER}; 0 = polyline)")
    p.add_argument("--grid-size", dest="grid_size", type=int,
                   help=f"point-wise discrepancy grid (default {DEFAULT_GRID_SIZE})")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--plot", help="write the SVG figure here")
    p.add_argument("--figure", help="also draw a matplotlib figure (png/pdf/svg by suffix)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psc", description="Piece-wise sampling curving comparison of attack results.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compare", help="rank methods from record files")
    p.add_argument("--records", action="append", help="record file (.jsonl or .csv); repeatable")
    p.add_argument("--format", choices=("jsonl", "csv"), help="record format (default: by suffix)")
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m], help="comma-separated subset")
    _add_spec_flags(p)
    _add_output_flags(p)
    p.add_argument("--config", help="key = value settings file; flags override it")
    p.add_argument("--print-config", action="store_true", help="print the effective settings and exit")

    reg = sub.add_parser("registry", help="stored baselines")
    reg.add_argument("--root", help=f"registry directory (default ${REGISTRY_ENV})")
    rsub = reg.add_subparsers(dest="action", required=True, parser_class=_Parser)
    add = rsub.add_parser("add", help="store records as baselines")
    add.add_argument("--records", required=True)
    add.add_argument("--method", help="store only this method (default: every method in the file)")
    add.add_argument("--context", help="expected context dataset,model,mode,attack_family")
    add.add_argument("--submitter", default="")
    add.add_argument("--note", default="")
    _add_spec_flags(add)
    rsub.add_parser("list", help="list stored entries")
    rcmp = rsub.add_parser("compare", help="rank an upload against stored baselines")
    rcmp.add_argument("--upload", required=True)
    rcmp.add_argument("--method", help="uploaded method (default: the only method in the file)")
    _add_spec_flags(rcmp)
    _add_output_flags(rcmp)
    for q in (add, rcmp):
        q.add_argument("--root", dest="sub_root", help=argparse.SUPPRESS)

    g = sub.add_parser("simgen", help="write synthetic attack records")
    g.add_argument("--scenario", choices=SCENARIOS, default="crossing")
    g.add_argument("--x-cross", dest="x_cross", type=float, help="crossing abscissa (crossing scenario)")
    g.add_argument("--range", help="abscissa range lo:hi")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.0)
    g.add_argument("--points", type=int, default=121, help="abscissae per parameter set")
    g.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    g.add_argument("--out", default="-", help="output file (default: standard output)")

    pl = sub.add_parser("plot", help="re-render a saved report")
    pl.add_argument("--report", required=True)
    pl.add_argument("--out", help="SVG output (default: standard output)")
    pl.add_argument("--figure", help="matplotlib output (png/pdf/svg by suffix)")
    return parser


# -- output ----------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def rank_table(report: ComparisonReport) -> str:
    header = ("rank", "method", "auc", "clamped_auc", "points", "violations", "status")
    rows = [header]
    for e in report.entries:
        rows.append((str(e.rank), e.method, _fmt(e.auc), _fmt(e.clamped_auc),
                     str(len(e.series.points)), str(len(e.bound_violations)), "ok"))
    for f in report.failures:
        rows.append(("-", f.method, "-", "-", "-", "-", f.error))
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def summary(report: ComparisonReport) -> str:
    spec = report.spec
    better = "higher" if report.direction.value == "maximize" else "lower"
    lines = [
        f"context: {report.context}",
        f"{spec.y_axis.value} vs {spec.x_axis.value} over [{spec.range[0]!r}, {spec.range[1]!r}], "
        f"r={spec.resolution}, d={spec.order}" + (f", fixed {spec.fixed}" if spec.fixed else "")
        + f"; AUC: the {better} is better",
        "",
        rank_table(report).rstrip("\n"),
        "",
        f"crossings: {len(report.crossings)}",
    ]
    lines += [f"  {c.method_a} x {c.method_b} at {c.x:.4f}" for c in report.crossings]
    lines.append(f"point-wise winner changes: {len(report.pointwise_flips)}")
    lines += [f"  ({f.x1:.4f}, {f.x2:.4f}): {f.winner_at_x1} -> {f.winner_at_x2}" for f in report.pointwise_flips]
    lines += [f"note: {a}" for a in report.advisories]
    return "\n".join(lines) + "\n"


def _emit(report: ComparisonReport, out: str | None, plot: str | None, figure: str | None) -> None:
    if out:
        write_report(report, out)
    if plot:
        write_svg(report, plot)
    if figure:
        render_figure(report, figure)
    sys.stdout.write(summary(report))


# -- commands --------------------------------------------------------------


def cmd_compare(args: argparse.Namespace) -> int:
    config = _merge_config(args)
    if args.print_config:
        sys.stdout.write(format_config(config))
        return 0
    spec = spec_from_config(config)
    if not config.get("records"):
        raise CliError("missing required setting: --records")
    records = []
    for path in config["records"]:
        records.extend(read_records(path, config.get("format")))
    report = compare(records, spec, config.get("methods"), config["grid_size"])
    _emit(report, config.get("out"), config.get("plot"), config.get("figure"))
    return 0


def _registry_root(args: argparse.Namespace) -> Path:
    root = getattr(args, "sub_root", None) or args.root or os.environ.get(REGISTRY_ENV)
    if not root:
        raise CliError(f"registry root not set; pass --root or set ${REGISTRY_ENV}")
    return Path(root)


def cmd_registry(args: argparse.Namespace) -> int:
    root = _registry_root(args)
    if args.action == "list":
        rows = [("context", "spec", "method", "records", "sha256")]
        for e in registry_list(root):
            rows.append((str(e.key.context), e.key.spec_digest, e.method, str(e.records), e.content_hash[:12]))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        sys.stdout.write("\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                                   for r in rows) + "\n")
        return 0

    config = _merge_config(args)
    spec = spec_from_config(config)
    if args.action == "add":
        if not root.is_dir():
            raise IOFailure(f"registry root {root} does not exist")
        records = read_records(args.records)
        if args.method:
            records = [r for r in records if r.method == args.method]
        if not records:
            raise CliError("no records to add")
        contexts = {r.context for r in records}
        if len(contexts) > 1:
            raise SpecMismatch("records span several run contexts: "
                               + ", ".join(sorted(str(c) for c in contexts)))
        context = contexts.pop()
        if args.context and parse_context(args.context) != context:
            raise SpecMismatch(f"records have context {context}, expected {args.context}")
        key = RegistryKey.for_spec(context, spec)
        for method in sorted({r.method for r in records}):
            entry = RegistryEntry(key, method, tuple(r for r in records if r.method == method),
                                  Provenance(args.submitter, int(_now()), args.note))
            path = registry_add(root, entry, spec)
            sys.stdout.write(f"stored {method} -> {path}\n")
        return 0

    uploaded = read_records(args.upload)
    methods = sorted({r.method for r in uploaded})
    method = args.method
    if method is None:
        if len(methods) != 1:
            raise CliError(f"upload holds methods {methods}; choose one with --method")
        method = methods[0]
    contexts = {r.context for r in uploaded if r.method == method}
    if len(contexts) != 1:
        raise SpecMismatch(f"uploaded records of {method!r} must share one run context")
    key = RegistryKey.for_spec(contexts.pop(), spec)
    report = registry_compare(root, key, uploaded, method, spec, config["grid_size"])
    _emit(report, args.out, args.plot, args.figure)
    return 0


def _now() -> float:
    import time
    return time.time()


SCENARIOS = ("crossing", "underfit", "two-params", "decision", "score")


def simulate(scenario: str, range_: tuple[float, float], seed: int = 0, noise_sd: float = 0.0,
             points: int = 121, x_cross: float | None = None) -> list:
    """Records for one of the built-in synthetic scenarios."""
    lo, hi = range_
    if not lo < hi:
        raise ValidationError(f"range must satisfy lo < hi, got [{lo}, {hi}]")
    if points < 2:
        raise ValidationError("points must be >= 2")
    width = hi - lo
    xs = simgen.linspace(lo, hi, points)
    base = [("default", 0.0)]
    if scenario == "crossing":
        x_cross = lo + width / 2 if x_cross is None else x_cross
        a, b = simgen.crossing_pair(x_cross, range_)
        a = simgen.Logistic(a.scale, a.midpoint, a.ceiling, noise_sd, seed)
        b = simgen.Logistic(b.scale, b.midpoint, b.ceiling, noise_sd, seed + 1)
        return simgen.generate_runs(a, "steep", base, xs) + simgen.generate_runs(b, "shallow", base, xs)
    if scenario == "underfit":
        m = simgen.Logistic(9.0 / width, lo + width / 3, 98.0, noise_sd, seed)
        return simgen.generate_runs(m, "steep", base, xs)
    if scenario == "two-params":
        m = simgen.Logistic(6.0 / width, lo + width / 2, 100.0, noise_sd, seed)
        split = lo + 0.6 * width
        return (simgen.generate_runs(m, "mixed", [("small-step", -0.1 * width)], [x for x in xs if x < split])
                + simgen.generate_runs(m, "mixed", [("large-step", 0.0)], xs))
    ctx_family = AttackFamily.DECISION if scenario == "decision" else AttackFamily.SCORE
    context = RunContext("mnist", "cnn4", Mode.UNTARGETED, ctx_family)
    qs = sorted({max(1, int(round(x))) for x in xs})
    if scenario == "decision":
        fast = simgen.PowerDecay(40.0, 0.5, 0.5, noise_sd, seed)
        slow = simgen.PowerDecay(60.0, 0.5, 0.3, noise_sd, seed + 1)
        return (simgen.generate_runs(fast, "fast-decay", base, qs, MetricKind.QUERIES, MetricKind.L2, context)
                + simgen.generate_runs(slow, "slow-decay", base, qs, MetricKind.QUERIES, MetricKind.L2, context))
    # score-based: success rate against queries at a fixed L2 budget; "wide" sits outside 3.0 +/- 0.1.
    out = []
    for name, l2, scale, seed_off in (("bandit", 3.08, 6.0, 0), ("square", 2.95, 9.0, 1), ("wide", 3.15, 12.0, 2)):
        m = simgen.Logistic(scale / width, lo + width / 3, 100.0, noise_sd, seed + seed_off)
        out += simgen.generate_runs(m, name, base, qs, MetricKind.QUERIES, MetricKind.ASR, context,
                                    extra={MetricKind.L2: l2})
    return out


def cmd_simgen(args: argparse.Namespace) -> int:
    default = "100:5000" if args.scenario in ("decision", "score") else "0:3"
    range_ = parse_range(args.range or default)
    records = simulate(args.scenario, range_, args.seed, args.noise_sd, args.points, args.x_cross)
    text = serialize_records(records, args.format)
    if args.out == "-":
        sys.stdout.write(text)
        return 0
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {args.out}: {exc}") from None
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    report = read_report(args.report)
    if args.figure:
        render_figure(report, args.figure)
        if not args.out:
            return 0
    write_svg(report, args.out)
    return 0


COMMANDS = {"compare": cmd_compare, "registry": cmd_registry, "simgen": cmd_simgen, "plot": cmd_plot}


def _report_error(exc: PscError) -> int:
    payload = {"error": exc.kind, "message": exc.message, "exit_code": exc.exit_code}
    payload.update({k: v for k, v in exc.details.items() if isinstance(v, (str, int, float))})
    sys.stderr.write(json.dumps(payload) + "\n")
    return exc.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except PscError as exc:
        return _report_error(exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    raise SystemExit(main())
