"""Command line entry point: ``guardfed run|sweep|summarize|synth-export``.

Results land in ``$GUARDFED_RESULTS_DIR`` (default ``./results``) unless
``--out`` is given. Exit status: 0 on success, 1 when a run aborts, 2 for
bad arguments, configs or inputs.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from . import harness, report
from .config import ConfigError, load_config
from .dataset import SchemaError

logger = logging.getLogger("guardfed")

EXIT_ABORT = 1
EXIT_USAGE = 2


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else harness.results_dir()


def _apply_overrides(cfg, pairs):
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = (p.strip() for p in pair.split("=", 1))
        cfg = cfg.replace(**{key: value})
    return cfg


def _run_one(cfg, out_dir: Path, stem: str, extra_tags: dict | None = None) -> Path:
    records = []
    for _, rec in harness.iter_rounds(cfg):
        records.append(rec)
        r = rec.report
        aeod = "n/a" if r.aeod is None else f"{r.aeod:.4f}"
        logger.info("round %d acc=%.4f aeod=%s", rec.round, r.accuracy, aeod)
    path = harness.write_results(cfg, records, out_dir, stem, extra_tags)
    final = records[-1].report
    print(f"{path}: acc={final.accuracy:.4f} aeod={final.aeod} aspd={final.aspd}"
          f"{'' if final.fairness_valid else ' (fairness invalid: acc below threshold)'}")
    return path


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    _run_one(cfg, _out_dir(args), args.stem or harness.default_stem(cfg))
    return 0


def _parse_values(text: str) -> list[str]:
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    return values


def cmd_sweep(args) -> int:
    base = _apply_overrides(load_config(args.config), args.set)
    try:
        points = harness.sweep_configs(base, args.param, _parse_values(args.values), args.repeats)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = _out_dir(args)
    for value, r, cfg in points:
        stem = f"{harness.default_stem(base)}_{args.param}{value}_r{r}"
        _run_one(cfg, out_dir, stem, {args.param: value, "repeat": r})
    return 0


def cmd_summarize(args) -> int:
    group_by = [k.strip() for k in args.group_by.split(",") if k.strip()]
    text = report.summarize(args.files, group_by, args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth_export(args) -> int:
    cfg = load_config(args.config)
    table = harness.server_data(cfg)
    out = Path(args.output) if args.output else _out_dir(args) / f"{harness.default_stem(cfg)}.server.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out)
    print(f"{out}: {len(table)} rows ({int(table.is_synthetic.sum())} synthetic)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guardfed", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for per-round progress, -vv for debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment config file")
        p.add_argument("--out", help=f"results directory (default ${harness.RESULTS_ENV} or ./results)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value; repeatable")

    p = sub.add_parser("run", help="run one experiment")
    common(p)
    p.add_argument("--stem", help="output file stem")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one experiment per parameter value")
    common(p)
    p.add_argument("--param", required=True, help="config key to sweep (or server_fraction)")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--repeats", type=int, default=1, help="seeds per value (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("summarize", help="table of final-round metrics")
    p.add_argument("files", nargs="+", help="*.ndjson or *.summary.json results")
    p.add_argument("--group-by", default=",".join(report.DEFAULT_GROUP_BY),
                   help="comma-separated tag names")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("-o", "--output", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("synth-export", help="write the server's root + synthetic rows as CSV")
    p.add_argument("config", help="experiment config file")
    p.add_argument("--out", help="results directory for the default file name")
    p.add_argument("-o", "--output", help="CSV path")
    p.set_defaults(func=cmd_synth_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, report.SummaryError, FileNotFoundError) as exc:
        print(f"guardfed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harness.ExperimentError as exc:
        print(f"guardfed: aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
