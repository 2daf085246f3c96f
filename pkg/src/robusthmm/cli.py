"""Command-line entry point: ``robusthmm <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input (bad config, unknown
technique or suite, unreadable or unwritable files, failed checks) and 2
when a NaN or other numeric failure aborts the run.  Reports are
canonical JSON; wall-clock time goes to a separate ``timing.json`` so the
reports themselves are byte-identical across runs.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, checks
from . import compensation as comp
from . import experiment as ex
from . import io

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for numeric failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config)
    cfg = cfg.with_overrides(seed=args.seed, technique=getattr(args, "technique", None),
                             output=args.output, fmt=getattr(args, "format", None))
    if getattr(args, "viterbi", False):
        cfg = replace(cfg, decoder="viterbi")
    return cfg


def _timing(out: Path, command: str, start: float) -> None:
    io.write_json(out / "timing.json", {"command": command, "wall_clock_seconds": time.perf_counter() - start})


def cmd_generate(args) -> int:
    start = time.perf_counter()
    cfg = _config(args)
    out = ex.generate(cfg)
    _timing(out, "generate", start)
    print(f"wrote {cfg.trials} utterances to {out}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    models = io.read_models(args.model)
    tech = comp.technique(args.technique)
    if tech.kind != comp.ADAPTER:
        raise ValueError(f"technique {tech.id!r} compensates at decoding time and does not adapt a model")
    params = {}
    if args.params:
        doc = io.read_json(args.params, "params")
        params = io.params_from_dict(tech.id, doc.get("params", {}), Path(args.params).parent)
    if "spec" in tech.params and "spec" not in params and args.config:
        params["spec"] = ex.load_config(args.config).observation_model
    adapted = [comp.build(tech.id, m, params).hmm for m in models]
    prov = {"tool": "robusthmm", "version": __version__, "command": "adapt", "technique": tech.id,
            "source": Path(args.model).name}
    out = Path(args.output)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "adapted_models.json"
    io.write_models(out, adapted, prov)
    print(f"wrote {len(adapted)} adapted models to {out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    start = time.perf_counter()
    cfg = _config(args)
    models = io.read_models(args.model) if args.model else None
    if args.data:
        report, results = ex.decode_dataset(cfg, args.data, models, args.jobs)
    else:
        models = models if models is not None else ex.clean_models(cfg)
        items = [(i, None, None, None) for i in range(cfg.trials)]
        records = ex.run_trials(cfg, models, items, args.jobs, traces=True)
        report, results = ex.metrics_report(cfg, records), ex.results_document(cfg, records)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "metrics.json", report)
    io.write_json(out / "decode_results.json", results)
    _timing(out, "decode", start)
    print(f"{cfg.technique}: accuracy {report['accuracy']:.4f} over {report['trials']} trials "
          f"(mean margin {report['mean_margin']:.4f})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    start = time.perf_counter()
    base = _config(args)
    models = ex.clean_models(base)
    ids = args.techniques or [base.technique]
    rows = {}
    for tid in ids:
        cfg = base if tid == base.technique else base.with_overrides(technique=tid)
        report, _ = ex.evaluate(cfg, models, args.jobs)
        rows[tid] = {k: report[k] for k in ("accuracy", "mean_margin", "decoder", "trials")}
        print(f"{tid:32s} accuracy {report['accuracy']:.4f}  mean margin {report['mean_margin']:.4f}")
    out = Path(base.output)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "evaluation.json", io.document("evaluation", ex.provenance(base, "evaluate"),
                                                       techniques=rows))
    _timing(out, "evaluate", start)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    start = time.perf_counter()
    results = checks.run_suite(args.suite, args.seed or 0)
    width = max(len(f"{r.suite}/{r.name}") for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite + '/' + r.name:{width}s}  "
              f"error {r.error:.3e}  tolerance {r.tolerance:.1e}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "oracle_check.json", io.document(
            "oracle_check", {"tool": "robusthmm", "command": "oracle-check", "suite": args.suite},
            checks=[{"suite": r.suite, "name": r.name, "error": r.error, "tolerance": r.tolerance,
                     "passed": r.passed, "detail": r.detail} for r in results]))
        _timing(out, "oracle-check", start)
    return EXIT_OK if failed == 0 else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robusthmm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, technique=True):
        sp.add_argument("--config", required=True, help="experiment config (JSON, schema_version 1)")
        sp.add_argument("--seed", type=_u64, help="override the config seed")
        sp.add_argument("--output", help="output directory (overrides the config)")
        if technique:
            sp.add_argument("--technique", help="technique id (overrides the config)")

    g = sub.add_parser("generate", help="sample a labelled dataset")
    common(g, technique=False)
    g.add_argument("--format", choices=ex.FORMATS, help="feature file format")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("adapt", help="adapt a model file with a model-space technique")
    a.add_argument("--model", required=True)
    a.add_argument("--technique", required=True)
    a.add_argument("--params", help="parameter document (kind \"params\")")
    a.add_argument("--config", help="take the observation model from this config")
    a.add_argument("--output", required=True, help="output file (.json) or directory")
    a.set_defaults(func=cmd_adapt)

    d = sub.add_parser("decode", help="classify utterances and write a metrics report")
    common(d)
    d.add_argument("--data", help="dataset directory from generate (default: sample in memory)")
    d.add_argument("--model", help="model file to decode with (default: the dataset or config models)")
    d.add_argument("--jobs", type=int, default=1)
    d.add_argument("--viterbi", action="store_true", help="classify by Viterbi instead of forward scores")
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("evaluate", help="compare techniques on in-memory trials")
    common(e, technique=False)
    e.add_argument("--technique", dest="techniques", action="append", help="repeatable")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--viterbi", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle-check", help="run an oracle regression suite")
    o.add_argument("suite", help=f"one of: all, {', '.join(sorted(checks.SUITES))}")
    o.add_argument("--seed", type=_u64)
    o.add_argument("--output")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
