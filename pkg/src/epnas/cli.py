"""Command-line front door.

Subcommands: search, cardinality, export, report, worker-check. Machine
output goes to files (or stdout for export/cardinality); progress goes to
stderr. Exit codes: 0 success, 2 bad config or arguments, 3 evaluator or
protocol failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import engine, protocol, space, surrogate

ENV_SEED = "EPNAS_SEED"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _atomic_write_text(path: Path, text: str) -> None:
    """Write via temp file + rename so readers never see a torn file."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_save_checkpoint(model: surrogate.SurrogateModel, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".npz")
    os.close(fd)
    try:
        surrogate.save_checkpoint(model, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default_seed() -> int:
    raw = os.environ.get(ENV_SEED)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{ENV_SEED} must be an integer, got {raw!r}")


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return doc


def _build_search_config(args) -> tuple[engine.SearchConfig, Path]:
    doc = _load_config_file(args.config) if args.config else {}
    out_dir = doc.pop("out_dir", None)

    # flag overrides beat config-file values beat built-in defaults
    overrides = {
        "space": args.space,
        "max_level": args.max_level,
        "outer_iterations": args.iterations,
        "k": args.k,
        "evaluator": args.evaluator,
        "external_cmd": args.external_cmd,
        "external_tcp": args.external_tcp,
    }
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    if args.greedy_topk:
        doc["greedy_topk"] = True

    has_explicit_seeds = any(
        k in doc for k in ("seed_search", "seed_surrogate", "seed_evaluator")
    )
    if args.seed is not None:
        base = args.seed
    elif has_explicit_seeds:
        base = None
    else:
        base = _default_seed()
    if base is not None:
        doc["seed_search"] = base
        doc["seed_surrogate"] = base + 1
        doc["seed_evaluator"] = base + 2

    try:
        config = engine.SearchConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad search config: {exc}")

    if args.out is not None:
        out_dir = args.out
    if out_dir is None:
        out_dir = "epnas-run"
    return config, Path(out_dir)


def cmd_search(args) -> int:
    config, out_dir = _build_search_config(args)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(rec: engine.EvalRecord) -> None:
        print(
            f"eval step={rec.step} iter={rec.outer_iteration} "
            f"arch={rec.arch_hash} accuracy={rec.accuracy:.6f}",
            file=sys.stderr,
        )

    try:
        result = engine.run_search(config, out_dir=out_dir, on_eval=progress)
    except protocol.WorkerError as exc:
        print(f"evaluator failure: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR

    doc = engine.report(result.history)
    _atomic_write_text(
        out_dir / "result.json",
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n",
    )
    _atomic_write_text(
        out_dir / "report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )
    _atomic_save_checkpoint(result.model, out_dir / "surrogate.ckpt")
    print(
        f"done: best accuracy {result.best_accuracy:.6f} "
        f"over {doc['unique_architectures']} unique architectures -> {out_dir}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_cardinality(args) -> int:
    try:
        sp = space.Space(args.space)
        n = space.cardinality(sp, args.level)
    except ValueError as exc:
        raise CliError(str(exc))
    if sp is space.Space.MACRO:
        formula = f"6^{args.level} * 2^{args.level * (args.level - 1) // 2}"
    else:
        formula = f"prod_(b=1..{args.level}) 49*(b+1)^2"
    print(f"{formula} = {n:,} ~ {float(n):.3e}")
    return EXIT_OK


def cmd_export(args) -> int:
    p = Path(args.arch)
    if not p.exists():
        raise CliError(f"architecture file not found: {args.arch}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.arch} is not valid JSON: {exc}")
    try:
        arch = space.from_json_dict(doc)
    except space.InvalidArchitecture as exc:
        raise CliError(f"bad architecture: {exc}")
    if args.format == "dot":
        text = space.export_dot(arch)
    else:
        text = json.dumps(space.to_json_dict(arch), indent=2, sort_keys=True) + "\n"
    if args.out:
        _atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args) -> int:
    p = Path(args.path)
    doc = None
    if p.is_dir():
        report_file = p / "report.json"
        if report_file.exists():
            doc = json.loads(report_file.read_text(encoding="utf-8"))
        else:
            p = p / "history.jsonl"
    if doc is None:
        if not p.exists():
            raise CliError(f"no report.json or history file at {args.path}")
        try:
            history = engine.History.from_jsonl(p)
            doc = _report_from_records(history)
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CliError(f"cannot read history {p}: {exc}")
    if args.json:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(engine.report_text(doc))
    return EXIT_OK


def _report_from_records(history: engine.History) -> dict:
    """Rebuild a report from a bare record log. Sampling entropies and
    temperatures are not recoverable from records, so they render as null.
    """
    if not history.records:
        raise ValueError("history file holds no records")
    by_step: dict[int, list[engine.EvalRecord]] = {}
    for rec in history.records:
        by_step.setdefault(rec.step, []).append(rec)
    cum = 0.0
    steps = []
    for step in sorted(by_step):
        recs = by_step[step]
        accs = [r.accuracy for r in recs]
        cum = max(cum, max(accs))
        steps.append(
            {
                "step": step,
                "iteration": recs[0].outer_iteration,
                "level": None,
                "tau": None,
                "n_candidates": None,
                "n_evaluated": len(recs),
                "entropy": None,
                "best_accuracy": max(accs),
                "mean_accuracy": float(np.mean(accs)),
                "cumulative_best": cum,
            }
        )
    best = history.best()
    return {
        "total_evaluations": len(history.records),
        "unique_architectures": history.unique_count(),
        "best_accuracy": best.accuracy,
        "best_arch_hash": best.arch_hash,
        "best_arch": best.arch,
        "tau_trace": [],
        "iteration_best": [],
        "steps": steps,
    }


def cmd_worker_check(args) -> int:
    if bool(args.cmd) == bool(args.tcp):
        raise CliError("give exactly one of --cmd or --tcp")
    seed = args.seed if args.seed is not None else _default_seed()
    rng = np.random.default_rng(seed)
    sp = space.Space(args.space)
    try:
        if args.cmd:
            client = protocol.WorkerClient.spawn(args.cmd, timeout=args.timeout)
        else:
            host, _, port = args.tcp.rpartition(":")
            client = protocol.WorkerClient.connect_tcp(
                host or "127.0.0.1", int(port), timeout=args.timeout
            )
    except protocol.WorkerError as exc:
        print(f"worker-check: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR

    try:
        client.handshake(args.space)
        max_depth = min(3, space.max_level_for(sp))
        for i in range(args.evals):
            depth = int(rng.integers(1, max_depth + 1))
            arch = space.random_arch(sp, depth, rng)
            doc = space.to_json_dict(arch)
            expected = protocol.stub_score(doc)
            got = client.evaluate(doc, epochs=3, channels=24, stack_n=2)
            if got != expected:
                print(
                    f"worker-check: mismatch on eval {i + 1}: "
                    f"worker={got!r} local={expected!r}",
                    file=sys.stderr,
                )
                return EXIT_EVALUATOR
        if args.inject_malformed:
            client.send_raw_line("this is not json {")
            reply = client.recv_msg()
            if reply.get("type") != "error":
                print(
                    f"worker-check: expected an error reply to garbage, got {reply!r}",
                    file=sys.stderr,
                )
                return EXIT_EVALUATOR
            # session must survive the bad line
            arch = space.random_arch(sp, 1, rng)
            doc = space.to_json_dict(arch)
            if client.evaluate(doc, epochs=3, channels=24, stack_n=2) != protocol.stub_score(doc):
                print("worker-check: post-error eval mismatch", file=sys.stderr)
                return EXIT_EVALUATOR
        client.shutdown()
    except protocol.WorkerError as exc:
        print(f"worker-check: {exc}", file=sys.stderr)
        client.close()
        return EXIT_EVALUATOR
    extra = " + malformed-line probe" if args.inject_malformed else ""
    print(f"worker-check: handshake + {args.evals} evals OK{extra}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epnas", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run a progressive architecture search")
    p.add_argument("--config", help="JSON config file mirroring SearchConfig")
    p.add_argument("--out", help="output directory (default: epnas-run)")
    p.add_argument("--space", choices=["macro", "micro"])
    p.add_argument("--max-level", type=int, dest="max_level")
    p.add_argument("--iterations", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--evaluator", choices=["synthetic", "external"])
    p.add_argument("--greedy-topk", action="store_true", dest="greedy_topk")
    p.add_argument("--external-cmd", dest="external_cmd")
    p.add_argument("--external-tcp", dest="external_tcp")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("cardinality", help="count a search space exactly")
    p.add_argument("space", choices=["macro", "micro"])
    p.add_argument("level", type=int)
    p.set_defaults(func=cmd_cardinality)

    p = sub.add_parser("export", help="render an architecture JSON file")
    p.add_argument("arch", help="path to an architecture JSON document")
    p.add_argument("--format", choices=["dot", "json"], default="dot")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("report", help="summarize a finished or partial run")
    p.add_argument("path", help="run directory or history.jsonl file")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("worker-check", help="probe an external worker")
    p.add_argument("--cmd", help="worker command line to spawn (stdio mode)")
    p.add_argument("--tcp", help="host:port of a listening worker")
    p.add_argument("--space", choices=["macro", "micro"], default="macro")
    p.add_argument("--evals", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument(
        "--inject-malformed",
        action="store_true",
        help="also send a garbage line and require an error reply",
    )
    p.set_defaults(func=cmd_worker_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
