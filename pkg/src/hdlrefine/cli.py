"""Command-line entry point.

Exit codes: 0 success, 1 iteration budget exhausted, 2 usage or config
error, 3 EDA tool failure, 4 LLM failure. Machine output goes to files,
human-readable logs to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import LoadedConfig, build_config, load_config
from .errors import HdlRefineError, InvariantViolation, ValidationError
from .harness import (
    backend_factory_from_settings,
    export_report,
    load_cases,
    load_report,
    render_summary,
    report_to_csv,
    run_suite,
)
from .llm import make_backend
from .model import DesignSpec, PipelineStatus
from .orchestrator import new_run_id, run_pipeline
from .toolchain import Availability, builtin_profiles, doctor, load_profile

EXIT_OK = 0
EXIT_EXHAUSTED = 1
EXIT_USAGE = 2
EXIT_TOOL = 3
EXIT_LLM = 4

_STATUS_EXIT = {
    PipelineStatus.SUCCESS: EXIT_OK,
    PipelineStatus.SYNTAX_EXHAUSTED: EXIT_EXHAUSTED,
    PipelineStatus.FUNCTIONAL_EXHAUSTED: EXIT_EXHAUSTED,
    PipelineStatus.TOOL_FAILURE: EXIT_TOOL,
    PipelineStatus.LLM_FAILURE: EXIT_LLM,
}

log = logging.getLogger("hdlrefine")


class _Parser(argparse.ArgumentParser):
    """Prints the full help, not just the usage line, on a usage error."""

    def error(self, message: str) -> None:
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, metavar="PATH",
                        help="YAML run configuration; flags override its values")
    parser.add_argument("--lang", choices=["verilog", "vhdl"],
                        help="target HDL (required when no config sets it)")
    parser.add_argument("--backend", metavar="NAME",
                        help="LLM backend: mock, openai, anthropic or another OpenAI-compatible "
                             "provider configured in the config file")
    parser.add_argument("--max-syntax-iters", type=int, metavar="N",
                        help="syntax loop iteration budget (default 10)")
    parser.add_argument("--max-func-iters", type=int, metavar="N",
                        help="functional loop iteration budget (default 10)")
    parser.add_argument("--workdir", type=Path, metavar="DIR",
                        help="root directory for run workspaces (default ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hdlrefine",
        description="Generate HDL with an LLM, then repair it against compiler and "
                    "simulator feedback.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = sub.add_parser("generate", help="run the pipeline on one design prompt",
                         description="Run the pipeline on one design prompt. Writes the final "
                                     "sources, logs/ and result.json into the run workspace.")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--prompt", metavar="TEXT", help="design description given inline")
    source.add_argument("--spec", type=Path, metavar="PATH", help="file holding the design description")
    gen.add_argument("--module-name", metavar="NAME", help="required top-level module/entity name")
    gen.add_argument("--interactive", action="store_true",
                     help="let the agent ask clarifying questions on the terminal")
    gen.add_argument("--run-id", metavar="ID", help="workspace name (default: timestamp + random suffix)")
    _add_run_options(gen)

    bench = sub.add_parser("bench", help="evaluate the pipeline on a benchmark directory",
                           description="Run every case N times and score the final RTL against "
                                       "each case's reference testbench.")
    bench.add_argument("--cases", type=Path, required=True, metavar="DIR",
                       help="directory with one sub-directory per case (spec.txt, ref_tb.<ext>)")
    bench.add_argument("--n", type=int, default=1, metavar="N", help="samples per case (default 1)")
    bench.add_argument("--workers", type=int, default=1, metavar="N",
                       help="cases evaluated in parallel (default 1)")
    bench.add_argument("--out", type=Path, required=True, metavar="PATH", help="report JSON path")
    bench.add_argument("--csv", type=Path, metavar="PATH", help="also write the per-sample CSV here")
    bench.add_argument("--no-baseline", action="store_true",
                       help="skip scoring the unrepaired first RTL (no Delta_F)")
    _add_run_options(bench)

    report = sub.add_parser("report", help="render a stored suite report",
                            description="Print pass rates, Delta_F and the latency split of a "
                                        "report written by `bench`.")
    report.add_argument("input", type=Path, metavar="REPORT", help="report JSON from `bench --out`")
    report.add_argument("--format", choices=["table", "csv"], default="table",
                        help="table (default) or CSV on stdout")

    doc = sub.add_parser("doctor", help="check that the EDA tools can be found and run",
                         description="Probe tool profiles with a trivial design. Exit 3 if any "
                                     "checked profile is unusable.")
    doc.add_argument("--config", type=Path, metavar="PATH",
                     help="check only the tool profile of this run configuration")
    doc.add_argument("--profile", action="append", metavar="NAME",
                     help="built-in profile to check (repeatable; default: all)")
    return parser


def _load(args: argparse.Namespace) -> LoadedConfig:
    overrides = {
        "language": args.lang,
        "max_syntax_iters": args.max_syntax_iters,
        "max_functional_iters": args.max_func_iters,
        "workdir_root": str(args.workdir.resolve()) if args.workdir else None,
    }
    # clarifying questions only when `generate --interactive` asks for them
    overrides["interactive"] = bool(getattr(args, "interactive", False))
    if args.config is not None:
        loaded = load_config(args.config, overrides)
    else:
        if overrides["workdir_root"] is None:
            overrides["workdir_root"] = str(Path("runs").resolve())
        loaded = build_config({}, Path.cwd(), overrides)
    if args.backend:
        if str(loaded.backend.get("name", "mock")).lower() != args.backend.lower():
            loaded.backend = {"name": args.backend}
    return loaded


def _ask_on_terminal(questions: Sequence[str]) -> list[str]:
    answers = []
    for question in questions:
        print(f"? {question}", file=sys.stderr)
        answers.append(input("> ").strip())
    return answers


def cmd_generate(args: argparse.Namespace) -> int:
    loaded = _load(args)
    config = loaded.run
    text = args.prompt if args.prompt is not None else args.spec.read_text()
    spec = DesignSpec(text, config.language, module_name_hint=args.module_name)
    backend = make_backend(loaded.backend, loaded.base_dir)
    clarify = _ask_on_terminal if config.interactive else None
    run_id = args.run_id or new_run_id()
    result = run_pipeline(spec, config, backend, run_id=run_id, clarify=clarify)
    log.info("status: %s (%d syntax, %d functional iterations)%s", result.status.value,
             result.syntax_iters, result.functional_iters,
             f"; {result.detail}" if result.detail else "")
    # the one line on stdout: where the machine-readable result lives
    print(config.workdir_root / run_id / "result.json")
    return _STATUS_EXIT[result.status]


def cmd_bench(args: argparse.Namespace) -> int:
    loaded = _load(args)
    config = loaded.run
    if args.n < 1 or args.workers < 1:
        raise ValidationError("--n and --workers must be >= 1")
    cases = load_cases(args.cases, config.language)
    factory = backend_factory_from_settings(loaded.backend, loaded.base_dir)
    report = run_suite(cases, config, args.n, args.workers, factory,
                       score_baseline=not args.no_baseline)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    export_report(report, "json", args.out)
    if args.csv:
        export_report(report, "csv", args.csv)
    log.info("pass@1_S %.2f%%, pass@1_F %.2f%% over %d cases; report at %s",
             report.pass_at_1_syntax, report.pass_at_1_functional, len(cases), args.out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = load_report(args.input)
    if args.format == "csv":
        sys.stdout.write(report_to_csv(report))
    else:
        color = sys.stdout.isatty() and not os.environ.get("NO_COLOR")
        sys.stdout.write(render_summary(report, color=color))
    return EXIT_OK


def cmd_doctor(args: argparse.Namespace) -> int:
    if args.config is not None:
        profiles = [load_config(args.config).run.tool_profile]
    elif args.profile:
        profiles = [load_profile(name) for name in args.profile]
    else:
        profiles = list(builtin_profiles().values())
    statuses = doctor(profiles)
    for status in statuses:
        line = f"{status.profile:<14} {status.status.value:<13} {status.command}"
        print(line)
        if status.detail:
            print(f"{'':<14} {status.detail}")
    ok = all(s.status is Availability.AVAILABLE for s in statuses)
    return EXIT_OK if ok else EXIT_TOOL


_COMMANDS = {
    "generate": cmd_generate,
    "bench": cmd_bench,
    "report": cmd_report,
    "doctor": cmd_doctor,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except InvariantViolation as exc:
        log.error("invariant violated: %s", exc)
        return EXIT_TOOL
    except (ValidationError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except HdlRefineError as exc:
        log.error("%s", exc)
        return EXIT_TOOL


if __name__ == "__main__":
    sys.exit(main())
