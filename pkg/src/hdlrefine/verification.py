"""Functional-loop supervisor: simulate against the frozen testbench."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import toolchain
from .diagnostics import CompileReport, ParseRuleSet, SimReport, parse_compile_log, parse_sim_log
from .errors import ContractViolation, InvariantViolation
from .model import Severity, SourceArtifact, content_digest
from .review import build_syntax_corrective_prompt
from .templates import load_template, render
from .toolchain import RawToolLog, ToolProfile


@dataclass
class FunctionalVerdict:
    all_passed: bool
    report: SimReport
    corrective_prompt: Optional[str]
    testbench_hash: str
    compile_report: Optional[CompileReport] = None
    tool_ms: float = 0.0
    logs: list[RawToolLog] = field(default_factory=list)

    @property
    def syntax_regression(self) -> bool:
        return self.compile_report is not None and not self.compile_report.clean

    @property
    def error_count(self) -> int:
        if self.syntax_regression:
            # a revision that no longer compiles ranks below every one that does
            return SYNTAX_REGRESSION_PENALTY + self.compile_report.error_count
        return 0 if self.all_passed else self.report.error_count


SYNTAX_REGRESSION_PENALTY = 1000


def build_functional_corrective_prompt(report: SimReport, rtl: SourceArtifact,
                                       prompt_dir: Optional[Path] = None) -> str:
    if report.all_passed:
        raise ContractViolation("no corrective prompt for a passing simulation")
    sections = []
    for number, outcome in enumerate(report.failures, start=1):
        sections.append(f"{number}. Test case {outcome.case_id} failed: {outcome.message}")
    runtime_errors = [d for d in report.diagnostics if d.severity is Severity.ERROR]
    for diagnostic in runtime_errors:
        where = f"{diagnostic.file}:{diagnostic.line}" if diagnostic.line else diagnostic.file
        sections.append(f"- Simulator error at {where or 'unknown location'}: {diagnostic.message}")
    if report.timed_out:
        sections.append("The simulation did not finish within its time limit and was killed. "
                        "The design most likely hangs the testbench, for example through a "
                        "combinational loop or a state machine that never reaches the expected state.")
    elif not report.failures:
        sections.append("The simulation ended without the testbench reporting that all tests "
                        "passed. Check the simulator output below for the cause.")
    return render(
        load_template("functional", prompt_dir),
        failures="\n".join(sections) + "\n",
        rtl=rtl.text,
        raw_tail=report.raw_tail or "(no output)",
        language=rtl.language.display_name,
    )


def verify(rtl: SourceArtifact, testbench: SourceArtifact, pinned_hash: str,
           profile: ToolProfile, rules: ParseRuleSet, workdir: "str | Path",
           prompt_dir: Optional[Path] = None) -> FunctionalVerdict:
    """Re-compile, then simulate ``rtl`` against the pinned testbench."""
    if testbench.content_hash != pinned_hash:
        raise InvariantViolation(
            f"testbench changed during the functional loop "
            f"(pinned {pinned_hash[:12]}, got {testbench.content_hash[:12]})")
    workdir = Path(workdir)
    compile_log = toolchain.compile([rtl, testbench], profile, workdir)
    compile_report = parse_compile_log(compile_log, rules)
    if not compile_report.clean:
        empty = SimReport(outcomes=[], sentinel_seen=False, timed_out=False,
                          raw_tail=compile_report.raw_tail, exit_code=compile_log.exit_code)
        prompt = build_syntax_corrective_prompt(compile_report, rtl, testbench, prompt_dir)
        return FunctionalVerdict(False, empty, prompt, pinned_hash, compile_report,
                                 compile_log.duration_ms, [compile_log])
    on_disk = workdir / testbench.filename
    if content_digest(on_disk.read_text()) != pinned_hash:
        raise InvariantViolation(f"{on_disk} does not match the pinned testbench")
    sim_log = toolchain.simulate(profile, workdir)
    report = parse_sim_log(sim_log, rules)
    tool_ms = compile_log.duration_ms + sim_log.duration_ms
    prompt = None if report.all_passed else build_functional_corrective_prompt(report, rtl, prompt_dir)
    return FunctionalVerdict(report.all_passed, report, prompt, pinned_hash, compile_report,
                             tool_ms, [compile_log, sim_log])
