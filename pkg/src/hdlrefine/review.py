"""Syntax-loop supervisor: joint compile, verdict, corrective prompt."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from . import toolchain
from .diagnostics import CompileReport, ParseRuleSet, extract_snippet, parse_compile_log
from .errors import ContractViolation, LlmFailure, ValidationError
from .llm import Backend, ChatMessage, GenerationConfig, Role, complete
from .model import ArtifactKind, Diagnostic, SourceArtifact
from .templates import load_template, render
from .toolchain import RawToolLog, ToolProfile

log = logging.getLogger(__name__)

MAX_DIAGNOSTICS_PER_PROMPT = 20

_HINTS: list[tuple[re.Pattern, str]] = [
    (re.compile(r"expecting[^\n]*';'|';' is expected|missing ';'|expected ';'", re.I),
     "A terminating semicolon is probably missing here or at the end of the previous statement."),
    (re.compile(r"can't find definition|unknown identifier|not declared|undeclared|"
                r"no declaration for|unable to bind", re.I),
     "Declare the identifier before use or correct its spelling."),
    (re.compile(r"cannot find file containing module|unknown module type|cannot find entity|"
                r"not found in library|unit .* not found", re.I),
     "The instantiated module or entity name does not match any definition; align the names."),
    (re.compile(r"pin not found|port .* not found|no port|missing pin|not a port", re.I),
     "Port connections must use exactly the port names declared by the instantiated unit."),
    (re.compile(r"width|bits", re.I),
     "Make the operand widths agree, e.g. by sizing literals or slicing/extending signals."),
    (re.compile(r"multiple driv|multi-driven|driven by more than one", re.I),
     "Drive each signal from a single always block, process or continuous assignment."),
    (re.compile(r"is expected instead of", re.I),
     "Insert the token the compiler expects at this position or remove the stray one."),
    (re.compile(r"syntax error", re.I),
     "Check this line and the one before it for a missing token or unbalanced begin/end, "
     "parentheses or brackets."),
]
_DEFAULT_HINT = "Rewrite this construct so it is legal for the target language."


def hint_for(message: str) -> str:
    for pattern, hint in _HINTS:
        if pattern.search(message):
            return hint
    return _DEFAULT_HINT


def diagnostic_role(diagnostic: Diagnostic) -> Optional[ArtifactKind]:
    """Which generated file a diagnostic points at, if any."""
    name = Path(diagnostic.file).name if diagnostic.file else ""
    if name.startswith("rtl."):
        return ArtifactKind.RTL
    if name.startswith("tb."):
        return ArtifactKind.TESTBENCH
    return None


def dirty_roles(report: CompileReport) -> set[ArtifactKind]:
    """Artifacts that need revising; unattributed errors are charged to the RTL."""
    roles = set()
    for diagnostic in report.errors:
        roles.add(diagnostic_role(diagnostic) or ArtifactKind.RTL)
    return roles


@dataclass
class SyntaxVerdict:
    clean: bool
    report: CompileReport
    corrective_prompt: Optional[str] = None
    log: Optional[RawToolLog] = None

    def __post_init__(self) -> None:
        if self.clean == (self.corrective_prompt is not None):
            raise ValidationError("a corrective prompt accompanies exactly the dirty verdicts")

    @property
    def tool_ms(self) -> float:
        return self.log.duration_ms if self.log else 0.0


def _role_label(role: Optional[ArtifactKind], diagnostic: Diagnostic) -> str:
    if role is ArtifactKind.RTL:
        return f"the RTL design ({Path(diagnostic.file).name})"
    if role is ArtifactKind.TESTBENCH:
        return f"the testbench ({Path(diagnostic.file).name})"
    return f"{diagnostic.file}" if diagnostic.file else "an unidentified file"


def build_syntax_corrective_prompt(report: CompileReport, rtl: SourceArtifact,
                                   testbench: Optional[SourceArtifact],
                                   prompt_dir: Optional[Path] = None,
                                   cap: int = MAX_DIAGNOSTICS_PER_PROMPT) -> str:
    if report.clean:
        raise ContractViolation("no corrective prompt for a clean compile")
    item_template = load_template("syntax_item", prompt_dir)
    sources = {ArtifactKind.RTL: rtl, ArtifactKind.TESTBENCH: testbench}
    errors = report.errors
    sections = []
    for diagnostic in errors[:cap]:
        role = diagnostic_role(diagnostic)
        source = sources.get(role) if role else None
        if diagnostic.line is not None and source is not None:
            snippet = extract_snippet(source, diagnostic.line)
        else:
            tail = diagnostic.snippet or report.raw_tail or "(no output captured)"
            snippet = "Compiler output (last lines):\n" + tail
        sections.append(render(
            item_template,
            role=_role_label(role, diagnostic),
            line=diagnostic.line if diagnostic.line is not None else "unknown",
            message=diagnostic.message,
            snippet=snippet,
            hint=hint_for(diagnostic.message),
        ))
    body = "\n".join(sections)
    if len(errors) > cap:
        body += (f"\n({len(errors) - cap} further errors are not shown; they often disappear "
                 f"once the errors above are fixed.)\n")
    return render(load_template("syntax", prompt_dir), diagnostics=body)


LogSummarizer = Callable[[CompileReport], Optional[str]]


class LlmLogSummarizer:
    """Optional LLM reading of a dirty compile log, appended to the corrective
    prompt. The mechanical diagnostics stay authoritative; a failed call just
    leaves the summary out."""

    def __init__(self, backend: Backend, config: GenerationConfig, prompt_dir: Optional[Path] = None):
        self.backend = backend
        self.config = config
        self.prompt_dir = prompt_dir
        self.last_ms = 0.0

    def __call__(self, report: CompileReport) -> Optional[str]:
        self.last_ms = 0.0
        listing = "\n".join(f"- {d.file or '?'}:{d.line if d.line is not None else '?'}: {d.message}"
                            for d in report.errors[:MAX_DIAGNOSTICS_PER_PROMPT])
        text = render(load_template("summarize_log", self.prompt_dir),
                      errors=listing or "(none recognised)", log_tail=report.raw_tail or "(empty)")
        try:
            completion = complete([ChatMessage(Role.USER, text)], self.config, self.backend)
        except LlmFailure as exc:
            log.warning("log summary skipped: %s", exc)
            return None
        self.last_ms = completion.latency_ms
        return completion.text.strip() or None


def review(rtl: SourceArtifact, testbench: SourceArtifact, profile: ToolProfile,
           rules: ParseRuleSet, workdir: "str | Path",
           prompt_dir: Optional[Path] = None,
           summarizer: Optional[LogSummarizer] = None) -> SyntaxVerdict:
    """Compile design and testbench together and judge the result."""
    if rtl.language is not testbench.language:
        raise ValidationError("design and testbench must share a language")
    raw = toolchain.compile([rtl, testbench], profile, workdir)
    report = parse_compile_log(raw, rules)
    if report.clean:
        return SyntaxVerdict(True, report, None, raw)
    prompt = build_syntax_corrective_prompt(report, rtl, testbench, prompt_dir)
    if summarizer is not None:
        summary = summarizer(report)
        if summary:
            prompt += f"\n\nReviewer's reading of the compiler log:\n{summary}\n"
    return SyntaxVerdict(False, report, prompt, raw)
