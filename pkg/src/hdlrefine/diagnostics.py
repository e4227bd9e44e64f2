"""Turn raw compiler/simulator logs into structured reports.

Parsing is rule-driven: each tool ships a YAML rule set with ordered
regular expressions (first match wins per line) using the named groups
``file``, ``line`` and ``message``, plus optional ``column`` and ``code``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ValidationError
from .model import Diagnostic, Severity, SourceArtifact
from .toolchain import RawToolLog

DEFAULT_TAIL_LINES = 30


@dataclass(frozen=True)
class ErrorPattern:
    pattern: str
    severity: Severity

    @cached_property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern)


@dataclass(frozen=True)
class ParseRuleSet:
    tool_name: str
    error_patterns: tuple[ErrorPattern, ...]
    pass_pattern: str = r"\bTESTCASE\s+(?P<case>\S+)\s+PASS\b:?\s*(?P<message>.*)$"
    fail_pattern: str = r"\bTESTCASE\s+(?P<case>\S+)\s+FAIL\b:?\s*(?P<message>.*)$"
    all_pass_sentinel: str = r"(?:^|:)\s*ALL TESTS PASSED\s*$"

    def __post_init__(self) -> None:
        if not self.error_patterns:
            raise ValidationError(f"rule set {self.tool_name}: needs at least one error pattern")
        if self.all_pass_sentinel in (self.pass_pattern, self.fail_pattern):
            raise ValidationError(f"rule set {self.tool_name}: sentinel must differ from case patterns")
        for entry in self.error_patterns:
            groups = entry.regex.groupindex
            if "message" not in groups:
                raise ValidationError(f"rule set {self.tool_name}: pattern lacks a message group: "
                                      f"{entry.pattern}")

    @cached_property
    def pass_regex(self) -> re.Pattern:
        return re.compile(self.pass_pattern)

    @cached_property
    def fail_regex(self) -> re.Pattern:
        return re.compile(self.fail_pattern)

    @cached_property
    def sentinel_regex(self) -> re.Pattern:
        return re.compile(self.all_pass_sentinel)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ParseRuleSet":
        patterns = tuple(
            ErrorPattern(entry["pattern"], Severity(entry.get("severity", "error")))
            for entry in data["error_patterns"]
        )
        extra = {k: data[k] for k in ("pass_pattern", "fail_pattern", "all_pass_sentinel") if k in data}
        return cls(tool_name=data["tool_name"], error_patterns=patterns, **extra)

    @classmethod
    def from_file(cls, path: "str | Path") -> "ParseRuleSet":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def builtin_rule_sets() -> list[str]:
    folder = resources.files("hdlrefine").joinpath("rules")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def load_rule_set(value: "str | Path | dict | ParseRuleSet") -> ParseRuleSet:
    """Accept a rule set, a mapping, a YAML path, or a built-in name."""
    if isinstance(value, ParseRuleSet):
        return value
    if isinstance(value, dict):
        return ParseRuleSet.from_dict(value)
    text = str(value)
    if text in builtin_rule_sets():
        return ParseRuleSet.from_dict(yaml.safe_load(
            resources.files("hdlrefine").joinpath("rules", f"{text}.yaml").read_text()))
    path = Path(text)
    if path.exists():
        return ParseRuleSet.from_file(path)
    raise ValidationError(f"unknown rule set {text!r}; built-ins: {', '.join(builtin_rule_sets())}")


@dataclass
class CompileReport:
    diagnostics: list[Diagnostic]
    exit_code: int
    timed_out: bool = False
    raw_tail: str = ""

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    @property
    def error_count(self) -> int:
        return len(self.errors)

    @property
    def clean(self) -> bool:
        return self.exit_code == 0 and not self.errors and not self.timed_out

    def to_dict(self) -> dict[str, Any]:
        return {
            "exit_code": self.exit_code,
            "timed_out": self.timed_out,
            "clean": self.clean,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "raw_tail": self.raw_tail,
        }


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # keep pytest from collecting this

    case_id: str
    passed: bool
    message: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"case_id": self.case_id, "passed": self.passed, "message": self.message}


@dataclass
class SimReport:
    outcomes: list[TestOutcome]
    sentinel_seen: bool
    timed_out: bool
    raw_tail: str = ""
    exit_code: int = 0
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __post_init__(self) -> None:
        ids = [o.case_id for o in self.outcomes]
        if len(ids) != len(set(ids)):
            raise ValidationError("test case ids must be unique within a report")

    @property
    def failures(self) -> list[TestOutcome]:
        return [o for o in self.outcomes if not o.passed]

    @property
    def all_passed(self) -> bool:
        return self.sentinel_seen and not self.failures and not self.timed_out

    @property
    def error_count(self) -> int:
        """Failing cases, plus one for a missing pass signal (hang, crash)."""
        failing = len(self.failures)
        if not self.all_passed and (self.timed_out or not failing):
            failing += 1
        return failing

    def to_dict(self) -> dict[str, Any]:
        return {
            "all_passed": self.all_passed,
            "sentinel_seen": self.sentinel_seen,
            "timed_out": self.timed_out,
            "exit_code": self.exit_code,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "raw_tail": self.raw_tail,
        }


def _tail(text: str, lines: int) -> str:
    return "\n".join(text.rstrip("\n").splitlines()[-lines:])


def _match_diagnostic(line: str, rules: ParseRuleSet) -> Optional[Diagnostic]:
    for entry in rules.error_patterns:
        match = entry.regex.search(line)
        if match is None:
            continue
        groups = match.groupdict()
        number = groups.get("line")
        column = groups.get("column")
        message = (groups.get("message") or "").strip() or line.strip()
        return Diagnostic(
            file=(groups.get("file") or "").strip(),
            line=int(number) if number else None,
            column=int(column) if column else None,
            severity=entry.severity,
            tool_code=groups.get("code"),
            message=message,
        )
    return None


def scan_diagnostics(text: str, rules: ParseRuleSet) -> list[Diagnostic]:
    found = []
    for line in text.splitlines():
        diagnostic = _match_diagnostic(line, rules)
        if diagnostic is not None:
            found.append(diagnostic)
    return found


def parse_compile_log(raw: RawToolLog, rules: ParseRuleSet,
                      tail_lines: int = DEFAULT_TAIL_LINES) -> CompileReport:
    diagnostics = scan_diagnostics(raw.stdout, rules) + scan_diagnostics(raw.stderr, rules)
    report = CompileReport(diagnostics, raw.exit_code, raw.timed_out,
                           _tail(raw.combined, tail_lines))
    if not report.clean and not report.errors:
        # never hand the loop an empty report while the tool is failing
        reason = "timed out" if raw.timed_out else f"exited with status {raw.exit_code}"
        report.diagnostics.append(Diagnostic(
            file="",
            line=None,
            severity=Severity.ERROR,
            message=f"{rules.tool_name} {reason} without a recognised error message",
            snippet=report.raw_tail,
        ))
    return report


def parse_sim_log(raw: RawToolLog, rules: ParseRuleSet,
                  tail_lines: int = DEFAULT_TAIL_LINES) -> SimReport:
    outcomes: dict[str, TestOutcome] = {}
    sentinel = False
    for line in raw.combined.splitlines():
        for regex, passed in ((rules.fail_regex, False), (rules.pass_regex, True)):
            match = regex.search(line)
            if match is None:
                continue
            case_id = match.group("case")
            message = (match.groupdict().get("message") or "").strip()
            previous = outcomes.get(case_id)
            # a case reported more than once fails if any report failed
            if previous is None or (previous.passed and not passed):
                outcomes[case_id] = TestOutcome(case_id, passed, message)
            break
        else:
            if rules.sentinel_regex.search(line):
                sentinel = True
    return SimReport(
        outcomes=list(outcomes.values()),
        sentinel_seen=sentinel,
        timed_out=raw.timed_out,
        raw_tail=_tail(raw.combined, tail_lines),
        exit_code=raw.exit_code,
        diagnostics=scan_diagnostics(raw.combined, rules),
    )


def extract_snippet(source: SourceArtifact, line: int, window: int = 2) -> str:
    """Numbered excerpt of ``source`` around ``line``; the line itself is marked ``>>``."""
    if line < 1:
        raise ValidationError("line numbers start at 1")
    lines = source.text.splitlines()
    if not lines:
        return "(source is empty)"
    note = ""
    center = line
    if line > len(lines):
        center = len(lines)
        note = f"(line {line} is past the end of the {len(lines)}-line file; showing the last lines)"
    first = max(1, center - window)
    last = min(len(lines), center + window)
    rendered = []
    for number in range(first, last + 1):
        marker = ">>" if number == line else "  "
        rendered.append(f"{marker} {number:>4} | {lines[number - 1]}")
    if note:
        rendered.append(note)
    return "\n".join(rendered)
