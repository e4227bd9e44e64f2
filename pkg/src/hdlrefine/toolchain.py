"""Run external HDL compilers and simulators through command templates.

Templates are split with shlex and expanded per argument, never handed to
a shell. Recognised placeholders:

    {sources}   the source file names, one argument each (must stand alone)
    {workdir}   absolute path of the run directory
    {top}       top-level unit, taken from the testbench
    {python}    the running interpreter, for Python-based tools
"""

from __future__ import annotations

import enum
import os
import re
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import yaml

from .errors import ToolFailure, ValidationError
from .model import ArtifactKind, HdlLanguage, SourceArtifact

TIMEOUT_EXIT_CODE = 124


@dataclass(frozen=True)
class ToolProfile:
    """How to compile and simulate one language with one toolchain.

    ``simulate_template`` may hold several commands run in order (for
    tools that build an executable first); execution stops at the first
    nonzero exit.
    """

    name: str
    language: HdlLanguage
    compile_template: str
    simulate_template: tuple[str, ...]
    compile_timeout: float = 60.0
    simulate_timeout: float = 120.0
    env: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", HdlLanguage.parse(self.language))
        steps = self.simulate_template
        if isinstance(steps, str):
            steps = (steps,)
        object.__setattr__(self, "simulate_template", tuple(steps))
        if isinstance(self.env, dict):
            object.__setattr__(self, "env", tuple(sorted(self.env.items())))
        if "{sources}" not in self.compile_template:
            raise ValidationError(f"profile {self.name}: compile template must reference {{sources}}")
        if not self.simulate_template or not any("{sources}" in s for s in self.simulate_template):
            raise ValidationError(f"profile {self.name}: simulate template must reference {{sources}}")
        if self.compile_timeout <= 0 or self.simulate_timeout <= 0:
            raise ValidationError(f"profile {self.name}: timeouts must be positive")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToolProfile":
        return cls(
            name=data["name"],
            language=data["language"],
            compile_template=data["compile_template"],
            simulate_template=data["simulate_template"],
            compile_timeout=float(data.get("compile_timeout", 60)),
            simulate_timeout=float(data.get("simulate_timeout", 120)),
            env=data.get("env", {}) or {},
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "language": self.language.value,
            "compile_template": self.compile_template,
            "simulate_template": list(self.simulate_template),
            "compile_timeout": self.compile_timeout,
            "simulate_timeout": self.simulate_timeout,
            "env": dict(self.env),
        }


@dataclass
class RawToolLog:
    stdout: str
    stderr: str
    exit_code: int
    duration_ms: float
    timed_out: bool = False
    commands: list[list[str]] = field(default_factory=list)

    @property
    def combined(self) -> str:
        if self.stdout and self.stderr:
            return self.stdout.rstrip("\n") + "\n" + self.stderr
        return self.stdout or self.stderr

    def to_text(self) -> str:
        head = [f"$ {shlex.join(cmd)}" for cmd in self.commands]
        head.append(f"# exit={self.exit_code} timed_out={self.timed_out} "
                    f"duration_ms={self.duration_ms:.1f}")
        return "\n".join(head) + "\n--- stdout ---\n" + self.stdout + "\n--- stderr ---\n" + self.stderr


def builtin_profiles() -> dict[str, ToolProfile]:
    raw = yaml.safe_load(resources.files("hdlrefine").joinpath("profiles.yaml").read_text())
    return {entry["name"]: ToolProfile.from_dict(entry) for entry in raw}


def load_profile(value: "str | dict[str, Any] | ToolProfile") -> ToolProfile:
    if isinstance(value, ToolProfile):
        return value
    if isinstance(value, dict):
        if "base" in value:
            merged = builtin_profiles()[value["base"]].to_dict()
            merged.update({k: v for k, v in value.items() if k != "base"})
            return ToolProfile.from_dict(merged)
        return ToolProfile.from_dict(value)
    profiles = builtin_profiles()
    if value not in profiles:
        raise ValidationError(f"unknown tool profile {value!r}; built-ins: {', '.join(profiles)}")
    return profiles[value]


_TOP_PATTERNS = {
    HdlLanguage.VERILOG: re.compile(r"^\s*module\s+(\w+)", re.MULTILINE),
    HdlLanguage.VHDL: re.compile(r"^\s*entity\s+(\w+)\s+is", re.MULTILINE | re.IGNORECASE),
}


# mentions of a unit's own name that are not instantiations
_SELF_REFERENCES = {
    HdlLanguage.VERILOG: r"\b(?:module|endmodule\s*:)\s*{name}\b",
    HdlLanguage.VHDL: r"(?i)\b(?:entity\s+{name}\s+is|end\s+(?:entity\s+)?{name}|of\s+{name}\s+is)\b",
}


def detect_top(text: str, language: HdlLanguage) -> str:
    """The module/entity in ``text`` that no other unit there instantiates.

    Falls back to the last declared unit, then to ``tb``.
    """
    language = HdlLanguage.parse(language)
    declared = list(dict.fromkeys(_TOP_PATTERNS[language].findall(text)))
    if not declared:
        return "tb"
    flags = re.IGNORECASE if language is HdlLanguage.VHDL else 0
    roots = []
    for name in declared:
        mentions = len(re.findall(rf"\b{re.escape(name)}\b", text, flags))
        own = len(re.findall(_SELF_REFERENCES[language].format(name=re.escape(name)), text))
        if mentions <= own:
            roots.append(name)
    return roots[0] if len(roots) == 1 else (roots or declared)[-1]


def expand_template(template: str, sources: Sequence[str], workdir: Path, top: str) -> list[str]:
    argv: list[str] = []
    for token in shlex.split(template):
        if token == "{sources}":
            argv.extend(sources)
            continue
        if "{sources}" in token:
            raise ValidationError("{sources} must be a standalone argument")
        token = (token.replace("{workdir}", str(workdir))
                 .replace("{top}", top)
                 .replace("{python}", sys.executable))
        argv.append(token)
    return argv


def _run(argv: list[str], cwd: Path, timeout: float, env: dict[str, str]) -> RawToolLog:
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(argv, cwd=cwd, env=env, stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE, text=True, errors="replace",
                                start_new_session=True)
    except (FileNotFoundError, PermissionError) as exc:
        raise ToolFailure(f"cannot execute {argv[0]!r}: {exc}") from exc
    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=timeout)
        exit_code = proc.returncode
    except subprocess.TimeoutExpired:
        timed_out = True
        # simulators fork; take down the whole group
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        stdout, stderr = proc.communicate()
        exit_code = TIMEOUT_EXIT_CODE
    duration = (time.perf_counter() - start) * 1000.0
    return RawToolLog(stdout or "", stderr or "", exit_code, duration, timed_out, [argv])


def _environment(profile: ToolProfile, workdir: Path) -> dict[str, str]:
    env = dict(os.environ)
    env.update(dict(profile.env))
    env["HDLREFINE_WORKDIR"] = str(workdir)
    return env


def _source_names(workdir: Path, language: HdlLanguage) -> list[str]:
    names = []
    for kind in (ArtifactKind.RTL, ArtifactKind.TESTBENCH):
        name = f"{kind.file_stem}.{language.extension}"
        if (workdir / name).exists():
            names.append(name)
    return names


def _top_for(workdir: Path, language: HdlLanguage) -> str:
    for stem in ("tb", "rtl"):
        path = workdir / f"{stem}.{language.extension}"
        if path.exists():
            return detect_top(path.read_text(), language)
    return "tb"


def write_sources(sources: Iterable[SourceArtifact], workdir: Path) -> list[str]:
    """Write artifacts as ``rtl.<ext>`` / ``tb.<ext>``; return names, RTL first."""
    ordered = sorted(sources, key=lambda a: a.kind is not ArtifactKind.RTL)
    names = []
    for artifact in ordered:
        (workdir / artifact.filename).write_text(artifact.text)
        names.append(artifact.filename)
    return names


def compile(sources: Sequence[SourceArtifact], profile: ToolProfile, workdir: "str | Path") -> RawToolLog:
    """Write ``sources`` into ``workdir`` and run the compile command."""
    workdir = Path(workdir).resolve()
    if not workdir.is_dir():
        raise ValidationError(f"workdir {workdir} does not exist")
    for artifact in sources:
        if artifact.language is not profile.language:
            raise ValidationError(
                f"{artifact.filename} is {artifact.language.value}, profile {profile.name} "
                f"expects {profile.language.value}")
    kinds = [a.kind for a in sources]
    if len(set(kinds)) != len(kinds):
        raise ValidationError("at most one artifact per kind")
    # stale files from an earlier compile must not leak into this one
    for kind in ArtifactKind:
        stale = workdir / f"{kind.file_stem}.{profile.language.extension}"
        if kind not in kinds and stale.exists():
            stale.unlink()
    names = write_sources(sources, workdir)
    top = _top_for(workdir, profile.language)
    argv = expand_template(profile.compile_template, names, workdir, top)
    return _run(argv, workdir, profile.compile_timeout, _environment(profile, workdir))


def simulate(profile: ToolProfile, workdir: "str | Path", timeout: Optional[float] = None) -> RawToolLog:
    """Run the simulate command(s) on the sources last written by compile()."""
    workdir = Path(workdir).resolve()
    names = _source_names(workdir, profile.language)
    if not names:
        raise ValidationError(f"no sources in {workdir}; compile first")
    top = _top_for(workdir, profile.language)
    env = _environment(profile, workdir)
    budget = profile.simulate_timeout if timeout is None else timeout
    deadline = time.perf_counter() + budget
    combined = RawToolLog("", "", 0, 0.0)
    for step in profile.simulate_template:
        argv = expand_template(step, names, workdir, top)
        remaining = max(deadline - time.perf_counter(), 0.001)
        log = _run(argv, workdir, remaining, env)
        combined.stdout += log.stdout
        combined.stderr += log.stderr
        combined.exit_code = log.exit_code
        combined.duration_ms += log.duration_ms
        combined.timed_out = log.timed_out
        combined.commands.extend(log.commands)
        if log.exit_code != 0 or log.timed_out:
            break
    return combined


class Availability(str, enum.Enum):
    AVAILABLE = "available"
    MISSING = "missing"
    PROBE_FAILED = "probe_failed"


@dataclass
class ToolStatus:
    profile: str
    status: Availability
    command: str = ""
    detail: str = ""


_PROBES = {
    HdlLanguage.VERILOG: (
        "module probe(input wire a, output wire y);\n  assign y = a;\nendmodule\n",
        "module probe_tb;\n  reg a = 0;\n  wire y;\n  probe dut(.a(a), .y(y));\n"
        "  initial begin\n    $display(\"ALL TESTS PASSED\");\n    $finish;\n  end\nendmodule\n",
    ),
    HdlLanguage.VHDL: (
        "library ieee;\nuse ieee.std_logic_1164.all;\n\nentity probe is\n"
        "  port (a : in std_logic; y : out std_logic);\nend entity probe;\n\n"
        "architecture rtl of probe is\nbegin\n  y <= a;\nend architecture rtl;\n",
        "library ieee;\nuse ieee.std_logic_1164.all;\n\nentity probe_tb is\nend entity probe_tb;\n\n"
        "architecture sim of probe_tb is\n  signal a, y : std_logic := '0';\nbegin\n"
        "  dut : entity work.probe port map (a => a, y => y);\n"
        "  process\n  begin\n    report \"ALL TESTS PASSED\";\n    wait;\n  end process;\n"
        "end architecture sim;\n",
    ),
}


def _binaries(profile: ToolProfile) -> list[str]:
    found = []
    for template in (profile.compile_template, *profile.simulate_template):
        first = shlex.split(template)[0]
        # executables produced by an earlier step only exist at run time
        if "{workdir}" in first:
            continue
        first = first.replace("{python}", sys.executable)
        if first not in found:
            found.append(first)
    return found


def doctor(profiles: Sequence[ToolProfile]) -> list[ToolStatus]:
    """Check that each profile's binaries resolve and a trivial design compiles."""
    report = []
    for profile in profiles:
        missing = [b for b in _binaries(profile) if shutil.which(b) is None]
        if missing:
            report.append(ToolStatus(profile.name, Availability.MISSING, missing[0],
                                     f"binary not found on PATH: {', '.join(missing)}"))
            continue
        rtl_text, tb_text = _PROBES[profile.language]
        artifacts = [
            SourceArtifact(ArtifactKind.RTL, profile.language, rtl_text, 1),
            SourceArtifact(ArtifactKind.TESTBENCH, profile.language, tb_text, 1),
        ]
        with tempfile.TemporaryDirectory(prefix="hdlrefine-probe-") as tmp:
            try:
                log = compile(artifacts, profile, tmp)
            except ToolFailure as exc:
                report.append(ToolStatus(profile.name, Availability.MISSING,
                                         profile.compile_template, str(exc)))
                continue
        command = shlex.join(log.commands[0]) if log.commands else profile.compile_template
        if log.exit_code == 0 and not log.timed_out:
            report.append(ToolStatus(profile.name, Availability.AVAILABLE, command))
        else:
            tail = "\n".join(log.combined.strip().splitlines()[-5:])
            report.append(ToolStatus(profile.name, Availability.PROBE_FAILED, command, tail))
    return report
