"""Domain types and revision bookkeeping."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import RevisionNotFound, ValidationError


class HdlLanguage(str, enum.Enum):
    VERILOG = "verilog"
    VHDL = "vhdl"

    @property
    def extension(self) -> str:
        return "v" if self is HdlLanguage.VERILOG else "vhd"

    @property
    def display_name(self) -> str:
        return "Verilog" if self is HdlLanguage.VERILOG else "VHDL"

    @classmethod
    def parse(cls, value: "str | HdlLanguage") -> "HdlLanguage":
        if isinstance(value, HdlLanguage):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown HDL language: {value!r}") from None


class ArtifactKind(str, enum.Enum):
    RTL = "rtl"
    TESTBENCH = "testbench"

    @property
    def file_stem(self) -> str:
        return "rtl" if self is ArtifactKind.RTL else "tb"


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class LoopKind(str, enum.Enum):
    SYNTAX = "syntax"
    FUNCTIONAL = "functional"


class IterationAction(str, enum.Enum):
    REVISED = "revised"
    ROLLED_BACK = "rolled_back"
    ACCEPTED = "accepted"
    # check failed on the last budgeted iteration; no revision requested
    REJECTED = "rejected"


class PipelineStatus(str, enum.Enum):
    SUCCESS = "success"
    SYNTAX_EXHAUSTED = "syntax_exhausted"
    FUNCTIONAL_EXHAUSTED = "functional_exhausted"
    TOOL_FAILURE = "tool_failure"
    LLM_FAILURE = "llm_failure"


def content_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class DesignSpec:
    prompt_text: str
    language: HdlLanguage
    module_name_hint: Optional[str] = None
    clarifications: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.language = HdlLanguage.parse(self.language)
        if not self.prompt_text or not self.prompt_text.strip():
            raise ValidationError("design prompt must be non-empty")

    def add_clarification(self, question: str, answer: str) -> None:
        self.clarifications.append((question, answer))

    def render(self) -> str:
        """Prompt text followed by any clarification Q/A pairs."""
        parts = [self.prompt_text.strip()]
        if self.module_name_hint:
            parts.append(f"The top-level module must be named `{self.module_name_hint}`.")
        for question, answer in self.clarifications:
            parts.append(f"Q: {question}\nA: {answer}")
        return "\n\n".join(parts)


@dataclass(frozen=True)
class SourceArtifact:
    kind: ArtifactKind
    language: HdlLanguage
    text: str
    revision_id: int
    parent_revision: Optional[int] = None
    content_hash: str = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ArtifactKind(self.kind))
        object.__setattr__(self, "language", HdlLanguage.parse(self.language))
        if self.revision_id < 1:
            raise ValidationError("revision ids start at 1")
        object.__setattr__(self, "content_hash", content_digest(self.text))

    @property
    def filename(self) -> str:
        return f"{self.kind.file_stem}.{self.language.extension}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "language": self.language.value,
            "text": self.text,
            "revision_id": self.revision_id,
            "parent_revision": self.parent_revision,
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SourceArtifact":
        return cls(
            kind=ArtifactKind(data["kind"]),
            language=HdlLanguage(data["language"]),
            text=data["text"],
            revision_id=data["revision_id"],
            parent_revision=data.get("parent_revision"),
        )


class RevisionHistory:
    """Full lineage of one source file (RTL or testbench) within a run.

    Revisions are never removed. A rollback copies the target text forward
    as a new revision whose parent is the target.
    """

    def __init__(self, kind: ArtifactKind, language: HdlLanguage):
        self.kind = kind
        self.language = HdlLanguage.parse(language)
        self.artifacts: list[SourceArtifact] = []
        self.best_revision: Optional[int] = None
        self._error_counts: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.artifacts)

    @property
    def latest(self) -> SourceArtifact:
        if not self.artifacts:
            raise RevisionNotFound("history is empty")
        return self.artifacts[-1]

    def get(self, revision_id: int) -> SourceArtifact:
        if 1 <= revision_id <= len(self.artifacts):
            return self.artifacts[revision_id - 1]
        raise RevisionNotFound(f"no revision {revision_id} in {self.kind.value} history")

    def error_count(self, revision_id: int) -> Optional[int]:
        return self._error_counts.get(revision_id)

    @property
    def best_error_count(self) -> Optional[int]:
        if self.best_revision is None:
            return None
        return self._error_counts[self.best_revision]

    def append_revision(self, text: str, parent: Optional[int] = None) -> SourceArtifact:
        """Add ``text`` as the next revision.

        ``parent`` defaults to the current latest revision.
        """
        if not text or not text.strip():
            raise ValidationError("revision text must be non-empty")
        if parent is None and self.artifacts:
            parent = self.artifacts[-1].revision_id
        if parent is not None:
            self.get(parent)
        artifact = SourceArtifact(
            kind=self.kind,
            language=self.language,
            text=text,
            revision_id=len(self.artifacts) + 1,
            parent_revision=parent,
        )
        self.artifacts.append(artifact)
        return artifact

    def record_error_count(self, revision_id: int, error_count: int) -> "RevisionHistory":
        self.get(revision_id)
        if error_count < 0:
            raise ValidationError("error count must be >= 0")
        self._error_counts[revision_id] = error_count
        best = self.best_error_count
        if best is None or error_count < best:
            self.best_revision = revision_id
        return self

    def reset_scores(self) -> None:
        """Forget error counts; used when a new loop scores on a different scale."""
        self._error_counts.clear()
        self.best_revision = None

    def rollback_to(self, revision_id: int) -> SourceArtifact:
        target = self.get(revision_id)
        return self.append_revision(target.text, parent=target.revision_id)


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: Optional[int]
    severity: Severity
    message: str
    tool_code: Optional[str] = None
    snippet: Optional[str] = None
    column: Optional[int] = None

    def __post_init__(self) -> None:
        if self.severity is Severity.ERROR and not self.message:
            raise ValidationError("error diagnostics must carry a message")
        if self.line is not None and self.line < 1:
            raise ValidationError("diagnostic line numbers start at 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "file": self.file,
            "line": self.line,
            "column": self.column,
            "severity": self.severity.value,
            "tool_code": self.tool_code,
            "message": self.message,
            "snippet": self.snippet,
        }


@dataclass(frozen=True)
class IterationRecord:
    loop: LoopKind
    index: int
    llm_duration: float
    tool_duration: float
    error_count_after: int
    action: IterationAction

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValidationError("iteration index starts at 1")
        if self.llm_duration < 0 or self.tool_duration < 0:
            raise ValidationError("durations must be non-negative")
        if self.error_count_after < 0:
            raise ValidationError("error count must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "loop": self.loop.value,
            "index": self.index,
            "llm_duration": self.llm_duration,
            "tool_duration": self.tool_duration,
            "error_count_after": self.error_count_after,
            "action": self.action.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "IterationRecord":
        return cls(
            loop=LoopKind(data["loop"]),
            index=data["index"],
            llm_duration=data["llm_duration"],
            tool_duration=data["tool_duration"],
            error_count_after=data["error_count_after"],
            action=IterationAction(data["action"]),
        )


@dataclass
class PipelineResult:
    """Outcome of one run. Durations are milliseconds.

    ``generation_ms`` covers the LLM calls made before the loops start
    (clarification, testbench and first RTL); it is kept apart from the
    per-iteration totals.
    """

    status: PipelineStatus
    final_rtl: Optional[SourceArtifact] = None
    final_testbench: Optional[SourceArtifact] = None
    iterations: list[IterationRecord] = field(default_factory=list)
    generation_ms: float = 0.0
    initial_rtl: Optional[SourceArtifact] = None
    detail: str = ""
    pinned_testbench_hash: Optional[str] = None
    simulated_testbench_hashes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.status is PipelineStatus.SUCCESS and (
            self.final_rtl is None or self.final_testbench is None
        ):
            raise ValidationError("a successful run must carry both final artifacts")

    @property
    def total_llm_ms(self) -> float:
        return sum(r.llm_duration for r in self.iterations)

    @property
    def total_tool_ms(self) -> float:
        return sum(r.tool_duration for r in self.iterations)

    def iteration_count(self, loop: LoopKind) -> int:
        return sum(1 for r in self.iterations if r.loop is loop)

    @property
    def syntax_iters(self) -> int:
        return self.iteration_count(LoopKind.SYNTAX)

    @property
    def functional_iters(self) -> int:
        return self.iteration_count(LoopKind.FUNCTIONAL)

    def loop_latency(self, loop: LoopKind) -> tuple[float, float]:
        """(llm_ms, tool_ms) summed over one loop's iterations."""
        records = [r for r in self.iterations if r.loop is loop]
        return sum(r.llm_duration for r in records), sum(r.tool_duration for r in records)

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "detail": self.detail,
            "syntax_iters": self.syntax_iters,
            "functional_iters": self.functional_iters,
            "total_llm_ms": self.total_llm_ms,
            "total_tool_ms": self.total_tool_ms,
            "generation_ms": self.generation_ms,
            "iterations": [r.to_dict() for r in self.iterations],
            "final_rtl": self.final_rtl.to_dict() if self.final_rtl else None,
            "final_testbench": self.final_testbench.to_dict() if self.final_testbench else None,
            "initial_rtl": self.initial_rtl.to_dict() if self.initial_rtl else None,
            "pinned_testbench_hash": self.pinned_testbench_hash,
            "simulated_testbench_hashes": list(self.simulated_testbench_hashes),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineResult":
        def artifact(key: str) -> Optional[SourceArtifact]:
            value = data.get(key)
            return SourceArtifact.from_dict(value) if value else None

        return cls(
            status=PipelineStatus(data["status"]),
            final_rtl=artifact("final_rtl"),
            final_testbench=artifact("final_testbench"),
            iterations=[IterationRecord.from_dict(r) for r in data.get("iterations", [])],
            generation_ms=data.get("generation_ms", 0.0),
            initial_rtl=artifact("initial_rtl"),
            detail=data.get("detail", ""),
            pinned_testbench_hash=data.get("pinned_testbench_hash"),
            simulated_testbench_hashes=list(data.get("simulated_testbench_hashes", [])),
        )
