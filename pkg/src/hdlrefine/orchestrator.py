"""Two-loop state machine: syntax repair, then functional repair.

One call to :func:`run_pipeline` owns a private directory
``workdir_root/<run-id>/`` holding the current sources, ``logs/`` with every
tool log, and ``result.json``.
"""

from __future__ import annotations

import json
import logging
import shutil
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .code_agent import CodeAgent, Verdict
from .diagnostics import ParseRuleSet
from .errors import ExtractionError, LlmFailure, ToolFailure, ValidationError
from .llm import Backend, GenerationConfig
from .model import (
    ArtifactKind,
    DesignSpec,
    HdlLanguage,
    IterationAction,
    IterationRecord,
    LoopKind,
    PipelineResult,
    PipelineStatus,
    RevisionHistory,
)
from .review import LlmLogSummarizer, dirty_roles, diagnostic_role, review
from .toolchain import RawToolLog, ToolProfile, _binaries
from .verification import verify

log = logging.getLogger(__name__)

MAX_CLARIFICATION_ROUNDS = 3

# Receives the agent's questions, returns one answer per question.
ClarifyCallback = Callable[[Sequence[str]], Sequence[str]]


@dataclass
class RunConfig:
    language: HdlLanguage
    generation: GenerationConfig
    tool_profile: ToolProfile
    rule_set: ParseRuleSet
    max_syntax_iters: int = 10
    max_functional_iters: int = 10
    interactive: bool = False
    workdir_root: Path = Path("runs")
    prompt_dir: Optional[Path] = None
    # optional LLM reading of dirty compile logs, added to syntax prompts
    summarize_logs: bool = False

    def __post_init__(self) -> None:
        self.language = HdlLanguage.parse(self.language)
        self.workdir_root = Path(self.workdir_root)
        if self.max_syntax_iters < 1 or self.max_functional_iters < 1:
            raise ValidationError("iteration budgets must be >= 1")
        if self.tool_profile.language is not self.language:
            raise ValidationError(
                f"tool profile {self.tool_profile.name} targets {self.tool_profile.language.value}, "
                f"run is {self.language.value}")


def apply_rollback_policy(history: RevisionHistory, latest_error_count: int) -> IterationAction:
    """Score the latest revision and roll back if it regressed.

    A strict regression against the best revision so far copies the best
    revision forward (it becomes the new latest) and returns ROLLED_BACK.
    Ties and improvements return REVISED.
    """
    latest = history.latest
    best_before = history.best_error_count
    history.record_error_count(latest.revision_id, latest_error_count)
    if best_before is not None and latest_error_count > best_before:
        history.rollback_to(history.best_revision)
        return IterationAction.ROLLED_BACK
    return IterationAction.REVISED


@dataclass
class _LoopOutcome:
    passed: bool
    detail: str = ""


class _Run:
    def __init__(self, spec: DesignSpec, config: RunConfig, backend: Backend, run_dir: Path,
                 clarify: Optional[ClarifyCallback], agent: Optional[CodeAgent]):
        self.spec = spec
        self.config = config
        self.run_dir = run_dir
        self.logs_dir = run_dir / "logs"
        self.clarify = clarify
        self.agent = agent or CodeAgent(config.generation, backend, config.prompt_dir,
                                        interactive=config.interactive)
        self.summarizer = (LlmLogSummarizer(backend, config.generation, config.prompt_dir)
                           if config.summarize_logs else None)
        self.rtl = RevisionHistory(ArtifactKind.RTL, spec.language)
        self.tb = RevisionHistory(ArtifactKind.TESTBENCH, spec.language)
        self.iterations: list[IterationRecord] = []
        self.generation_ms = 0.0
        self.pinned_hash: Optional[str] = None
        self.simulated_hashes: list[str] = []

    def history(self, kind: ArtifactKind) -> RevisionHistory:
        return self.rtl if kind is ArtifactKind.RTL else self.tb

    def save_logs(self, prefix: str, logs: Sequence[Optional[RawToolLog]]) -> None:
        for step, raw in zip(("compile", "simulate"), logs):
            if raw is not None:
                (self.logs_dir / f"{prefix}-{step}.log").write_text(raw.to_text())

    def generate(self) -> None:
        if self.config.interactive:
            for _ in range(MAX_CLARIFICATION_ROUNDS):
                outcome = self.agent.assess_spec(self.spec)
                self.generation_ms += self.agent.last_llm_ms
                if outcome.verdict is Verdict.SUFFICIENT or self.clarify is None:
                    break
                answers = list(self.clarify(outcome.questions))
                for question, answer in zip(outcome.questions, answers):
                    self.spec.add_clarification(question, answer)
        testbench = self.agent.generate_testbench(self.spec, self.tb)
        self.generation_ms += self.agent.last_llm_ms
        self.agent.generate_rtl(self.spec, testbench, self.rtl)
        self.generation_ms += self.agent.last_llm_ms

    def syntax_loop(self) -> _LoopOutcome:
        budget = self.config.max_syntax_iters
        prompts: dict[tuple[ArtifactKind, int], str] = {}
        for index in range(1, budget + 1):
            rtl, tb = self.rtl.latest, self.tb.latest
            verdict = review(rtl, tb, self.config.tool_profile, self.config.rule_set,
                             self.run_dir, self.config.prompt_dir, self.summarizer)
            summary_ms = self.summarizer.last_ms if self.summarizer and not verdict.clean else 0.0
            self.save_logs(f"syntax-{index:02d}", [verdict.log])
            errors = verdict.report.error_count
            if verdict.clean:
                for history in (self.rtl, self.tb):
                    history.record_error_count(history.latest.revision_id, 0)
                self._record(LoopKind.SYNTAX, index, 0.0, verdict.tool_ms, 0, IterationAction.ACCEPTED)
                return _LoopOutcome(True)
            counts = {kind: 0 for kind in ArtifactKind}
            for diagnostic in verdict.report.errors:
                counts[diagnostic_role(diagnostic) or ArtifactKind.RTL] += 1
            if index == budget:
                for kind in ArtifactKind:
                    history = self.history(kind)
                    history.record_error_count(history.latest.revision_id, counts[kind])
                self._record(LoopKind.SYNTAX, index, summary_ms, verdict.tool_ms, errors,
                             IterationAction.REJECTED)
                return _LoopOutcome(False, f"syntax errors remain after {budget} iterations")
            action = IterationAction.REVISED
            to_revise = dirty_roles(verdict.report)
            checked = {kind: self.history(kind).latest.revision_id for kind in ArtifactKind}
            for kind in ArtifactKind:
                history = self.history(kind)
                prompts[(kind, checked[kind])] = verdict.corrective_prompt
                if apply_rollback_policy(history, counts[kind]) is IterationAction.ROLLED_BACK:
                    action = IterationAction.ROLLED_BACK
                    # a restored error-free file needs no further edits
                    if history.best_error_count:
                        to_revise.add(kind)
                    else:
                        to_revise.discard(kind)
            llm_ms = summary_ms
            stalled = not to_revise
            for kind in sorted(to_revise, key=lambda k: k is not ArtifactKind.RTL):
                history = self.history(kind)
                current = history.latest
                origin = current.parent_revision if current.revision_id != checked[kind] else checked[kind]
                try:
                    revised = self.agent.revise(current, prompts[(kind, origin)], history)
                finally:
                    llm_ms += self.agent.last_llm_ms
                stalled = stalled or revised.content_hash == current.content_hash
            self._record(LoopKind.SYNTAX, index, llm_ms, verdict.tool_ms, errors, action)
            if stalled:
                return _LoopOutcome(False, "revision identical to its predecessor; no progress")
        raise AssertionError("unreachable")

    def functional_loop(self) -> _LoopOutcome:
        budget = self.config.max_functional_iters
        self.pinned_hash = self.tb.latest.content_hash
        # functional failures are scored on their own scale
        self.rtl.reset_scores()
        prompts: dict[int, str] = {}
        for index in range(1, budget + 1):
            rtl, tb = self.rtl.latest, self.tb.latest
            verdict = verify(rtl, tb, self.pinned_hash, self.config.tool_profile,
                             self.config.rule_set, self.run_dir, self.config.prompt_dir)
            self.simulated_hashes.append(verdict.testbench_hash)
            self.save_logs(f"functional-{index:02d}", verdict.logs)
            errors = verdict.error_count
            if verdict.all_passed:
                self.rtl.record_error_count(rtl.revision_id, 0)
                self._record(LoopKind.FUNCTIONAL, index, 0.0, verdict.tool_ms, 0,
                             IterationAction.ACCEPTED)
                return _LoopOutcome(True)
            if index == budget:
                self.rtl.record_error_count(rtl.revision_id, errors)
                self._record(LoopKind.FUNCTIONAL, index, 0.0, verdict.tool_ms, errors,
                             IterationAction.REJECTED)
                return _LoopOutcome(False, f"test failures remain after {budget} iterations")
            prompts[rtl.revision_id] = verdict.corrective_prompt
            action = apply_rollback_policy(self.rtl, errors)
            current = self.rtl.latest
            prompt = prompts[current.parent_revision if action is IterationAction.ROLLED_BACK
                             else rtl.revision_id]
            try:
                revised = self.agent.revise(current, prompt, self.rtl)
            finally:
                llm_ms = self.agent.last_llm_ms
            self._record(LoopKind.FUNCTIONAL, index, llm_ms, verdict.tool_ms, errors, action)
            if revised.content_hash == current.content_hash:
                return _LoopOutcome(False, "revision identical to its predecessor; no progress")
        raise AssertionError("unreachable")

    def _record(self, loop: LoopKind, index: int, llm_ms: float, tool_ms: float,
                errors: int, action: IterationAction) -> None:
        self.iterations.append(IterationRecord(loop, index, llm_ms, tool_ms, errors, action))

    def best(self, history: RevisionHistory):
        if history.best_revision is not None:
            return history.get(history.best_revision)
        return history.latest if len(history) else None

    def result(self, status: PipelineStatus, detail: str = "") -> PipelineResult:
        if status is PipelineStatus.SUCCESS:
            final_rtl, final_tb = self.rtl.latest, self.tb.latest
        else:
            final_rtl, final_tb = self.best(self.rtl), self.best(self.tb)
        return PipelineResult(
            status=status,
            final_rtl=final_rtl,
            final_testbench=final_tb,
            iterations=list(self.iterations),
            generation_ms=self.generation_ms,
            initial_rtl=self.rtl.get(1) if len(self.rtl) else None,
            detail=detail,
            pinned_testbench_hash=self.pinned_hash,
            simulated_testbench_hashes=list(self.simulated_hashes),
        )

    def execute(self) -> PipelineResult:
        missing = [b for b in _binaries(self.config.tool_profile) if shutil.which(b) is None]
        if missing:
            return self.result(PipelineStatus.TOOL_FAILURE, f"tool not found: {', '.join(missing)}")
        try:
            self.generate()
            syntax = self.syntax_loop()
            if not syntax.passed:
                return self.result(PipelineStatus.SYNTAX_EXHAUSTED, syntax.detail)
            functional = self.functional_loop()
            if not functional.passed:
                return self.result(PipelineStatus.FUNCTIONAL_EXHAUSTED, functional.detail)
            return self.result(PipelineStatus.SUCCESS)
        except ToolFailure as exc:
            log.error("tool failure: %s", exc)
            return self.result(PipelineStatus.TOOL_FAILURE, str(exc))
        except (LlmFailure, ExtractionError) as exc:
            log.error("LLM failure: %s", exc)
            cause = f" ({exc.__cause__})" if exc.__cause__ else ""
            return self.result(PipelineStatus.LLM_FAILURE, f"{exc}{cause}")


def new_run_id() -> str:
    return time.strftime("%Y%m%d-%H%M%S") + "-" + uuid.uuid4().hex[:6]


def write_final_sources(result: PipelineResult, run_dir: Path) -> None:
    for artifact in (result.final_rtl, result.final_testbench):
        if artifact is not None:
            (run_dir / artifact.filename).write_text(artifact.text)


def run_pipeline(spec: DesignSpec, config: RunConfig, backend: Backend, *,
                 run_id: Optional[str] = None, clarify: Optional[ClarifyCallback] = None,
                 agent: Optional[CodeAgent] = None) -> PipelineResult:
    """Generate, repair and verify one design.

    Tool and LLM failures end up in ``result.status``; they are not raised.
    """
    if spec.language is not config.language:
        raise ValidationError("design spec and run config disagree on the language")
    run_id = run_id or new_run_id()
    run_dir = config.workdir_root / run_id
    (run_dir / "logs").mkdir(parents=True, exist_ok=True)
    run = _Run(spec, config, backend, run_dir, clarify, agent)
    result = run.execute()
    write_final_sources(result, run_dir)
    (run_dir / "result.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    log.info("run %s finished: %s", run_id, result.status.value)
    return result
