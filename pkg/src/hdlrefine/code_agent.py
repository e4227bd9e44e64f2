"""The only component that produces HDL source text.

It writes the testbench first, then the RTL against it, and afterwards
rewrites whole files in response to corrective prompts.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ValidationError
from .llm import Backend, ChatMessage, Completion, GenerationConfig, Role, complete, extract_code_block
from .model import ArtifactKind, DesignSpec, RevisionHistory, SourceArtifact
from .templates import load_template, render


class Verdict(str, enum.Enum):
    SUFFICIENT = "sufficient"
    NEEDS_CLARIFICATION = "needs_clarification"


@dataclass
class ClarificationOutcome:
    verdict: Verdict
    questions: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if (self.verdict is Verdict.NEEDS_CLARIFICATION) != bool(self.questions):
            raise ValidationError("questions must be present exactly when clarification is needed")


def parse_clarification(reply: str) -> ClarificationOutcome:
    text = reply.strip()
    match = re.match(r"INSUFFICIENT\s*:?\s*(.*)", text, re.DOTALL | re.IGNORECASE)
    if match is None:
        return ClarificationOutcome(Verdict.SUFFICIENT)
    questions: list[str] = []
    for line in match.group(1).splitlines():
        line = re.sub(r"^\s*(?:[-*]|\d+[.)])\s*", "", line).strip()
        if not line:
            continue
        # several questions on one line
        parts = re.findall(r"[^?]+\?|[^?]+$", line)
        questions.extend(p.strip() for p in parts if p.strip())
    if not questions:
        questions = ["Please provide the missing design details."]
    return ClarificationOutcome(Verdict.NEEDS_CLARIFICATION, questions)


class CodeAgent:
    """Generates and revises sources through one LLM backend.

    ``last_llm_ms`` holds the latency of the most recent call so the
    orchestrator can book it against the current iteration.
    """

    def __init__(self, config: GenerationConfig, backend: Backend,
                 prompt_dir: Optional[Path] = None, interactive: bool = False):
        self.config = config
        self.backend = backend
        self.prompt_dir = prompt_dir
        self.interactive = interactive
        self.last_llm_ms = 0.0

    def _template(self, name: str) -> str:
        return load_template(name, self.prompt_dir)

    def _ask(self, language, user_text: str, system: bool = True) -> Completion:
        messages = []
        if system:
            messages.append(ChatMessage(Role.SYSTEM, render(self._template("system"),
                                                            language=language.display_name)))
        messages.append(ChatMessage(Role.USER, user_text))
        completion = complete(messages, self.config, self.backend)
        self.last_llm_ms = completion.latency_ms
        return completion

    def assess_spec(self, spec: DesignSpec) -> ClarificationOutcome:
        if not self.interactive:
            self.last_llm_ms = 0.0
            return ClarificationOutcome(Verdict.SUFFICIENT)
        prompt = render(self._template("clarify"), spec=spec.render())
        completion = self._ask(spec.language, prompt, system=False)
        return parse_clarification(completion.text)

    def generate_testbench(self, spec: DesignSpec, history: RevisionHistory) -> SourceArtifact:
        prompt = render(self._template("testbench"), spec=spec.render(),
                        language=spec.language.display_name)
        completion = self._ask(spec.language, prompt)
        code = extract_code_block(completion.text, spec.language)
        return history.append_revision(code)

    def generate_rtl(self, spec: DesignSpec, testbench: SourceArtifact,
                     history: RevisionHistory) -> SourceArtifact:
        if testbench is None:
            raise ValidationError("RTL generation needs the testbench")
        prompt = render(self._template("rtl"), spec=spec.render(), testbench=testbench.text,
                        language=spec.language.display_name)
        completion = self._ask(spec.language, prompt)
        code = extract_code_block(completion.text, spec.language)
        return history.append_revision(code)

    def revise(self, current: SourceArtifact, corrective_prompt: str,
               history: RevisionHistory) -> SourceArtifact:
        """Replace ``current`` wholesale with the LLM's corrected version.

        The history is untouched if the call or the extraction fails.
        """
        if not corrective_prompt or not corrective_prompt.strip():
            raise ValidationError("corrective prompt must be non-empty")
        kind = "design" if current.kind is ArtifactKind.RTL else "testbench"
        prompt = render(self._template("revise"), kind=kind, source=current.text,
                        corrective=corrective_prompt, language=current.language.display_name)
        completion = self._ask(current.language, prompt)
        code = extract_code_block(completion.text, current.language)
        return history.append_revision(code, parent=current.revision_id)
