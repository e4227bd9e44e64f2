"""Run configuration files (YAML).

Example::

    language: verilog
    workdir_root: runs             # relative paths resolve against this file
    max_syntax_iters: 10
    max_functional_iters: 10
    interactive: false
    prompt_dir: null               # directory of *.txt overrides for prompt assets
    summarize_logs: false          # ask the LLM to explain dirty compile logs too
    generation:
      model_id: gpt-4o
      temperature: 0.2
      top_p: 0.1
      max_output_tokens: 4096
      request_timeout: 120
    backend:
      name: openai                 # mock | openai | anthropic | any OpenAI-compatible name
      base_url: https://api.openai.com/v1
      api_key_env: OPENAI_API_KEY  # defaults to <NAME>_API_KEY
    tool_profile: verilator        # built-in name, or a mapping (optionally with `base:`)
    rule_set: verilator            # built-in name or path; defaults from the profile
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .diagnostics import load_rule_set
from .errors import ValidationError
from .llm import GenerationConfig
from .model import HdlLanguage
from .orchestrator import RunConfig
from .toolchain import load_profile

DEFAULT_PROFILES = {HdlLanguage.VERILOG: "verilator", HdlLanguage.VHDL: "ghdl"}

_RULES_FOR_PROFILE = {
    "verilator": "verilator",
    "verilator-pip": "verilator",
    "iverilog": "iverilog",
    "ghdl": "ghdl",
    "stub-verilog": "stub",
    "stub-vhdl": "stub",
}

_KNOWN_KEYS = {
    "language", "workdir_root", "max_syntax_iters", "max_functional_iters", "interactive",
    "prompt_dir", "generation", "backend", "tool_profile", "rule_set", "summarize_logs",
}


@dataclass
class LoadedConfig:
    run: RunConfig
    backend: dict[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")


def _resolve(base_dir: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def default_rule_set(profile_spec: Any) -> str:
    name = profile_spec.get("base", profile_spec.get("name")) if isinstance(profile_spec, dict) else profile_spec
    if name in _RULES_FOR_PROFILE:
        return _RULES_FOR_PROFILE[name]
    raise ValidationError(f"no default rule set for tool profile {name!r}; set `rule_set`")


def build_config(data: dict[str, Any], base_dir: Path = Path("."),
                 overrides: Optional[dict[str, Any]] = None) -> LoadedConfig:
    """Build a run config from a mapping; non-None ``overrides`` win over file values."""
    data = dict(data or {})
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    if "language" not in data:
        raise ValidationError("config must set `language`")
    language = HdlLanguage.parse(data["language"])
    profile_spec = data.get("tool_profile", DEFAULT_PROFILES[language])
    if isinstance(profile_spec, dict) and "name" not in profile_spec:
        raise ValidationError("inline tool profiles need a `name`")
    rule_spec = data.get("rule_set") or default_rule_set(profile_spec)
    if isinstance(rule_spec, str) and ("/" in rule_spec or rule_spec.endswith(".yaml")):
        rule_spec = str(_resolve(base_dir, rule_spec))
    backend = dict(data.get("backend") or {"name": "mock"})
    if backend.get("script"):
        backend["script"] = str(_resolve(base_dir, backend["script"]))
    run = RunConfig(
        language=language,
        generation=GenerationConfig(**(data.get("generation") or {})),
        tool_profile=load_profile(profile_spec),
        rule_set=load_rule_set(rule_spec),
        max_syntax_iters=int(data.get("max_syntax_iters", 10)),
        max_functional_iters=int(data.get("max_functional_iters", 10)),
        interactive=bool(data.get("interactive", False)),
        workdir_root=_resolve(base_dir, data.get("workdir_root", "runs")),
        prompt_dir=_resolve(base_dir, data.get("prompt_dir")),
        summarize_logs=bool(data.get("summarize_logs", False)),
    )
    return LoadedConfig(run, backend, base_dir)


def load_config(path: "str | Path", overrides: Optional[dict[str, Any]] = None) -> LoadedConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a YAML mapping")
    return build_config(data, path.parent.resolve(), overrides)
