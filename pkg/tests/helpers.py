"""Shared builders for the test suite (stub designs, configs, mock scripts)."""

from __future__ import annotations

from pathlib import Path

from hdlrefine.diagnostics import load_rule_set
from hdlrefine.llm import GenerationConfig, MockBackend, MockFailure
from hdlrefine.model import HdlLanguage
from hdlrefine.orchestrator import RunConfig
from hdlrefine.toolchain import RawToolLog, load_profile

FIXTURES = Path(__file__).parent / "fixtures"

# Stub testbench: a case passes when its token appears in the design.
STUB_TB = """module tb;
  top_module dut();
  // CASE 1 EXPECT count_ok : count increments while enabled
  // CASE 2 EXPECT wrap_ok : Test Case 2 Failed, count should wrap to 0
  initial $finish;
endmodule
"""

STUB_TB_VHDL = """entity tb is end entity;
architecture sim of tb is begin
  -- CASE 1 EXPECT count_ok : count increments while enabled
  -- CASE 2 EXPECT wrap_ok : Test Case 2 Failed, count should wrap to 0
end architecture;
"""


def stub_rtl(*tokens: str, errors: int = 0, tag: str = "", language: str = "verilog") -> str:
    """A stub design mentioning ``tokens`` with ``errors`` syntax-error lines."""
    comment = "//" if language == "verilog" else "--"
    lines = [f"{comment} design {tag}".rstrip(), "module top_module;" if language == "verilog" else
             "entity top_module is end entity;"]
    lines += [f"  {comment} feature {t}" for t in tokens]
    lines += [f"  SYNTAX_ERROR {i}" for i in range(errors)]
    lines.append("endmodule" if language == "verilog" else "architecture rtl of top_module is begin end;")
    return "\n".join(lines) + "\n"


def fenced(code: str, language: str = "verilog") -> str:
    return f"Here is the code.\n```{language}\n{code}```\n"


def mock(*entries, language: str = "verilog") -> MockBackend:
    """Mock backend; plain strings are wrapped in a code fence."""
    script = [e if isinstance(e, MockFailure) else fenced(e, language) for e in entries]
    return MockBackend(script)


def stub_config(tmp_path: Path, language: str = "verilog", **overrides) -> RunConfig:
    lang = HdlLanguage.parse(language)
    values = dict(
        language=lang,
        generation=GenerationConfig(),
        tool_profile=load_profile("stub-verilog" if lang is HdlLanguage.VERILOG else "stub-vhdl"),
        rule_set=load_rule_set("stub"),
        workdir_root=tmp_path / "runs",
    )
    values.update(overrides)
    return RunConfig(**values)


def load_log(name: str) -> RawToolLog:
    folder = FIXTURES / "logs" / name
    return RawToolLog(
        stdout=(folder / "stdout.txt").read_text(),
        stderr=(folder / "stderr.txt").read_text(),
        exit_code=int((folder / "exit_code").read_text().strip()),
        duration_ms=0.0,
    )


def without_timings(result) -> dict:
    """PipelineResult as a dict with every duration zeroed."""
    data = result.to_dict()
    for key in ("total_llm_ms", "total_tool_ms", "generation_ms"):
        data[key] = 0.0
    for record in data["iterations"]:
        record["llm_duration"] = record["tool_duration"] = 0.0
    return data
