"""Acceptance gate. Each test is tagged with its criterion number; the
terminal summary prints one PASS/FAIL line per criterion."""

import itertools
import time
from pathlib import Path

import pytest
import yaml

from hdlrefine.code_agent import CodeAgent
from hdlrefine.diagnostics import load_rule_set, parse_compile_log, parse_sim_log
from hdlrefine.errors import InvariantViolation
from hdlrefine.harness import delta_f, mean_delta, pass_at_k
from hdlrefine.model import (
    ArtifactKind,
    DesignSpec,
    IterationAction,
    LoopKind,
    PipelineStatus,
    RevisionHistory,
    Severity,
    SourceArtifact,
)
from hdlrefine.orchestrator import apply_rollback_policy, run_pipeline
from hdlrefine import toolchain
from hdlrefine.review import review
from hdlrefine.toolchain import load_profile
from hdlrefine.verification import verify

from helpers import FIXTURES, STUB_TB, load_log, mock, stub_config, stub_rtl, without_timings

SPEC = DesignSpec("A counter with enable that wraps to zero after 15.", "verilog")


def brute_force_pass_at_k(n, c, k):
    """Fraction of k-subsets of n samples (c of them correct) holding a success."""
    samples = [True] * c + [False] * (n - c)
    subsets = list(itertools.combinations(range(n), k))
    hits = sum(1 for s in subsets if any(samples[i] for i in s))
    return hits / len(subsets)


# -- 1 -------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_pass_at_k_matches_brute_force_oracle():
    start = time.perf_counter()
    for n in range(1, 11):
        for c in range(n + 1):
            for k in range(1, n + 1):
                assert abs(pass_at_k(n, c, k) - brute_force_pass_at_k(n, c, k)) <= 1e-12, (n, c, k)
    for n in range(1, 1001):
        for c in range(n + 1):
            assert pass_at_k(n, c, 1) == c / n, (n, c)
    assert time.perf_counter() - start < 5.0


# -- 2 -------------------------------------------------------------------------

# (ours, baseline) functional pass rates and the printed improvement
PUBLISHED_RATES = [
    (55.13, 37.82, 45.76),   # Llama3-70B, Verilog
    (72.44, 51.29, 41.23),   # GPT-4o, Verilog
    (77.0, 60.23, 27.84),    # Claude 3.5 Sonnet, Verilog
    (59.62, 27.56, 116.32),  # GPT-4o, VHDL
    (66.0, 53.85, 22.56),    # Claude 3.5 Sonnet, VHDL
]


@pytest.mark.criterion(2)
def test_published_deltas_reproduced():
    start = time.perf_counter()
    for ours, base, printed in PUBLISHED_RATES:
        assert delta_f(ours, base) == pytest.approx(printed, abs=0.02)
    assert delta_f(32.69, 0) is None
    assert mean_delta([45.76, 41.23, 27.84]) == (38.28, False)
    assert mean_delta([None, 116.32, 22.56]) == (69.44, True)
    assert time.perf_counter() - start < 1.0


# -- 3 -------------------------------------------------------------------------

def wrap_fix_transcript():
    # testbench, first RTL (fails case 2), fixed RTL
    return mock(STUB_TB, stub_rtl("count_ok"), stub_rtl("count_ok", "wrap_ok"))


@pytest.mark.criterion(3)
def test_deterministic_convergence(tmp_path):
    start = time.perf_counter()
    runs = []
    for attempt in range(3):
        config = stub_config(tmp_path / str(attempt))
        result = run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"), config, wrap_fix_transcript(),
                              run_id="wrap-fix")
        runs.append(result)
        assert result.status is PipelineStatus.SUCCESS
        assert result.syntax_iters == 1
        assert result.functional_iters == 2
        assert (config.workdir_root / "wrap-fix" / "result.json").is_file()
    first = runs[0]
    functional = [r for r in first.iterations if r.loop is LoopKind.FUNCTIONAL]
    assert [r.action for r in functional] == [IterationAction.REVISED, IterationAction.ACCEPTED]
    assert [r.error_count_after for r in functional] == [1, 0]
    assert all(without_timings(r) == without_timings(first) for r in runs)
    assert time.perf_counter() - start < 10.0


@pytest.mark.criterion(3)
def test_functional_prompt_carries_the_failure(tmp_path):
    backend = wrap_fix_transcript()
    run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"), stub_config(tmp_path), backend)
    revise_request = backend.transcript[2][-1].content
    assert "Test case 2 failed" in revise_request
    assert "Test Case 2 Failed, count should wrap to 0" in revise_request


# -- 4 -------------------------------------------------------------------------

def _functional_scenarios():
    # (name, script, budget)
    tb = STUB_TB
    yield "immediate pass", [tb, stub_rtl("count_ok", "wrap_ok")], 10
    yield "fix after one", [tb, stub_rtl("count_ok"), stub_rtl("count_ok", "wrap_ok")], 10
    yield "exhausted", [tb, stub_rtl("count_ok")] + [stub_rtl("count_ok", tag=str(i)) for i in range(3)], 3
    yield "rollback", [tb, stub_rtl("count_ok"), stub_rtl(tag="worse"), stub_rtl("count_ok", "wrap_ok")], 10
    yield "syntax regression", [tb, stub_rtl("count_ok"), stub_rtl("count_ok", errors=1),
                                stub_rtl("count_ok", "wrap_ok")], 10


@pytest.mark.criterion(4)
@pytest.mark.parametrize("name,script,budget", list(_functional_scenarios()),
                         ids=[s[0] for s in _functional_scenarios()])
def test_simulated_testbench_always_matches_pin(tmp_path, name, script, budget):
    config = stub_config(tmp_path, max_functional_iters=budget)
    result = run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"), config, mock(*script))
    assert result.pinned_testbench_hash == result.final_testbench.content_hash
    assert result.simulated_testbench_hashes
    assert len(result.simulated_testbench_hashes) == result.functional_iters
    assert set(result.simulated_testbench_hashes) == {result.pinned_testbench_hash}


class _TestbenchTamperingAgent(CodeAgent):
    """Rewrites the testbench behind the orchestrator's back while repairing RTL."""

    def generate_testbench(self, spec, history):
        self.tb_history = history
        return super().generate_testbench(spec, history)

    def revise(self, current, corrective_prompt, history):
        revised = super().revise(current, corrective_prompt, history)
        if current.kind is ArtifactKind.RTL:
            self.tb_history.append_revision(self.tb_history.latest.text + "// CASE 3 EXPECT x : x\n")
        return revised


@pytest.mark.criterion(4)
def test_mutating_testbench_is_rejected(tmp_path):
    config = stub_config(tmp_path)
    backend = mock(STUB_TB, stub_rtl("count_ok"), stub_rtl("count_ok", "wrap_ok"))
    agent = _TestbenchTamperingAgent(config.generation, backend)
    with pytest.raises(InvariantViolation):
        run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"), config, backend, agent=agent)


@pytest.mark.criterion(4)
def test_verify_refuses_unpinned_testbench(tmp_path):
    rtl = SourceArtifact(ArtifactKind.RTL, "verilog", stub_rtl("count_ok"), 1)
    tb = SourceArtifact(ArtifactKind.TESTBENCH, "verilog", STUB_TB, 1)
    with pytest.raises(InvariantViolation):
        verify(rtl, tb, "0" * 64, load_profile("stub-verilog"), load_rule_set("stub"), tmp_path)


# -- 5 -------------------------------------------------------------------------

@pytest.mark.criterion(5)
@pytest.mark.parametrize("budget", [1, 3, 5])
def test_syntax_budget_exhaustion(tmp_path, budget):
    script = [STUB_TB] + [stub_rtl("count_ok", errors=2, tag=str(i)) for i in range(budget + 2)]
    backend = mock(*script)
    result = run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"), stub_config(tmp_path, max_syntax_iters=budget),
                          backend)
    assert result.status is PipelineStatus.SYNTAX_EXHAUSTED
    assert result.syntax_iters == budget
    assert result.functional_iters == 0
    assert [r.index for r in result.iterations] == list(range(1, budget + 1))
    assert result.iterations[-1].action is IterationAction.REJECTED
    assert all(r.error_count_after == 2 for r in result.iterations)
    # testbench + first RTL + one revision per non-final iteration
    assert backend.turns_consumed == 2 + (budget - 1)
    _check_duration_ledger(result)


@pytest.mark.criterion(5)
@pytest.mark.parametrize("budget", [1, 4])
def test_functional_budget_exhaustion(tmp_path, budget):
    script = [STUB_TB] + [stub_rtl("count_ok", tag=str(i)) for i in range(budget + 2)]
    backend = mock(*script)
    result = run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"),
                          stub_config(tmp_path, max_functional_iters=budget), backend)
    assert result.status is PipelineStatus.FUNCTIONAL_EXHAUSTED
    assert result.syntax_iters == 1
    assert result.functional_iters == budget
    functional = [r for r in result.iterations if r.loop is LoopKind.FUNCTIONAL]
    assert [r.index for r in functional] == list(range(1, budget + 1))
    assert functional[-1].action is IterationAction.REJECTED
    assert all(r.error_count_after == 1 for r in functional)
    assert backend.turns_consumed == 2 + (budget - 1)
    _check_duration_ledger(result)


def _check_duration_ledger(result):
    assert result.total_llm_ms == pytest.approx(sum(r.llm_duration for r in result.iterations))
    assert result.total_tool_ms == pytest.approx(sum(r.tool_duration for r in result.iterations))
    for loop in LoopKind:
        llm, tool = result.loop_latency(loop)
        records = [r for r in result.iterations if r.loop is loop]
        assert llm == pytest.approx(sum(r.llm_duration for r in records))
        assert tool == pytest.approx(sum(r.tool_duration for r in records))
    assert all(r.tool_duration > 0 for r in result.iterations)
    # the final, rejected iteration asks the LLM nothing
    assert result.iterations[-1].llm_duration == 0.0
    assert all(r.llm_duration > 0 for r in result.iterations[:-1] if r.action is not IterationAction.ACCEPTED)
    assert result.generation_ms > 0
    data = result.to_dict()
    assert data["total_llm_ms"] == pytest.approx(result.total_llm_ms)
    assert data["total_tool_ms"] == pytest.approx(result.total_tool_ms)


# -- 6 -------------------------------------------------------------------------

MANIFEST = yaml.safe_load((FIXTURES / "logs" / "manifest.yaml").read_text())


def _located_errors(diagnostics):
    return [[Path(d.file).name, d.line] for d in diagnostics
            if d.severity is Severity.ERROR and d.line is not None]


@pytest.mark.criterion(6)
def test_fixture_corpus_size():
    compile_cases = MANIFEST["compile"].values()
    verilog = [c for c in compile_cases if c["language"] == "verilog"]
    vhdl = [c for c in compile_cases if c["language"] == "vhdl"]
    assert len(verilog) >= 5 and len(vhdl) >= 3 and len(MANIFEST["simulate"]) >= 2


@pytest.mark.criterion(6)
def test_diagnostic_extraction_on_fixture_corpus():
    start = time.perf_counter()
    for name, expected in MANIFEST["compile"].items():
        report = parse_compile_log(load_log(name), load_rule_set(expected["rules"]))
        assert report.clean is expected["clean"], name
        assert _located_errors(report.diagnostics) == expected["errors"], name
        if "warnings" in expected:
            warnings = [[Path(d.file).name, d.line] for d in report.diagnostics
                        if d.severity is Severity.WARNING]
            assert warnings == expected["warnings"], name
    for name, expected in MANIFEST["simulate"].items():
        report = parse_sim_log(load_log(name), load_rule_set(expected["rules"]))
        assert report.all_passed is expected["all_passed"], name
        assert [o.case_id for o in report.outcomes if o.passed] == expected["passed"], name
        assert [o.case_id for o in report.failures] == expected["failed"], name
        assert _located_errors(report.diagnostics) == expected["errors"], name
    assert time.perf_counter() - start < 1.0


# -- 7 -------------------------------------------------------------------------

HDL = FIXTURES / "hdl"


def _artifact(kind, name):
    return SourceArtifact(kind, "verilog", (HDL / name).read_text(), 1)


@pytest.mark.criterion(7)
def test_real_toolchain_smoke(tmp_path, verilator_profile_name):
    start = time.perf_counter()
    profile = load_profile(verilator_profile_name)
    rules = load_rule_set("verilator")
    tb = _artifact(ArtifactKind.TESTBENCH, "shift_tb.v")

    good = _artifact(ArtifactKind.RTL, "shift_rtl_good.v")
    (tmp_path / "good").mkdir()
    verdict = review(good, tb, profile, rules, tmp_path / "good")
    assert verdict.clean, verdict.report.raw_tail
    sim = parse_sim_log(toolchain.simulate(profile, tmp_path / "good"), rules)
    assert sim.sentinel_seen and sim.all_passed, sim.raw_tail

    # `cnt` is used on line 14 but never declared
    bad = _artifact(ArtifactKind.RTL, "shift_rtl_undeclared.v")
    (tmp_path / "bad").mkdir()
    verdict = review(bad, tb, profile, rules, tmp_path / "bad")
    assert not verdict.clean
    assert [(d.file, d.line) for d in verdict.report.errors] == [("rtl.v", 14)]
    assert "line 14:" in verdict.corrective_prompt
    assert ">>   14 |             count <= cnt + 3'd1;" in verdict.corrective_prompt
    assert time.perf_counter() - start < 30.0


@pytest.mark.criterion(7)
def test_real_toolchain_missing_semicolon(tmp_path, verilator_profile_name):
    profile = load_profile(verilator_profile_name)
    tb = _artifact(ArtifactKind.TESTBENCH, "shift_tb.v")
    bad = _artifact(ArtifactKind.RTL, "shift_rtl_syntax.v")
    verdict = review(bad, tb, profile, load_rule_set("verilator"), tmp_path)
    assert not verdict.clean
    # the `;` is missing at the end of line 8; Verilator reports the next token, on line 10
    assert [(d.file, d.line) for d in verdict.report.errors] == [("rtl.v", 10)]
    assert "line 10:" in verdict.corrective_prompt
    assert ">>   10 |" in verdict.corrective_prompt and "semicolon" in verdict.corrective_prompt
    # the snippet window still shows the line that lacks the semicolon
    assert "      8 |     reg [2:0] count" in verdict.corrective_prompt


# -- 8 -------------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_rollback_policy_unit():
    history = RevisionHistory(ArtifactKind.RTL, "verilog")
    history.append_revision("rev one")
    assert apply_rollback_policy(history, 5) is IterationAction.REVISED
    history.append_revision("rev two")
    assert apply_rollback_policy(history, 7) is IterationAction.ROLLED_BACK
    assert history.latest.text == "rev one"
    assert history.latest.parent_revision == 1
    assert len(history) == 3

    history = RevisionHistory(ArtifactKind.RTL, "verilog")
    history.append_revision("rev one")
    apply_rollback_policy(history, 5)
    history.append_revision("rev two")
    assert apply_rollback_policy(history, 3) is IterationAction.REVISED
    assert history.latest.text == "rev two"
    assert history.best_revision == 2


def _syntax_pipeline(tmp_path, second_errors):
    first = stub_rtl("count_ok", "wrap_ok", errors=5, tag="first")
    second = stub_rtl("count_ok", "wrap_ok", errors=second_errors, tag="second")
    fixed = stub_rtl("count_ok", "wrap_ok", tag="fixed")
    backend = mock(STUB_TB, first, second, fixed)
    result = run_pipeline(DesignSpec(SPEC.prompt_text, "verilog"), stub_config(tmp_path), backend)
    return result, backend, first, second


@pytest.mark.criterion(8)
def test_pipeline_rolls_back_on_regression(tmp_path):
    result, backend, first, second = _syntax_pipeline(tmp_path, 7)
    syntax = [r for r in result.iterations if r.loop is LoopKind.SYNTAX]
    assert [r.error_count_after for r in syntax] == [5, 7, 0]
    assert [r.action for r in syntax] == [IterationAction.REVISED, IterationAction.ROLLED_BACK,
                                          IterationAction.ACCEPTED]
    # the next corrective request edits the 5-error revision and quotes its errors
    request = backend.transcript[3][-1].content
    assert first.strip() in request and second.strip() not in request
    assert request.count("Error in the RTL design") == 5
    assert result.status is PipelineStatus.SUCCESS


@pytest.mark.criterion(8)
def test_pipeline_keeps_improvement(tmp_path):
    result, backend, first, second = _syntax_pipeline(tmp_path, 3)
    syntax = [r for r in result.iterations if r.loop is LoopKind.SYNTAX]
    assert [r.error_count_after for r in syntax] == [5, 3, 0]
    assert IterationAction.ROLLED_BACK not in [r.action for r in syntax]
    request = backend.transcript[3][-1].content
    assert second.strip() in request
    assert request.count("Error in the RTL design") == 3
