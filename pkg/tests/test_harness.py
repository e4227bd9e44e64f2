import itertools
import json
import math
from fractions import Fraction

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from hdlrefine.errors import ValidationError
from hdlrefine.harness import (
    CSV_COLUMNS,
    LATENCY_KEYS,
    BenchmarkCase,
    SampleRecord,
    SuiteReport,
    aggregate,
    delta_f,
    export_report,
    load_cases,
    load_report,
    mean_delta,
    pass_at_k,
    render_summary,
    run_suite,
)
from hdlrefine.model import ArtifactKind, DesignSpec, PipelineResult, PipelineStatus, SourceArtifact

from helpers import STUB_TB, fenced, mock, stub_config, stub_rtl

# A self-generated testbench that only checks counting, never wrapping.
WEAK_TB = STUB_TB.replace("  // CASE 2 EXPECT wrap_ok : Test Case 2 Failed, count should wrap to 0\n", "")
CORRECT = stub_rtl("count_ok", "wrap_ok")
NO_WRAP = stub_rtl("count_ok")


def case(case_id, reference=STUB_TB):
    return BenchmarkCase(case_id, DesignSpec(f"counter {case_id}", "verilog"),
                         SourceArtifact(ArtifactKind.TESTBENCH, "verilog", reference, 1))


def factory_from(scripts):
    """scripts[case_id] is a list (per sample) of reply lists."""
    return lambda c, i: mock(*scripts[c.case_id][i])


# -- pass@k ------------------------------------------------------------------

def test_pass_at_k_edges():
    assert pass_at_k(10, 0, 1) == 0.0
    assert pass_at_k(10, 10, 3) == 1.0
    assert pass_at_k(5, 3, 3) == 1.0  # n - c < k
    assert pass_at_k(3, 1, 1) == 1 / 3
    assert pass_at_k(1, 1, 1) == 1.0 and pass_at_k(1, 0, 1) == 0.0
    assert pass_at_k(10, 3, 1) == pytest.approx(0.3, abs=1e-12)
    assert pass_at_k(5, 2, 2) == pytest.approx(0.7, abs=1e-12)
    for n, c, k in [(0, 0, 1), (5, 6, 1), (5, -1, 1), (5, 2, 0), (5, 2, 6)]:
        with pytest.raises(ValidationError):
            pass_at_k(n, c, k)


@given(st.integers(min_value=1, max_value=40).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_pass_at_k_matches_exact_rational(nck):
    n, c, k = nck
    exact = 1 - Fraction(math.comb(n - c, k), math.comb(n, k))
    assert pass_at_k(n, c, k) == float(exact)


@given(st.integers(min_value=1, max_value=12).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_pass_at_k_monotone_and_bounded(nck):
    n, c, k = nck
    value = pass_at_k(n, c, k)
    assert 0.0 <= value <= 1.0
    if c < n:
        assert pass_at_k(n, c + 1, k) >= value
    if k < n:
        assert pass_at_k(n, c, k + 1) >= value


def test_pass_at_k_equals_subset_enumeration():
    n = 7
    for c in range(n + 1):
        samples = [True] * c + [False] * (n - c)
        for k in range(1, n + 1):
            subsets = list(itertools.combinations(samples, k))
            assert pass_at_k(n, c, k) == pytest.approx(sum(any(s) for s in subsets) / len(subsets), abs=1e-12)


# -- delta_f -----------------------------------------------------------------

def test_delta_f_examples():
    assert delta_f(60.0, 40.0) == 50.0
    assert delta_f(20.0, 40.0) == -50.0
    assert delta_f(33.0, 0.0) is None
    assert delta_f(40.0, 28.33) == pytest.approx(41.19, abs=0.005)
    assert delta_f(12.5, 10.0) == 25.0
    assert delta_f(50.0, 50.0) == 0.0
    assert delta_f(77.0, 60.23) == 27.84


def test_delta_f_rounds_half_up():
    # 100 * 0.0625 / 50 is exactly 0.125; half-to-even would give 0.12
    assert delta_f(50.0625, 50.0) == 0.13
    assert delta_f(49.9375, 50.0) == -0.13
    assert delta_f(40.5, 40.0) == 1.25


def test_delta_f_validates_percentages():
    for ours, base in [(-1, 10), (101, 10), (10, -0.5), (float("nan"), 10), (10, float("inf"))]:
        with pytest.raises(ValidationError):
            delta_f(ours, base)


def test_mean_delta():
    assert mean_delta([10.0, 20.0]) == (15.0, False)
    assert mean_delta([10.0, None, 30.0]) == (20.0, True)
    assert mean_delta([None, None]) is None
    with pytest.raises(ValidationError):
        mean_delta([])


# -- records -----------------------------------------------------------------

def test_sample_record_invariants():
    result = PipelineResult(PipelineStatus.FUNCTIONAL_EXHAUSTED)
    with pytest.raises(ValidationError):
        SampleRecord("a", 0, result, syntax_pass=False, functional_pass=True)
    with pytest.raises(ValidationError):
        SampleRecord("a", 0, result, True, True, baseline_syntax_pass=False, baseline_functional_pass=True)
    record = SampleRecord("a", 0, result, True, False, True, False)
    assert SampleRecord.from_dict(record.to_dict()) == record


def test_suite_report_delta_invariant():
    with pytest.raises(ValidationError):
        SuiteReport([], 1, 50.0, 50.0, 10.0, 0.0, delta_f=5.0)
    with pytest.raises(ValidationError):
        SuiteReport([], 1, 50.0, 50.0, 10.0, 20.0, delta_f=None)
    with pytest.raises(ValidationError):
        SuiteReport([], 1, 150.0, 50.0)


def test_aggregate_requires_n_samples_per_case():
    result = PipelineResult(PipelineStatus.FUNCTIONAL_EXHAUSTED)
    with pytest.raises(ValidationError):
        aggregate([SampleRecord("a", 0, result, True, True)], 2)


def test_aggregate_averages_over_cases():
    ok = bad = PipelineResult(PipelineStatus.FUNCTIONAL_EXHAUSTED)
    records = [SampleRecord("a", 0, ok, True, True, True, False),
               SampleRecord("a", 1, bad, True, False, True, False),
               SampleRecord("b", 0, ok, True, True, True, True),
               SampleRecord("b", 1, ok, True, True, True, False)]
    report = aggregate(records, 2)
    assert report.pass_at_1_functional == pytest.approx(75.0)
    assert report.baseline_pass_at_1_functional == pytest.approx(25.0)
    assert report.delta_f == 200.0
    assert set(report.latency) == set(LATENCY_KEYS)


# -- suite runs --------------------------------------------------------------

def test_run_suite_all_pass(tmp_path):
    scripts = {"a": [[STUB_TB, CORRECT]], "b": [[STUB_TB, CORRECT]]}
    report = run_suite([case("a"), case("b")], stub_config(tmp_path), 1, backend_factory=factory_from(scripts))
    assert report.pass_at_1_syntax == 100.0 and report.pass_at_1_functional == 100.0
    assert report.baseline_pass_at_1_functional == 100.0 and report.delta_f == 0.0
    assert report.metadata["n_samples"] == 1 and report.metadata["toolchain"] == "stub-verilog"
    assert (tmp_path / "runs" / "a" / "sample-00" / "score-final" / "simulate.log").is_file()


def test_reference_testbench_decides_functional_pass(tmp_path):
    # case b passes its own weak testbench but not the reference
    scripts = {"a": [[STUB_TB, CORRECT]], "b": [[WEAK_TB, NO_WRAP]]}
    report = run_suite([case("a"), case("b")], stub_config(tmp_path), 1, backend_factory=factory_from(scripts))
    records = {r.case_id: r for r in report.records}
    assert records["b"].pipeline_result.status is PipelineStatus.SUCCESS
    assert not records["b"].functional_pass and records["b"].syntax_pass
    assert report.pass_at_1_syntax == 100.0
    assert report.pass_at_1_functional == 50.0


def test_pass_at_1_with_three_samples(tmp_path):
    scripts = {"a": [[STUB_TB, CORRECT], [WEAK_TB, NO_WRAP], [WEAK_TB, NO_WRAP]]}
    report = run_suite([case("a")], stub_config(tmp_path), 3, backend_factory=factory_from(scripts))
    assert report.pass_at_1_functional == pytest.approx(100 / 3)
    assert [r.sample_index for r in report.records] == [0, 1, 2]


def test_baseline_scores_first_generated_design(tmp_path):
    scripts = {"a": [[STUB_TB, NO_WRAP, CORRECT]]}
    report = run_suite([case("a")], stub_config(tmp_path), 1, backend_factory=factory_from(scripts))
    [record] = report.records
    assert record.functional_pass and record.baseline_syntax_pass and not record.baseline_functional_pass
    assert report.baseline_pass_at_1_functional == 0.0 and report.delta_f is None


def test_no_baseline_option(tmp_path):
    scripts = {"a": [[STUB_TB, CORRECT]]}
    report = run_suite([case("a")], stub_config(tmp_path), 1, backend_factory=factory_from(scripts),
                       score_baseline=False)
    assert report.baseline_pass_at_1_functional is None and report.delta_f is None


def test_failures_are_recorded_not_raised(tmp_path):
    scripts = {"a": [[STUB_TB]], "b": [[STUB_TB, CORRECT]]}
    report = run_suite([case("a"), case("b")], stub_config(tmp_path), 1, backend_factory=factory_from(scripts))
    records = {r.case_id: r for r in report.records}
    assert records["a"].pipeline_result.status is PipelineStatus.LLM_FAILURE
    assert not records["a"].syntax_pass and records["a"].baseline_syntax_pass is False
    assert records["b"].functional_pass


def test_parallel_workers_keep_order(tmp_path):
    cases = [case(f"c{i}") for i in range(5)]
    scripts = {c.case_id: [[STUB_TB, CORRECT], [WEAK_TB, NO_WRAP]] for c in cases}
    report = run_suite(cases, stub_config(tmp_path), 2, workers=3, backend_factory=factory_from(scripts))
    assert [(r.case_id, r.sample_index) for r in report.records] == \
        [(c.case_id, i) for c in cases for i in range(2)]
    assert report.pass_at_1_functional == 50.0


def test_run_suite_never_prompts(tmp_path):
    scripts = {"a": [[STUB_TB, CORRECT]]}
    report = run_suite([case("a")], stub_config(tmp_path, interactive=True), 1,
                       backend_factory=factory_from(scripts))
    assert report.pass_at_1_functional == 100.0


def test_run_suite_validation(tmp_path):
    config = stub_config(tmp_path)
    with pytest.raises(ValidationError):
        run_suite([case("a")], config, 0)
    with pytest.raises(ValidationError):
        run_suite([case("a"), case("a")], config, 1)
    with pytest.raises(ValidationError):
        run_suite([case("a")], config, 1, workers=0)


def test_mock_scripts_from_case_directories(tmp_path):
    cases_dir = tmp_path / "cases"
    for name, replies in {"alpha": [STUB_TB, CORRECT], "beta": [WEAK_TB, NO_WRAP]}.items():
        folder = cases_dir / name
        folder.mkdir(parents=True)
        (folder / "spec.txt").write_text(f"{name} counter\n")
        (folder / "ref_tb.v").write_text(STUB_TB)
        (folder / "mock_script.yaml").write_text(yaml.safe_dump([fenced(r) for r in replies]))
    (cases_dir / "alpha" / "module_name.txt").write_text("top_module\n")
    cases = load_cases(cases_dir, "verilog")
    assert [c.case_id for c in cases] == ["alpha", "beta"]
    assert cases[0].spec.module_name_hint == "top_module"
    report = run_suite(cases, stub_config(tmp_path), 2, backend_settings={"name": "mock"})
    assert report.pass_at_1_functional == 50.0


def test_load_cases_errors(tmp_path):
    with pytest.raises(ValidationError):
        load_cases(tmp_path / "missing", "verilog")
    with pytest.raises(ValidationError):
        load_cases(tmp_path, "verilog")
    (tmp_path / "broken").mkdir()
    (tmp_path / "broken" / "spec.txt").write_text("x")
    with pytest.raises(ValidationError):
        load_cases(tmp_path, "verilog")


# -- export ------------------------------------------------------------------

@pytest.fixture
def report(tmp_path):
    scripts = {"a": [[STUB_TB, NO_WRAP, CORRECT]], "b": [[WEAK_TB, NO_WRAP]]}
    return run_suite([case("a"), case("b")], stub_config(tmp_path), 1, backend_factory=factory_from(scripts))


def test_json_round_trip(report, tmp_path):
    path = export_report(report, "json", tmp_path / "r.json")
    assert load_report(path) == report
    data = json.loads(path.read_text())
    assert {"pass_at_1_syntax", "pass_at_1_functional", "delta_f", "latency", "metadata", "records"} <= set(data)


def test_exports_are_deterministic(report, tmp_path):
    for fmt in ("json", "csv"):
        first = export_report(report, fmt, tmp_path / f"1.{fmt}").read_bytes()
        second = export_report(report, fmt, tmp_path / f"2.{fmt}").read_bytes()
        assert first == second


def test_csv_layout(report):
    from hdlrefine.harness import report_to_csv
    rows = report_to_csv(report).splitlines()
    assert rows[0] == ",".join(CSV_COLUMNS)
    assert len(rows) == 1 + len(report.records) + 1
    assert rows[-1].startswith("__aggregate__,1,,100.000,50.000")
    empty = SuiteReport([], 1, 0.0, 0.0)
    assert report_to_csv(empty) == ",".join(CSV_COLUMNS) + "\n"


def test_export_rejects_unknown_format(report, tmp_path):
    with pytest.raises(ValidationError):
        export_report(report, "xml", tmp_path / "r.xml")


def test_render_summary(report):
    text = render_summary(report)
    assert "\033[" not in text
    assert "pass@1_F" in text and " 50.00%" in text
    assert "Delta_F: N/A" in text
    assert "syntax loop" in text and "functional" in text
    assert "\033[1m" in render_summary(report, color=True)
