"""Benchmark runner and statistics.

Benchmark layout: one directory per case, holding ``spec.txt`` and the
reference testbench ``ref_tb.v`` / ``ref_tb.vhd``. Optional files:
``module_name.txt`` (top-level name hint) and, for the mock backend,
``mock_script.yaml`` or per-sample ``mock_script.<i>.yaml``.

Scoring rules: a sample is a syntax pass when its pipeline run got through
the syntax loop (its final joint compile was clean); it is a functional pass
when its final RTL compiles with and passes the case's reference testbench.
The self-generated testbench never decides functional correctness.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import toolchain
from .diagnostics import ParseRuleSet, parse_compile_log, parse_sim_log
from .errors import HdlRefineError, LlmFailure, ToolFailure, ValidationError
from .llm import Backend, MockBackend, make_backend
from .model import (
    ArtifactKind,
    DesignSpec,
    HdlLanguage,
    LoopKind,
    PipelineResult,
    PipelineStatus,
    SourceArtifact,
)
from .orchestrator import RunConfig, run_pipeline
from .toolchain import ToolProfile

log = logging.getLogger(__name__)

# statuses whose final joint compile was clean
_SYNTAX_OK = (PipelineStatus.SUCCESS, PipelineStatus.FUNCTIONAL_EXHAUSTED)


# -- statistics ---------------------------------------------------------------

def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k: 1 - C(n-c, k) / C(n, k), evaluated as an exact ratio."""
    if not (0 <= c <= n) or not (1 <= k <= n):
        raise ValidationError(f"pass_at_k needs 0 <= c <= n and 1 <= k <= n (n={n}, c={c}, k={k})")
    if n - c < k:
        return 1.0
    # C(n-c,k)/C(n,k) as a product of ratios, over whichever index range is shorter:
    #   prod_{j<k} (n-c-j)/(n-j)  ==  prod_{n-c<i<=n} (i-k)/i
    num = den = 1
    if k <= c:
        for j in range(k):
            num *= n - c - j
            den *= n - j
    else:
        for i in range(n - c + 1, n + 1):
            num *= i - k
            den *= i
    # int / int is correctly rounded, so the exact rational is rounded once
    return (den - num) / den


def _check_pct(value: float, name: str) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and 0 <= value <= 100):
        raise ValidationError(f"{name} must be a percentage in [0, 100], got {value!r}")


def _round2(value: float) -> float:
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def delta_f(ours_pct: float, baseline_pct: float) -> Optional[float]:
    """Relative improvement in percent, rounded to 2 places; None when the baseline is 0."""
    _check_pct(ours_pct, "ours_pct")
    _check_pct(baseline_pct, "baseline_pct")
    if baseline_pct == 0:
        return None
    return _round2(100.0 * (ours_pct - baseline_pct) / baseline_pct)


def mean_delta(deltas: Sequence[Optional[float]]) -> Optional[tuple[float, bool]]:
    """Mean of the defined deltas and whether any were undefined.

    An undefined entry makes the mean a lower bound. Returns None when
    nothing is defined.
    """
    if not deltas:
        raise ValidationError("mean_delta needs at least one entry")
    defined = [d for d in deltas if d is not None]
    if not defined:
        return None
    return _round2(statistics.fmean(defined)), len(defined) < len(deltas)


# -- cases and records --------------------------------------------------------

@dataclass
class BenchmarkCase:
    case_id: str
    spec: DesignSpec
    reference_testbench: SourceArtifact
    source_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.reference_testbench.kind is not ArtifactKind.TESTBENCH:
            raise ValidationError(f"{self.case_id}: reference must be a testbench")
        if self.reference_testbench.language is not self.spec.language:
            raise ValidationError(f"{self.case_id}: reference testbench language differs from the design spec")

    def mock_script(self, sample_index: int) -> Optional[Path]:
        if self.source_dir is None:
            return None
        for name in (f"mock_script.{sample_index}.yaml", "mock_script.yaml"):
            if (self.source_dir / name).is_file():
                return self.source_dir / name
        return None


def load_cases(cases_dir: "str | Path", language: "str | HdlLanguage") -> list[BenchmarkCase]:
    """Read every case directory under ``cases_dir`` (sorted by name)."""
    language = HdlLanguage.parse(language)
    root = Path(cases_dir)
    if not root.is_dir():
        raise ValidationError(f"cases directory {root} does not exist")
    cases = []
    for case_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        spec_file = case_dir / "spec.txt"
        tb_file = case_dir / f"ref_tb.{language.extension}"
        if not spec_file.is_file() or not tb_file.is_file():
            raise ValidationError(f"{case_dir} needs spec.txt and {tb_file.name}")
        hint_file = case_dir / "module_name.txt"
        hint = hint_file.read_text().strip() if hint_file.is_file() else None
        spec = DesignSpec(spec_file.read_text(), language, module_name_hint=hint)
        reference = SourceArtifact(ArtifactKind.TESTBENCH, language, tb_file.read_text(), 1)
        cases.append(BenchmarkCase(case_dir.name, spec, reference, case_dir))
    if not cases:
        raise ValidationError(f"no cases found in {root}")
    return cases


@dataclass
class SampleRecord:
    case_id: str
    sample_index: int
    pipeline_result: PipelineResult
    syntax_pass: bool
    functional_pass: bool
    # the first generated RTL scored the same way, without any repair loop
    baseline_syntax_pass: Optional[bool] = None
    baseline_functional_pass: Optional[bool] = None

    def __post_init__(self) -> None:
        if self.functional_pass and not self.syntax_pass:
            raise ValidationError("functional_pass implies syntax_pass")
        if self.baseline_functional_pass and not self.baseline_syntax_pass:
            raise ValidationError("baseline functional pass implies baseline syntax pass")

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "sample_index": self.sample_index,
            "syntax_pass": self.syntax_pass,
            "functional_pass": self.functional_pass,
            "baseline_syntax_pass": self.baseline_syntax_pass,
            "baseline_functional_pass": self.baseline_functional_pass,
            "pipeline_result": self.pipeline_result.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SampleRecord":
        return cls(
            case_id=data["case_id"],
            sample_index=data["sample_index"],
            pipeline_result=PipelineResult.from_dict(data["pipeline_result"]),
            syntax_pass=data["syntax_pass"],
            functional_pass=data["functional_pass"],
            baseline_syntax_pass=data.get("baseline_syntax_pass"),
            baseline_functional_pass=data.get("baseline_functional_pass"),
        )


LATENCY_KEYS = (
    "generation_llm_ms",
    "syntax_llm_ms",
    "syntax_tool_ms",
    "functional_llm_ms",
    "functional_tool_ms",
)


@dataclass
class SuiteReport:
    records: list[SampleRecord]
    n_samples: int
    pass_at_1_syntax: float
    pass_at_1_functional: float
    baseline_pass_at_1_syntax: Optional[float] = None
    baseline_pass_at_1_functional: Optional[float] = None
    delta_f: Optional[float] = None
    latency: dict[str, float] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("pass_at_1_syntax", "pass_at_1_functional",
                     "baseline_pass_at_1_syntax", "baseline_pass_at_1_functional"):
            value = getattr(self, name)
            if value is not None:
                _check_pct(value, name)
        if self.baseline_pass_at_1_functional is not None:
            if (self.delta_f is None) != (self.baseline_pass_at_1_functional == 0):
                raise ValidationError("delta_f is undefined exactly when the baseline rate is 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "pass_at_1_syntax": self.pass_at_1_syntax,
            "pass_at_1_functional": self.pass_at_1_functional,
            "baseline_pass_at_1_syntax": self.baseline_pass_at_1_syntax,
            "baseline_pass_at_1_functional": self.baseline_pass_at_1_functional,
            "delta_f": self.delta_f,
            "latency": dict(self.latency),
            "metadata": dict(self.metadata),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SuiteReport":
        return cls(
            records=[SampleRecord.from_dict(r) for r in data.get("records", [])],
            n_samples=data["n_samples"],
            pass_at_1_syntax=data["pass_at_1_syntax"],
            pass_at_1_functional=data["pass_at_1_functional"],
            baseline_pass_at_1_syntax=data.get("baseline_pass_at_1_syntax"),
            baseline_pass_at_1_functional=data.get("baseline_pass_at_1_functional"),
            delta_f=data.get("delta_f"),
            latency=dict(data.get("latency", {})),
            metadata=dict(data.get("metadata", {})),
        )


# -- running ------------------------------------------------------------------

BackendFactory = Callable[[BenchmarkCase, int], Backend]


def score_against_reference(rtl: SourceArtifact, reference: SourceArtifact, profile: ToolProfile,
                            rules: ParseRuleSet, workdir: Path) -> tuple[bool, bool]:
    """(compiles clean, passes every test) for ``rtl`` under the reference testbench."""
    workdir.mkdir(parents=True, exist_ok=True)
    compile_log = toolchain.compile([rtl, reference], profile, workdir)
    (workdir / "compile.log").write_text(compile_log.to_text())
    if not parse_compile_log(compile_log, rules).clean:
        return False, False
    sim_log = toolchain.simulate(profile, workdir)
    (workdir / "simulate.log").write_text(sim_log.to_text())
    return True, parse_sim_log(sim_log, rules).all_passed


def backend_factory_from_settings(settings: dict[str, Any],
                                  base_dir: Optional[Path] = None) -> BackendFactory:
    """Mock backends are built fresh per sample (so each replays its script
    from the start), preferring a case's own script; real backends are shared."""
    if str(settings.get("name", "mock")).lower() != "mock":
        shared = make_backend(settings, base_dir)
        return lambda case, index: shared

    def factory(case: BenchmarkCase, index: int) -> Backend:
        script = case.mock_script(index)
        if script is not None:
            return MockBackend.from_file(script)
        return make_backend(settings, base_dir)

    return factory


def _run_sample(case: BenchmarkCase, index: int, config: RunConfig,
                factory: BackendFactory, score_baseline: bool) -> SampleRecord:
    run_id = f"{case.case_id}/sample-{index:02d}"
    run_dir = config.workdir_root / run_id
    try:
        result = run_pipeline(copy.deepcopy(case.spec), config, factory(case, index), run_id=run_id)
    except HdlRefineError as exc:
        log.error("case %s sample %d crashed: %s", case.case_id, index, exc)
        status = PipelineStatus.LLM_FAILURE if isinstance(exc, LlmFailure) else PipelineStatus.TOOL_FAILURE
        result = PipelineResult(status, detail=f"{type(exc).__name__}: {exc}")
    profile, rules = config.tool_profile, config.rule_set

    def score(rtl: Optional[SourceArtifact], label: str) -> tuple[bool, bool]:
        if rtl is None:
            return False, False
        try:
            return score_against_reference(rtl, case.reference_testbench, profile, rules,
                                           run_dir / label)
        except (ToolFailure, ValidationError) as exc:
            log.error("scoring %s/%s failed: %s", run_id, label, exc)
            return False, False

    syntax_pass = result.status in _SYNTAX_OK
    functional_pass = syntax_pass and score(result.final_rtl, "score-final")[1]
    baseline = (None, None)
    if score_baseline:
        baseline = score(result.initial_rtl, "score-baseline")
    return SampleRecord(case.case_id, index, result, syntax_pass, functional_pass, *baseline)


def _case_rate(records: Sequence[SampleRecord], attr: str, n: int) -> float:
    return pass_at_k(n, sum(1 for r in records if getattr(r, attr)), 1)


def aggregate(records: Sequence[SampleRecord], n_samples: int,
              metadata: Optional[dict[str, Any]] = None) -> SuiteReport:
    """Build the report: pass@1 per case, averaged over cases, as percentages."""
    by_case: dict[str, list[SampleRecord]] = {}
    for record in records:
        by_case.setdefault(record.case_id, []).append(record)
    for case_id, group in by_case.items():
        if len(group) != n_samples:
            raise ValidationError(f"case {case_id} has {len(group)} samples, expected {n_samples}")

    def rate(attr: str) -> float:
        if not by_case:
            return 0.0
        return 100.0 * statistics.fmean(_case_rate(g, attr, n_samples) for g in by_case.values())

    scored_baseline = bool(records) and all(r.baseline_syntax_pass is not None for r in records)
    base_s = rate("baseline_syntax_pass") if scored_baseline else None
    base_f = rate("baseline_functional_pass") if scored_baseline else None
    ours_f = rate("functional_pass")
    return SuiteReport(
        records=list(records),
        n_samples=n_samples,
        pass_at_1_syntax=rate("syntax_pass"),
        pass_at_1_functional=ours_f,
        baseline_pass_at_1_syntax=base_s,
        baseline_pass_at_1_functional=base_f,
        delta_f=delta_f(ours_f, base_f) if base_f is not None else None,
        latency=latency_means([r.pipeline_result for r in records]),
        metadata=dict(metadata or {}),
    )


def latency_means(results: Sequence[PipelineResult]) -> dict[str, float]:
    """Mean milliseconds per run spent in LLM calls and tools, split by loop."""
    if not results:
        return {key: 0.0 for key in LATENCY_KEYS}
    totals = {key: 0.0 for key in LATENCY_KEYS}
    for result in results:
        syntax_llm, syntax_tool = result.loop_latency(LoopKind.SYNTAX)
        func_llm, func_tool = result.loop_latency(LoopKind.FUNCTIONAL)
        totals["generation_llm_ms"] += result.generation_ms
        totals["syntax_llm_ms"] += syntax_llm
        totals["syntax_tool_ms"] += syntax_tool
        totals["functional_llm_ms"] += func_llm
        totals["functional_tool_ms"] += func_tool
    return {key: value / len(results) for key, value in totals.items()}


def run_suite(cases: Sequence[BenchmarkCase], config: RunConfig, n_samples: int, workers: int = 1,
              backend_factory: Optional[BackendFactory] = None, *,
              backend_settings: Optional[dict[str, Any]] = None,
              score_baseline: bool = True) -> SuiteReport:
    """Run every case ``n_samples`` times and score against the reference testbenches.

    Cases run in parallel on ``workers`` threads; the samples of one case
    run in order. Never prompts for clarification.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValidationError("case ids must be unique")
    for case in cases:
        if case.spec.language is not config.language:
            raise ValidationError(f"case {case.case_id} is not {config.language.value}")
    if backend_factory is None:
        backend_factory = backend_factory_from_settings(backend_settings or {"name": "mock"})
    config = copy.copy(config)
    config.interactive = False
    started = datetime.now(timezone.utc)

    def run_case(case: BenchmarkCase) -> list[SampleRecord]:
        return [_run_sample(case, i, config, backend_factory, score_baseline) for i in range(n_samples)]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_case = list(pool.map(run_case, cases))
    records = [record for group in per_case for record in group]
    metadata = {
        "model_id": config.generation.model_id,
        "language": config.language.value,
        "toolchain": config.tool_profile.name,
        "n_samples": n_samples,
        "workers": workers,
        "cases": len(cases),
        "started_at": started.isoformat(timespec="seconds"),
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return aggregate(records, n_samples, metadata)


# -- export -------------------------------------------------------------------

CSV_COLUMNS = (
    "case_id", "sample_index", "status", "syntax_pass", "functional_pass",
    "baseline_syntax_pass", "baseline_functional_pass", "syntax_iters", "functional_iters",
    "generation_ms", "total_llm_ms", "total_tool_ms",
)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def report_to_csv(report: SuiteReport) -> str:
    """One row per sample, then an ``__aggregate__`` row with the suite rates.

    A report without samples yields the header alone.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in report.records:
        result = record.pipeline_result
        writer.writerow([_cell(v) for v in (
            record.case_id, record.sample_index, result.status.value, record.syntax_pass,
            record.functional_pass, record.baseline_syntax_pass, record.baseline_functional_pass,
            result.syntax_iters, result.functional_iters, result.generation_ms,
            result.total_llm_ms, result.total_tool_ms,
        )])
    if report.records:
        results = [r.pipeline_result for r in report.records]
        writer.writerow([_cell(v) for v in (
            "__aggregate__", report.n_samples, "", report.pass_at_1_syntax,
            report.pass_at_1_functional, report.baseline_pass_at_1_syntax,
            report.baseline_pass_at_1_functional,
            statistics.fmean(r.syntax_iters for r in results),
            statistics.fmean(r.functional_iters for r in results),
            statistics.fmean(r.generation_ms for r in results),
            statistics.fmean(r.total_llm_ms for r in results),
            statistics.fmean(r.total_tool_ms for r in results),
        )])
    return buffer.getvalue()


def export_report(report: SuiteReport, fmt: str, path: "str | Path") -> Path:
    """Write ``report`` as ``json`` or ``csv``."""
    path = Path(path)
    fmt = fmt.lower()
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    path.write_text(text)
    return path


def load_report(path: "str | Path") -> SuiteReport:
    return SuiteReport.from_dict(json.loads(Path(path).read_text()))


def _fmt_pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:6.2f}%"


def render_summary(report: SuiteReport, color: bool = False) -> str:
    """Human-readable tables: pass rates, improvement, latency split, per case."""
    def bold(text: str) -> str:
        return f"\033[1m{text}\033[0m" if color else text

    meta = report.metadata
    lines = [bold("Suite summary")]
    lines.append(f"  model {meta.get('model_id', '?')}, language {meta.get('language', '?')}, "
                 f"toolchain {meta.get('toolchain', '?')}, n={report.n_samples}, "
                 f"cases={len({r.case_id for r in report.records})}")
    lines.append("")
    lines.append(bold(f"  {'':<12}{'pass@1_S':>10}{'pass@1_F':>10}"))
    lines.append(f"  {'baseline':<12}{_fmt_pct(report.baseline_pass_at_1_syntax):>10}"
                 f"{_fmt_pct(report.baseline_pass_at_1_functional):>10}")
    lines.append(f"  {'pipeline':<12}{_fmt_pct(report.pass_at_1_syntax):>10}"
                 f"{_fmt_pct(report.pass_at_1_functional):>10}")
    delta = "N/A" if report.delta_f is None else f"{report.delta_f:.2f}%"
    lines.append(f"  Delta_F: {delta}")
    lines.append("")
    lines.append(bold("Mean latency per run (ms)"))
    lines.append(bold(f"  {'phase':<14}{'LLM':>12}{'tool':>12}"))
    lat = report.latency
    lines.append(f"  {'generation':<14}{lat.get('generation_llm_ms', 0.0):>12.1f}{0.0:>12.1f}")
    lines.append(f"  {'syntax loop':<14}{lat.get('syntax_llm_ms', 0.0):>12.1f}"
                 f"{lat.get('syntax_tool_ms', 0.0):>12.1f}")
    lines.append(f"  {'functional':<14}{lat.get('functional_llm_ms', 0.0):>12.1f}"
                 f"{lat.get('functional_tool_ms', 0.0):>12.1f}")
    llm_total = sum(lat.get(k, 0.0) for k in ("generation_llm_ms", "syntax_llm_ms", "functional_llm_ms"))
    tool_total = lat.get("syntax_tool_ms", 0.0) + lat.get("functional_tool_ms", 0.0)
    lines.append(f"  {'total':<14}{llm_total:>12.1f}{tool_total:>12.1f}")
    if report.records:
        lines.append("")
        lines.append(bold(f"  {'case':<24}{'S':>4}{'F':>4}{'status':>24}"))
        for record in report.records:
            name = f"{record.case_id}#{record.sample_index}"
            lines.append(f"  {name:<24}{'y' if record.syntax_pass else '-':>4}"
                         f"{'y' if record.functional_pass else '-':>4}"
                         f"{record.pipeline_result.status.value:>24}")
    return "\n".join(lines) + "\n"
