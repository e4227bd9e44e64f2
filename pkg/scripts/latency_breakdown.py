"""Split mean run time into LLM and tool time per phase for a suite report.

    python scripts/latency_breakdown.py report.json [report2.json ...]

Prints, per report, the mean milliseconds and share of total time for
generation, the syntax loop and the functional loop, plus the mean number
of iterations spent in each loop.
"""

from __future__ import annotations

import argparse
import statistics
from pathlib import Path

from hdlrefine.harness import load_report

PHASES = [
    ("generation", "generation_llm_ms", None),
    ("syntax loop", "syntax_llm_ms", "syntax_tool_ms"),
    ("functional loop", "functional_llm_ms", "functional_tool_ms"),
]


def breakdown(path: Path) -> str:
    report = load_report(path)
    lat = report.latency
    rows = [(name, lat.get(llm, 0.0), lat.get(tool, 0.0) if tool else 0.0) for name, llm, tool in PHASES]
    total = sum(l + t for _, l, t in rows) or 1.0
    lines = [f"{path}  ({len(report.records)} runs, model {report.metadata.get('model_id', '?')}, "
             f"toolchain {report.metadata.get('toolchain', '?')})",
             f"  {'phase':<17}{'LLM ms':>10}{'tool ms':>10}{'LLM %':>8}{'tool %':>8}"]
    for name, llm, tool in rows:
        lines.append(f"  {name:<17}{llm:>10.1f}{tool:>10.1f}{100 * llm / total:>7.1f}%{100 * tool / total:>7.1f}%")
    llm_sum = sum(l for _, l, _ in rows)
    tool_sum = sum(t for _, _, t in rows)
    lines.append(f"  {'total':<17}{llm_sum:>10.1f}{tool_sum:>10.1f}"
                 f"{100 * llm_sum / total:>7.1f}%{100 * tool_sum / total:>7.1f}%")
    if report.records:
        results = [r.pipeline_result for r in report.records]
        lines.append(f"  mean iterations: syntax {statistics.fmean(r.syntax_iters for r in results):.2f}, "
                     f"functional {statistics.fmean(r.functional_iters for r in results):.2f}")
    return "\n".join(lines)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("reports", nargs="+", type=Path)
    args = parser.parse_args()
    print("\n\n".join(breakdown(p) for p in args.reports))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
