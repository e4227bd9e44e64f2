"""Run the bundled demo benchmark end to end, no EDA tools or API keys needed.

Uses the stub toolchain and the scripted replies in ``demo_cases/*``. The
four cases cover a first-time pass, a syntax-loop repair, a functional-loop
repair, and a design that passes its own weak testbench but fails the
reference one. Writes ``report.json`` and ``report.csv`` into ``--out``.

    python scripts/mock_suite_demo.py --out /tmp/demo
"""

from __future__ import annotations

import argparse
import logging
import tempfile
from pathlib import Path

from hdlrefine.config import load_config
from hdlrefine.harness import (
    backend_factory_from_settings,
    export_report,
    load_cases,
    render_summary,
    run_suite,
)

HERE = Path(__file__).resolve().parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, help="output directory (default: a temp dir)")
    parser.add_argument("--n", type=int, default=3, help="samples per case (default 3)")
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--cases", type=Path, default=HERE / "demo_cases")
    parser.add_argument("--config", type=Path, default=HERE / "demo_config.yaml")
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    out = args.out or Path(tempfile.mkdtemp(prefix="hdlrefine-demo-"))
    out.mkdir(parents=True, exist_ok=True)
    loaded = load_config(args.config, {"workdir_root": str((out / "runs").resolve())})
    cases = load_cases(args.cases, loaded.run.language)
    factory = backend_factory_from_settings(loaded.backend, loaded.base_dir)
    report = run_suite(cases, loaded.run, args.n, args.workers, factory)
    export_report(report, "json", out / "report.json")
    export_report(report, "csv", out / "report.csv")
    print(render_summary(report))
    print(f"\nreport: {out / 'report.json'}\nworkspaces: {out / 'runs'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
