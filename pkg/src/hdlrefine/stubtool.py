"""A toy compiler/simulator pair with iverilog-style output.

It does not understand HDL. It only reacts to markers so that repair loops
can be driven end to end without a real toolchain:

compile
    every line containing ``SYNTAX_ERROR`` yields ``<file>:<line>: syntax error``
    on stderr; ``SYNTAX_WARNING`` yields a warning. Exit status 1 on errors.
simulate
    testbench lines ``// CASE <id> EXPECT <token> : <message>`` (``--`` for
    VHDL) define test cases; a case passes when ``<token>`` occurs in the
    design. The protocol lines ``TESTCASE <id> PASS|FAIL: ...`` and
    ``ALL TESTS PASSED`` are printed. A design containing ``HANG`` never
    finishes.

Usage: python -m hdlrefine.stubtool {compile|simulate} FILE...
"""

import re
import sys
import time
from pathlib import Path

CASE_RE = re.compile(r"(?://|--)\s*CASE\s+(\S+)\s+EXPECT\s+(\S+)\s*:\s*(.*)")


def run_compile(files):
    errors = 0
    for name in files:
        for number, line in enumerate(Path(name).read_text().splitlines(), start=1):
            if "SYNTAX_ERROR" in line:
                print(f"{name}:{number}: syntax error", file=sys.stderr)
                errors += 1
            elif "SYNTAX_WARNING" in line:
                print(f"{name}:{number}: warning: suspicious construct", file=sys.stderr)
    if errors:
        print(f"{errors} error(s) during elaboration.", file=sys.stderr)
    return 1 if errors else 0


def run_simulate(files):
    design = ""
    bench = ""
    for name in files:
        text = Path(name).read_text()
        if Path(name).name.startswith("tb."):
            bench = text
        else:
            design += text
    if "HANG" in design:
        while True:
            time.sleep(1)
    failed = 0
    for case_id, token, message in CASE_RE.findall(bench):
        if token in design:
            print(f"TESTCASE {case_id} PASS: {message.strip()}")
        else:
            print(f"TESTCASE {case_id} FAIL: {message.strip()}")
            failed += 1
    if not failed:
        print("ALL TESTS PASSED")
    print("stub.v: $finish called")
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2 or argv[0] not in ("compile", "simulate"):
        print(__doc__, file=sys.stderr)
        return 2
    if argv[0] == "compile":
        return run_compile(argv[1:])
    return run_simulate(argv[1:])


if __name__ == "__main__":
    sys.exit(main())
