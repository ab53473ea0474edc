#!/usr/bin/env python3
"""Run the baseline experiment end to end in a scratch directory.

Scaffolds the baseline template, executes the pipeline twice (the second
pass should be served entirely from cache), and prints the recorded metrics.

Usage: python scripts/run_baseline.py [DIR]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from locpipe.runner import ExecOptions, Project, metrics_show, repro
from locpipe.templates import init_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("directory", nargs="?", default="baseline_run", help="experiment directory")
    args = parser.parse_args()

    directory = Path(args.directory)
    if not (directory / "pipeline.yaml").exists():
        init_experiment(directory, "baseline")
        print(f"scaffolded baseline experiment in {directory}")
    project = Project(root=directory.resolve())

    start = time.perf_counter()
    report = repro(project, ExecOptions())
    print(f"first pass: {report.executed} executed, {report.cached} cached "
          f"({time.perf_counter() - start:.2f}s)")
    if report.exit_code != 0:
        return report.exit_code

    start = time.perf_counter()
    report = repro(project, ExecOptions())
    print(f"second pass: {report.executed} executed, {report.cached} cached "
          f"({time.perf_counter() - start:.2f}s)")

    print("\nrecorded metrics:")
    for row in metrics_show(project):
        print(f"  {row.stage}  {row.key} = {row.value}")
    print(f"\nreport: {project.root / 'report' / 'report.md'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
