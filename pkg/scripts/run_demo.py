#!/usr/bin/env python3
"""Run the bundled offline demo and print its score trajectory.

Equivalent to `promptloop demo`; kept as a plain script for quick
experimentation without installing the console entry point.
"""

import json
import sys
import tempfile

from promptloop.demo import run_demo
from promptloop.runstore import emit_report


def main() -> int:
    output_dir = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="promptloop-demo-")
    result, log_path = run_demo(output_dir)
    summary = json.loads(emit_report(log_path, "json"))
    print("round  mean score           best so far")
    for row in summary["rounds"]:
        print(f"{row['round']:>5}  {row['mean_score']!r:<20} {row['best_max']!r}")
    print(f"mutations applied/rejected: {summary['mutations_applied']}/{summary['mutations_rejected']}")
    print(f"final best score: {result.best.score!r}")
    print(f"log: {log_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
