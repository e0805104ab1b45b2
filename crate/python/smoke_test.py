"""Build the extension, import it and run a few quick checks.

    python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(["cargo", "build", "-p", "qcaudit-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "debug" / "libqcaudit_py.so"
    dest = Path(tempfile.mkdtemp()) / "qcaudit_py.so"
    shutil.copy(lib, dest)
    sys.path.insert(0, str(dest.parent))
    import qcaudit_py

    return qcaudit_py


def main():
    q = build_and_import()

    exact = 10 * 0.05 * 0.95**9
    assert abs(q.binomial_pmf(10, 0.05, 1) - exact) < 1e-15
    assert abs(q.normal_upper_tail(0.0) - 0.5) < 1e-15

    sign = q.sign_test([1, 1, 1], exhaustive=True)
    assert sign["p_value"] == 0.25, sign

    census = q.Census.synth(10, 50, [0.5, 0.3, 0.2], seed=7)
    assert len(census) == 500 and census.num_strata == 10
    assert abs(sum(census.true_shares.values()) - 1.0) < 1e-12

    full = q.precision_study(census, census.num_casillas, replicates=1000, seed=1)
    assert all(row["epsilon"] < 1e-12 for row in full["rows"]), full

    rep = q.precision_study(census, 100, replicates=2000, seed=1)
    again = q.precision_study(census, 100, replicates=2000, seed=1, workers=1)
    assert rep == again
    hw = {row["id"]: row["epsilon"] for row in rep["rows"]}
    cov = q.coverage_study(census, 100, hw, replicates=2000, seed=1, include_participation=False)
    assert 0.0 <= cov["simulated"]["p_none"]["value"] <= 1.0

    leader, runner_up = census.contender_ids[:2]
    gap = q.winner_gap_study(census, leader, runner_up, 100, replicates=2000, seed=1)
    assert gap["mean"]["value"] > 0, gap

    print(repr(census))
    print("smoke test ok")


if __name__ == "__main__":
    main()
