import subprocess
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"

CASES = {
    "frequency_curves": ["points=31"],
    "regime_map": ["points=21"],
    "stability_scan": ["points=41", "cases=((2.0, 1.0), (1.0, -2.0))"],
    "degenerate_evolution": ["samples=5"],
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_script_runs(name, tmp_path):
    out = tmp_path / f"{name}.csv"
    argv = [sys.executable, str(SCRIPTS / f"{name}.py"), "--set", f"out={out}"]
    for item in CASES[name]:
        argv += ["--set", item]
    res = subprocess.run(argv, capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    assert out.exists() and out.stat().st_size > 0


def test_stability_scan_agrees_everywhere(tmp_path):
    argv = [sys.executable, str(SCRIPTS / "stability_scan.py"), "--set", f"out={tmp_path / 's.csv'}",
            "--set", "points=101"]
    res = subprocess.run(argv, capture_output=True, text=True, check=True)
    lines = [l for l in res.stdout.splitlines() if "agreement" in l]
    assert lines and all(l.split()[-1].split("/")[0] == l.split()[-1].split("/")[1] for l in lines)


def test_unknown_override_rejected(tmp_path):
    res = subprocess.run([sys.executable, str(SCRIPTS / "regime_map.py"), "--set", "nope=1"],
                         capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 2
