"""Smoke test of the compiled `carleman` module.

Build and install first:
    pip install maturin
    pip install -e crates/py --no-build-isolation
"""

import json
import sys
import tempfile
from pathlib import Path

import carleman

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def main() -> int:
    ids = [cid for cid, _ in carleman.criteria()]
    assert "adjoint" in ids and "determinism" in ids, ids

    adj = carleman.run_criterion("adjoint")
    assert adj.passed, adj.line
    print(adj.line)

    with tempfile.TemporaryDirectory() as tmp:
        ok = carleman.run(str(SCENARIOS / "isp_1d.toml"), out=tmp)
        assert ok.exit_code == 0, ok.error
        names = {path for path, _, _ in ok.files}
        assert {"f_hat.csv", "stability_report.json"} <= names, names
        report = json.loads((Path(tmp) / "stability_report.json").read_text())
        assert report, "empty stability report"

        bad = carleman.run(str(SCENARIOS / "isp_short_horizon.toml"), out=str(Path(tmp) / "short"))
        assert bad.exit_code == 2 and "(time)" in bad.error, bad.error

    try:
        carleman.run(str(SCENARIOS / "missing.toml"))
    except carleman.CarlemanError as e:
        assert e.args[0] == 1, e.args
    else:
        raise AssertionError("missing scenario did not raise")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
