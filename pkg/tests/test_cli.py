import json

import numpy as np
import pytest

from anisolab import cli


def write_cfg(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


QUADRIC_CFG = {
    "surface": {"builder": "wulff", "dimension": 2, "scale": 1.0, "resolution": 24},
    "anisotropy": {"kind": "quadric", "Q": [[4.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]},
    "problem": {"r": 0, "s": 0, "a": [1.0]},
    "seed": 11,
}


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"surface": {"builder": "sphere"}, "mystery": 1})
    code = cli.main(["verify", "--config", cfg, "--suite", "convexity"])
    assert code == cli.EXIT_INVALID


def test_unknown_suite_rejected(tmp_path):
    payload = dict(QUADRIC_CFG)
    payload["suites"] = ["no-such-suite"]
    cfg = write_cfg(tmp_path, payload)
    code = cli.main(["verify", "--config", cfg])
    assert code == cli.EXIT_INVALID


def test_wulffgen_quadric(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    code = cli.main(["wulffgen", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "accepted" in out
    assert (tmp_path / "out" / "wulff_boundary.csv").exists()
    off = (tmp_path / "out" / "wulff_boundary.off").read_text().splitlines()
    assert off[0] == "OFF"
    n_vert, n_face, _ = map(int, off[1].split())
    assert n_vert == 24 * 48 + 2  # grid nodes plus two pole caps
    assert n_face == (24 - 1) * 48 + 2 * 48


def test_wulffgen_nonconvex_exits_2(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        {
            "surface": {"builder": "wulff", "dimension": 2, "resolution": 24},
            "anisotropy": {"kind": "ripple", "amplitude": 0.9, "frequency": 6},
        },
    )
    code = cli.main(["wulffgen", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_INVALID
    assert "REJECTED" in capsys.readouterr().out


def test_verify_minkowski_and_traces(tmp_path):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    code = cli.main(
        [
            "verify",
            "--config",
            cfg,
            "--suite",
            "minkowski",
            "--suite",
            "traces",
            "--resolution",
            "24",
            "--samples",
            "50",
            "--n",
            "4",
            "--out",
            str(tmp_path / "v"),
        ]
    )
    assert code == cli.EXIT_OK
    report = json.loads((tmp_path / "v" / "verify_report.json").read_text())
    assert report["results"]["minkowski"]["passed"]
    assert report["results"]["traces"]["passed"]
    assert report["tool"] == "anisolab"
    assert "config_hash" in report


def test_stability_wulff_exit0(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    code = cli.main(["stability", "--config", cfg, "--out", str(tmp_path / "s")])
    assert code == cli.EXIT_OK
    report = json.loads((tmp_path / "s" / "stability_report.json").read_text())
    assert report["results"]["verdict"] == "wulff-equality"


def test_stability_hypothesis_violated_exit3(tmp_path):
    cfg = write_cfg(
        tmp_path,
        {
            "surface": {"builder": "ellipsoid", "semi_axes": [1.5, 1.0, 0.8, 1.2], "resolution": 16},
            "anisotropy": {
                "kind": "quadric",
                "Q": [[4.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 1.0]],
            },
            "problem": {"r": 0, "s": 1, "a": [1.0, 1.0]},
        },
    )
    code = cli.main(["stability", "--config", cfg, "--out", str(tmp_path / "h")])
    assert code == cli.EXIT_HYPOTHESIS
    report = json.loads((tmp_path / "h" / "stability_report.json").read_text())
    assert report["results"]["verdict"] == "hypothesis-violated"
    # exploratory output still written with sign diagnostics
    assert report["results"]["eq13_terms"]


def test_stability_dump_fields(tmp_path):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    code = cli.main(
        ["stability", "--config", cfg, "--out", str(tmp_path / "d"), "--dump-fields"]
    )
    assert code == cli.EXIT_OK
    csv_text = (tmp_path / "d" / "stability_fields.csv").read_text().splitlines()
    assert csv_text[0].startswith("chart,i0,i1,")
    assert len(csv_text) == 1 + 24 * 48


def test_report_summarizes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    cli.main(["stability", "--config", cfg, "--out", str(tmp_path / "r")])
    capsys.readouterr()
    code = cli.main(["report", str(tmp_path / "r" / "stability_report.json")])
    assert code == cli.EXIT_OK
    assert "wulff-equality" in capsys.readouterr().out


def test_deterministic_across_workers(tmp_path):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    blobs = []
    for k, workers in enumerate((1, 2, 4)):
        out = tmp_path / f"w{k}"
        code = cli.main(
            ["stability", "--config", cfg, "--out", str(out), "--workers", str(workers)]
        )
        assert code == cli.EXIT_OK
        blobs.append((out / "stability_report.json").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_repeat_run_bit_identical(tmp_path):
    cfg = write_cfg(tmp_path, QUADRIC_CFG)
    outs = []
    for k in range(2):
        out = tmp_path / f"rep{k}"
        cli.main(["verify", "--config", cfg, "--suite", "minkowski", "--resolution", "16", "--out", str(out)])
        outs.append((out / "verify_report.json").read_bytes())
    assert outs[0] == outs[1]
