import json

import pytest

from povmlab.cli import main


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_optimize_writes_manifest_and_payload(tmp_path):
    out = tmp_path / "opt"
    rc = main([
        "optimize", "--ensemble", "two_state", "--alpha2", "0.75",
        "--out", str(out), "--format", "json", "--timestamp", "T0",
    ])
    assert rc == 0
    doc = read_json(f"{out}.json")
    man = doc["manifest"]
    assert man["subcommand"] == "optimize"
    assert man["timestamp"] == "T0"
    assert man["log_base"] == "2 (bits)"
    assert man["version"]
    cert = doc["certificate"]
    assert abs(cert["fidelity"] - 0.8660254037844386) < 1e-6
    assert cert["certified"] is True


def test_optimize_rerun_is_byte_identical(tmp_path):
    args = [
        "optimize", "--ensemble", "trine", "--format", "both", "--timestamp", "T0",
    ]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for ext in (".json", ".csv"):
        with open(f"{a}{ext}", "rb") as fa, open(f"{b}{ext}", "rb") as fb:
            assert fa.read() == fb.read()


def test_block_csv_has_one_row_per_length(tmp_path):
    out = tmp_path / "blk"
    rc = main([
        "block", "--ensemble", "two_state", "--alpha2", "0.9", "--L", "3",
        "--out", str(out), "--format", "csv", "--timestamp", "T0",
    ])
    assert rc == 0
    lines = open(f"{out}.csv").read().splitlines()
    assert lines[0].startswith("# manifest: ")
    header = lines[1].split(",")
    assert "f_block" in header and "abs_diff" in header
    rows = lines[2:]
    assert len(rows) == 1
    diff = float(rows[0].split(",")[header.index("abs_diff")])
    assert diff < 1e-9


def test_sqrtm_reports_one_row_per_seed(tmp_path):
    out = tmp_path / "sq"
    rc = main([
        "sqrtm", "--ensemble", "trine", "--L", "2", "--N", "64",
        "--seeds", "0", "1", "2", "--out", str(out), "--format", "both",
        "--timestamp", "T0",
    ])
    assert rc == 0
    doc = read_json(f"{out}.json")
    assert len(doc["reports"]) == 3
    for rep in doc["reports"]:
        assert rep["completeness_residual"] < 1e-8
        assert rep["dim_hb"] <= 4
    lines = open(f"{out}.csv").read().splitlines()
    assert len(lines) == 2 + 3  # manifest + header + rows


def test_typical_table_matches_expected_counts(tmp_path):
    out = tmp_path / "typ"
    with pytest.warns(UserWarning, match="kept nothing"):
        rc = main([
            "typical", "--ensemble", "two_state", "--alpha2", "0.9",
            "--Lprime", "4", "8", "--etaprime", "0.15",
            "--out", str(out), "--format", "json", "--timestamp", "T0",
        ])
    assert rc == 0
    doc = read_json(f"{out}.json")
    rows = doc["rows"]
    assert [r["kept_dim"] for r in rows] == [0, 8]
    assert abs(rows[1]["epsilon_prime"] - 0.6173624799999995) < 1e-12


def test_pipeline_runs_from_toml(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        "\n".join([
            "[ensemble]",
            'kind = "trine"',
            "[protocol]",
            "L_prime = 2",
            "L = 2",
            "eta_prime = 1e-9",
            "eta = 0.5",
            "seeds = [0, 1]",
        ])
    )
    out = tmp_path / "pipe"
    args = [
        "pipeline", "--config", str(cfg), "--out", str(out),
        "--format", "both", "--timestamp", "T0",
    ]
    assert main(args) == 0
    doc = read_json(f"{out}.json")
    rep = doc["reports"]
    assert rep["N"] == 32
    assert rep["epsilon_prime"] == 0.0
    assert len(rep["f_total"]) == 2
    lines = open(f"{out}.csv").read().splitlines()
    assert len(lines) == 2 + 2
    # same manifest, same bytes
    out2 = tmp_path / "pipe2"
    assert main([
        "pipeline", "--config", str(cfg), "--out", str(out2),
        "--format", "both", "--timestamp", "T0",
    ]) == 0
    assert open(f"{out}.json").read() == open(f"{out2}.json").read()
    assert open(f"{out}.csv").read().replace(str(out2), "") == \
        open(f"{out2}.csv").read().replace(str(out2), "")


def test_sweep_grid_row_count(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(
        "\n".join([
            "[ensemble]",
            'kind = "trine"',
            "[sweep]",
            "L = [1, 2]",
            "eta = 0.5",
            "seeds = [0, 1, 2]",
        ])
    )
    out = tmp_path / "sw"
    rc = main([
        "sweep", "--config", str(cfg), "--out", str(out), "--timestamp", "T0",
    ])
    assert rc == 0
    lines = open(f"{out}.csv").read().splitlines()
    assert len(lines) - 2 == 2 * 3  # L axis times seeds


def test_demo_subcommands_run(capsys):
    assert main(["demo", "example1", "--alpha2", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "F_max" in out
    assert main(["demo", "example2"]) == 0
    out = capsys.readouterr().out
    assert "1.584963" in out
    assert main(["demo", "bloch", "--samples", "20000", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "2/3" in out


def test_error_exit_codes(tmp_path, capsys):
    # unknown demo name
    assert main(["demo", "nope"]) == 2
    assert "demo" in capsys.readouterr().err.lower()
    # missing config file
    assert main(["pipeline", "--config", str(tmp_path / "absent.toml")]) == 2
    # config without the required section
    bad = tmp_path / "bad.toml"
    bad.write_text("[ensemble]\nkind = \"trine\"\n")
    assert main(["sweep", "--config", str(bad)]) == 2
    assert main(["pipeline", "--config", str(bad)]) == 2
    # malformed TOML
    broken = tmp_path / "broken.toml"
    broken.write_text("[ensemble\nkind=")
    assert main(["pipeline", "--config", str(broken)]) == 2
    # argparse rejects unknown choices on its own
    with pytest.raises(SystemExit):
        main(["optimize", "--ensemble", "mystery"])


def test_no_output_file_on_config_error(tmp_path):
    out = tmp_path / "never"
    bad = tmp_path / "bad.toml"
    bad.write_text("[protocol]\nL_prime = 2\n")  # missing L, eta_prime, eta
    assert main(["pipeline", "--config", str(bad), "--out", str(out)]) == 2
    assert not (tmp_path / "never.json").exists()
    assert not (tmp_path / "never.csv").exists()
