"""End-to-end CLI behavior: all subcommands, determinism, error paths."""

import json
import os

import pytest

from mxsim.cli import main

CASE_YAML = """\
arch:
  freq_hz: 2.0e+9
  m_pe: 4
  n_pe: 4
  k_pe_bits: 512
  m_scp: 64
  n_scp: 64
  k_scp_bytes: 64
memory:
  bandwidth_bytes_per_s: 48.0e+9
"""


@pytest.fixture()
def case_cfg(tmp_path):
    path = tmp_path / "case.yaml"
    path.write_text(CASE_YAML)
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- validate / predict ---------------------------------------------------------


def test_validate_reports_analytics(case_cfg, capsys):
    code, out, _ = run_cli(capsys, "validate", "--config", case_cfg)
    assert code == 0
    assert "valid" in out
    assert "4.096 TOPS" in out
    assert "bound 0.7500" in out
    assert "constraint satisfied" in out


def test_validate_bad_config_fails(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("arch:\n  m_pe: -4\n")
    code, _, err = run_cli(capsys, "validate", "--config", str(path))
    assert code == 1
    assert "m_pe" in err


def test_validate_missing_file(capsys):
    code, _, err = run_cli(capsys, "validate", "--config", "/nope.yaml")
    assert code == 1 and "error" in err


def test_predict_emits_json(case_cfg, capsys):
    code, out, _ = run_cli(capsys, "predict", "--config", case_cfg)
    assert code == 0
    doc = json.loads(out)
    assert doc["throughput_ops_per_s"]["INT8"] == 4.096e12
    assert doc["utilization_bound"]["BF16"] == pytest.approx(0.75)
    assert doc["constraint"]["INT8"] is True


# --- dse -------------------------------------------------------------------------


def test_dse_reference_targets(case_cfg, capsys):
    code, out, _ = run_cli(capsys, "dse", "--config", case_cfg,
                           "--target", "1.0")
    assert code == 0 and "88 x 88" in out
    code, out, _ = run_cli(capsys, "dse", "--config", case_cfg,
                           "--target", "0.75")
    assert code == 0 and "64 x 64" in out


def test_dse_bandwidth_override(case_cfg, capsys):
    code, out, _ = run_cli(capsys, "dse", "--config", case_cfg,
                           "--target", "1.0", "--bandwidth-gbs", "96")
    assert code == 0 and "44 x 44" in out


def test_dse_infeasible_target(case_cfg, capsys):
    code, _, err = run_cli(capsys, "dse", "--config", case_cfg,
                           "--target", "1.0", "--bandwidth-gbs", "0.5")
    assert code == 1 and "sizing error" in err


# --- sweep -----------------------------------------------------------------------


SWEEP_YAML = """\
seed: 7
configs:
  - id: base
    arch: {{m_pe: 4, n_pe: 4, m_scp: 64, n_scp: 64}}
  - path: {case_cfg}
workloads:
  - {{id: w0, M: 64, N: 64, K: 128}}
  - {{id: w1, M: 96, N: 64, K: 128, dtype: BF16, mode: unfused}}
  - {{id: bad, M: 0, N: 4, K: 4}}
"""


@pytest.fixture()
def sweep_spec(tmp_path, case_cfg):
    path = tmp_path / "sweep.yaml"
    path.write_text(SWEEP_YAML.format(case_cfg=case_cfg))
    return str(path)


def test_sweep_writes_schema_and_rows(sweep_spec, tmp_path, capsys):
    out_dir = str(tmp_path / "out")
    code, out, _ = run_cli(capsys, "sweep", "--spec", sweep_spec,
                           "--out", out_dir)
    assert code == 0
    lines = open(os.path.join(out_dir, "sweep.csv")).read().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1].startswith("config_id,workload_id,dtype,M,N,K,mode,cycles")
    assert len(lines) == 2 + 4  # 2 configs x 2 good workloads
    row = dict(zip(lines[1].split(","), lines[2].split(",")))
    assert row["config_id"] == "base" and row["workload_id"] == "w0"
    assert int(row["cycles"]) > 0
    assert 0.0 < float(row["utilization"]) <= float(row["analytic_bound"]) + 0.02
    err_lines = open(os.path.join(out_dir, "errors.csv")).read().splitlines()
    assert len(err_lines) == 3  # header + the bad workload per config
    assert "bad" in err_lines[1]


def test_sweep_reruns_byte_identical(sweep_spec, tmp_path, capsys):
    d1, d2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    run_cli(capsys, "sweep", "--spec", sweep_spec, "--out", d1)
    run_cli(capsys, "sweep", "--spec", sweep_spec, "--out", d2)
    for name in ("sweep.csv", "errors.csv"):
        b1 = open(os.path.join(d1, name), "rb").read()
        b2 = open(os.path.join(d2, name), "rb").read()
        assert b1 == b2


def test_sweep_parallel_matches_serial(sweep_spec, tmp_path, capsys):
    d1, d2 = str(tmp_path / "s"), str(tmp_path / "p")
    run_cli(capsys, "sweep", "--spec", sweep_spec, "--out", d1,
            "--workers", "1")
    run_cli(capsys, "sweep", "--spec", sweep_spec, "--out", d2,
            "--workers", "4")
    assert open(os.path.join(d1, "sweep.csv"), "rb").read() == \
        open(os.path.join(d2, "sweep.csv"), "rb").read()


def test_sweep_bad_spec(tmp_path, capsys):
    path = tmp_path / "broken.yaml"
    path.write_text("workloads: []\n")
    code, _, err = run_cli(capsys, "sweep", "--spec", str(path),
                           "--out", str(tmp_path / "o"))
    assert code == 1 and "configs" in err


# --- trace -----------------------------------------------------------------------


def test_trace_outputs(case_cfg, tmp_path, capsys):
    out_dir = str(tmp_path / "trace")
    code, out, _ = run_cli(
        capsys, "trace", "--config", case_cfg,
        "--workload", "M=128,N=128,K=256,dtype=INT8", "--out", out_dir)
    assert code == 0
    trace = open(os.path.join(out_dir, "trace.csv")).read().splitlines()
    assert trace[0] == "cycle,resource,kind,tag"
    assert len(trace) > 10
    report = json.loads(open(os.path.join(out_dir, "report.json")).read())
    assert report["mac_count"] == 128 * 128 * 256
    assert report["total_cycles"] > 0


def test_trace_deterministic(case_cfg, tmp_path, capsys):
    d1, d2 = str(tmp_path / "t1"), str(tmp_path / "t2")
    for d in (d1, d2):
        run_cli(capsys, "trace", "--config", case_cfg,
                "--workload", "M=64,N=64,K=128", "--out", d)
    for name in ("trace.csv", "report.json"):
        assert open(os.path.join(d1, name), "rb").read() == \
            open(os.path.join(d2, name), "rb").read()
