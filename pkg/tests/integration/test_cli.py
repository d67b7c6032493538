"""
Command line workflow: spec, synthetic data, keys, oracle and a secure run
"""

import os
import socket
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from src.cli.main import cli
from src.unet.spec import NetworkSpec, Variant
from src.unet.tensor_io import load_tensor, load_weights

RING = ["--n", "256", "--p-bits", "20", "--q-bits", "60"]
LAUNCHER = Path(__file__).resolve().parents[2] / "main.py"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path, runner):
    """A calibrated tiny spec with synthetic weights and input on disk"""
    raw = tmp_path / "unet.yaml"
    args = ["--dims", "1,8,8", "--variant", "relu-avg", "--base-channels", "2"]
    result = runner.invoke(cli, ["spec", *args, "--out", str(raw)])
    assert result.exit_code == 0, result.output
    calibrated = tmp_path / "calibrated.yaml"
    result = runner.invoke(
        cli,
        [
            "synth",
            "--spec",
            str(raw),
            "--seed",
            "4",
            "--weights-out",
            str(tmp_path / "w.bunw"),
            "--image-out",
            str(tmp_path / "x.bunt"),
            "--calibrate-to",
            str(calibrated),
        ],
    )
    assert result.exit_code == 0, result.output
    return tmp_path


def test_spec_prints_layer_census(tmp_path, runner):
    """Test the spec command writes YAML and layer counts"""
    out = tmp_path / "full.yaml"
    result = runner.invoke(cli, ["spec", "--dims", "1,64,64,64", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "conv" in result.output
    spec = NetworkSpec.load(out)
    assert spec.variant == Variant.BASELINE
    assert spec.input_dims[0] == 1


def test_spec_rejects_bad_dims(tmp_path, runner):
    """Test non-integer dimensions are a usage error"""
    result = runner.invoke(cli, ["spec", "--dims", "1,a,8", "--out", str(tmp_path / "x.yaml")])
    assert result.exit_code == 2


def test_synth_writes_calibrated_spec(workspace):
    """Test synthetic artifacts load back"""
    raw = NetworkSpec.load(workspace / "unet.yaml")
    calibrated = NetworkSpec.load(workspace / "calibrated.yaml")
    assert [layer.name for layer in raw.layers] == [layer.name for layer in calibrated.layers]
    assert load_tensor(workspace / "x.bunt").shape == (1, 1, 8, 8)
    assert load_weights(workspace / "w.bunw")


def test_keygen_is_reproducible(workspace, runner):
    """Test equal seeds write identical key files"""
    spec = str(workspace / "calibrated.yaml")
    for name in ("k1.bunk", "k2.bunk"):
        args = ["keygen", "--spec", spec, *RING, "--seed", "9", "--out", str(workspace / name)]
        result = runner.invoke(cli, args)
        assert result.exit_code == 0, result.output
    assert (workspace / "k1.bunk").read_bytes() == (workspace / "k2.bunk").read_bytes()


def test_missing_spec_is_usage_error(tmp_path, runner):
    """Test a nonexistent spec path exits with code 2"""
    result = runner.invoke(
        cli, ["keygen", "--spec", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "k")]
    )
    assert result.exit_code == 2


def test_run_matches_oracle(workspace, runner):
    """Test the secure run writes the oracle's label map"""
    spec = str(workspace / "calibrated.yaml")
    data = ["--weights", str(workspace / "w.bunw"), "--image", str(workspace / "x.bunt")]
    oracle = runner.invoke(
        cli, ["oracle", "--spec", spec, *data, *RING, "--out", str(workspace / "oracle.bunt")]
    )
    assert oracle.exit_code == 0, oracle.output
    report = workspace / "reports" / "alice.json"
    run = runner.invoke(
        cli,
        [
            "run",
            "--spec",
            spec,
            "--role",
            "both",
            *data,
            *RING,
            "--trunc",
            "exact",
            "--out",
            str(workspace / "secure.bunt"),
            "--report",
            str(report),
        ],
    )
    assert run.exit_code == 0, run.output
    assert "verified" in run.output
    assert report.exists()
    assert np.array_equal(
        load_tensor(workspace / "secure.bunt"), load_tensor(workspace / "oracle.bunt")
    )


def test_run_without_weights_fails_cleanly(workspace, runner):
    """Test a run without weights fails"""
    result = runner.invoke(
        cli,
        [
            "run",
            "--spec",
            str(workspace / "calibrated.yaml"),
            "--image",
            str(workspace / "x.bunt"),
            *RING,
        ],
    )
    assert result.exit_code != 0


@pytest.mark.slow
def test_bench_reports_every_variant(tmp_path, runner):
    """Test the bench report"""
    report = tmp_path / "bench.json"
    result = runner.invoke(
        cli,
        [
            "bench",
            "--dims",
            "1,8,8",
            "--base-channels",
            "2",
            "--variant",
            "baseline",
            "--variant",
            "square",
            *RING,
            "--report",
            str(report),
        ],
    )
    assert result.exit_code == 0, result.output
    assert '"square"' in report.read_text()


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.mark.slow
def test_two_processes_over_tcp_match_single_process(workspace, runner):
    """Test Alice and Bob processes over TCP match --role both"""
    spec = str(workspace / "calibrated.yaml")
    image = ["--image", str(workspace / "x.bunt")]
    weights = ["--weights", str(workspace / "w.bunw")]
    common = ["run", "--spec", spec, *RING, "--trunc", "exact", "--dealer-seed", "3"]

    local = workspace / "local.bunt"
    result = runner.invoke(cli, [*common, "--role", "both", *image, *weights, "--out", str(local)])
    assert result.exit_code == 0, result.output

    address = f"tcp:127.0.0.1:{_free_port()}"
    env = {**os.environ, "BLINDSEG_CONNECT_RETRIES": "600", "BLINDSEG_LOG_LEVEL": "WARNING"}
    launch = [sys.executable, str(LAUNCHER), *common, "--transport", address]
    remote = workspace / "remote.bunt"
    bob = subprocess.Popen(
        [*launch, "--role", "bob", *weights],
        cwd=workspace,
        env=env,
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
    )
    try:
        alice = subprocess.run(
            [*launch, "--role", "alice", *image, "--out", str(remote)],
            cwd=workspace,
            env=env,
            capture_output=True,
            timeout=600,
        )
        bob_out, _ = bob.communicate(timeout=120)
    finally:
        if bob.poll() is None:
            bob.kill()
    assert alice.returncode == 0, alice.stdout.decode() + alice.stderr.decode()
    assert bob.returncode == 0, bob_out.decode()
    assert np.array_equal(load_tensor(remote), load_tensor(local))


def test_run_help_flags_shared_dealer_seed(runner):
    """Test run --help marks the dealer seed as a test aid"""
    result = runner.invoke(cli, ["run", "--help"])
    assert result.exit_code == 0
    assert "--dealer-seed" in result.output
    assert "test convenience" in " ".join(result.output.split())


def test_oracle_replays_probabilistic_run(workspace, runner):
    """Test oracle --dealer-seed reproduces a prob-mode run"""
    spec = str(workspace / "calibrated.yaml")
    data = ["--weights", str(workspace / "w.bunw"), "--image", str(workspace / "x.bunt")]
    prob = ["--trunc", "prob", "--dealer-seed", "6"]
    args = ["run", "--spec", spec, "--role", "both", *data, *RING, *prob]
    run = runner.invoke(cli, [*args, "--out", str(workspace / "s.bunt")])
    assert run.exit_code == 0, run.output
    oracle = runner.invoke(
        cli, ["oracle", "--spec", spec, *data, *RING, *prob, "--out", str(workspace / "o.bunt")]
    )
    assert oracle.exit_code == 0, oracle.output
    assert np.array_equal(load_tensor(workspace / "s.bunt"), load_tensor(workspace / "o.bunt"))
