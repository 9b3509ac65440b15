import json
import os
import subprocess
import sys

import numpy as np
import pytest

from duquant.tensor import write_npy


def run_cli(*args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "duquant", *args],
        capture_output=True,
        text=True,
        env=env,
    )


@pytest.fixture(scope="module")
def tensors(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    x_path, w_path = str(root / "x.npy"), str(root / "w.npy")
    res = run_cli(
        "synth", "--rows", "32", "--cols", "64", "--normal-channels", "3,17,40,55",
        "--massive", "1", "--seed", "6", "-o", x_path,
    )
    assert res.returncode == 0, res.stderr
    rng = np.random.default_rng(0)
    write_npy(w_path, rng.normal(0.0, 0.02, size=(64, 24)))
    return x_path, w_path


QUICK = ("--block-size", "16", "--steps", "4")


class TestSynth:
    def test_writes_requested_outlier(self, tensors):
        x_path, _ = tensors
        x = np.load(x_path)
        assert x.shape == (32, 64)
        assert (np.abs(x) == 1400.0).sum() == 1

    def test_missing_output_is_usage_error(self):
        res = run_cli("synth", "--rows", "4", "--cols", "4")
        assert res.returncode == 2

    def test_deterministic_bytes(self, tmp_path):
        a, b = str(tmp_path / "a.npy"), str(tmp_path / "b.npy")
        for path in (a, b):
            res = run_cli("synth", "--rows", "8", "--cols", "8", "--seed", "3", "-o", path)
            assert res.returncode == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_env_seed_fallback(self, tmp_path):
        a, b = str(tmp_path / "a.npy"), str(tmp_path / "b.npy")
        run_cli("synth", "--rows", "8", "--cols", "8", "--seed", "9", "-o", a)
        run_cli("synth", "--rows", "8", "--cols", "8", "-o", b, env_extra={"DUQUANT_SEED": "9"})
        assert open(a, "rb").read() == open(b, "rb").read()


class TestQuantize:
    def test_report_and_bundle(self, tensors, tmp_path):
        x_path, w_path = tensors
        out = str(tmp_path / "bundle")
        report_path = str(tmp_path / "report.json")
        res = run_cli("quantize", x_path, w_path, *QUICK, "--out-dir", out, "--report", report_path)
        assert res.returncode == 0, res.stderr
        report = json.loads(open(report_path).read())
        assert set(report) == {"config", "stages", "metrics"}
        assert "quant_relative_error" in report["metrics"]
        files = set(os.listdir(out))
        assert {"manifest.json", "rotation1_block.npy", "rotation2_block.npy",
                "permutation.npy", "smoothing_scales.npy", "x_codes.npy", "w_codes.npy",
                "x_deltas.npy", "x_zeros.npy", "w_deltas.npy", "w_zeros.npy"} <= files

    def test_zigzag_lowers_block_variance(self, tensors, tmp_path):
        x_path, w_path = tensors
        results = {}
        for mode in ("none", "zigzag"):
            out = str(tmp_path / f"bundle_{mode}")
            rep = str(tmp_path / f"rep_{mode}.json")
            res = run_cli("quantize", x_path, w_path, *QUICK, "--perm", mode,
                          "--out-dir", out, "--report", rep)
            assert res.returncode == 0, res.stderr
            results[mode] = json.loads(open(rep).read())["metrics"]
        assert (
            results["zigzag"]["block_variance_after"]
            < results["none"]["block_variance_after"]
        )

    def test_more_bits_less_error(self, tensors, tmp_path):
        x_path, w_path = tensors
        errs = {}
        for bits in ("4", "6"):
            out = str(tmp_path / f"bundle_b{bits}")
            rep = str(tmp_path / f"rep_b{bits}.json")
            res = run_cli("quantize", x_path, w_path, *QUICK,
                          "--bits-a", bits, "--bits-w", bits,
                          "--clip-a", "1.0", "--clip-w", "1.0",
                          "--out-dir", out, "--report", rep)
            assert res.returncode == 0, res.stderr
            errs[bits] = json.loads(open(rep).read())["metrics"]["quant_relative_error"]
        assert errs["6"] < errs["4"]

    def test_bad_npy_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.npy"
        bad.write_bytes(b"garbage")
        res = run_cli("quantize", str(bad), str(bad), "--out-dir", str(tmp_path / "o"))
        assert res.returncode == 3

    def test_bad_block_size_is_config_error(self, tensors, tmp_path):
        x_path, w_path = tensors
        res = run_cli("quantize", x_path, w_path, "--block-size", "100",
                      "--out-dir", str(tmp_path / "o"))
        assert res.returncode == 2


class TestVerify:
    def test_default_passes(self):
        res = run_cli("verify", "--trials", "5", "--seed", "1")
        assert res.returncode == 0, res.stdout + res.stderr
        assert "PASS" in res.stdout and "FAIL" not in res.stdout

    def test_reproducible_output(self):
        a = run_cli("verify", "--trials", "5", "--seed", "3")
        b = run_cli("verify", "--trials", "5", "--seed", "3")
        assert a.stdout == b.stdout

    def test_injected_fault_fails(self):
        res = run_cli("verify", "--trials", "3", env_extra={"DUQUANT_INJECT_FAULT": "1"})
        assert res.returncode == 1
        assert "FAIL" in res.stdout


class TestSweep:
    def test_mask_keys_and_direction(self, tensors, tmp_path):
        x_path, w_path = tensors
        rep = str(tmp_path / "sweep.json")
        res = run_cli("sweep", x_path, w_path, *QUICK, "--report", rep)
        assert res.returncode == 0, res.stderr
        payload = json.loads(open(rep).read())
        assert list(payload) == ["S", "R1", "S+R1", "R1+P+R2", "full"]
        errs = {k: v["quant_relative_error"] for k, v in payload.items()}
        assert errs["full"] == min(errs.values())

    def test_deterministic(self, tensors):
        x_path, w_path = tensors
        a = run_cli("sweep", x_path, w_path, *QUICK, "--seed", "2")
        b = run_cli("sweep", x_path, w_path, *QUICK, "--seed", "2")
        assert a.stdout == b.stdout
