import json
from pathlib import Path

import numpy as np

from dimosr import data as datamod
from dimosr.checkpoint import save_checkpoint
from dimosr.cli import main
from dimosr.model import ModelConfig, build_model


def make_pngs(d, n, size=32, seed=0):
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        img = rng.uniform(0, 1, (1, 3, size, size)).astype(np.float32)
        datamod.save_png(img, d / f"im{i}.png")


def tiny_checkpoint(path, scale=4, seed=0):
    cfg = ModelConfig(channels=8, num_blocks=2, group_size=1, dilations=(1, 2),
                      branch_width=2, erb_hidden=4, erb_depth=1, scale=scale)
    net = build_model(cfg, seed=seed)
    save_checkpoint(path, net)
    return net


class TestIngest:
    def test_empty_dir_errors(self, tmp_path, capsys):
        empty = tmp_path / "none"
        empty.mkdir()
        rc = main(["ingest", str(empty), "--scale", "4"])
        assert rc == 1
        assert "no images found" in capsys.readouterr().err

    def test_five_pngs_x4(self, tmp_path):
        hr = tmp_path / "hr"
        make_pngs(hr, 5)
        out = tmp_path / "m.json"
        assert main(["ingest", str(hr), "--scale", "4", "--out", str(out)]) == 0
        manifest = datamod.load_manifest(out)
        assert len(manifest.entries) == 5
        for e in manifest.entries:
            lr = datamod.load_png(e.lr_path)
            assert lr.shape[2] == 8 and lr.shape[3] == 8  # quarter resolution

    def test_reingest_byte_identical(self, tmp_path):
        hr = tmp_path / "hr"
        make_pngs(hr, 3)
        out1, out2 = tmp_path / "m1.json", tmp_path / "m2.json"
        assert main(["ingest", str(hr), "--scale", "2", "--out", str(out1)]) == 0
        assert main(["ingest", str(hr), "--scale", "2", "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestInspect:
    def test_dimosr_x4_reports_published_budget(self, capsys):
        assert main(["inspect", "--preset", "dimosr", "--scale", "4"]) == 0
        out = capsys.readouterr().out
        assert "350,724" in out       # within 2% of 349K
        assert "19.73 G" in out       # within 10% of 20G at 1280x720
        assert "1280x720" in out

    def test_layer_table(self, capsys):
        assert main(["inspect", "--preset", "toy", "--scale", "2", "--layers"]) == 0
        out = capsys.readouterr().out
        assert "shallow.weight" in out and "head.out.weight" in out


class TestInfer:
    def test_x4_writes_upscaled_png(self, tmp_path):
        ckpt = tmp_path / "net.dmsr"
        tiny_checkpoint(ckpt, scale=4)
        src = tmp_path / "in.png"
        make_pngs(tmp_path, 0)
        datamod.save_png(np.random.default_rng(1).uniform(0, 1, (1, 3, 16, 16))
                         .astype(np.float32), src)
        dst = tmp_path / "out.png"
        assert main(["infer", "--checkpoint", str(ckpt), str(src), str(dst)]) == 0
        sr = datamod.load_png(dst)
        assert sr.shape == (1, 3, 64, 64)

    def test_missing_checkpoint_fails(self, tmp_path, capsys):
        rc = main(["infer", "--checkpoint", str(tmp_path / "nope.dmsr"),
                   str(tmp_path / "a.png"), str(tmp_path / "b.png")])
        assert rc == 1


class TestEval:
    def test_sr_equals_hr_reports_inf_sentinel(self, tmp_path, capsys):
        hr = tmp_path / "hr"
        make_pngs(hr, 2, size=32)
        out = tmp_path / "m.json"
        assert main(["ingest", str(hr), "--scale", "2", "--out", str(out)]) == 0
        rc = main(["eval", "--data", str(out), "--sr-dir", str(hr)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "psnr inf" in text
        assert "ssim 1.0000" in text

    def test_checkpoint_eval_runs(self, tmp_path, capsys):
        hr = tmp_path / "hr"
        make_pngs(hr, 2, size=24)
        manifest = tmp_path / "m.json"
        assert main(["ingest", str(hr), "--scale", "2", "--out", str(manifest)]) == 0
        ckpt = tmp_path / "net.dmsr"
        tiny_checkpoint(ckpt, scale=2)
        assert main(["eval", "--checkpoint", str(ckpt), "--data", str(manifest)]) == 0
        assert "mean" in capsys.readouterr().out

    def test_needs_checkpoint_or_sr_dir(self, tmp_path, capsys):
        hr = tmp_path / "hr"
        make_pngs(hr, 1, size=24)
        manifest = tmp_path / "m.json"
        main(["ingest", str(hr), "--scale", "2", "--out", str(manifest)])
        assert main(["eval", "--data", str(manifest)]) == 1


class TestTrain:
    def test_short_toy_run_with_overrides(self, tmp_path):
        hr = tmp_path / "hr"
        make_pngs(hr, 3, size=32)
        manifest = tmp_path / "m.json"
        main(["ingest", str(hr), "--scale", "2", "--out", str(manifest)])
        out_dir = tmp_path / "run"
        rc = main(["train", "--preset", "toy", "--data", str(manifest),
                   "--out", str(out_dir), "--",
                   "--train.iterations", "2", "--train.batch-size", "1",
                   "--train.patch-size", "8", "--train.lambda", "0"])
        assert rc == 0
        assert (out_dir / "checkpoint_final.dmsr").exists()
        lines = [json.loads(l) for l in (out_dir / "train_log.jsonl").read_text().splitlines()]
        assert lines[-1]["iteration"] == 2

    def test_unknown_override_fails(self, tmp_path, capsys):
        hr = tmp_path / "hr"
        make_pngs(hr, 1, size=16)
        manifest = tmp_path / "m.json"
        main(["ingest", str(hr), "--scale", "2", "--out", str(manifest)])
        rc = main(["train", "--preset", "toy", "--data", str(manifest),
                   "--out", str(tmp_path / "x"), "--", "--model.depth", "3"])
        assert rc == 1
        assert "unknown configuration key" in capsys.readouterr().err

    def test_idempotent_outputs(self, tmp_path):
        hr = tmp_path / "hr"
        make_pngs(hr, 2, size=24)
        manifest = tmp_path / "m.json"
        main(["ingest", str(hr), "--scale", "2", "--out", str(manifest)])

        def run(tag):
            out = tmp_path / tag
            rc = main(["train", "--preset", "toy", "--data", str(manifest),
                       "--out", str(out), "--",
                       "--train.iterations", "3", "--train.batch-size", "1",
                       "--train.patch-size", "8"])
            assert rc == 0
            return ((out / "checkpoint_final.dmsr").read_bytes(),
                    (out / "train_log.jsonl").read_bytes())

        assert run("a") == run("b")


class TestGradcheckCommand:
    def test_quick_suite_exit_zero(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "gradient checks passed" in out
        assert "FAIL" not in out

    def test_failure_exits_nonzero(self, monkeypatch, capsys):
        from dimosr import gradsuite
        from dimosr.autodiff import GradCheckReport

        bad = gradsuite.CheckResult("fake", GradCheckReport(
            passed=False, max_rel_err=1.0, tol=1e-4, n_checked=1, n_degenerate=0))
        monkeypatch.setattr(gradsuite, "run_suite", lambda **kw: [bad])
        assert main(["gradcheck"]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestModuleEntryPoint:
    def test_python_dash_m_invocation(self):
        import subprocess
        import sys

        env_src = str(Path(__file__).resolve().parents[1] / "src")
        proc = subprocess.run(
            [sys.executable, "-m", "dimosr", "inspect", "--preset", "toy", "--scale", "2"],
            capture_output=True, text=True,
            env={"PYTHONPATH": env_src, "PATH": "/usr/bin:/bin"})
        assert proc.returncode == 0
        assert "parameters:" in proc.stdout
