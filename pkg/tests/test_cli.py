import numpy as np
import pytest

from hyperfield.checkpoint import load_checkpoint
from hyperfield.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from hyperfield.evaluate import analytic_grid, iou, rasterize
from hyperfield.dataset import read_dataset
from hyperfield.hypernet import predict_weights

TINY = """
seed = 1
dim = 2
num_shapes = 2
families = circle, ellipse
cond_points = 16
pool_size = 64
task_dims = 2,8,8,1
T = 32
eta_inner = 0.5
inner_batch = 16
cond_hidden = 8
cond_dim = 16
time_dim = 8
trunk_width = 16
trunk_depth = 2
batch_size = 1
iterations = 4
record_every = 1
checkpoint_every = 2
fft_steps = 2
eval_resolution = 16
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("HNF_OUT_DIR", str(tmp_path / "out"))
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY + f"dataset = {tmp_path / 'd.hnfd'}\n")
    return tmp_path


def gen(ws, *extra):
    return main(["gen-data", "--config", str(ws / "run.cfg"), *extra])


def train(ws, *extra):
    return main(["train", "--config", str(ws / "run.cfg"), *extra])


def test_gen_data_writes_and_refuses_overwrite(workspace, capsys):
    assert gen(workspace) == EXIT_OK
    assert (workspace / "d.hnfd").exists()
    manifest, samples = read_dataset(workspace / "d.hnfd")
    assert manifest.num_shapes == 2 and len(samples) == 2
    # second run without --force refuses
    assert gen(workspace) == EXIT_VALIDATION
    assert "--force" in capsys.readouterr().err
    assert gen(workspace, "--force") == EXIT_OK


def test_gen_data_deterministic_bytes(workspace):
    assert gen(workspace, "--out", str(workspace / "a.hnfd")) == EXIT_OK
    assert gen(workspace, "--out", str(workspace / "b.hnfd")) == EXIT_OK
    a = (workspace / "a.hnfd").read_bytes()
    b = (workspace / "b.hnfd").read_bytes()
    assert a == b


def test_gen_data_family_dim_mismatch(workspace, capsys):
    assert gen(workspace, "--set", "families=sphere",
               "--out", str(workspace / "x.hnfd")) == EXIT_VALIDATION
    assert "3D" in capsys.readouterr().err


def test_gen_data_unknown_family(workspace):
    assert gen(workspace, "--set", "families=pentagon",
               "--out", str(workspace / "x.hnfd")) == EXIT_VALIDATION


def test_train_eval_happy_path(workspace):
    assert gen(workspace) == EXIT_OK
    assert train(workspace) == EXIT_OK
    out = workspace / "out"
    ckpt = out / "checkpoint.hnf"
    assert ckpt.exists()
    log = (out / "train_log.csv").read_text()
    assert log.startswith("iteration,loss,")
    assert len(log.strip().splitlines()) == 1 + 4  # header + 4 records
    assert (out / "resolved_config.txt").exists()

    assert main(["eval", "--checkpoint", str(ckpt)]) == EXIT_OK
    ev = out / "eval"
    table = (ev / "iou_table.csv").read_text().strip().splitlines()
    assert table[0] == "shape_id,family,iou,iou_fft"
    assert len(table) == 3
    for i in range(2):
        assert (ev / f"trajectory_{i:03d}.csv").exists()
        assert (ev / f"trajectory_{i:03d}.svg").exists()
        assert (ev / f"contour_{i:03d}.svg").exists()


def test_train_twice_is_bit_identical(workspace, monkeypatch):
    assert gen(workspace) == EXIT_OK
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "r1"))
    assert train(workspace) == EXIT_OK
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "r2"))
    assert train(workspace) == EXIT_OK
    a = (workspace / "r1" / "checkpoint.hnf").read_bytes()
    b = (workspace / "r2" / "checkpoint.hnf").read_bytes()
    assert a == b


def test_interrupted_then_resumed_run_matches_straight_run(workspace, monkeypatch):
    assert gen(workspace) == EXIT_OK
    # straight run: 4 iterations in one go
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "straight"))
    assert train(workspace) == EXIT_OK
    # interrupted run: stop at 2 iterations, then resume to 4
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "half"))
    assert train(workspace, "--max-iterations", "2") == EXIT_OK
    half_ckpt = load_checkpoint(workspace / "half" / "checkpoint.hnf")
    assert half_ckpt[1].iteration == 2
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "resumed"))
    assert train(workspace, "--resume",
                 str(workspace / "half" / "checkpoint.hnf")) == EXIT_OK
    a = (workspace / "straight" / "checkpoint.hnf").read_bytes()
    b = (workspace / "resumed" / "checkpoint.hnf").read_bytes()
    assert a == b


def test_resume_spec_mismatch_is_validation_error(workspace, monkeypatch):
    assert gen(workspace) == EXIT_OK
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "a"))
    assert train(workspace) == EXIT_OK
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "b"))
    code = train(workspace, "--set", "task_dims=2,4,1",
                 "--resume", str(workspace / "a" / "checkpoint.hnf"))
    assert code == EXIT_VALIDATION


def test_train_baseline_and_recon_regimes(workspace, monkeypatch):
    assert gen(workspace) == EXIT_OK
    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "base"))
    assert train(workspace, "--regime", "baseline") == EXIT_OK
    cost = (workspace / "base" / "baseline_cost_report.csv").read_text()
    assert cost.splitlines()[0] == "phase,inner_steps,iterations,wallclock_s"
    assert "precompute,64," in cost  # 2 shapes x T=32 oracle steps

    monkeypatch.setenv("HNF_OUT_DIR", str(workspace / "recon"))
    assert train(workspace, "--regime", "recon") == EXIT_OK
    assert (workspace / "recon" / "checkpoint.hnf").exists()


def test_eval_t_list_zero_matches_theta0(workspace):
    assert gen(workspace) == EXIT_OK
    assert train(workspace) == EXIT_OK
    ckpt = workspace / "out" / "checkpoint.hnf"
    assert main(["eval", "--checkpoint", str(ckpt), "--t-list", "0",
                 "--fft", "0"]) == EXIT_OK
    field, _, cfg = load_checkpoint(ckpt)
    _, samples = read_dataset(workspace / "d.hnfd")
    for s in samples:
        rows = (workspace / "out" / "eval" /
                f"trajectory_{s.shape_id:03d}.csv").read_text().splitlines()
        t0_iou = float(rows[1].split(",")[1])
        expected = iou(rasterize(field.theta0, cfg.eval_resolution),
                       analytic_grid(s, cfg.eval_resolution))
        assert t0_iou == expected


def test_missing_dataset_is_io_error(workspace, capsys):
    assert train(workspace) == EXIT_IO
    assert "error" in capsys.readouterr().err


def test_corrupt_checkpoint_is_io_error(workspace):
    assert gen(workspace) == EXIT_OK
    assert train(workspace) == EXIT_OK
    ckpt = workspace / "out" / "checkpoint.hnf"
    raw = bytearray(ckpt.read_bytes())
    raw[30] ^= 0xFF
    ckpt.write_bytes(bytes(raw))
    assert main(["eval", "--checkpoint", str(ckpt)]) == EXIT_IO


def test_unknown_config_key_is_validation_error(workspace):
    bad = workspace / "bad.cfg"
    bad.write_text("bogus_key = 1\n")
    assert main(["train", "--config", str(bad)]) == EXIT_VALIDATION


def test_bad_set_override_is_validation_error(workspace):
    assert gen(workspace) == EXIT_OK
    assert train(workspace, "--set", "nonsense=1") == EXIT_VALIDATION
    assert train(workspace, "--set", "justoneword") == EXIT_VALIDATION


@pytest.mark.slow
def test_gradcheck_command_passes_and_detects_faults(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "occupancy-loss" in out and "FAIL" not in out
    assert main(["gradcheck", "--inject-fault", "sigmoid"]) == EXIT_NUMERICAL
    assert "sigmoid" in capsys.readouterr().err
