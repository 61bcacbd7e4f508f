import shutil
import subprocess
import sys

import numpy as np
import pytest

from wsnet.cli import main
from wsnet.config import LayerDef, NetworkSpec, format_config
from wsnet.data import Dataset, load_dataset, save_dataset, synth_dataset
from wsnet.optim import TrainHyper
from wsnet.serialize import load_model
from wsnet.network import predict

TINY = format_config(
    NetworkSpec(256, 1, 2, (LayerDef("c1", "conv", N=4, L=8, S=4, stride=2, bn=True, pool="max"),
                            LayerDef("f1", "fc", N=2, S=16))),
    TrainHyper(batch=8, iters=20, eval_every=10, init_std=0.1, lr=1e-2, holdout=0.25))


@pytest.fixture
def work(tmp_path):
    (tmp_path / "tiny.cfg").write_text(TINY)
    save_dataset(synth_dataset(2, 12, 256, seed=0), tmp_path / "d.wsds")
    return tmp_path


def test_cost_table(capsys):
    assert main(["cost", "baseline2", "--input-len", "441000"]) == 0
    out = capsys.readouterr().out
    row = next(l for l in out.splitlines() if l.startswith("conv2"))
    assert "9.0e+08" in row
    assert "conv8" in out and "do not match" in out


def test_cost_csv(capsys):
    assert main(["cost", "baseline2", "--input-len", "441000", "--csv"]) == 0
    captured = capsys.readouterr()
    assert len(captured.out.strip().splitlines()) == 10
    assert "conv8" in captured.err


def test_cost_setting(capsys):
    assert main(["cost", "baseline2", "--input-len", "441000", "--setting", "S8C8"]) == 0
    out = capsys.readouterr().out
    assert "size ratio" in out and "clamped" in out
    assert main(["cost", "baseline2", "--setting", "nope"]) == 1


def test_usage_errors(work):
    assert main([]) == 1
    assert main(["cost", str(work / "missing.cfg")]) == 1
    assert main(["verify", "--trials", "0"]) == 1
    assert main(["eval", str(work / "missing.wsn"), str(work / "d.wsds")]) == 1


def test_invalid_config(work, capsys):
    (work / "bad.cfg").write_text(TINY.replace("S = 4", "S = 0"))
    assert main(["cost", str(work / "bad.cfg")]) == 2
    assert "c1" in capsys.readouterr().err


def test_train_eval_deterministic(work, capsys):
    for name in ("a", "b"):
        assert main(["train", str(work / "tiny.cfg"), str(work / "d.wsds"),
                     "--out", str(work / f"{name}.wsn")]) == 0
    assert (work / "a.wsn").read_bytes() == (work / "b.wsn").read_bytes()
    log = (work / "a.wsn.log").read_text().splitlines()
    assert [l.split()[0] for l in log] == ["iter=10", "iter=20"]
    capsys.readouterr()
    assert main(["eval", str(work / "a.wsn"), str(work / "d.wsds")]) == 0
    out = capsys.readouterr().out
    acc = float(out.split()[0].split("=")[1])
    # recount from predictions
    net = load_model(work / "a.wsn")
    ds = load_dataset(work / "d.wsds")
    conf = np.zeros((2, 2), int)
    np.add.at(conf, (ds.labels, predict(net, ds.clips)), 1)
    assert acc == pytest.approx(np.trace(conf) / conf.sum(), abs=1e-6)
    # a model scores 1.0 against its own predictions
    save_dataset(Dataset(ds.clips, predict(net, ds.clips), 2), work / "own.wsds")
    capsys.readouterr()
    assert main(["eval", str(work / "a.wsn"), str(work / "own.wsds")]) == 0
    assert capsys.readouterr().out.startswith("acc=1.000000")


def test_bad_model_and_empty_dataset(work):
    (work / "junk.wsn").write_bytes(b"NOTAMODEL" * 4)
    assert main(["eval", str(work / "junk.wsn"), str(work / "d.wsds")]) == 2
    assert main(["train", str(work / "tiny.cfg"), str(work / "d.wsds"), "--out", str(work / "m.wsn"),
                 "--iters", "1"]) == 0
    save_dataset(Dataset(np.zeros((0, 256)), np.zeros(0), 2), work / "empty.wsds")
    assert main(["eval", str(work / "m.wsn"), str(work / "empty.wsds")]) == 2


def test_quantize(work, capsys):
    main(["train", str(work / "tiny.cfg"), str(work / "d.wsds"), "--out", str(work / "m.wsn"),
          "--iters", "1"])
    capsys.readouterr()
    assert main(["quantize", str(work / "m.wsn"), "--out", str(work / "q.wsn")]) == 0
    assert capsys.readouterr().out.startswith("size ratio")
    assert main(["quantize", str(work / "q.wsn"), "--out", str(work / "qq.wsn")]) == 2
    assert main(["eval", str(work / "q.wsn"), str(work / "d.wsds")]) == 0


def test_verify_small(capsys):
    assert main(["verify", "--trials", "3", "--grad-trials", "1"]) == 0
    out = capsys.readouterr().out
    assert out.count("fast/naive trial") == 3
    assert "gradients: 1 trials" in out


def test_bench(work, capsys):
    assert main(["bench", str(work / "tiny.cfg"), "--repeat", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[-1] == "theoretical" and lines[1].startswith("c1")
    assert main(["bench", str(work / "tiny.cfg"), "--repeat", "0"]) == 1


def test_synth_deterministic(work):
    for name in ("x", "y"):
        assert main(["synth", "--classes", "3", "--per-class", "4", "--len", "128",
                     "--out", str(work / name)]) == 0
    assert (work / "x").read_bytes() == (work / "y").read_bytes()


def test_entry_point(tmp_path):
    exe = shutil.which("wsnet")
    cmd = [exe] if exe else [sys.executable, "-m", "wsnet.cli"]
    proc = subprocess.run(cmd + ["cost", "baseline1"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fc1" in proc.stdout
    proc = subprocess.run(cmd + ["cost"], capture_output=True, text=True)
    assert proc.returncode == 1
