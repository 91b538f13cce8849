"""End-to-end command-line behaviour."""

import json

import pytest

from fgat.cli import main
from fgat.featio import read_fmap


def gen_args(out, seed=0, classes=4, tasks=2):
    return [
        "gen-synth",
        "--classes", str(classes),
        "--tasks", str(tasks),
        "--per-class", "6",
        "--test-per-class", "3",
        "--scales", "2,4,4;3,2,2",
        "--sep", "4.0",
        "--seed", str(seed),
        "--out", str(out),
    ]


def write_config(path, data_dir, out_dir, **overrides):
    config = {
        "manifest": str(data_dir / "manifest.json"),
        "heads": 2,
        "channels": 4,
        "k": 3,
        "duplication": 2,
        "rehearsal_per_class": 2,
        "batch_size": 8,
        "epochs_per_task": 2,
        "seeds": [0, 1],
        "out": str(out_dir),
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return config


@pytest.fixture
def synth_data(tmp_path):
    data_dir = tmp_path / "data"
    assert main(gen_args(data_dir)) == 0
    return data_dir


def test_gen_synth_writes_dataset(synth_data):
    train = read_fmap(synth_data / "train.fmap")
    test = read_fmap(synth_data / "test.fmap")
    assert len(train) == 24
    assert len(test) == 12
    manifest = json.loads((synth_data / "manifest.json").read_text())
    assert manifest["tasks"] == [[0, 1], [2, 3]]


def test_gen_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(gen_args(a)) == 0
    assert main(gen_args(b)) == 0
    for name in ("train.fmap", "test.fmap", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gen_synth_rejects_uneven_split(tmp_path, capsys):
    args = gen_args(tmp_path, classes=10, tasks=3)
    assert main(args) == 2
    assert "10 classes" in capsys.readouterr().err


def test_run_writes_expected_layout(synth_data, tmp_path):
    config_path = tmp_path / "config.json"
    out_dir = tmp_path / "results"
    write_config(config_path, synth_data, out_dir)
    assert main(["run", "--config", str(config_path)]) == 0

    for seed in (0, 1):
        payload = json.loads((out_dir / str(seed) / "matrix.json").read_text())
        assert len(payload["matrix"]) == 2
        assert 0.0 <= payload["average_accuracy"] <= 1.0
        events = (out_dir / str(seed) / "events.jsonl").read_text().strip().splitlines()
        assert all(set(json.loads(line)) == {"task", "batch", "l_ce", "l_dl", "loss"} for line in events)
        assert (out_dir / str(seed) / "model.ckpt").exists()

    results = json.loads((out_dir / "results.json").read_text())
    assert len(results["per_seed"]) == 2
    assert "mean" in results["aggregate"]["average_accuracy"]
    summary = (out_dir / "summary.csv").read_text().strip().splitlines()
    assert len(summary) == 1 + 2 + 1  # header, two seeds, aggregate
    assert summary[-1].startswith("aggregate")
    assert json.loads((out_dir / "config.echo.json").read_text())["seeds"] == [0, 1]


def test_rerun_and_echo_rerun_reproduce_results(synth_data, tmp_path):
    config_path = tmp_path / "config.json"
    write_config(config_path, synth_data, tmp_path / "first", seeds=[0])
    assert main(["run", "--config", str(config_path)]) == 0
    assert main(["run", "--config", str(config_path), "--out", str(tmp_path / "second")]) == 0
    first = (tmp_path / "first" / "0" / "matrix.json").read_bytes()
    second = (tmp_path / "second" / "0" / "matrix.json").read_bytes()
    assert first == second

    # the echoed config is itself a valid config reproducing the same results
    echo = tmp_path / "first" / "config.echo.json"
    assert main(["run", "--config", str(echo), "--out", str(tmp_path / "third")]) == 0
    third = (tmp_path / "third" / "0" / "matrix.json").read_bytes()
    assert first == third


def test_seed_flag_overrides_config(synth_data, tmp_path):
    config_path = tmp_path / "config.json"
    out_dir = tmp_path / "results"
    write_config(config_path, synth_data, out_dir, seeds=[5, 6, 7])
    assert main(["run", "--config", str(config_path), "--seed", "3"]) == 0
    assert (out_dir / "3" / "matrix.json").exists()
    assert not (out_dir / "5").exists()


def test_run_missing_fmap_names_path(synth_data, tmp_path, capsys):
    (synth_data / "train.fmap").unlink()
    config_path = tmp_path / "config.json"
    write_config(config_path, synth_data, tmp_path / "results")
    assert main(["run", "--config", str(config_path)]) == 2
    assert "train.fmap" in capsys.readouterr().err


def test_run_missing_config_exits_two(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    assert "absent.json" in capsys.readouterr().err


def test_run_rejects_unknown_config_keys(synth_data, tmp_path, capsys):
    config_path = tmp_path / "config.json"
    write_config(config_path, synth_data, tmp_path / "results", typo_field=3)
    assert main(["run", "--config", str(config_path)]) == 2
    assert "typo_field" in capsys.readouterr().err


def test_gradcheck_passes_and_reports_components(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    for component in (
        "gat_attention", "gat_layer", "node_norm", "pool_max", "pool_add",
        "pool_mean", "pool_wmean", "pool_wmean_tessellated", "classifier",
        "ce_loss", "lwf_loss", "full_model",
    ):
        assert component in out


def test_gradcheck_self_test_fault_exits_one(capsys):
    assert main(["gradcheck", "--self-test-fault"]) == 1
    captured = capsys.readouterr()
    assert "selftest_fault" in captured.out
    assert "failed" in captured.err


def test_eval_reports_checkpoint_accuracy(synth_data, tmp_path, capsys):
    config_path = tmp_path / "config.json"
    out_dir = tmp_path / "results"
    write_config(config_path, synth_data, out_dir, seeds=[0])
    assert main(["run", "--config", str(config_path)]) == 0
    capsys.readouterr()
    code = main(
        [
            "eval",
            "--checkpoint", str(out_dir / "0" / "model.ckpt"),
            "--fmap", str(synth_data / "test.fmap"),
        ]
    )
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["num_samples"] == 12
    assert 0.0 <= report["accuracy"] <= 1.0


def test_eval_missing_checkpoint_exits_two(tmp_path, capsys):
    code = main(["eval", "--checkpoint", str(tmp_path / "no.ckpt"), "--fmap", str(tmp_path / "no.fmap")])
    assert code == 2
    assert "no.ckpt" in capsys.readouterr().err
