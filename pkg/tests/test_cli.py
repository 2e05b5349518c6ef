import numpy as np
import pytest

from adada import cli, datasets
from adada.cli import main
from adada.errors import ConfigError


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["gen", "--preset", "two-moons-rot30", "--seed", "0",
                 "--n", "80", "--out", str(out)]) == 0
    return out


def train_args(data_dir, out, extra=()):
    return ["train", "--preset", "source-only",
            "--source", str(data_dir / "source.csv"),
            "--target", str(data_dir / "target.csv"),
            "--out", str(out), "--epochs", "2"] + list(extra)


class TestGen:
    def test_writes_both_csvs(self, data_dir):
        src = datasets.load_csv(data_dir / "source.csv")
        tgt = datasets.load_csv(data_dir / "target.csv")
        assert len(src) == 80 and src.domain == "source"
        assert len(tgt) == 80 and tgt.domain == "target"
        assert tgt.labels is not None  # kept for evaluation only

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen", "--preset", "blobs-shift", "--seed", "3",
                         "--n", "40", "--out", str(out)]) == 0
        assert (a / "source.csv").read_bytes() == (b / "source.csv").read_bytes()
        assert (a / "target.csv").read_bytes() == (b / "target.csv").read_bytes()

    def test_unknown_preset_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--preset", "nope", "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestTrain:
    def test_writes_artifacts(self, data_dir, tmp_path):
        out = tmp_path / "run"
        assert main(train_args(data_dir, out)) == 0
        assert (out / "metrics.csv").exists()
        assert (out / "model.ckpt").exists()
        assert (out / "config.toml").exists()
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("epoch,src_cls,adv_dom,cons,total")
        assert len(lines) == 3  # header + 2 epochs

    def test_rerun_byte_identical(self, data_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(train_args(data_dir, a)) == 0
        assert main(train_args(data_dir, b)) == 0
        for name in ("metrics.csv", "model.ckpt", "config.toml"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_override_changes_outputs(self, data_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(train_args(data_dir, a, ["--seed", "1"])) == 0
        assert main(train_args(data_dir, b, ["--seed", "2"])) == 0
        assert (a / "model.ckpt").read_bytes() != (b / "model.ckpt").read_bytes()

    def test_config_snapshot_reproduces_run(self, data_dir, tmp_path):
        # training again from the emitted config.toml gives identical bytes
        a = tmp_path / "a"
        assert main(train_args(data_dir, a)) == 0
        b = tmp_path / "b"
        assert main(["train", "--config", str(a / "config.toml"),
                     "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(b)]) == 0
        assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_missing_input_exit_2(self, data_dir, tmp_path):
        code = main(["train", "--preset", "source-only",
                     "--source", str(data_dir / "missing.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_bad_config_exit_2(self, data_dir, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("epochs = 2\nbogus_key = 1\n")
        code = main(["train", "--config", str(cfg),
                     "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_malformed_csv_exit_2(self, data_dir, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("f0,f1,label,domain\n1.0,oops,0,source\n")
        code = main(["train", "--preset", "source-only",
                     "--source", str(bad),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_unlabeled_source_exit_4(self, data_dir, tmp_path):
        src = datasets.strip_labels(datasets.load_csv(data_dir / "source.csv"))
        path = tmp_path / "unlabeled.csv"
        datasets.save_csv(src, path)
        code = main(["train", "--preset", "source-only",
                     "--source", str(path),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 4

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
    def test_divergent_run_exit_3(self, data_dir, tmp_path):
        cfg = tmp_path / "diverge.toml"
        cfg.write_text('epochs = 3\nlearning_rate = 1e200\noptimizer = "sgd"\n')
        code = main(["train", "--config", str(cfg),
                     "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(tmp_path / "x")])
        assert code == 3


class TestDiagnose:
    def test_report_written(self, data_dir, tmp_path, capsys):
        run = tmp_path / "run"
        assert main(train_args(data_dir, run)) == 0
        report = tmp_path / "report.txt"
        code = main(["diagnose", "--checkpoint", str(run / "model.ckpt"),
                     "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--out", str(report)])
        assert code == 0
        text = report.read_text()
        assert "mi_z_d = " in text
        assert "ada_ib_score = " in text
        assert text in capsys.readouterr().out

    def test_missing_checkpoint_exit_2(self, data_dir, tmp_path):
        code = main(["diagnose", "--checkpoint", str(tmp_path / "none.ckpt"),
                     "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv")])
        assert code == 2


class TestSweep:
    def test_parse_seeds(self):
        assert cli._parse_seeds("0..3") == [0, 1, 2, 3]
        assert cli._parse_seeds("5,2,9") == [5, 2, 9]
        with pytest.raises(ConfigError):
            cli._parse_seeds("1,1")
        with pytest.raises(ConfigError):
            cli._parse_seeds("")

    def test_sweep_csv_with_summary(self, tmp_path):
        data = tmp_path / "data"
        assert main(["gen", "--preset", "two-moons-rot30", "--seed", "0",
                     "--n", "40", "--out", str(data)]) == 0
        out = tmp_path / "sweep"
        code = main(["sweep", "--preset", "source-only", "--seeds", "0,1",
                     "--source", str(data / "source.csv"),
                     "--target", str(data / "target.csv"),
                     "--out", str(out), "--diagnose"])
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == ",".join(cli.SWEEP_COLUMNS)
        rows = [ln.split(",") for ln in lines[1:]]
        seeds = [r for r in rows if r[1] in ("0", "1")]
        stats = {r[1]: r for r in rows if r[-1] == "summary"}
        assert len(seeds) == 2 and all(r[-1] == "ok" for r in seeds)
        # the mean summary row really is the mean of the per-seed rows
        col = cli.SWEEP_COLUMNS.index("target_accuracy")
        expect = np.mean([float(r[col]) for r in seeds])
        assert float(stats["mean"][col]) == pytest.approx(expect, rel=1e-6)
        # per-seed run directories with artifacts
        assert (out / "source-only-seed0" / "model.ckpt").exists()
