import json
import subprocess
import sys

import pytest
import yaml

from semalign.cli import main


@pytest.fixture(scope="module")
def prepared_cli(archive_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-data")
    rc = main(
        [
            "prepare-data",
            "--source",
            str(archive_dir),
            "--out",
            str(out),
            "--limit-train",
            "2",
            "--limit-test",
            "1",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def catalog_cli(prepared_cli, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-catalog")
    rc = main(
        [
            "generate-hybrids",
            "--data",
            str(prepared_cli),
            "--mix-factor",
            "0.75",
            "--out",
            str(out),
            "--seed",
            "3",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained_cli(prepared_cli, tmp_path_factory):
    config_dir = tmp_path_factory.mktemp("cli-train-config")
    out = tmp_path_factory.mktemp("cli-train")
    config = {
        "data": str(prepared_cli),
        "epochs": 1,
        "batch_size": 50,
        "learning_rate": 0.05,
        "seed": 0,
    }
    path = config_dir / "train.yaml"
    path.write_text(yaml.safe_dump(config))
    rc = main(["train", "--config", str(path), "--out", str(out)])
    assert rc == 0
    return out


class TestPrepareData:
    def test_output_and_message(self, archive_dir, tmp_path, capsys):
        out = tmp_path / "data"
        rc = main(
            [
                "prepare-data",
                "--source",
                str(archive_dir),
                "--out",
                str(out),
                "--limit-train",
                "2",
                "--limit-test",
                "1",
            ]
        )
        assert rc == 0
        assert (out / "manifest.json").exists()
        captured = capsys.readouterr()
        assert "prepared 75 images" in captured.out
        assert "train=50" in captured.out and "test=25" in captured.out

    def test_missing_source_fails_cleanly(self, tmp_path, capsys):
        rc = main(
            [
                "prepare-data",
                "--source",
                str(tmp_path / "nope"),
                "--out",
                str(tmp_path / "data"),
            ]
        )
        assert rc == 3
        assert "error" in capsys.readouterr().err


class TestGenerateHybrids:
    def test_catalog_message(self, catalog_cli):
        assert (catalog_cli / "catalog.manifest").exists()
        manifest = json.loads((catalog_cli / "catalog.manifest").read_text())
        assert len(manifest["records"]) == 200

    def test_rerun_without_resume_fails(self, prepared_cli, catalog_cli, capsys):
        rc = main(
            [
                "generate-hybrids",
                "--data",
                str(prepared_cli),
                "--mix-factor",
                "0.75",
                "--out",
                str(catalog_cli),
            ]
        )
        assert rc == 3
        assert "error" in capsys.readouterr().err

    def test_rerun_with_resume_skips_everything(
        self, prepared_cli, catalog_cli, capsys
    ):
        rc = main(
            [
                "generate-hybrids",
                "--data",
                str(prepared_cli),
                "--mix-factor",
                "0.75",
                "--out",
                str(catalog_cli),
                "--seed",
                "3",
                "--resume",
            ]
        )
        assert rc == 0
        captured = capsys.readouterr()
        assert "generated 0" in captured.out
        assert "skipped 200" in captured.out

    def test_adapter_needs_backend_url(self, prepared_cli, tmp_path, capsys):
        rc = main(
            [
                "generate-hybrids",
                "--data",
                str(prepared_cli),
                "--mixer",
                "diffusion-adapter",
                "--mix-factor",
                "0.75",
                "--out",
                str(tmp_path / "cat"),
            ]
        )
        assert rc == 2
        assert "backend-url" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_written(self, trained_cli):
        assert (trained_cli / "checkpoints" / "final.pt").exists()
        assert (trained_cli / "scalars.jsonl").exists()

    def test_with_catalog(self, prepared_cli, catalog_cli, tmp_path, capsys):
        config = {
            "data": str(prepared_cli),
            "catalog": str(catalog_cli),
            "augment_probability": 0.5,
            "epochs": 1,
            "batch_size": 50,
            "learning_rate": 0.05,
            "seed": 1,
        }
        path = tmp_path / "train.yaml"
        path.write_text(yaml.safe_dump(config))
        rc = main(["train", "--config", str(path), "--out", str(tmp_path / "run")])
        assert rc == 0
        assert "final train loss" in capsys.readouterr().out

    def test_missing_data_key(self, tmp_path, capsys):
        path = tmp_path / "train.yaml"
        path.write_text(yaml.safe_dump({"epochs": 1}))
        rc = main(["train", "--config", str(path), "--out", str(tmp_path / "run")])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_field_value(self, prepared_cli, tmp_path, capsys):
        path = tmp_path / "train.yaml"
        path.write_text(yaml.safe_dump({"data": str(prepared_cli), "epochs": 0}))
        rc = main(["train", "--config", str(path), "--out", str(tmp_path / "run")])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_unknown_field(self, prepared_cli, tmp_path, capsys):
        path = tmp_path / "train.yaml"
        path.write_text(
            yaml.safe_dump({"data": str(prepared_cli), "optimizer": "adam"})
        )
        rc = main(["train", "--config", str(path), "--out", str(tmp_path / "run")])
        assert rc == 2


class TestAttackEval:
    def test_sweep_outputs(self, trained_cli, prepared_cli, tmp_path, capsys):
        out = tmp_path / "attack"
        rc = main(
            [
                "attack-eval",
                "--checkpoint",
                str(trained_cli / "checkpoints" / "final.pt"),
                "--data",
                str(prepared_cli),
                "--epsilons",
                "0,0.25",
                "--steps",
                "2",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        manifest = json.loads((out / "attacks.json").read_text())
        assert manifest["epsilons"] == [0.0, 0.25]
        assert manifest["n_images"] == 25
        assert "attacked 25 test images" in capsys.readouterr().out

    def test_bad_epsilon_text(self, trained_cli, prepared_cli, tmp_path, capsys):
        rc = main(
            [
                "attack-eval",
                "--checkpoint",
                str(trained_cli / "checkpoints" / "final.pt"),
                "--data",
                str(prepared_cli),
                "--epsilons",
                "0,abc",
                "--out",
                str(tmp_path / "attack"),
            ]
        )
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_epsilons_must_start_at_zero(
        self, trained_cli, prepared_cli, tmp_path, capsys
    ):
        rc = main(
            [
                "attack-eval",
                "--checkpoint",
                str(trained_cli / "checkpoints" / "final.pt"),
                "--data",
                str(prepared_cli),
                "--epsilons",
                "0.5,1.0",
                "--out",
                str(tmp_path / "attack"),
            ]
        )
        assert rc == 2
        assert "ascending" in capsys.readouterr().err


@pytest.fixture(scope="module")
def run_dir(archive_dir, tmp_path_factory):
    config_dir = tmp_path_factory.mktemp("cli-run-config")
    out = tmp_path_factory.mktemp("cli-run")
    payload = {
        "variant": "standard",
        "seeds": [0],
        "out": str(out),
        "data": {
            "source": str(archive_dir),
            "limit_train_per_class": 2,
            "limit_test_per_class": 1,
        },
        "train": {"epochs": 1, "batch_size": 50, "learning_rate": 0.05},
        "attack": {"epsilons": [0.0, 0.25], "steps": 2},
    }
    path = config_dir / "exp.yaml"
    path.write_text(yaml.safe_dump(payload))
    rc = main(["run", "--config", str(path)])
    assert rc == 0
    return out


class TestRunAndCompare:
    def test_run_artifacts(self, run_dir):
        assert (run_dir / "summary.json").exists()
        assert (run_dir / "seed0" / "report.json").exists()

    def test_compare(self, run_dir, tmp_path, capsys):
        out = tmp_path / "cmp"
        rc = main(["compare", "--runs", str(run_dir), "--out", str(out)])
        assert rc == 0
        assert (out / "comparison.json").exists()
        assert (out / "table.csv").exists()
        assert "compared 1 runs" in capsys.readouterr().out

    def test_unknown_variant(self, archive_dir, tmp_path, capsys):
        payload = {
            "variant": "mega-aug",
            "out": str(tmp_path / "run"),
            "data": {"source": str(archive_dir)},
        }
        path = tmp_path / "exp.yaml"
        path.write_text(yaml.safe_dump(payload))
        rc = main(["run", "--config", str(path)])
        assert rc == 2
        assert "unknown variant" in capsys.readouterr().err

    def test_missing_catalog_is_stage_failure(self, archive_dir, tmp_path, capsys):
        payload = {
            "variant": "low-aug/low-mix",
            "out": str(tmp_path / "run"),
            "data": {
                "source": str(archive_dir),
                "limit_train_per_class": 2,
                "limit_test_per_class": 1,
            },
            "hybrid": {"catalog": str(tmp_path / "missing-catalog")},
            "train": {"epochs": 1, "batch_size": 50},
            "attack": {"epsilons": [0.0, 0.25], "steps": 2},
        }
        path = tmp_path / "exp.yaml"
        path.write_text(yaml.safe_dump(payload))
        rc = main(["run", "--config", str(path)])
        assert rc == 3
        assert "hybrids" in capsys.readouterr().err

    def test_compare_missing_summary(self, tmp_path, capsys):
        rc = main(
            ["compare", "--runs", str(tmp_path / "ghost"), "--out", str(tmp_path / "c")]
        )
        assert rc == 3


def test_console_help_smoke():
    proc = subprocess.run(
        [sys.executable, "-c", "from semalign.cli import main; main(['--help'])"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "prepare-data" in proc.stdout
    assert "attack-eval" in proc.stdout
