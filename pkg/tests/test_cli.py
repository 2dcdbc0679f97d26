import logging

import numpy as np
import pytest

from vaenmf.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from vaenmf.signal_io import SampleBuffer, read_wav, write_wav
from vaenmf.vae import MAGIC


@pytest.fixture
def workspace(tmp_path, tiny_config):
    """Synthesised corpora plus a trained tiny model."""
    assert main(["synth", "--config", str(tiny_config), "--out", str(tmp_path / "data")]) == EXIT_OK
    model = tmp_path / "model.bin"
    assert main(["train", "--corpus", str(tmp_path / "data" / "train"), "--config", str(tiny_config),
                 "--out", str(model)]) == EXIT_OK
    return tmp_path, model


class TestParser:
    def test_seed_before_or_after_subcommand(self):
        parser = build_parser()
        a = parser.parse_args(["--seed", "5", "synth", "--out", "x"])
        b = parser.parse_args(["synth", "--out", "x", "--seed", "5"])
        assert a.seed == b.seed == 5

    def test_seed_range(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--seed", "-1", "synth", "--out", "x"])
        assert exc.value.code == EXIT_USAGE

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE


class TestSubcommands:
    def test_synth_layout(self, tmp_path, tiny_config):
        assert main(["synth", "--config", str(tiny_config), "--out", str(tmp_path)]) == EXIT_OK
        manifest = (tmp_path / "train" / "manifest.txt").read_text().split()
        assert manifest == [f"speech_{i:04d}.wav" for i in range(6)]
        assert (tmp_path / "eval" / "utt001_clean.wav").is_file()
        noisy = read_wav(tmp_path / "eval" / "utt001_low-rank-stationary_noisy.wav")
        assert noisy.sample_rate == 16000 and len(noisy) == 8000

    def test_train_writes_model(self, workspace):
        _, model = workspace
        assert model.read_bytes()[:8] == MAGIC

    def test_enhance(self, workspace, tiny_config):
        tmp, model = workspace
        src = tmp / "data" / "eval" / "utt000_low-rank-stationary_noisy.wav"
        rc = main(["enhance", "--model", str(model), "--in", str(src), "--out", str(tmp / "out.wav"),
                   "--diag", str(tmp / "diag.csv"), "--config", str(tiny_config)])
        assert rc == EXIT_OK
        assert len(read_wav(tmp / "out.wav")) == len(read_wav(src))
        assert (tmp / "diag.csv").read_text().startswith("iteration,log_likelihood,acceptance_rate")

    def test_eval(self, workspace, tiny_config):
        tmp, model = workspace
        rc = main(["eval", "--model", str(model), "--config", str(tiny_config), "--report", str(tmp / "r.csv")])
        assert rc == EXIT_OK
        lines = (tmp / "r.csv").read_text().splitlines()
        assert lines[0].startswith("utterance_id,noise_type")
        assert len(lines) == 1 + 2 + 1


class TestErrors:
    def test_empty_corpus(self, tmp_path, tiny_config, capsys):
        (tmp_path / "empty").mkdir()
        rc = main(["train", "--corpus", str(tmp_path / "empty"), "--config", str(tiny_config),
                   "--out", str(tmp_path / "m.bin")])
        assert rc == EXIT_USAGE
        assert "empty corpus" in capsys.readouterr().err
        assert not (tmp_path / "m.bin").exists()

    def test_bad_json_names_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"mcmc": {"burn_in": 10,}}')
        assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_USAGE
        assert f"{bad}:1:" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"mcmc": {"burn": 10}}')
        assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_missing_model(self, tmp_path, capsys):
        rc = main(["eval", "--model", str(tmp_path / "nope.bin"), "--report", str(tmp_path / "r.csv")])
        assert rc == EXIT_USAGE
        assert "model file not found" in capsys.readouterr().err

    def test_corrupt_model_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a model at all")
        rc = main(["eval", "--model", str(bad), "--report", str(tmp_path / "r.csv")])
        assert rc == EXIT_DATA

    def test_stereo_input_is_data_error(self, workspace, tiny_config):
        tmp, model = workspace
        from scipy.io import wavfile

        wavfile.write(tmp / "stereo.wav", 16000, np.zeros((800, 2), dtype=np.int16))
        rc = main(["enhance", "--model", str(model), "--in", str(tmp / "stereo.wav"),
                   "--out", str(tmp / "o.wav"), "--config", str(tiny_config)])
        assert rc == EXIT_DATA

    def test_other_rate_warning_is_logged(self, workspace, tiny_config, caplog):
        tmp, model = workspace
        sig = SampleBuffer(0.1 * np.random.default_rng(0).standard_normal(4000), 8000)
        write_wav(tmp / "8k.wav", sig)
        with caplog.at_level(logging.WARNING):
            rc = main(["enhance", "--model", str(model), "--in", str(tmp / "8k.wav"),
                       "--out", str(tmp / "o.wav"), "--config", str(tiny_config)])
        assert rc == EXIT_OK
        assert any("8000 Hz" in r.getMessage() for r in caplog.records)
