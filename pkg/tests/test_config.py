import pytest

from hatemtl.config import ConfigError, load_run_config


def test_defaults_without_file_need_only_peak_lr():
    cfg = load_run_config(None, {"train.peak_lr": "0.01"})
    assert cfg.train.peak_lr == 0.01
    assert cfg.train.epochs == 10 and cfg.train.warmup_steps == 500
    assert cfg.model.encoder.hash_buckets == 2**18
    assert len(cfg.grid.cells()) == 12


def test_inline_comments_stripped(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[train]\npeak_lr = 0.05  ; the initial learning rate\n")
    assert load_run_config(path).train.peak_lr == 0.05


def test_seed_feeds_encoder_and_train(tmp_path):
    cfg = load_run_config(None, {"train.peak_lr": "0.01", "run.seed": "9"})
    assert cfg.seed == 9
    assert cfg.model.encoder.seed == 9
    assert cfg.train.seed == 9


def test_unknown_override_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        load_run_config(None, {"train.momentum": "0.9"})


def test_problems_reported_together(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[train]\npeak_lr = fast\nepochs = many\n[encoder]\ndim = wide\n")
    with pytest.raises(ConfigError) as err:
        load_run_config(path)
    message = str(err.value)
    assert "peak_lr" in message and "epochs" in message and "dim" in message


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_run_config("/nonexistent/run.cfg")


def test_semantic_validation_surfaces(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[train]\npeak_lr = 0.05\nbatch_size = 0\n")
    with pytest.raises(ConfigError, match="batch_size"):
        load_run_config(path)
