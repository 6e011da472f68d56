import pytest

from audio_inceptionnext.config import RunConfig, build_run_config, parse_lines, read_config_file


def test_three_layer_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# layered settings\n"
        "model.stage_channels=16,32,64,128\n"
        "schedule.epochs=12\n"
        "spectrogram.hop_ms=10\n"
        "seed=4\n"
    )
    cfg = build_run_config(read_config_file(path), {"schedule.epochs": "7", "seed": "9"})
    defaults = RunConfig()
    assert cfg.model.stage_channels == (16, 32, 64, 128)  # file beats default
    assert cfg.schedule.epochs == 7 and cfg.seed == 9  # flag beats file
    assert cfg.model.stage_depths == defaults.model.stage_depths  # default survives
    assert cfg.spectrogram.hop_ms == 10.0


def test_round_trip_through_lines():
    cfg = build_run_config({"augment.freq_masks": "2", "augment.mask_value": "none", "paths.out": "run"})
    again = build_run_config(parse_lines(cfg.to_lines()))
    assert again == cfg
    assert cfg.augment.mask_value is None and cfg.paths == {"out": "run"}


def test_bad_keys_and_values():
    with pytest.raises(ValueError, match="unknown config key"):
        build_run_config({"bogus": "1"})
    with pytest.raises(ValueError, match="unknown key ModelConfig.width"):
        build_run_config({"model.width": "3"})
    with pytest.raises(ValueError, match="expected an integer"):
        build_run_config({"schedule.epochs": "many"})
    with pytest.raises(ValueError, match=":2: expected key=value"):
        parse_lines(["a=1", "oops"], "f.cfg")


def test_validate_checks_consistency():
    build_run_config().validate()
    with pytest.raises(ValueError, match="whole number"):
        build_run_config({"spectrogram.clip_seconds": "2.083"}).validate()
