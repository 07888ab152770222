import pytest

from airsig.config import build_config, load_config, parse_config_text
from airsig.errors import ConfigError


def test_defaults():
    cfg = build_config({})
    assert cfg.rig.focal_length == 350 and cfg.train.learning_rate == 1e-5
    assert len(cfg.grid) == 30 and cfg.length == 512


def test_parse_comments_and_blank_lines():
    values = parse_config_text("# rig\nrig.baseline = 0.2  # metres\n\nseed=4\n")
    assert values == {"rig.baseline": "0.2", "seed": "4"}


def test_values_are_typed(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("rig.focal_length = 500\ntrain.patience = 3\naugment.angles = -5, 0, 5\n"
                    "augment.scales = 1\nband.orange.low = 200, 50, 0\nsigners = 4\n")
    cfg = load_config(path)
    assert cfg.rig.focal_length == 500.0 and cfg.train.patience == 3
    assert cfg.grid.angles_deg == (-5.0, 0.0, 5.0) and len(cfg.grid) == 3 * 1 * 2
    assert cfg.orange_band.low == (200, 50, 0) and cfg.signers == 4


def test_overrides_win(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("seed = 1\n")
    assert load_config(path, {"seed": 9}).seed == 9


@pytest.mark.parametrize("text", ["nonsense\n", "rig.colour = 3\n", "rig.focal_length = -1\n",
                                  "train.batch_size = many\n", "band.green.high = 1,2\n"])
def test_bad_config(tmp_path, text):
    path = tmp_path / "c.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/airsig.cfg")
