import pytest

from gazectx.config import ExperimentConfig, RunConfig, dump_config, load_run_config, parse_k_values, read_config_file
from gazectx.errors import ConfigError


def write(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_run_config()
    assert cfg == RunConfig()
    assert cfg.experiment.tolerance_deg == 1.5
    assert cfg.detector.velocity_threshold_deg_s == 100.0


def test_file_values_and_flag_overrides(tmp_path):
    p = write(
        tmp_path,
        "[synth]\nseed = 4\nn_fixations = 12\nobject_size_range = 0.05, 0.2\nshape_kinds = sphere\n"
        "[camera]\nmax_fov_deg = 45\n"
        "[spaces]\nper_frame_fixated = yes\n"
        "[experiment]\nk_values = 0,3\ntolerance_deg = 2.0\n",
    )
    cfg = load_run_config(p, {"synth": {"seed": 9, "n_objects": None}, "experiment": {"tolerance_deg": 0.5}})
    assert cfg.synth.seed == 9  # flag beats file
    assert cfg.synth.n_fixations == 12
    assert cfg.synth.n_objects == 5  # None override ignored
    assert cfg.synth.object_size_range == (0.05, 0.2)
    assert cfg.synth.shape_kinds == ("sphere",)
    assert cfg.synth.camera.max_fov_deg == 45.0
    assert cfg.spaces.per_frame_fixated is True
    assert cfg.experiment.tolerance_deg == 0.5
    assert parse_k_values(cfg.experiment.k_values) == [0, 3]


def test_dump_round_trips(tmp_path):
    cfg = load_run_config(None, {"synth": {"seed": 3, "object_size_range": (0.02, 0.3)}, "experiment": {"k_values": "1..4"}})
    p = write(tmp_path, dump_config(cfg))
    assert load_run_config(p) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "[synth]\nbogus = 1\n",
        "[nowhere]\nx = 1\n",
        "[synth]\nn_objects = many\n",
        "[synth]\nn_objects = 0\n",
        "[detector]\nvelocity_threshold_deg_s = -5\n",
        "[experiment]\nk_values = 0..12\n",
        "[spaces]\nper_frame_fixated = maybe\n",
        "not an ini file",
    ],
)
def test_bad_files(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, text))


def test_unknown_override_section():
    with pytest.raises(ConfigError):
        load_run_config(None, {"gpu": {"x": 1}})


@pytest.mark.parametrize("text, ks", [("0..10", list(range(11))), ("6", [6]), ("5,1,1", [1, 5]), (" 2 .. 4 ", [2, 3, 4])])
def test_k_values(text, ks):
    assert parse_k_values(text) == ks


@pytest.mark.parametrize("text", ["", "a..b", "3..1", "-1,2", "11"])
def test_bad_k_values(text):
    with pytest.raises(ConfigError):
        parse_k_values(text)


@pytest.mark.parametrize("kw", [dict(n_trials=0), dict(level=1.0), dict(tolerance_deg=-1), dict(mock_failure_rate=2), dict(resamples=0)])
def test_experiment_config_invariants(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_keys_are_case_sensitive(tmp_path):
    assert read_config_file(write(tmp_path, "[synth]\nSeed = 1\n")) == {"synth": {"Seed": "1"}}
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "[synth]\nSeed = 1\n"))
