"""Tests for scenario files and presets."""
import numpy as np
import pytest
import yaml

from tdfit.errors import ConfigError
from tdfit.scenario import (
    ESTIMATOR_NAMES,
    PRESET_ALIASES,
    draw_gains,
    load_scenario,
    preset_names,
    resolve_config,
    scenario_from_dict,
)

from .conftest import SMALL_SCENARIO


def _write(tmp_path, text, name="bad.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestPresets:
    def test_shipped_presets(self):
        """Test the full-scale and desk-scale presets are shipped."""
        names = preset_names()
        assert "desk_scale" in names
        assert {"paper_fig2a", "paper_fig2b", "paper_fig2c", "paper_fig2d"} <= set(names)

    @pytest.mark.parametrize("name", preset_names())
    def test_every_preset_loads(self, name):
        """Test every shipped preset parses and validates."""
        scn = load_scenario(resolve_config(name))
        assert scn.trials > 0
        assert set(scn.estimators) <= set(ESTIMATOR_NAMES)
        assert len(scn.offsets_db) == scn.plan.n_bands

    def test_measurement_band_preset(self):
        """Test the SNR sweep preset uses the four measurement bands."""
        scn = load_scenario(resolve_config("paper_fig2a.cfg"))
        assert scn.k_paths == 9
        assert scn.plan.band_offsets.tolist() == [0, 384, 736, 1088]
        assert scn.plan.n_subcarriers == 256
        assert scn.snapshots == 10
        assert scn.axis_values == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]

    def test_snapshot_sweep_preset(self):
        """Test the snapshot sweep preset runs 2 to 20 snapshots at 10 dB."""
        scn = load_scenario(resolve_config("paper_fig2b"))
        assert scn.axis == "snapshots"
        assert scn.axis_values == list(range(2, 21, 2))
        assert scn.snapshots_at(3) == 8
        assert scn.snr_at(3) == 10.0

    @pytest.mark.parametrize("alias, target", sorted(PRESET_ALIASES.items()))
    def test_descriptive_aliases(self, alias, target):
        """Test each descriptive alias resolves to its preset file."""
        assert resolve_config(alias) == resolve_config(target)
        assert resolve_config(f"{alias}.cfg").name == f"{target}.cfg"

    def test_resolve_accepts_cfg_suffix(self):
        """Test a preset name may carry the .cfg suffix."""
        assert resolve_config("desk_scale.cfg").name == "desk_scale.cfg"

    def test_resolve_unknown(self):
        """Test an unknown name lists the available presets."""
        with pytest.raises(ConfigError, match="desk_scale"):
            resolve_config("no_such_preset")

    def test_resolve_existing_file(self, scenario_file):
        """Test an existing path is returned unchanged."""
        assert resolve_config(str(scenario_file)) == scenario_file


class TestLoadScenario:
    def test_small_scenario(self, scenario_file):
        """Test the small scenario loads with its values."""
        scn = load_scenario(scenario_file)
        assert scn.name == "small"
        assert scn.k_paths == 2
        np.testing.assert_allclose(scn.delays, [100e-9, 275e-9])
        assert scn.plan.band_offsets.tolist() == [0, 16, 40]
        assert scn.rician_k_db == 5.0
        np.testing.assert_array_equal(scn.offsets_db, 0.0)

    def test_name_defaults_to_file_stem(self, tmp_path):
        """Test the name defaults to the file stem."""
        text = SMALL_SCENARIO.replace("name: small\n", "")
        assert load_scenario(_write(tmp_path, text, "lab.cfg")).name == "lab"

    def test_unknown_key_reports_line(self, tmp_path):
        """Test an unknown key reports its line."""
        path = _write(tmp_path, SMALL_SCENARIO + "snr_step: 5\n")
        with pytest.raises(ConfigError) as info:
            load_scenario(path)
        assert info.value.line == 14
        assert f"{path}:14:" in str(info.value)
        assert "snr_step" in str(info.value)

    def test_missing_key(self, tmp_path):
        """Test a missing required key is reported."""
        text = SMALL_SCENARIO.replace("trials: 3\n", "")
        with pytest.raises(ConfigError, match="missing required key 'trials'"):
            load_scenario(_write(tmp_path, text))

    def test_invalid_yaml_reports_line(self, tmp_path):
        """Test broken YAML reports its line."""
        text = SMALL_SCENARIO.replace("trials: 3", "trials: 3: 4")
        with pytest.raises(ConfigError) as info:
            load_scenario(_write(tmp_path, text))
        assert info.value.line == 11
        assert "invalid YAML" in str(info.value)

    def test_wrong_type(self, tmp_path):
        """Test a value of the wrong type is rejected."""
        text = SMALL_SCENARIO.replace("trials: 3", "trials: three")
        with pytest.raises(ConfigError) as info:
            load_scenario(_write(tmp_path, text))
        assert info.value.line == 11

    def test_wrong_schema(self, tmp_path):
        """Test an unsupported schema version is rejected."""
        text = SMALL_SCENARIO.replace("schema: 1", "schema: 2")
        with pytest.raises(ConfigError, match="unsupported schema"):
            load_scenario(_write(tmp_path, text))

    def test_unknown_estimator(self, tmp_path):
        """Test an unknown estimator is rejected."""
        text = SMALL_SCENARIO.replace("mimusic]", "capon]")
        with pytest.raises(ConfigError, match="unknown estimator 'capon'"):
            load_scenario(_write(tmp_path, text))

    def test_off_grid_delays(self, tmp_path):
        """Test delays need not lie on the sample grid."""
        text = SMALL_SCENARIO + "delay_grid_ps: 500\n"
        text = text.replace("275.0", "275.3")
        with pytest.raises(ConfigError, match="500 ps grid"):
            load_scenario(_write(tmp_path, text))

    def test_delay_beyond_range(self, tmp_path):
        """Test delays beyond the unambiguous range are rejected."""
        text = SMALL_SCENARIO.replace("275.0", "900.0")
        with pytest.raises(ConfigError) as info:
            load_scenario(_write(tmp_path, text))
        assert info.value.line == 3

    def test_unsorted_delays(self, tmp_path):
        """Test unsorted delays are rejected."""
        text = SMALL_SCENARIO.replace("[100.0, 275.0]", "[275.0, 100.0]")
        with pytest.raises(ConfigError, match="strictly increasing"):
            load_scenario(_write(tmp_path, text))

    def test_overlapping_bands(self, tmp_path):
        """Test overlapping bands are rejected."""
        text = SMALL_SCENARIO.replace("[100, 120, 150]", "[100, 110, 150]")
        with pytest.raises(ConfigError, match="invalid band plan"):
            load_scenario(_write(tmp_path, text))

    def test_offsets_length(self, tmp_path):
        """Test per-band offsets must match the band count."""
        text = SMALL_SCENARIO + "offsets_db: [0, -3]\n"
        with pytest.raises(ConfigError, match="2 offsets given for 3 bands"):
            load_scenario(_write(tmp_path, text))

    def test_snapshot_axis_required(self, tmp_path):
        """Test a snapshot sweep needs a snapshot axis."""
        text = SMALL_SCENARIO.replace("axis: snr", "axis: snapshots")
        with pytest.raises(ConfigError, match="snapshot_axis"):
            load_scenario(_write(tmp_path, text))

    def test_incompatible_q_cols(self, tmp_path):
        """Test a q_cols that cannot support K paths is rejected."""
        with pytest.raises(ConfigError, match="q_cols"):
            load_scenario(_write(tmp_path, SMALL_SCENARIO + "q_cols: 14\n"))

    def test_coarse_music_grid(self, tmp_path):
        """Test a MUSIC grid below 10 N points is rejected."""
        with pytest.raises(ConfigError, match="music_grid_factor"):
            load_scenario(_write(tmp_path, SMALL_SCENARIO + "music_grid_factor: 4\n"))

    def test_infinite_snr(self, tmp_path):
        """Test an infinite SNR is accepted."""
        text = SMALL_SCENARIO.replace("snr_db: [10, 20]", "snr_db: [.inf]")
        assert load_scenario(_write(tmp_path, text)).snr_db == [float("inf")]

    def test_dict_round_trip(self, scenario_file):
        """Test a scenario survives to_dict and back."""
        scn = load_scenario(scenario_file)
        again = scenario_from_dict(yaml.safe_load(yaml.safe_dump(scn.to_dict())))
        assert again.to_dict() == scn.to_dict()

    def test_stored_snr_sweep_reloads(self, scenario_file, tmp_path):
        """Test a dumped SNR sweep, with its null snapshot_axis, loads again."""
        scn = load_scenario(scenario_file)
        assert scn.to_dict()["snapshot_axis"] is None
        path = _write(tmp_path, yaml.safe_dump(scn.to_dict()), "stored.cfg")
        again = load_scenario(path)
        assert again.snapshot_axis is None
        assert again.to_dict() == scn.to_dict()

    def test_stored_snapshot_sweep_reloads(self, tmp_path):
        """Test a dumped snapshot sweep keeps its axis."""
        scn = load_scenario(resolve_config("paper_fig2b"))
        path = _write(tmp_path, yaml.safe_dump(scn.to_dict()), "stored.cfg")
        assert load_scenario(path).axis_values == scn.axis_values

    def test_snapshot_axis_wrong_type(self, tmp_path):
        """Test a non-list snapshot_axis is still rejected."""
        with pytest.raises(ConfigError, match="snapshot_axis"):
            load_scenario(_write(tmp_path, SMALL_SCENARIO + "snapshot_axis: many\n"))


class TestDrawGains:
    def test_unit_mean_power(self):
        """Test random gains have unit mean power."""
        rng = np.random.default_rng(0)
        gains = np.array([draw_gains(3, 5.0, rng) for _ in range(20000)])
        np.testing.assert_allclose(np.mean(np.abs(gains) ** 2, axis=0), 1.0, atol=0.05)

    def test_los_is_rician(self):
        """Test the LOS gain has a Rician amplitude."""
        rng = np.random.default_rng(1)
        los = np.array([draw_gains(2, 20.0, rng)[0] for _ in range(2000)])
        # at K = 20 dB the LOS magnitude barely fluctuates
        assert np.std(np.abs(los)) < 0.1
