import json

import pytest

from behavepass.core.errors import ConfigurationError, MissingArtifactError
from behavepass.core.manifest import MANIFEST_NAME, build_manifest, load_manifest, write_manifest
from behavepass.core.settings import load_config_file, resolve_config
from behavepass.schemas.config import Preset, RunConfig
from behavepass.schemas.dataset import ModalityId, Split, Task


class TestConfigFile:
    def test_values_and_lists(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("EPOCHS=3\nTasks=tapping,keystroke\ndevice_gain_range=1.0, 1.0\n# comment\nPAIRING=shuffle\n")
        values = load_config_file(path)
        assert values == {
            "epochs": "3",
            "tasks": ["tapping", "keystroke"],
            "device_gain_range": (1.0, 1.0),
            "pairing": "shuffle",
        }

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("EPOCHZ=3\n")
        with pytest.raises(ConfigurationError, match="EPOCHZ"):
            load_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config_file(tmp_path / "absent.env")


class TestResolve:
    def test_desk_defaults(self):
        config = resolve_config()
        assert config.preset is Preset.DESK
        assert (config.hidden_units, config.embedding_dim, config.epochs, config.batch_size) == (16, 16, 30, 64)
        assert config.windows_per_session == 16
        assert config.users == 8

    def test_precedence(self):
        config = resolve_config(Preset.DESK, {"epochs": "3", "margin": "2.0"}, {"epochs": 5, "seed": None})
        assert config.epochs == 5
        assert config.margin == 2.0
        assert config.seed == 0

    def test_file_values_are_coerced(self):
        config = resolve_config(Preset.DESK, {"tasks": ["tapping"], "modalities": ["gyroscope"], "augment": "true"})
        assert config.tasks == [Task.TAPPING]
        assert config.modalities == [ModalityId.GYROSCOPE]
        assert config.augment is True

    def test_canonical_constants(self):
        config = resolve_config(Preset.CANONICAL)
        assert (config.hidden_units, config.epochs, config.batch_size, config.learning_rate) == (64, 150, 512, 0.05)
        assert config.margin == 1.5 and config.cap == 50

    def test_canonical_conflict_needs_force(self):
        with pytest.raises(ConfigurationError, match="--force"):
            resolve_config(Preset.CANONICAL, overrides={"epochs": 3})
        assert resolve_config(Preset.CANONICAL, overrides={"epochs": 3}, force=True).epochs == 3

    def test_canonical_accepts_equal_values(self):
        assert resolve_config(Preset.CANONICAL, {"learning_rate": "0.05"}).learning_rate == 0.05

    @pytest.mark.parametrize("overrides", [{"pairing": "zigzag"}, {"users": 1}, {"dropout_rate": 1.0}, {"epochs": 0}])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigurationError, match="invalid configuration value"):
            resolve_config(Preset.DESK, overrides=overrides)

    def test_derived_models(self):
        config = resolve_config(Preset.DESK, overrides={"augment": True})
        spec = config.model_spec(ModalityId.KEYSTROKE)
        assert spec.input_dim == 2 and spec.hidden_units == 16 and spec.layers == 2
        hyper = config.hyper()
        assert hyper.augment and hyper.margin == 1.5
        synth = config.synth_config(Split.EVALUATION, 3, 8)
        assert synth.n_users == 3 and synth.user_offset == 8


class TestManifest:
    def _inputs(self, out):
        data = out / "data"
        data.mkdir(parents=True)
        (data / "train.json").write_text('{"schema": "x"}')
        return [data / "train.json"]

    def test_identical_runs_give_identical_manifests(self, tmp_path):
        manifests = []
        for name in ("first", "second"):
            out = tmp_path / name
            config = RunConfig(output_dir=str(out), seed=4)
            manifests.append(write_manifest(out, "all", config, self._inputs(out)).read_bytes())
        assert manifests[0] == manifests[1]

    def test_content(self, tmp_path):
        out = tmp_path / "run"
        inputs = self._inputs(out)
        payload = build_manifest("train", RunConfig(output_dir=str(out), seed=9), inputs, out)
        assert payload["command"] == "train"
        assert payload["seeds"] == {"root": 9}
        assert "output_dir" not in payload["config"]
        assert list(payload["inputs"]) == ["data/train.json"]
        assert len(payload["inputs"]["data/train.json"]) == 64
        assert {"python", "numpy", "pandas", "scipy", "pydantic", "behavepass"} <= set(payload["versions"])

    def test_load_recorded_config(self, tmp_path):
        config = RunConfig(output_dir=str(tmp_path), seed=12, epochs=4, tasks=[Task.KEYSTROKE])
        path = write_manifest(tmp_path, "evaluate", config)
        assert path.name == MANIFEST_NAME
        command, recorded = load_manifest(path)
        assert command == "evaluate"
        assert recorded.seed == 12 and recorded.epochs == 4 and recorded.tasks == [Task.KEYSTROKE]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_manifest(tmp_path / MANIFEST_NAME)

    def test_invalid_manifest(self, tmp_path):
        path = tmp_path / MANIFEST_NAME
        path.write_text(json.dumps({"command": "all", "config": {"pairing": "zigzag"}}))
        with pytest.raises(ConfigurationError):
            load_manifest(path)
