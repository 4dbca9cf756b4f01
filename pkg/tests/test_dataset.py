import json

import numpy as np
import pytest

from behavepass.core.dataset import (
    dataset_to_dict,
    load_dataset,
    parse_dataset,
    save_dataset,
    serialize_dataset,
    validate_dataset,
)
from behavepass.core.errors import DatasetSchemaError
from behavepass.schemas.dataset import (
    DEFAULT_SCREEN,
    SCHEMA_VERSION,
    ChannelSeries,
    Dataset,
    ModalityId,
    Session,
    Split,
    Task,
    UserRecord,
)

from conftest import make_session, make_user, sensor_series


def _document(sessions, split="evaluation"):
    return {
        "schema": SCHEMA_VERSION,
        "split": split,
        "users": [{"id": "u1", "device": "d1", "sessions": sessions}],
    }


def _session(number, performed_by="u1", device="d1", tasks=None, **extra):
    tasks = tasks if tasks is not None else {"tapping": {"touch": {"t": [0, 10], "x": [1, 2], "y": [3, 4]}}}
    return {"session": number, "device": device, "performed_by": performed_by, "tasks": tasks, **extra}


class TestChannelSeries:
    def test_arrays_are_read_only(self):
        series = sensor_series(5)
        assert not series.t.flags.writeable
        with pytest.raises(ValueError):
            series["x"][0] = 1.0

    def test_column_length_must_match_timestamps(self):
        with pytest.raises(ValueError, match="column 'x'"):
            ChannelSeries(t=[0.0, 1.0], columns={"x": [1.0]})

    def test_replace_keeps_other_columns(self):
        series = sensor_series(4)
        replaced = series.replace(x=np.zeros(4))
        np.testing.assert_array_equal(replaced["x"], np.zeros(4))
        np.testing.assert_array_equal(replaced["y"], series["y"])


class TestSerialization:
    def test_save_and_load_preserve_content(self, tmp_path, handmade_dataset):
        path = save_dataset(handmade_dataset, tmp_path / "evaluation.json")
        loaded = load_dataset(path)
        assert loaded.split is Split.EVALUATION
        assert loaded.user_ids == handmade_dataset.user_ids
        assert serialize_dataset(loaded) == serialize_dataset(handmade_dataset)

    def test_keystroke_codes_are_written_as_integers(self, handmade_dataset):
        payload = dataset_to_dict(handmade_dataset)
        codes = payload["users"][0]["sessions"][0]["tasks"]["keystroke"]["touch"]["ascii"]
        assert all(isinstance(code, int) for code in codes)

    def test_screen_is_optional(self):
        dataset = parse_dataset(json.dumps(_document([_session(1), _session(2, screen={"width": 720, "height": 1600})])))
        first, second = dataset.users[0].sessions
        assert first.screen == DEFAULT_SCREEN
        assert second.screen == (720, 1600)


class TestParseErrors:
    def test_malformed_json_reports_line(self):
        text = '{\n"schema": "behavepass-canon/1",\n"split": }'
        with pytest.raises(DatasetSchemaError) as info:
            parse_dataset(text)
        assert info.value.line == 3

    def test_schema_version_mismatch(self):
        with pytest.raises(DatasetSchemaError) as info:
            parse_dataset(json.dumps({"schema": "behavepass-canon/9", "split": "train", "users": []}))
        assert info.value.field == "schema"

    def test_missing_field_is_named(self):
        document = _document([_session(1)])
        del document["users"][0]["device"]
        with pytest.raises(DatasetSchemaError) as info:
            parse_dataset(json.dumps(document))
        assert info.value.field == "users.0.device"

    def test_enrolment_session_cannot_be_impostor(self):
        with pytest.raises(DatasetSchemaError) as info:
            parse_dataset(json.dumps(_document([_session(1, performed_by="x1")])))
        assert info.value.field == "users.0.sessions.0.performed_by"

    def test_impostor_session_must_use_owner_device(self):
        with pytest.raises(DatasetSchemaError) as info:
            parse_dataset(json.dumps(_document([_session(1), _session(3, performed_by="x1", device="d9")])))
        assert info.value.field == "users.0.sessions.1.device"

    def test_series_without_timestamps(self):
        tasks = {"tapping": {"touch": {"x": [1.0], "y": [2.0]}}}
        with pytest.raises(DatasetSchemaError):
            parse_dataset(json.dumps(_document([_session(1, tasks=tasks)])))


class TestValidation:
    def test_clean_dataset_has_no_findings(self, handmade_dataset):
        report = validate_dataset(handmade_dataset)
        assert report.ok
        assert report.users == 2

    def test_missing_modality_reported_once_per_user(self):
        drop = {("tapping", "magnetometer"), ("keystroke", "magnetometer")}
        sessions = tuple(make_session(s, "d1", "u001", seed=s, drop=drop) for s in (1, 2, 3, 4))
        dataset = Dataset(split=Split.TRAIN, users=(UserRecord("u001", "d1", sessions),))
        report = validate_dataset(dataset)
        missing = [f for f in report.findings if f.kind == "missing_modality"]
        assert len(missing) == 1
        assert missing[0].modality == ModalityId.MAGNETOMETER.value

    def test_non_monotone_timestamps_report_first_index(self):
        session = make_session(1, "d1", "u001")
        tasks = {k: dict(v) for k, v in session.tasks.items()}
        tasks["tapping"]["gyroscope"] = sensor_series(t=[0.0, 5.0, 10.0, 7.0, 20.0])
        broken = Session(session_id=1, device_id="d1", performed_by="u001", tasks=tasks)
        dataset = Dataset(split=Split.TRAIN, users=(UserRecord("u001", "d1", (broken,)),))
        findings = [f for f in validate_dataset(dataset).findings if f.kind == "non_monotone"]
        assert len(findings) == 1
        assert findings[0].index == 3
        assert findings[0].task == Task.TAPPING.value

    def test_empty_series(self):
        session = make_session(1, "d1", "u001")
        tasks = {k: dict(v) for k, v in session.tasks.items()}
        tasks["text_reading"]["touch"] = ChannelSeries(t=[], columns={"x": [], "y": []})
        emptied = Session(session_id=1, device_id="d1", performed_by="u001", tasks=tasks)
        dataset = Dataset(split=Split.TRAIN, users=(UserRecord("u001", "d1", (emptied,)),))
        report = validate_dataset(dataset)
        assert [f.kind for f in report.findings] == ["empty_series"]
        assert report.findings[0].modality == ModalityId.TEXT_READING.value

    def test_unknown_modality_is_kept_and_flagged(self):
        tasks = {"tapping": {"touch": {"t": [0, 1], "x": [1, 2], "y": [1, 2]}, "barometer": {"t": [0, 1], "p": [1, 2]}}}
        dataset = parse_dataset(json.dumps(_document([_session(1, tasks=tasks)])))
        assert dataset.unknown_channels == ("u1/s1/tapping/barometer",)
        assert "barometer" in dataset.users[0].sessions[0].tasks["tapping"]
        kinds = {f.kind for f in validate_dataset(dataset).findings}
        assert "unknown_modality" in kinds


def test_genuine_and_impostor_sessions():
    user = make_user(1)
    assert [s.session_id for s in user.genuine_sessions] == [1, 2, 3, 4]
    assert [s.performed_by for s in user.impostor_sessions] == ["x001", "x001"]
    assert user.session(3).performed_by == "u001"
