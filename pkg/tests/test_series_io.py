import io

import numpy as np
import pytest

from dartclean import series_io, synth
from dartclean.errors import DataError, ParseError, ShapeError
from dartclean.preprocess import NormStats
from dartclean.series_io import (
    FLAG_MISSING,
    FLAG_VALID,
    CleanedOutput,
    RawSeries,
    parse_dart_file,
    emit_dart,
    load_checkpoint,
    read_cleaned_csv,
    save_checkpoint,
    write_cleaned_csv,
)
from tests.conftest import tiny_model


SAMPLE = (
    "#YY  MM DD hh mm ss T   HEIGHT\n"
    "2022 01 01 00 00 00 1 2584.234\n"
    "2022 01 01 00 15 00 1 2584.301\n"
)


class TestParseDartFile:
    def test_two_valid_rows(self):
        series = parse_dart_file(SAMPLE)
        assert len(series) == 2
        assert np.allclose(series.values, [2584.234, 2584.301])
        assert list(series.flags) == [FLAG_VALID, FLAG_VALID]
        assert series.timestamps[1] - series.timestamps[0] == 900.0

    def test_sentinel_marks_missing(self):
        text = SAMPLE + "2022 01 01 00 30 00 1 9999.000\n"
        series = parse_dart_file(text)
        assert series.flags[2] == FLAG_MISSING
        # sentinel without decimals too
        text2 = SAMPLE.replace("2584.301", "9999")
        assert parse_dart_file(text2).flags[1] == FLAG_MISSING

    def test_wrong_column_count_reports_line(self):
        with pytest.raises(ParseError, match="columns"):
            parse_dart_file(SAMPLE + "2022 01 01 00 30 00 1\n")

    def test_unparseable_number_reports_line(self):
        with pytest.raises(ParseError):
            parse_dart_file(SAMPLE + "2022 01 01 00 30 00 1 not-a-number\n")

    def test_non_monotone_timestamps_rejected(self):
        text = SAMPLE + "2022 01 01 00 15 00 1 2584.5\n"
        with pytest.raises(DataError, match="increasing"):
            parse_dart_file(text)

    def test_empty_input_rejected(self):
        with pytest.raises(DataError):
            parse_dart_file("# header only\n")

    def test_bytes_and_file_object_inputs(self):
        from_bytes = parse_dart_file(SAMPLE.encode())
        from_obj = parse_dart_file(io.StringIO(SAMPLE))
        assert np.array_equal(from_bytes.values, from_obj.values)

    def test_crlf_accepted(self):
        series = parse_dart_file(SAMPLE.replace("\n", "\r\n"))
        assert len(series) == 2

    def test_emit_parse_round_trip_synth(self):
        truth = synth.generate(synth.SynthSpec(n=1000, spike_count=3, gap_count=2,
                                               seed=11))
        raw = truth.to_raw_series()
        parsed = parse_dart_file(emit_dart(raw))
        valid = raw.flags == FLAG_VALID
        assert np.array_equal(parsed.flags, raw.flags)
        # bitwise equality for every valid sample
        assert np.array_equal(parsed.values[valid], raw.values[valid])
        assert np.array_equal(parsed.timestamps, raw.timestamps)


class TestCleanedCsv:
    def _one_sample(self, raw, cleaned, spike=0, step=0):
        return CleanedOutput(
            timestamps=np.array([1640995200.0]),
            raw=np.array([raw]), cleaned=np.array([cleaned]),
            spike=np.array([spike]), step=np.array([step]),
        )

    def test_identity_row(self):
        buf = io.StringIO()
        write_cleaned_csv(self._one_sample(2.0, 2.0), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == series_io.CSV_HEADER
        assert lines[1].endswith(",2.000000,2.000000,0,0,0.000000")

    def test_spike_row_residual(self):
        buf = io.StringIO()
        write_cleaned_csv(self._one_sample(4.5, 2.0, spike=1), buf)
        assert buf.getvalue().splitlines()[1].endswith(",1,0,2.500000")

    def test_round_trip_500_rows(self, rng):
        n = 500
        out = CleanedOutput(
            timestamps=1640995200.0 + 900.0 * np.arange(n),
            raw=rng.normal(2584.0, 0.3, n),
            cleaned=rng.normal(2584.0, 0.3, n),
            spike=rng.integers(0, 2, n),
            step=rng.integers(0, 2, n),
        )
        buf = io.StringIO()
        write_cleaned_csv(out, buf)
        back = read_cleaned_csv(buf.getvalue())
        assert np.allclose(back.raw, out.raw, atol=1e-6)
        assert np.allclose(back.cleaned, out.cleaned, atol=1e-6)
        assert np.allclose(back.residual, out.residual, atol=2e-6)
        assert np.array_equal(back.spike, out.spike)
        assert np.array_equal(back.step, out.step)
        assert np.array_equal(back.timestamps, out.timestamps)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(DataError):
            CleanedOutput(timestamps=np.arange(3), raw=np.zeros(3),
                          cleaned=np.zeros(2), spike=np.zeros(3), step=np.zeros(3))

    def test_residual_is_raw_minus_cleaned(self):
        out = self._one_sample(5.0, 3.25)
        assert out.residual[0] == 5.0 - 3.25


class TestCheckpoint:
    def test_round_trip_parameters(self, tmp_path):
        model = tiny_model(seed=3)
        stats = NormStats(mean=2584.1, std=0.37)
        path = tmp_path / "ck.json"
        save_checkpoint(model, stats, path)
        loaded, loaded_stats = load_checkpoint(path)
        for name, arr in model.state_arrays().items():
            other = loaded.state_arrays()[name]
            denom = np.maximum(np.abs(arr), 1e-300)
            assert np.all(np.abs(other - arr) / denom <= 1e-9), name
        assert loaded_stats.mean == stats.mean
        assert loaded_stats.std == stats.std
        assert loaded.config.descriptor() == model.config.descriptor()

    def test_shape_mismatch_rejected(self, tmp_path):
        import json
        model = tiny_model()
        path = tmp_path / "ck.json"
        save_checkpoint(model, NormStats(0.0, 1.0), path)
        doc = json.loads(path.read_text())
        mu = np.asarray(doc["params"]["mu.W"])
        doc["params"]["mu.W"] = mu[:, :-1].tolist()  # narrow the mu-head
        path.write_text(json.dumps(doc))
        with pytest.raises(ShapeError, match="mu.W"):
            load_checkpoint(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        import json
        model = tiny_model()
        path = tmp_path / "ck.json"
        save_checkpoint(model, NormStats(0.0, 1.0), path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="version"):
            load_checkpoint(path)

    def test_corrupted_number_names_array(self, tmp_path):
        import json
        model = tiny_model()
        path = tmp_path / "ck.json"
        save_checkpoint(model, NormStats(0.0, 1.0), path)
        doc = json.loads(path.read_text())
        doc["params"]["out.b"][0] = float("nan")
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="out.b"):
            load_checkpoint(path)
