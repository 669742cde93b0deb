import json
import struct

import numpy as np
import pytest

from vcfp.defense import ObfuscationParams, obfuscate_dataset, wire_dataset
from vcfp.errors import DataFormatError, ValidationError
from vcfp.fileio import (
    ExportConfig,
    export_tensors,
    import_probabilities,
    manifest_path,
    obfuscation_extras,
    read_dataset,
    read_label_file,
    read_tensor_file,
    render_xy_svg,
    write_dataset,
    write_label_file,
    write_metrics_csv,
    write_prob_file,
    write_tensor_file,
)
from vcfp.preprocess import DirectionFilter, Scaler, VectorFormat
from vcfp.synthgen import GenConfig, generate_dataset
from vcfp.traces import CommandCategory, Dataset, LabeledTrace, Trace, packet


def _tiny_dataset():
    t = Trace([packet(+1, 20, 0.5), packet(-1, 250, 5.3)])
    lt = LabeledTrace(t, 0, CommandCategory.SINGLE, 0)
    return Dataset([lt], 1, {"origin": "test"})


class TestTraceFile:
    def test_single_trace_round_trip(self, tmp_path):
        d = _tiny_dataset()
        path = tmp_path / "tiny.jsonl"
        write_dataset(d, path)
        back = read_dataset(path)
        assert back == Dataset(d.traces, d.num_classes, d.manifest)

    def test_generated_round_trip_bit_exact(self, tmp_path):
        d = generate_dataset(GenConfig(num_classes=10, traces_per_class=5, seed=3))
        path = tmp_path / "gen.jsonl"
        write_dataset(d, path)
        back = read_dataset(path)
        assert back.traces == d.traces
        assert back.num_classes == d.num_classes
        with open(manifest_path(path)) as fh:
            manifest = json.load(fh)
        assert manifest["num_traces"] == 50
        assert sum(manifest["class_counts"].values()) == 50

    def test_zero_size_packet_names_line(self, tmp_path):
        d = generate_dataset(GenConfig(num_classes=1, traces_per_class=3, seed=1))
        path = tmp_path / "bad.jsonl"
        write_dataset(d, path)
        lines = path.read_text().splitlines()
        obj = json.loads(lines[2])
        obj["packets"][0][1] = 0
        lines[2] = json.dumps(obj)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="line 3"):
            read_dataset(path)

    def test_malformed_json_names_line(self, tmp_path):
        d = _tiny_dataset()
        path = tmp_path / "x.jsonl"
        write_dataset(d, path)
        path.write_text(path.read_text() + "{not json\n")
        with pytest.raises(DataFormatError, match="line 2"):
            read_dataset(path)

    def test_manifest_count_mismatch(self, tmp_path):
        d = _tiny_dataset()
        path = tmp_path / "x.jsonl"
        write_dataset(d, path)
        mp = manifest_path(path)
        manifest = json.loads(mp.read_text())
        manifest["num_traces"] = 7
        mp.write_text(json.dumps(manifest))
        with pytest.raises(DataFormatError, match="manifest"):
            read_dataset(path)

    def test_missing_manifest(self, tmp_path):
        d = _tiny_dataset()
        path = tmp_path / "x.jsonl"
        write_dataset(d, path)
        manifest_path(path).unlink()
        with pytest.raises(DataFormatError, match="manifest"):
            read_dataset(path)

    def test_writer_is_deterministic(self, tmp_path):
        d = generate_dataset(GenConfig(num_classes=3, traces_per_class=4, seed=6))
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(d, p1)
        write_dataset(d, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_obfuscated_traces_reread_as_plain_dataset(self, tmp_path, small_dataset, small_stats):
        params = ObfuscationParams(epsilon=0.5, stats=small_stats, seed=2)
        subset = Dataset(small_dataset.traces[:4], small_dataset.num_classes)
        obfs, _ = obfuscate_dataset(subset, params)
        wired = wire_dataset(subset, obfs)
        path = tmp_path / "obf.jsonl"
        write_dataset(wired, path, extras=[obfuscation_extras(o) for o in obfs])
        back = read_dataset(path)
        assert back.traces == wired.traces
        record = json.loads(path.read_text().splitlines()[0])
        assert len(record["wire_extras"]) == len(record["packets"])
        assert any(e["is_dummy"] for e in record["wire_extras"])


class TestTensorFile:
    def test_header_layout(self, tmp_path):
        m = np.arange(6, dtype=np.float32).reshape(2, 3)
        path = tmp_path / "t.bin"
        write_tensor_file(m, path)
        raw = path.read_bytes()
        assert len(raw) == 16 + 2 * 3 * 4
        magic, version, reserved, rows, cols = struct.unpack("<4sHHII", raw[:16])
        assert magic == b"VCFP"
        assert version == 1
        assert (rows, cols) == (2, 3)
        assert np.array_equal(read_tensor_file(path), m)

    def test_truncated_payload_rejected(self, tmp_path):
        m = np.ones((2, 2), dtype=np.float32)
        path = tmp_path / "t.bin"
        write_tensor_file(m, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataFormatError, match="payload"):
            read_tensor_file(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "t.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(DataFormatError, match="magic"):
            read_tensor_file(path)

    def test_label_file_round_trip(self, tmp_path):
        labels = np.array([0, 5, 2, 19])
        path = tmp_path / "y.bin"
        write_label_file(labels, path)
        assert read_label_file(path).tolist() == [0, 5, 2, 19]
        assert path.stat().st_size == 16


class TestExportTensors:
    def test_binary_export_size_arithmetic(self, tmp_path):
        t1 = Trace([packet(+1, 20, 0.0), packet(-1, 30, 1.0)])
        t2 = Trace([packet(-1, 40, 0.0)])
        d = Dataset(
            [
                LabeledTrace(t1, 0, CommandCategory.SINGLE, 0),
                LabeledTrace(t2, 1, CommandCategory.SINGLE, 1),
            ],
            2,
        )
        cfg = ExportConfig(fmt=VectorFormat.BINARY, length=4)
        tp, lp = tmp_path / "x.bin", tmp_path / "y.bin"
        export_tensors(d, cfg, tp, lp)
        raw = tp.read_bytes()
        assert len(raw) == 16 + 2 * 4 * 4
        m = read_tensor_file(tp)
        assert m.shape == (2, 4)
        assert m[0].tolist() == [1.0, -1.0, 0.0, 0.0]
        assert read_label_file(lp).tolist() == [0, 1]

    def test_reexport_byte_identical(self, tmp_path, small_dataset):
        cfg = ExportConfig(length=64)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        la, lb = tmp_path / "la.bin", tmp_path / "lb.bin"
        export_tensors(small_dataset, cfg, a, la)
        export_tensors(small_dataset, cfg, b, lb)
        assert a.read_bytes() == b.read_bytes()
        assert la.read_bytes() == lb.read_bytes()

    def test_numeric_row_fixture(self, tmp_path, worked_trace):
        d = Dataset([LabeledTrace(worked_trace, 0, CommandCategory.SINGLE, 0)], 1)
        cfg = ExportConfig(fmt=VectorFormat.NUMERIC, length=6)
        tp, lp = tmp_path / "x.bin", tmp_path / "y.bin"
        used = export_tensors(d, cfg, tp, lp, scaler=Scaler(-250.0, 100.0))
        assert used == Scaler(-250.0, 100.0)
        row = read_tensor_file(tp)[0]
        assert row == pytest.approx(
            [0.542857, 0.714286, -1.0, 1.0, 0.428571, 0.428571], abs=1e-4
        )

    def test_scaler_fitted_when_missing(self, tmp_path, small_dataset):
        cfg = ExportConfig(fmt=VectorFormat.NUMERIC, length=32)
        used = export_tensors(
            small_dataset, cfg, tmp_path / "x.bin", tmp_path / "y.bin"
        )
        assert used is not None and used.min < 0 < used.max

    def test_incoming_filter_respected(self, tmp_path, small_dataset):
        cfg = ExportConfig(fmt=VectorFormat.NUMERIC, keep=DirectionFilter.INCOMING, length=32)
        export_tensors(small_dataset, cfg, tmp_path / "x.bin", tmp_path / "y.bin")
        m = read_tensor_file(tmp_path / "x.bin")
        assert m.shape[0] == len(small_dataset)


class TestProbFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(3), size=5)
        path = tmp_path / "p.csv"
        write_prob_file(probs, path)
        header = path.read_text().splitlines()[0]
        assert header == "row,class_0,class_1,class_2"
        back = import_probabilities(path, 5, 3)
        assert np.allclose(back, probs, atol=1e-10)

    def test_row_sum_rejection_names_row(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("row,class_0,class_1\n0,0.5,0.5\n1,0.6,0.3\n")
        with pytest.raises(DataFormatError, match="row 1"):
            import_probabilities(path, 2, 2)

    def test_near_one_rows_renormalized(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("row,class_0,class_1\n0,0.5000001,0.4999998\n")
        m = import_probabilities(path, 1, 2)
        assert m[0].sum() == pytest.approx(1.0, abs=1e-12)

    def test_shape_mismatch_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        write_prob_file(np.array([[0.5, 0.5]]), path)
        with pytest.raises(DataFormatError):
            import_probabilities(path, 2, 2)
        with pytest.raises(DataFormatError):
            import_probabilities(path, 1, 3)

    def test_writer_rejects_bad_rows(self, tmp_path):
        with pytest.raises(ValidationError):
            write_prob_file(np.array([[0.7, 0.7]]), tmp_path / "p.csv")

    def test_significant_digits(self, tmp_path):
        probs = np.array([[1.0 / 3.0, 2.0 / 3.0]])
        path = tmp_path / "p.csv"
        write_prob_file(probs, path)
        line = path.read_text().splitlines()[1]
        frac = line.split(",")[1]
        assert len(frac.replace("0.", "")) >= 9


def test_metrics_csv(tmp_path, small_dataset, small_stats):
    params = ObfuscationParams(epsilon=0.5, stats=small_stats, seed=0)
    _, metrics = obfuscate_dataset(
        Dataset(small_dataset.traces[:3], small_dataset.num_classes), params
    )
    path = tmp_path / "m.csv"
    write_metrics_csv(metrics, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("trace,latency_per_packet_ms")
    assert len(lines) == 4


def test_svg_renderer(tmp_path):
    svg = render_xy_svg(
        [{"label": "cnn", "x": [100, 200, 300], "y": [0.4, 0.6, 0.8]}],
        "traces per class",
        "accuracy",
    )
    assert svg.startswith("<svg")
    assert "polyline" in svg
    assert "traces per class" in svg
