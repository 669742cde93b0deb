import numpy as np
import pytest

from dl_helpers import run_trace_cli
from vcfp_dl.io import read_label_file, read_tensor_file, write_tensor_file


@pytest.fixture(scope="session")
def toy_fixture(tmp_path_factory):
    """Separable 10-class tensors exported by the trace workbench.

    Single voice at zero noise: every class collapses to a handful of exact
    prototype sequences, so the task is separable by construction. 40 traces
    per class train, 10 test.
    """
    root = tmp_path_factory.mktemp("toy_fixture")
    run_trace_cli(
        [
            "--seed", "13", "--out", str(root),
            "generate", "--classes", "10", "--traces-per-class", "50",
            "--noise-level", "0", "--num-voices", "1",
        ]
    )
    run_trace_cli(
        [
            "--out", str(root),
            "export-tensors", "--data", str(root / "traces.jsonl"),
            "--format", "numeric", "--length", "48",
        ]
    )
    X = read_tensor_file(root / "tensors.bin")
    y = read_label_file(root / "labels.bin")
    train_idx, test_idx = [], []
    for cls in range(10):
        members = np.where(y == cls)[0]
        train_idx.extend(members[:40])
        test_idx.extend(members[40:])
    write_tensor_file(X[train_idx], root / "train.bin")
    write_tensor_file(X[test_idx], root / "test.bin")
    np.ascontiguousarray(y[train_idx], dtype="<u4").tofile(root / "train_labels.bin")
    np.ascontiguousarray(y[test_idx], dtype="<u4").tofile(root / "test_labels.bin")
    return {
        "root": root,
        "train_x": X[train_idx],
        "train_y": y[train_idx],
        "test_x": X[test_idx],
        "test_y": y[test_idx],
    }
