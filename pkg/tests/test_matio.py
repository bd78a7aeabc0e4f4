import json

import numpy as np
import pytest

from hesscurv.errors import ContractError, ShapeError
from hesscurv.matio import read_matrix, read_vector, write_csv, write_matrix


def test_roundtrip_bit_exact(tmp_path):
    a = np.random.default_rng(0).standard_normal((4, 3))
    write_matrix(tmp_path / "a.bin", a)
    assert read_matrix(tmp_path / "a.bin").tobytes() == a.tobytes()


def test_header_and_payload_layout(tmp_path):
    write_matrix(tmp_path / "a.bin", [[1.0, 2.0], [3.0, 4.0]])
    raw = (tmp_path / "a.bin").read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert json.loads(header) == {"rows": 2, "cols": 2, "dtype": "f64"}
    assert np.frombuffer(payload, "<f8").tolist() == [1.0, 2.0, 3.0, 4.0]


def test_vector_stored_as_column(tmp_path):
    write_matrix(tmp_path / "v.bin", np.arange(5.0))
    assert read_matrix(tmp_path / "v.bin").shape == (5, 1)
    assert read_vector(tmp_path / "v.bin").tolist() == [0, 1, 2, 3, 4]


def test_f32_downcast(tmp_path):
    write_matrix(tmp_path / "a.bin", [[1 / 3]], dtype="f32")
    assert read_matrix(tmp_path / "a.bin")[0, 0] == np.float32(1 / 3)


def test_rejects_non_finite(tmp_path):
    write_matrix(tmp_path / "a.bin", [[np.nan]])
    with pytest.raises(ContractError):
        read_matrix(tmp_path / "a.bin")


def test_rejects_truncated_payload(tmp_path):
    write_matrix(tmp_path / "a.bin", np.ones((2, 2)))
    data = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "a.bin").write_bytes(data[:-8])
    with pytest.raises(ShapeError):
        read_matrix(tmp_path / "a.bin")


def test_csv_17_digits(tmp_path):
    write_csv(tmp_path / "a.csv", [[0.1, 1 / 3]])
    text = (tmp_path / "a.csv").read_text().strip()
    assert [float(v) for v in text.split(",")] == [0.1, 1 / 3]
    assert text.split(",")[1] == "0.33333333333333331"
