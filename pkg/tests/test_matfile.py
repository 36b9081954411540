"""MAT container parser tests against scipy-written files and hand-built bytes."""

import struct
from pathlib import Path

import numpy as np
import pytest
from scipy.io import savemat

from bearingedge.errors import (
    AmbiguousChannel,
    ChannelNotFound,
    CompressedUnsupported,
    MalformedElement,
    NotMatFile,
)
from bearingedge.matfile import MatArray, parse_mat, select_channel
from bearingedge.signal import FAULT_CLASSES

FIXTURES = Path(__file__).parent / "fixtures"


def test_golden_fixture():
    arrays = parse_mat((FIXTURES / "golden_2x2.mat").read_bytes())
    assert len(arrays) == 1
    a = arrays[0]
    assert a.name == "A"
    assert a.dims == (2, 2)
    assert a.values.tolist() == [1.0, 3.0, 2.0, 4.0]  # column-major


def test_empty_file_is_not_mat():
    with pytest.raises(NotMatFile):
        parse_mat(b"")


def test_garbage_header_is_not_mat():
    with pytest.raises(NotMatFile):
        parse_mat(b"\x00" * 200)


def test_compressed_fixture_rejected_with_csv_hint():
    data = (FIXTURES / "golden_2x2_compressed.mat").read_bytes()
    with pytest.raises(CompressedUnsupported, match="CSV"):
        parse_mat(data)


def test_header_only_container_has_no_arrays():
    data = (FIXTURES / "golden_2x2.mat").read_bytes()
    assert parse_mat(data[:128]) == []


def test_every_mid_element_truncation_errors():
    data = (FIXTURES / "golden_2x2.mat").read_bytes()
    for cut in range(129, len(data)):
        with pytest.raises((NotMatFile, MalformedElement)):
            parse_mat(data[:cut])


def test_scipy_roundtrip_matches_bit_exactly(tmp_path):
    rng = np.random.default_rng(4)
    cases = {
        "col": rng.normal(size=(37, 1)),
        "wide": rng.normal(size=(3, 5)),
        "row": rng.normal(size=(1, 8)),
    }
    path = tmp_path / "roundtrip.mat"
    savemat(path, cases, do_compression=False)
    arrays = {a.name: a for a in parse_mat(path.read_bytes())}
    assert set(arrays) == set(cases)
    for name, original in cases.items():
        got = arrays[name]
        assert got.dims == original.shape
        assert np.array_equal(got.values,
                              original.flatten(order="F"))  # bit-exact


def test_integer_payloads_are_sign_extended(tmp_path):
    path = tmp_path / "ints.mat"
    savemat(path, {
        "small": np.array([[-3, 0, 7]], dtype=np.int16),
        "bytes": np.array([[250, 1]], dtype=np.uint8),
    }, do_compression=False)
    arrays = {a.name: a for a in parse_mat(path.read_bytes())}
    assert arrays["small"].values.tolist() == [-3.0, 0.0, 7.0]
    assert arrays["bytes"].values.tolist() == [250.0, 1.0]


def _write_big_endian_mat(name: bytes, values) -> bytes:
    """Minimal independent big-endian writer for one double column vector."""
    values = np.asarray(values, dtype=">f8")
    header = b"MATLAB 5.0 MAT-file, handwritten".ljust(116) + b"\x00" * 8
    header += struct.pack(">H", 0x0100) + b"MI"

    def element(tag, payload):
        padded = payload + b"\x00" * ((-len(payload)) % 8)
        return struct.pack(">II", tag, len(payload)) + padded

    body = element(6, struct.pack(">II", 6, 0))              # flags: mxDOUBLE
    body += element(5, struct.pack(">ii", len(values), 1))   # dims
    body += element(1, name)                                 # array name
    body += element(9, values.tobytes())                     # miDOUBLE data
    return header + element(14, body)


def test_big_endian_container():
    data = _write_big_endian_mat(b"BE", [1.5, -2.25, 10.0])
    arrays = parse_mat(data)
    assert len(arrays) == 1
    assert arrays[0].name == "BE"
    assert arrays[0].dims == (3, 1)
    assert arrays[0].values.tolist() == [1.5, -2.25, 10.0]


def test_select_channel_unique_match():
    arrays = parse_mat((FIXTURES / "golden_channels.mat").read_bytes())
    rec = select_channel(arrays, "_DE_time", label=FAULT_CLASSES[0])
    assert rec.source_name == "X097_DE_time"
    assert len(rec) == 600
    assert rec.samples[0] == -1.0


def test_select_channel_not_found():
    arrays = parse_mat((FIXTURES / "golden_channels.mat").read_bytes())
    with pytest.raises(ChannelNotFound):
        select_channel(arrays, "_BA_time")


def test_select_channel_ambiguous():
    arrays = [
        MatArray("X1_DE_time", (600, 1), np.zeros(600)),
        MatArray("X2_DE_time", (600, 1), np.ones(600)),
    ]
    with pytest.raises(AmbiguousChannel):
        select_channel(arrays, "_DE_time")
