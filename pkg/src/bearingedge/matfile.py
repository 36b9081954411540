"""Reader for the subset of the Level-5 MAT container holding CWRU recordings.

Supports uncompressed numeric real matrices stored as miMATRIX elements with
double or sign-extendable integer payloads, in either byte order, including
the packed small-element tag form. Everything else (cells, structs, sparse,
complex, character data, v7.3/HDF5) is out of scope; compressed elements get
a dedicated error pointing at the CSV ingestion path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AmbiguousChannel,
    ChannelNotFound,
    CompressedUnsupported,
    MalformedElement,
    NotMatFile,
)
from .signal import DEFAULT_RPM, DEFAULT_SAMPLE_RATE_HZ, FaultLabel, Recording

HEADER_LEN = 128

# MAT data type tags
MI_INT8 = 1
MI_UINT8 = 2
MI_INT16 = 3
MI_UINT16 = 4
MI_INT32 = 5
MI_UINT32 = 6
MI_SINGLE = 7
MI_DOUBLE = 9
MI_MATRIX = 14
MI_COMPRESSED = 15

# Array class codes (inside the array-flags subelement)
MX_DOUBLE = 6
MX_SINGLE = 7
_MX_NUMERIC = {6, 7, 8, 9, 10, 11, 12, 13, 14, 15}

_PAYLOAD_DTYPES = {
    MI_INT8: "i1",
    MI_UINT8: "u1",
    MI_INT16: "i2",
    MI_UINT16: "u2",
    MI_INT32: "i4",
    MI_UINT32: "u4",
    MI_DOUBLE: "f8",
}


@dataclass(frozen=True)
class MatElement:
    """One tagged element: type code, declared length, raw payload."""

    type_tag: int
    byte_length: int
    payload: bytes


@dataclass(frozen=True)
class MatArray:
    """A named numeric matrix; values kept in MATLAB's column-major order."""

    name: str
    dims: tuple[int, ...]
    values: np.ndarray


def _read_element(data: bytes, pos: int, endian: str) -> tuple[MatElement, int]:
    """Read one element at ``pos``; returns it and the next aligned offset."""
    if pos + 8 > len(data):
        raise MalformedElement(f"truncated element tag at offset {pos}")
    (raw,) = struct.unpack_from(endian + "I", data, pos)
    small_len = raw >> 16
    if small_len:
        # Packed form: length (1..4) in the high half-word, data in-tag.
        if small_len > 4:
            raise MalformedElement(f"small element length {small_len} at {pos}")
        payload = data[pos + 4:pos + 4 + small_len]
        return MatElement(raw & 0xFFFF, small_len, payload), pos + 8
    (type_tag, byte_length) = struct.unpack_from(endian + "II", data, pos)
    start = pos + 8
    if start + byte_length > len(data):
        raise MalformedElement(
            f"element at {pos} declares {byte_length} bytes but only "
            f"{len(data) - start} remain"
        )
    payload = data[start:start + byte_length]
    next_pos = start + byte_length
    next_pos += (-next_pos) % 8  # elements are 8-byte aligned
    return MatElement(type_tag, byte_length, payload), next_pos


def _decode_matrix(element: MatElement, endian: str) -> MatArray | None:
    """Decode a miMATRIX payload; None for array kinds out of scope."""
    data = element.payload
    pos = 0

    flags, pos = _read_element(data, pos, endian)
    if flags.type_tag != MI_UINT32 or flags.byte_length < 8:
        raise MalformedElement("matrix missing array-flags subelement")
    (flag_word,) = struct.unpack_from(endian + "I", flags.payload, 0)
    array_class = flag_word & 0xFF
    is_complex = bool(flag_word >> 11 & 1)
    is_logical = bool(flag_word >> 9 & 1)
    if array_class not in _MX_NUMERIC or is_complex or is_logical:
        return None

    dims_el, pos = _read_element(data, pos, endian)
    if dims_el.type_tag != MI_INT32:
        raise MalformedElement("matrix missing dimensions subelement")
    dims = tuple(
        int(v) for v in np.frombuffer(dims_el.payload, dtype=endian + "i4")
    )
    if any(d <= 0 for d in dims):
        return None

    name_el, pos = _read_element(data, pos, endian)
    if name_el.type_tag != MI_INT8:
        raise MalformedElement("matrix missing name subelement")
    name = name_el.payload.decode("ascii", errors="replace")

    values_el, pos = _read_element(data, pos, endian)
    dtype = _PAYLOAD_DTYPES.get(values_el.type_tag)
    if dtype is None:
        return None  # e.g. single-precision payloads; not needed for CWRU
    raw = np.frombuffer(values_el.payload, dtype=endian + dtype)
    count = int(np.prod(dims))
    if len(raw) != count:
        raise MalformedElement(
            f"matrix {name!r} declares {count} values but payload holds "
            f"{len(raw)}"
        )
    return MatArray(name=name, dims=dims, values=raw.astype(np.float64))


def parse_mat(data: bytes) -> list[MatArray]:
    """Parse every supported numeric matrix out of a Level-5 MAT container."""
    if len(data) < HEADER_LEN:
        raise NotMatFile(f"{len(data)} bytes is too short for a MAT header")
    indicator = data[126:128]
    if indicator == b"IM":
        endian = "<"
    elif indicator == b"MI":
        endian = ">"
    else:
        raise NotMatFile(f"bad endian indicator {indicator!r}")
    (version,) = struct.unpack_from(endian + "H", data, 124)
    if version != 0x0100:
        raise NotMatFile(f"unsupported MAT version 0x{version:04x}")

    arrays: list[MatArray] = []
    pos = HEADER_LEN
    while pos < len(data):
        element, pos = _read_element(data, pos, endian)
        if element.type_tag == MI_COMPRESSED:
            raise CompressedUnsupported(
                "container holds a compressed element; re-save uncompressed "
                "or convert the channel to CSV and use the CSV ingest path"
            )
        if element.type_tag == MI_MATRIX:
            decoded = _decode_matrix(element, endian)
            if decoded is not None:
                arrays.append(decoded)
        # other element types are skipped
    return arrays


def select_channel(arrays, suffix: str, *,
                   sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
                   rpm: int = DEFAULT_RPM,
                   label: FaultLabel | None = None) -> Recording:
    """Pick the single array whose name ends with ``suffix`` as a Recording."""
    matches = [a for a in arrays if a.name.endswith(suffix)]
    if not matches:
        names = ", ".join(a.name for a in arrays) or "<none>"
        raise ChannelNotFound(f"no array ends with {suffix!r} (have: {names})")
    if len(matches) > 1:
        names = ", ".join(a.name for a in matches)
        raise AmbiguousChannel(f"suffix {suffix!r} matches: {names}")
    array = matches[0]
    return Recording(
        samples=array.values,  # column-major storage order, already flat
        sample_rate_hz=sample_rate_hz,
        rpm=rpm,
        label=label,
        source_name=array.name,
    )


def load_recording(path, suffix: str = "_DE_time", **kwargs) -> Recording:
    """Read a MAT file from disk and select one channel."""
    return select_channel(parse_mat(Path(path).read_bytes()), suffix, **kwargs)
