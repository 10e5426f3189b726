"""Little-endian helpers for the package's tagged binary formats."""

import struct

import numpy as np

from .errors import FormatError


class Reader:
    """Sequential reader over a bytes payload with structured truncation errors."""

    def __init__(self, data: bytes, path: str = "<bytes>"):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise FormatError(
                f"{self.path}: truncated {what}: expected {end} bytes, got {len(self.data)}"
            )
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def magic(self, expected: bytes) -> None:
        if len(self.data) < len(expected):
            raise FormatError(
                f"{self.path}: truncated header: expected {len(expected)} bytes, "
                f"got {len(self.data)}"
            )
        got = self.take(len(expected), "magic")
        if got != expected:
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {expected!r}")

    def u32(self, what: str = "u32") -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        raw = self.take(dt.itemsize * count, what)
        return np.frombuffer(raw, dtype=dt, count=count).copy()

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.path}: trailing data: expected {self.pos} bytes, got {len(self.data)}"
            )


def read_file(path) -> Reader:
    try:
        with open(path, "rb") as fh:
            return Reader(fh.read(), str(path))
    except FileNotFoundError as exc:
        raise FormatError(f"missing file: {path}") from exc


def u32(value: int) -> bytes:
    return struct.pack("<I", value)


def f32_rows(matrix: np.ndarray) -> bytes:
    return np.ascontiguousarray(matrix, dtype="<f4").tobytes()
