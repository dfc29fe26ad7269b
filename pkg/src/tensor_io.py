from __future__ import annotations

from dataclasses import dataclass
import io
import math
from pathlib import Path

import numpy as np
from numpy.lib import format as npy_format

from config import PipelineConfig, load_config
from errors import (
    BadMagic,
    FortranOrderUnsupported,
    InvalidShape,
    IoFailure,
    LabelOutOfRange,
    LabelOverflow,
    MissingFile,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
)

__all__ = [
    "LabelMask",
    "PipelineConfig",
    "Tensor",
    "load_config",
    "read_mask",
    "read_npy",
    "read_pgm",
    "write_npy",
    "write_pgm",
]

NPY_DTYPE = np.dtype("<f4")
PGM_MAXVAL = 255


@dataclass(frozen=True, eq=False)
class Tensor:
    data: np.ndarray

    def __post_init__(self) -> None:
        array = np.ascontiguousarray(self.data, dtype=np.float32)
        if array.ndim == 0 or any(size < 1 for size in array.shape):
            raise InvalidShape(f"tensor dimensions must all be >= 1, got {array.shape}")
        object.__setattr__(self, "data", array)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(size) for size in self.data.shape)


@dataclass(frozen=True, eq=False)
class LabelMask:
    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise ShapeMismatch(f"label mask must be a non-empty 2-D grid, got {labels.shape}")
        if labels.size and int(labels.min()) < 0:
            raise LabelOutOfRange("labels must be nonnegative")
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def label_set(self) -> set[int]:
        return {int(label) for label in np.unique(self.labels)}

    def check_labels(self, k: int) -> None:
        if int(self.labels.max()) >= k:
            raise LabelOutOfRange(f"label {int(self.labels.max())} is outside [0, {k})")


def _read_bytes(path: Path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"file not found: {path}")
    try:
        return path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_atomic(path: Path, payload: bytes) -> None:
    path = Path(path)
    tmp_path = path.with_name(f"{path.name}.tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp_path.write_bytes(payload)
        tmp_path.replace(path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_npy(path: Path) -> Tensor:
    stream = io.BytesIO(_read_bytes(path))
    try:
        version = npy_format.read_magic(stream)
    except ValueError as exc:
        raise BadMagic(f"{path}: not an NPY file") from exc
    if version != (1, 0):
        raise BadMagic(f"{path}: NPY version {version[0]}.{version[1]} is not supported")

    try:
        shape, fortran_order, dtype = npy_format.read_array_header_1_0(stream)
    except ValueError as exc:
        raise BadMagic(f"{path}: malformed NPY header") from exc

    if dtype != NPY_DTYPE:
        raise UnsupportedDtype(f"{path}: dtype {dtype.str} is not little-endian float32")
    if fortran_order:
        raise FortranOrderUnsupported(f"{path}: fortran-ordered arrays are rejected")
    if len(shape) == 0 or any(size < 1 for size in shape):
        raise InvalidShape(f"{path}: shape {shape} has no elements")

    count = math.prod(shape)
    payload = stream.read(count * NPY_DTYPE.itemsize)
    if len(payload) < count * NPY_DTYPE.itemsize:
        raise TruncatedPayload(
            f"{path}: expected {count * NPY_DTYPE.itemsize} payload bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=NPY_DTYPE).reshape(shape)
    return Tensor(data.astype(np.float32))


def write_npy(tensor: Tensor, path: Path) -> None:
    buffer = io.BytesIO()
    array = np.ascontiguousarray(tensor.data, dtype=NPY_DTYPE)
    npy_format.write_array(buffer, array, version=(1, 0), allow_pickle=False)
    _write_atomic(path, buffer.getvalue())


def pgm_header(width: int, height: int) -> bytes:
    return f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii")


def write_pgm(mask: LabelMask, path: Path) -> None:
    peak = int(mask.labels.max())
    if peak > PGM_MAXVAL:
        raise LabelOverflow(f"label {peak} does not fit in one PGM byte")
    payload = pgm_header(mask.width, mask.height) + mask.labels.astype(np.uint8).tobytes()
    _write_atomic(path, payload)


def _pgm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise BadMagic("truncated PGM header")
        tokens.append(raw[start:pos])
    if not raw[pos : pos + 1].isspace():
        raise BadMagic("PGM header must end with a single whitespace byte")
    return tokens, pos + 1


def read_pgm(path: Path) -> LabelMask:
    raw = _read_bytes(path)
    if not raw.startswith(b"P5"):
        raise BadMagic(f"{path}: not a binary PGM file")
    tokens, offset = _pgm_tokens(raw, 4)
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError as exc:
        raise BadMagic(f"{path}: non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise InvalidShape(f"{path}: PGM dimensions must be positive")
    if not 0 < maxval <= PGM_MAXVAL:
        raise UnsupportedDtype(f"{path}: PGM maxval {maxval} needs more than one byte per pixel")

    payload = raw[offset : offset + width * height]
    if len(payload) < width * height:
        raise TruncatedPayload(f"{path}: expected {width * height} pixels, found {len(payload)}")
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return LabelMask(labels)


def read_mask(path: Path) -> LabelMask:
    path = Path(path)
    if path.suffix.lower() == ".npy":
        tensor = read_npy(path)
        if len(tensor.shape) != 2:
            raise ShapeMismatch(f"{path}: mask tensor must be 2-D, got {tensor.shape}")
        values = tensor.data
        if not np.all(values == np.round(values)) or float(values.min()) < 0:
            raise LabelOutOfRange(f"{path}: mask values must be nonnegative integers")
        return LabelMask(values.astype(np.int64))
    return read_pgm(path)
