"""CIFAR-10 binary batches, 8-bit RGB image files and the encoded-model container."""

from __future__ import annotations

import hashlib
import io
import os
import re
import struct
from pathlib import Path

import numpy as np

from .coords import FEATURE_CONVENTION
from .errors import (
    ChecksumError,
    ConventionError,
    DatasetError,
    FormatError,
    InvalidInputError,
    PayloadLengthError,
    VersionError,
)
from .model import TrainedModel
from .nn_core import NetworkArch, NetworkParams

CIFAR_SIDE = 32
CIFAR_RECORD = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE
CIFAR_TEST_RECORDS = 10000

MODEL_MAGIC = b"CCN1"
MODEL_VERSION = 1
_PRECISION_CODES = {"float64": 0, "float32": 1}
_PRECISION_NAMES = {v: k for k, v in _PRECISION_CODES.items()}


# --- CIFAR-10 ---------------------------------------------------------------


def parse_cifar10_batch(data: bytes, expected_records: int | None = None) -> list[tuple[np.ndarray, int]]:
    """Decode records of 1 label byte + 3072 pixel bytes (R, G, B planes, row-major)."""
    n, rem = divmod(len(data), CIFAR_RECORD)
    if rem:
        raise FormatError(
            f"CIFAR-10 batch length {len(data)} is not a multiple of {CIFAR_RECORD}; last record truncated",
            offset=n * CIFAR_RECORD,
        )
    if n == 0:
        raise FormatError("CIFAR-10 batch is empty", offset=0)
    if expected_records is not None and n != expected_records:
        bad = min(n, expected_records) * CIFAR_RECORD
        raise FormatError(f"expected {expected_records} CIFAR-10 records, found {n}", offset=bad)
    raw = np.frombuffer(data, dtype=np.uint8).reshape(n, CIFAR_RECORD)
    labels = raw[:, 0].astype(int)
    pixels = raw[:, 1:].reshape(n, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1) / 255.0
    return [(pixels[i], int(labels[i])) for i in range(n)]


def load_cifar10_test(path, expected_records: int | None = CIFAR_TEST_RECORDS) -> list[tuple[np.ndarray, int]]:
    """Load ``test_batch.bin`` (or any batch when ``expected_records`` is None)."""
    path = Path(path)
    if path.is_dir():
        for candidate in ("test_batch.bin", "cifar-10-batches-bin/test_batch.bin"):
            if (path / candidate).is_file():
                path = path / candidate
                break
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read CIFAR-10 batch {path}: {e}") from e
    return parse_cifar10_batch(data, expected_records)


# --- images -----------------------------------------------------------------


def to_uint8(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"expected an HxWx3 image, got shape {img.shape}")
    if not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0:
        raise InvalidInputError("image values must lie in [0, 1]")
    return np.round(img * 255.0).astype(np.uint8)


_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_ppm(data: bytes) -> np.ndarray:
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PPM_TOKEN.match(data, pos)
        if m is None:
            raise FormatError("truncated PPM header", offset=pos)
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P6":
        raise FormatError(f"unsupported PPM magic {tokens[0]!r}", offset=0)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError("non-numeric PPM header field", offset=pos) from e
    if width < 1 or height < 1 or maxval != 255:
        raise FormatError(f"unsupported PPM geometry {width}x{height} maxval {maxval}", offset=pos)
    pos += 1  # single whitespace byte before the raster
    need = width * height * 3
    if len(data) - pos != need:
        raise FormatError(f"PPM raster has {len(data) - pos} bytes, expected {need}", offset=pos)
    return np.frombuffer(data, dtype=np.uint8, offset=pos).reshape(height, width, 3) / 255.0


def encode_ppm(image) -> bytes:
    px = to_uint8(image)
    h, w, _ = px.shape
    return b"P6\n%d %d\n255\n" % (w, h) + px.tobytes()


def read_image(path) -> np.ndarray:
    """Read an 8-bit RGB image (PPM; PNG when Pillow is installed) into [0, 1] floats."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read image {path}: {e}") from e
    if data[:2] == b"P6":
        return decode_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n" or path.suffix.lower() in (".png", ".bmp"):
        try:
            from PIL import Image
        except ImportError as e:  # pragma: no cover - depends on environment
            raise FormatError(f"{path}: PNG support needs Pillow") from e
        try:
            with Image.open(io.BytesIO(data)) as im:
                return np.asarray(im.convert("RGB"), dtype=np.uint8) / 255.0
        except Exception as e:
            raise FormatError(f"{path}: cannot decode image: {e}") from e
    raise FormatError(f"{path}: unsupported image format", offset=0)


def write_image(path, image) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(to_uint8(image), "RGB").save(path)
    else:
        path.write_bytes(encode_ppm(image))


# --- encoded model container -------------------------------------------------
#
# little-endian layout:
#   magic "CCN1" | u32 version | u32 input_dim | u32 output_dim | u32 n_hidden
#   | u32 widths[n_hidden] | u32 source_height | u32 source_width
#   | u16 tag_len | tag (utf-8) | u8 precision | f64 final_loss
#   | u64 payload_len | payload (f64, per layer W row-major then b)
#   | 32-byte SHA-256 of everything before it


def encode_model(model: TrainedModel) -> bytes:
    params = model.params
    arch = params.arch
    precision = params.dtype.name
    if precision not in _PRECISION_CODES:
        raise InvalidInputError(f"unsupported parameter dtype {precision}")
    tag = model.feature_convention.encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    head = bytearray(MODEL_MAGIC)
    head += struct.pack("<IIII", MODEL_VERSION, arch.input_dim, arch.output_dim, len(arch.hidden_widths))
    head += struct.pack(f"<{len(arch.hidden_widths)}I", *arch.hidden_widths)
    head += struct.pack("<II", model.source_height, model.source_width)
    head += struct.pack("<H", len(tag)) + tag
    head += struct.pack("<Bd", _PRECISION_CODES[precision], model.final_loss)
    head += struct.pack("<Q", len(payload))
    body = bytes(head) + payload
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise PayloadLengthError("container truncated inside header", offset=self.pos)
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals


def decode_model(data: bytes, expected_convention: str | None = FEATURE_CONVENTION) -> TrainedModel:
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MODEL_MAGIC!r}", offset=0)
    rd = _Reader(data)
    rd.pos = 4
    version, in_dim, out_dim, n_hidden = rd.take("<IIII")
    if version != MODEL_VERSION:
        raise VersionError(f"container version {version}, this reader supports {MODEL_VERSION}", offset=4)
    if n_hidden > 100_000:
        raise FormatError(f"implausible hidden layer count {n_hidden}", offset=16)
    widths = rd.take(f"<{n_hidden}I")
    src_h, src_w = rd.take("<II")
    (tag_len,) = rd.take("<H")
    if rd.pos + tag_len > len(data):
        raise PayloadLengthError("container truncated inside tag", offset=rd.pos)
    tag = data[rd.pos : rd.pos + tag_len].decode("utf-8", errors="replace")
    rd.pos += tag_len
    prec_code, final_loss = rd.take("<Bd")
    (payload_len,) = rd.take("<Q")

    arch = NetworkArch(hidden_widths=widths, input_dim=in_dim, output_dim=out_dim)
    if payload_len != 8 * arch.n_params:
        raise PayloadLengthError(
            f"payload declares {payload_len} bytes but the architecture needs {8 * arch.n_params}", offset=rd.pos - 8
        )
    end = rd.pos + payload_len
    if len(data) != end + 32:
        raise PayloadLengthError(f"container is {len(data)} bytes, expected {end + 32}", offset=min(len(data), end))
    if hashlib.sha256(data[:end]).digest() != data[end:]:
        raise ChecksumError("checksum mismatch", offset=end)
    if expected_convention is not None and tag != expected_convention:
        raise ConventionError(f"feature convention {tag!r} does not match {expected_convention!r}")
    if prec_code not in _PRECISION_NAMES:
        raise FormatError(f"unknown precision code {prec_code}")
    dtype = np.dtype(_PRECISION_NAMES[prec_code])

    flat = np.frombuffer(data, dtype="<f8", count=arch.n_params, offset=rd.pos)
    weights, biases, off = [], [], 0
    for wshape, bshape in arch.shapes():
        nw = wshape[0] * wshape[1]
        weights.append(flat[off : off + nw].reshape(wshape).astype(dtype))
        off += nw
        biases.append(flat[off : off + bshape[0]].astype(dtype))
        off += bshape[0]
    params = NetworkParams(arch, weights, biases)
    return TrainedModel(params, src_h, src_w, tag, final_loss)


def save_model(path, model: TrainedModel) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_model(model))
    os.replace(tmp, path)


def load_model(path, expected_convention: str | None = FEATURE_CONVENTION) -> TrainedModel:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read model file {path}: {e}") from e
    return decode_model(data, expected_convention)


def model_file_size(arch: NetworkArch, tag: str = FEATURE_CONVENTION) -> int:
    header = 4 + 16 + 4 * len(arch.hidden_widths) + 8 + 2 + len(tag.encode("utf-8")) + 1 + 8 + 8
    return header + 8 * arch.n_params + 32
