"""Binary file formats: PCM16 WAV, feature matrices, model checkpoints.

All multi-byte fields are little-endian.  The feature file and the
checkpoint container are fixed layouts described field by field in the
writer docstrings; readers validate magic numbers, declared sizes, and
(for checkpoints) a trailing CRC32 before trusting any payload.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .dsp import FeatureMatrix, WaveSignal
from .errors import CorruptCheckpoint, FileFormatError
from .midi_io import PianoRoll

FEATURE_MAGIC = b"MFB1"
FEATURE_VERSION = 1
KIND_CODES = {"mel-fb": 0, "midi-fb": 1, "linear-spec": 2, "piano-roll": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


# --- WAV ------------------------------------------------------------------


def read_wav(path) -> WaveSignal:
    """Read a PCM16 mono RIFF/WAVE file; anything else is rejected."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FileFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        tag = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise FileFormatError(f"{path}: chunk {tag!r} overruns end of file")
        if tag == b"fmt ":
            if size < 16:
                raise FileFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif tag == b"data" and payload is None:
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise FileFormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, _align, bits = fmt
    if audio_format != 1:
        raise FileFormatError(f"{path}: audio format {audio_format}, only PCM handled")
    if channels != 1:
        raise FileFormatError(f"{path}: {channels} channels, only mono handled")
    if bits != 16:
        raise FileFormatError(f"{path}: {bits}-bit samples, only 16-bit handled")
    ints = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
    return WaveSignal(ints.astype(np.float64) / 32768.0, float(rate))


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round float samples to int16 with saturation at full scale."""
    scaled = np.rint(np.clip(samples, -1.0, 1.0) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(path, wave: WaveSignal) -> None:
    """Write a PCM16 mono RIFF/WAVE file."""
    rate = int(round(wave.sample_rate))
    payload = quantize_pcm16(wave.samples).tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, rate, rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt \
        + b"data" + struct.pack("<I", len(payload)) + payload
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


# --- feature matrices -----------------------------------------------------


def write_feature_file(path, feat: FeatureMatrix) -> None:
    """Write a feature matrix.

    Layout: magic "MFB1", u32 version, u32 n_frames, u32 dim, u32 kind
    code (0 mel-fb, 1 midi-fb, 2 linear-spec, 3 piano-roll), f64
    frame_shift seconds, f64 sample_rate, then float32 values row-major.
    """
    header = FEATURE_MAGIC + struct.pack(
        "<IIIIdd", FEATURE_VERSION, feat.n_frames, feat.dim,
        KIND_CODES[feat.kind], feat.frame_shift, feat.sample_rate)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(feat.values.astype("<f4").tobytes())


def read_feature_file(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 36 or data[:4] != FEATURE_MAGIC:
        raise FileFormatError(f"{path}: not a feature file")
    version, n, d, kind_code, shift, rate = struct.unpack("<IIIIdd", data[4:36])
    if version != FEATURE_VERSION:
        raise FileFormatError(f"{path}: unsupported feature file version {version}")
    if kind_code not in KIND_NAMES:
        raise FileFormatError(f"{path}: unknown feature kind code {kind_code}")
    expected = 36 + 4 * n * d
    if len(data) < expected:
        raise FileFormatError(f"{path}: truncated payload, "
                              f"expected {expected} bytes, have {len(data)}")
    values = np.frombuffer(data[36:expected], dtype="<f4").reshape(n, d)
    return FeatureMatrix(values.astype(np.float64), KIND_NAMES[kind_code],
                         shift, rate)


def feature_from_roll(roll: PianoRoll) -> FeatureMatrix:
    return FeatureMatrix(roll.values, "piano-roll", roll.frame_shift,
                         roll.sample_rate_hint)


def roll_from_feature(feat: FeatureMatrix) -> PianoRoll:
    if feat.kind != "piano-roll":
        raise FileFormatError(f"expected a piano-roll feature file, got {feat.kind!r}")
    return PianoRoll(feat.values, feat.frame_shift, feat.sample_rate)


# --- checkpoint container ---------------------------------------------------


CHECKPOINT_VERSION = 1


def write_container(path, magic: bytes, config_fields, tensors) -> None:
    """Write a checkpoint container.

    Layout: 4-byte magic, u32 version, the u32 config fields, u32 tensor
    count, then per tensor in sorted name order: u16 name length, UTF-8
    name, u8 ndim, u32 per dimension, float32 data row-major.  A CRC32
    of everything before it closes the file.
    """
    out = bytearray()
    out += magic
    out += struct.pack("<I", CHECKPOINT_VERSION)
    for field in config_fields:
        out += struct.pack("<I", int(field))
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            out += struct.pack("<I", dim)
        out += arr.astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def read_container(path, magic: bytes, n_config_fields: int):
    """Read a container written by write_container.

    Returns (config_fields tuple, dict of float64 tensors).  Any
    structural defect, bad magic, short read, or CRC mismatch raises
    CorruptCheckpoint.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != magic:
        raise CorruptCheckpoint(f"{path}: bad magic, expected {magic!r}")
    if len(data) < 8 + 4 * n_config_fields + 4 + 4:
        raise CorruptCheckpoint(f"{path}: file shorter than fixed header")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptCheckpoint(f"{path}: CRC mismatch, file is corrupt")
    (version,) = struct.unpack("<I", data[4:8])
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    fields = struct.unpack(f"<{n_config_fields}I", data[pos : pos + 4 * n_config_fields])
    pos += 4 * n_config_fields
    (count,) = struct.unpack("<I", data[pos : pos + 4])
    pos += 4
    end = len(data) - 4
    tensors = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack("<H", data[pos : pos + 2])
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            ndim = data[pos]
            pos += 1
            shape = struct.unpack(f"<{ndim}I", data[pos : pos + 4 * ndim])
            pos += 4 * ndim
            n_bytes = 4 * int(np.prod(shape, dtype=np.int64)) if ndim else 4
            if pos + n_bytes > end:
                raise CorruptCheckpoint(f"{path}: tensor {name!r} overruns payload")
            flat = np.frombuffer(data[pos : pos + n_bytes], dtype="<f4")
            tensors[name] = flat.astype(np.float64).reshape(shape)
            pos += n_bytes
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: malformed tensor table ({exc})") from exc
    if pos != end:
        raise CorruptCheckpoint(f"{path}: {end - pos} unexpected trailing bytes")
    return fields, tensors
