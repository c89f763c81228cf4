"""File formats: 16-bit PCM WAV, binary dictionary files, flat key=value configs."""

from __future__ import annotations

import logging
import os
import struct
import tempfile
import wave
from pathlib import Path

import numpy as np

from .dictionary_learning import Dictionary, DictKind
from .stft import Waveform

__all__ = [
    "read_wav",
    "write_wav",
    "save_dictionary",
    "load_dictionary",
    "fnv1a_64",
    "parse_config_text",
    "read_config",
    "atomic_write_bytes",
    "atomic_write_text",
    "FormatError",
]

log = logging.getLogger(__name__)

DICT_MAGIC = b"WFD1"
DICT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_CHECKSUM_LEN = 16
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class FormatError(ValueError):
    """Malformed or corrupted input file."""


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# --- WAV --------------------------------------------------------------------

def read_wav(path) -> Waveform:
    """Read a 16-bit PCM WAV; multi-channel files are reduced to the first channel."""
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise FormatError(f"{path}: only 16-bit PCM is supported")
        rate, channels, n = fh.getframerate(), fh.getnchannels(), fh.getnframes()
        raw = fh.readframes(n)
    data = np.frombuffer(raw, dtype="<i2").reshape(-1, channels)[:, 0]
    return Waveform(data.astype(np.float64) / 32768.0, rate)


def write_wav(path, w: Waveform) -> int:
    """Write mono 16-bit PCM atomically; returns the number of clipped samples."""
    x = np.asarray(w.samples) * 32768.0
    clipped = int(np.count_nonzero((x > 32767) | (x < -32768)))
    if clipped:
        log.warning("%s: %d samples clipped on export", path, clipped)
    pcm = np.clip(np.round(x), -32768, 32767).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        with wave.open(tmp, "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(int(w.sample_rate))
            fh.writeframes(pcm.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return clipped


# --- dictionaries -----------------------------------------------------------

def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def dictionary_bytes(d: Dictionary) -> bytes:
    """Serialized dictionary.

    Layout: ``b"WFD1"``, little-endian u32 version, F, N and kind code,
    then the F*N complex entries column-major as interleaved little-endian
    float64 (re, im), then a 16-byte trailer holding the 64-bit FNV-1a
    hash of everything before it (u64 little-endian, 8 zero bytes).
    """
    F, N = d.atoms.shape
    header = _HEADER.pack(DICT_MAGIC, DICT_VERSION, F, N, int(d.kind))
    body = np.asfortranarray(d.atoms).astype("<c16").tobytes(order="F")
    payload = header + body
    return payload + struct.pack("<Q", fnv1a_64(payload)) + bytes(8)


def save_dictionary(path, d: Dictionary) -> None:
    atomic_write_bytes(path, dictionary_bytes(d))


def load_dictionary(path) -> Dictionary:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size + _CHECKSUM_LEN:
        raise FormatError(f"{path}: file too short")
    magic, version, F, N, kind = _HEADER.unpack_from(blob)
    if magic != DICT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != DICT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 16 * F * N + _CHECKSUM_LEN
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    payload, trailer = blob[:-_CHECKSUM_LEN], blob[-_CHECKSUM_LEN:]
    (stored,) = struct.unpack_from("<Q", trailer)
    if stored != fnv1a_64(payload) or any(trailer[8:]):
        raise FormatError(f"{path}: checksum mismatch")
    atoms = np.frombuffer(payload, dtype="<c16", offset=_HEADER.size).reshape((F, N), order="F")
    return Dictionary(atoms.astype(np.complex128), DictKind(kind))


# --- config -----------------------------------------------------------------

def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FormatError(f"{source}:{lineno}: empty key")
        if key in out:
            raise FormatError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(), str(path))
