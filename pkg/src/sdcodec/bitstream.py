"""Token container: fixed header, then per-branch bit-packed payloads.

Layout (little-endian integers):
  magic "SDC1" | version u16 | frame_rate u32 | branch_count u8
  per branch: sample_rate u32 | n_quantizers u8 | codebook_bits u8 | frame_count u32
  per branch payload: tokens packed stage-major, frame-minor, MSB-first
  within each byte, zero-padded to a byte boundary per branch.

Parsing validates the header before touching any payload byte, so corrupt
magic or version fails fast.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, InvalidToken, IoError, MalformedStream

MAGIC = b"SDC1"
VERSION = 1


@dataclass
class BranchTokens:
    sample_rate: int
    codebook_bits: int
    tokens: np.ndarray  # [n_quantizers, frame_count] integers

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.tokens.ndim != 2:
            raise InvalidConfig(f"tokens must be 2-D, got shape {self.tokens.shape}")
        if not 1 <= self.codebook_bits <= 16:
            raise InvalidConfig(f"codebook_bits must be in [1, 16], got {self.codebook_bits}")

    @property
    def n_quantizers(self) -> int:
        return self.tokens.shape[0]

    @property
    def frame_count(self) -> int:
        return self.tokens.shape[1]

    def payload_bits(self) -> int:
        return self.n_quantizers * self.frame_count * self.codebook_bits


def _pack_bits(values: np.ndarray, bits: int) -> bytes:
    out = bytearray()
    acc = 0
    nbits = 0
    for v in values:
        acc = (acc << bits) | int(v)
        nbits += bits
        while nbits >= 8:
            nbits -= 8
            out.append((acc >> nbits) & 0xFF)
    if nbits:
        out.append((acc << (8 - nbits)) & 0xFF)
    return bytes(out)


def _unpack_bits(data: bytes, bits: int, count: int) -> np.ndarray:
    values = np.empty(count, dtype=np.int64)
    acc = 0
    nbits = 0
    pos = 0
    mask = (1 << bits) - 1
    for i in range(count):
        while nbits < bits:
            if pos >= len(data):
                raise MalformedStream("payload truncated")
            acc = (acc << 8) | data[pos]
            pos += 1
            nbits += 8
        nbits -= bits
        values[i] = (acc >> nbits) & mask
    return values


def pack_stream(frame_rate: int, branches: list[BranchTokens]) -> bytes:
    if not branches:
        raise InvalidConfig("stream needs at least one branch")
    if len(branches) > 255:
        raise InvalidConfig("too many branches")
    head = bytearray()
    head += MAGIC
    head += struct.pack("<H", VERSION)
    head += struct.pack("<I", frame_rate)
    head += struct.pack("<B", len(branches))
    payload = bytearray()
    for i, br in enumerate(branches):
        limit = 1 << br.codebook_bits
        if br.tokens.size and (br.tokens.min() < 0 or br.tokens.max() >= limit):
            raise InvalidToken(f"branch {i} token out of range [0, {limit})")
        head += struct.pack("<IBBI", br.sample_rate, br.n_quantizers,
                            br.codebook_bits, br.frame_count)
        payload += _pack_bits(br.tokens.reshape(-1), br.codebook_bits)
    return bytes(head) + bytes(payload)


def parse_stream(data: bytes) -> tuple[int, list[BranchTokens]]:
    if len(data) < 11:
        raise MalformedStream("stream shorter than its header")
    if data[:4] != MAGIC:
        raise MalformedStream(f"bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise MalformedStream(f"unsupported stream version {version}")
    (frame_rate,) = struct.unpack_from("<I", data, 6)
    branch_count = data[10]
    if branch_count < 1:
        raise MalformedStream("stream declares zero branches")
    pos = 11
    configs = []
    for _ in range(branch_count):
        if pos + 10 > len(data):
            raise MalformedStream("header truncated")
        rate, n_q, bits, frames = struct.unpack_from("<IBBI", data, pos)
        pos += 10
        if n_q < 1 or not 1 <= bits <= 16:
            raise MalformedStream(f"implausible branch header (n_q={n_q}, bits={bits})")
        configs.append((rate, n_q, bits, frames))
    branches = []
    for rate, n_q, bits, frames in configs:
        nbytes = (n_q * frames * bits + 7) // 8
        if pos + nbytes > len(data):
            raise MalformedStream("payload truncated")
        values = _unpack_bits(data[pos : pos + nbytes], bits, n_q * frames)
        pos += nbytes
        branches.append(BranchTokens(rate, bits, values.reshape(n_q, frames)))
    if pos != len(data):
        raise MalformedStream(f"{len(data) - pos} trailing bytes after payload")
    return frame_rate, branches


def payload_bitrates(frame_rate: int, branches: list[BranchTokens]) -> list[int]:
    """Payload bits per second of audio, one value per branch."""
    return [frame_rate * br.n_quantizers * br.codebook_bits for br in branches]


def write_stream(path, frame_rate: int, branches: list[BranchTokens]) -> None:
    blob = pack_stream(frame_rate, branches)
    try:
        with open(path, "wb") as f:
            f.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write stream {path}: {exc}") from exc


def read_stream(path) -> tuple[int, list[BranchTokens]]:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise IoError(f"cannot read stream {path}: {exc}") from exc
    return parse_stream(data)
