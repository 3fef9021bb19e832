"""Token container: packing round trips, bitrate arithmetic, damage handling."""

import numpy as np
import pytest

from sdcodec.bitstream import (
    MAGIC,
    BranchTokens,
    pack_stream,
    parse_stream,
    payload_bitrates,
    read_stream,
    write_stream,
)
from sdcodec.errors import InvalidConfig, InvalidToken, IoError, MalformedStream


def _branches(seed=0, n_q=4, bits=10, frames=50):
    rng = np.random.default_rng(seed)
    return [
        BranchTokens(16000, bits, rng.integers(0, 1 << bits, size=(n_q, frames))),
        BranchTokens(32000, bits, rng.integers(0, 1 << bits, size=(n_q, frames))),
    ]


def test_branch_tokens_validation():
    with pytest.raises(InvalidConfig):
        BranchTokens(16000, 10, np.zeros(5, dtype=np.int64))
    with pytest.raises(InvalidConfig):
        BranchTokens(16000, 0, np.zeros((1, 5), dtype=np.int64))
    with pytest.raises(InvalidConfig):
        BranchTokens(16000, 17, np.zeros((1, 5), dtype=np.int64))
    br = BranchTokens(16000, 10, np.zeros((4, 50), dtype=np.int64))
    assert br.n_quantizers == 4
    assert br.frame_count == 50
    assert br.payload_bits() == 4 * 50 * 10


def test_round_trip_bit_exact():
    for seed in range(10):
        branches = _branches(seed)
        blob = pack_stream(50, branches)
        frame_rate, parsed = parse_stream(blob)
        assert frame_rate == 50
        assert len(parsed) == 2
        for a, b in zip(branches, parsed):
            assert a.sample_rate == b.sample_rate
            assert a.codebook_bits == b.codebook_bits
            assert np.array_equal(a.tokens, b.tokens)
        assert pack_stream(frame_rate, parsed) == blob  # container re-encode


def test_round_trip_odd_bit_widths():
    # widths that do not divide 8 exercise the cross-byte packing
    for bits in (1, 3, 5, 7, 11, 13, 16):
        rng = np.random.default_rng(bits)
        br = BranchTokens(16000, bits, rng.integers(0, 1 << bits, size=(3, 17)))
        _, parsed = parse_stream(pack_stream(50, [br]))
        assert np.array_equal(parsed[0].tokens, br.tokens)


def test_stream_size_at_defaults():
    # one second at 50 Hz frames, 4 stages of 10-bit tokens per branch:
    # 11-byte header + two 10-byte branch headers + two 250-byte payloads
    blob = pack_stream(50, _branches())
    assert len(blob) == 11 + 2 * 10 + 2 * 250


def test_payload_bitrates_exact():
    rates = payload_bitrates(50, _branches())
    assert rates == [2000, 2000]
    assert sum(rates) == 4000


def test_token_range_guard():
    br = BranchTokens(16000, 10, np.full((4, 50), 1024, dtype=np.int64))
    with pytest.raises(InvalidToken):
        pack_stream(50, [br])
    with pytest.raises(InvalidToken):
        pack_stream(50, [BranchTokens(16000, 10, -np.ones((4, 50), dtype=np.int64))])


def test_empty_branch_list_rejected():
    with pytest.raises(InvalidConfig):
        pack_stream(50, [])


def test_header_damage_rejected():
    blob = pack_stream(50, _branches())
    with pytest.raises(MalformedStream):
        parse_stream(b"XXXX" + blob[4:])
    with pytest.raises(MalformedStream):
        parse_stream(blob[:4] + b"\x63\x00" + blob[6:])  # version 99
    with pytest.raises(MalformedStream):
        parse_stream(blob[:8])  # shorter than the fixed header
    with pytest.raises(MalformedStream):
        parse_stream(blob[:10] + b"\x00" + blob[11:])  # zero branches
    with pytest.raises(MalformedStream):
        parse_stream(blob[:15])  # branch header cut off


def test_implausible_branch_header_rejected():
    blob = bytearray(pack_stream(50, _branches()))
    blob[11 + 5] = 0  # first branch n_quantizers
    with pytest.raises(MalformedStream):
        parse_stream(bytes(blob))
    blob = bytearray(pack_stream(50, _branches()))
    blob[11 + 6] = 40  # first branch codebook_bits
    with pytest.raises(MalformedStream):
        parse_stream(bytes(blob))


def test_payload_damage_rejected():
    blob = pack_stream(50, _branches())
    with pytest.raises(MalformedStream):
        parse_stream(blob[:-3])  # truncated payload
    with pytest.raises(MalformedStream):
        parse_stream(blob + b"\x00")  # trailing garbage


def test_file_round_trip(tmp_path):
    path = tmp_path / "tokens.sdc"
    branches = _branches(3)
    write_stream(path, 50, branches)
    frame_rate, parsed = read_stream(path)
    assert frame_rate == 50
    assert all(np.array_equal(a.tokens, b.tokens) for a, b in zip(branches, parsed))
    with pytest.raises(IoError):
        read_stream(tmp_path / "missing.sdc")
    assert MAGIC == b"SDC1"
