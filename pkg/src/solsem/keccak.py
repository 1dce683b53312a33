"""Keccak-256 (original Keccak padding, as used by Ethereum; not NIST SHA3-256).

Self-contained implementation over a flat 25-lane state. Used to derive
storage slots for dynamic arrays and mappings. The test suite checks it
against published vectors and an independently structured implementation.
"""

from __future__ import annotations

_RATE = 136  # bytes: 1088-bit rate, 512-bit capacity
_MASK64 = (1 << 64) - 1

_ROUND_CONSTANTS = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

# Rotation offset for lane x + 5*y.
_ROT = (
    0, 1, 62, 28, 27,
    36, 44, 6, 55, 20,
    3, 10, 43, 25, 39,
    41, 45, 15, 21, 8,
    18, 2, 61, 56, 14,
)

# Pi step: lane (x, y) moves to (y, 2x+3y); destination index for source i.
_PI_DEST = tuple((i // 5 + 5 * ((2 * (i % 5) + 3 * (i // 5)) % 5)) for i in range(25))


def _rotl(v: int, n: int) -> int:
    if n == 0:
        return v
    return ((v << n) | (v >> (64 - n))) & _MASK64


def _keccak_f(lanes: list[int]) -> None:
    for rc in _ROUND_CONSTANTS:
        # theta
        c = [lanes[x] ^ lanes[x + 5] ^ lanes[x + 10] ^ lanes[x + 15] ^ lanes[x + 20]
             for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rotl(c[(x + 1) % 5], 1) for x in range(5)]
        for x in range(5):
            dx = d[x]
            for y in range(0, 25, 5):
                lanes[x + y] ^= dx
        # rho + pi
        b = [0] * 25
        for i in range(25):
            b[_PI_DEST[i]] = _rotl(lanes[i], _ROT[i])
        # chi
        for y in range(0, 25, 5):
            row = b[y:y + 5]
            for x in range(5):
                lanes[y + x] = row[x] ^ ((~row[(x + 1) % 5]) & row[(x + 2) % 5])
        # iota
        lanes[0] = (lanes[0] ^ rc) & _MASK64


def keccak256(data: bytes) -> bytes:
    """Digest of `data` as 32 bytes."""
    lanes = [0] * 25
    # multi-rate padding with original Keccak domain byte 0x01
    padded = bytearray(data)
    pad_len = _RATE - (len(padded) % _RATE)
    padded += b"\x01" + b"\x00" * (pad_len - 2) + b"\x80" if pad_len >= 2 else b"\x81"
    for block_start in range(0, len(padded), _RATE):
        block = padded[block_start:block_start + _RATE]
        for i in range(_RATE // 8):
            lanes[i] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        _keccak_f(lanes)
    out = b"".join(lane.to_bytes(8, "little") for lane in lanes[:4])
    return out


def keccak256_int(data: bytes) -> int:
    """Digest interpreted as a big-endian 256-bit integer (a slot number)."""
    return int.from_bytes(keccak256(data), "big")
