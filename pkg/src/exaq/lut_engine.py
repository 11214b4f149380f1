"""Exponent and packed-sum lookup tables, key packing, and the bundle file.

LUT_exp holds e^{q_k} for each of the 2^M reconstruction levels. LUT_sum is
keyed by P codes packed into one integer and holds the sum of their P exponent
values, so the denominator accumulation consumes P codes per lookup.

Packing convention: code 0 of the group occupies the most significant M-bit
field of the key. For M=2, P=4 the codes [0,3,0,3] pack to 0b00110011 = 0x33.
Entries are computed in 64-bit and stored as float32; sums are accumulated
left to right, and table consistency checks must use the same order.

Bundle file layout (little-endian):

    magic "EXAQLUT1" (8) | version u32 | M u8 | P u8 | reserved u16 |
    clip f64 | delta f64 | mode u8 (0=exaq, 1=naive) | reserved 7 bytes |
    exp count u32 + float32 entries | sum count u32 + float32 entries
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantizer import QuantSpec

LUT_MAGIC = b"EXAQLUT1"
LUT_FORMAT_VERSION = 1
MAX_KEY_BITS = 12

_MODE_CODES = {"exaq": 0, "naive": 1}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}

# pack widths keeping the sum table at most 2^12 entries
DEFAULT_PACK_WIDTH = {2: 4, 3: 4, 4: 2}


class LutFormatError(ValueError):
    """Bundle file malformed: magic, version, or size mismatch."""


@dataclass(frozen=True)
class ExpLut:
    bits: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.ascontiguousarray(self.entries, dtype=np.float32)
        if e.shape != (1 << self.bits,):
            raise ValueError(f"expected {1 << self.bits} entries, got {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)


@dataclass(frozen=True)
class SumLut:
    bits: int
    pack_width: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.key_bits > MAX_KEY_BITS:
            raise ValueError(
                f"key needs {self.key_bits} bits; limit is {MAX_KEY_BITS} "
                f"(table would exceed {1 << MAX_KEY_BITS} entries)"
            )
        e = np.ascontiguousarray(self.entries, dtype=np.float32)
        if e.shape != (1 << self.key_bits,):
            raise ValueError(f"expected {1 << self.key_bits} entries, got {e.shape}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def key_bits(self) -> int:
        return self.bits * self.pack_width


def build_exp_lut(spec: QuantSpec) -> ExpLut:
    """e^{level} per code, computed in 64-bit, stored as float32."""
    return ExpLut(bits=spec.bits, entries=np.exp(spec.levels).astype(np.float32))


def pack_codes(codes, M: int) -> int:
    """Concatenate codes into one key, element 0 in the most significant field."""
    codes = list(codes)
    P = len(codes)
    if P * M > 16:
        raise ValueError(f"{P} codes of {M} bits exceed the 16-bit key limit")
    key = 0
    for i, c in enumerate(codes):
        c = int(c)
        if not 0 <= c < (1 << M):
            raise ValueError(f"code {c} out of range for {M} bits")
        key |= c << (M * (P - 1 - i))
    return key


def unpack_key(key: int, M: int, P: int) -> list:
    """Exact inverse of pack_codes."""
    key = int(key)
    if not 0 <= key < (1 << (M * P)):
        raise ValueError(f"key {key} out of range for {P} codes of {M} bits")
    mask = (1 << M) - 1
    return [(key >> (M * (P - 1 - i))) & mask for i in range(P)]


def build_sum_lut(spec: QuantSpec, P: int) -> SumLut:
    """Sum of P exponent values for every possible key, enumerated exhaustively.

    Summation runs over the packed fields left to right (most significant
    first) in float32, matching the kernel's consistency checks bit for bit.
    """
    M = spec.bits
    if P < 1:
        raise ValueError("pack width must be >= 1")
    if M * P > MAX_KEY_BITS:
        raise ValueError(f"pack width {P} at {M} bits exceeds {MAX_KEY_BITS}-bit keys")
    exp_entries = build_exp_lut(spec).entries
    keys = np.arange(1 << (M * P), dtype=np.uint32)
    mask = (1 << M) - 1
    acc = np.zeros(keys.shape, dtype=np.float32)
    for i in range(P):
        fields = (keys >> (M * (P - 1 - i))) & mask
        acc = acc + exp_entries[fields]
    return SumLut(bits=M, pack_width=P, entries=acc)


@dataclass(frozen=True)
class LutBundle:
    spec: QuantSpec
    exp_lut: ExpLut
    sum_lut: SumLut


def build_bundle(spec: QuantSpec, P: int | None = None) -> LutBundle:
    """Exponent plus sum tables for a spec, with the default pack width per bits."""
    if P is None:
        P = DEFAULT_PACK_WIDTH[spec.bits]
    return LutBundle(spec=spec, exp_lut=build_exp_lut(spec), sum_lut=build_sum_lut(spec, P))


def save_lut(spec: QuantSpec, exp_lut: ExpLut, sum_lut: SumLut, path) -> None:
    """Serialize spec and both tables; byte-exact round trip with load_lut."""
    if exp_lut.bits != spec.bits or sum_lut.bits != spec.bits:
        raise ValueError("table bit-widths disagree with the spec")
    out = bytearray()
    out += LUT_MAGIC
    out += np.uint32(LUT_FORMAT_VERSION).tobytes()
    out += np.uint8(spec.bits).tobytes()
    out += np.uint8(sum_lut.pack_width).tobytes()
    out += b"\x00\x00"
    out += np.float64(spec.clip).tobytes()
    out += np.float64(spec.delta).tobytes()
    out += np.uint8(_MODE_CODES[spec.mode]).tobytes()
    out += b"\x00" * 7
    out += np.uint32(exp_lut.entries.size).tobytes()
    out += exp_lut.entries.astype("<f4", copy=False).tobytes()
    out += np.uint32(sum_lut.entries.size).tobytes()
    out += sum_lut.entries.astype("<f4", copy=False).tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


def _take(raw: bytes, off: int, n: int, path) -> bytes:
    if len(raw) < off + n:
        raise LutFormatError(f"{path}: truncated at offset {off}")
    return raw[off : off + n]


def load_lut(path) -> LutBundle:
    """Parse a bundle file; magic/version/size problems raise LutFormatError."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(LUT_MAGIC)] != LUT_MAGIC:
        raise LutFormatError(f"{path}: missing LUT magic")
    off = len(LUT_MAGIC)
    version = int(np.frombuffer(_take(raw, off, 4, path), "<u4")[0]); off += 4
    if version != LUT_FORMAT_VERSION:
        raise LutFormatError(f"{path}: unsupported version {version}")
    bits = int(np.frombuffer(_take(raw, off, 1, path), "u1")[0]); off += 1
    pack_width = int(np.frombuffer(_take(raw, off, 1, path), "u1")[0]); off += 1
    off += 2  # reserved
    clip = float(np.frombuffer(_take(raw, off, 8, path), "<f8")[0]); off += 8
    delta = float(np.frombuffer(_take(raw, off, 8, path), "<f8")[0]); off += 8
    mode_code = int(np.frombuffer(_take(raw, off, 1, path), "u1")[0]); off += 1
    off += 7  # reserved
    if mode_code not in _MODE_NAMES:
        raise LutFormatError(f"{path}: unknown mode code {mode_code}")

    n_exp = int(np.frombuffer(_take(raw, off, 4, path), "<u4")[0]); off += 4
    if n_exp != 1 << bits:
        raise LutFormatError(f"{path}: exp table has {n_exp} entries, expected {1 << bits}")
    exp_entries = np.frombuffer(_take(raw, off, 4 * n_exp, path), "<f4").copy(); off += 4 * n_exp
    n_sum = int(np.frombuffer(_take(raw, off, 4, path), "<u4")[0]); off += 4
    if n_sum != 1 << (bits * pack_width):
        raise LutFormatError(
            f"{path}: sum table has {n_sum} entries, expected {1 << (bits * pack_width)}"
        )
    sum_entries = np.frombuffer(_take(raw, off, 4 * n_sum, path), "<f4").copy(); off += 4 * n_sum
    if off != len(raw):
        raise LutFormatError(f"{path}: {len(raw) - off} trailing bytes")

    spec = QuantSpec.from_clip(bits, clip, mode=_MODE_NAMES[mode_code])
    if not np.isclose(spec.delta, delta, rtol=1e-12, atol=0.0):
        raise LutFormatError(f"{path}: stored delta {delta} inconsistent with clip {clip}")
    return LutBundle(
        spec=spec,
        exp_lut=ExpLut(bits=bits, entries=exp_entries),
        sum_lut=SumLut(bits=bits, pack_width=pack_width, entries=sum_entries),
    )
