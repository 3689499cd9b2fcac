"""Bit-packed binary codes and Hamming distance kernels.

Codes live in {-1, +1}^b but are stored packed, one bit per code entry
(+1 -> 1, -1 -> 0), little-endian within 64-bit words. Words are
canonically padded: bits at positions >= b are always zero, so XOR plus
popcount over whole words is an exact Hamming distance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, InvalidInput

WORD_BITS = 64

CODES_MAGIC = b"MIC1"


def words_per_code(b: int) -> int:
    return (b + WORD_BITS - 1) // WORD_BITS


def pack_signs(signs: np.ndarray) -> np.ndarray:
    """Pack rows of {-1,+1} (or >0/<=0) values into uint64 words.

    Accepts shape (b,) or (num, b); returns (nwords,) or (num, nwords).
    """
    arr = np.asarray(signs)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidInput(f"expected 1-d or 2-d sign array, got shape {arr.shape}")
    num, b = arr.shape
    if b < 1:
        raise InvalidInput("code length must be >= 1")
    bits = (arr > 0).astype(np.uint8)
    packed8 = np.packbits(bits, axis=1, bitorder="little")
    nwords = words_per_code(b)
    buf = np.zeros((num, nwords * 8), dtype=np.uint8)
    buf[:, : packed8.shape[1]] = packed8
    words = buf.view("<u8")
    return words[0] if squeeze else words


def unpack_to_signs(words: np.ndarray, b: int) -> np.ndarray:
    """Inverse of pack_signs; returns int8 values in {-1,+1}."""
    arr = np.ascontiguousarray(words, dtype="<u8")
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    bits = np.unpackbits(arr.view(np.uint8), axis=1, bitorder="little")[:, :b]
    signs = (bits.astype(np.int8) * 2) - 1
    return signs[0] if squeeze else signs


def popcount_words(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words)


@dataclass(frozen=True)
class BinaryCode:
    """One b-bit code over {-1,+1}, bit-packed."""

    words: np.ndarray  # (nwords,) uint64, canonical padding
    b: int

    @classmethod
    def from_signs(cls, signs: np.ndarray) -> "BinaryCode":
        signs = np.asarray(signs)
        return cls(words=pack_signs(signs), b=signs.shape[-1])

    def to_signs(self) -> np.ndarray:
        return unpack_to_signs(self.words, self.b)


@dataclass
class BinaryCodeSet:
    """A database of packed b-bit codes, addressable by index."""

    words: np.ndarray  # (count, nwords) uint64, canonical padding
    b: int

    def __post_init__(self) -> None:
        self.words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if self.words.ndim != 2 or self.words.shape[1] != words_per_code(self.b):
            raise InvalidInput(
                f"code words must have shape (count, {words_per_code(self.b)})"
            )

    @property
    def count(self) -> int:
        return self.words.shape[0]

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> BinaryCode:
        return BinaryCode(words=self.words[index], b=self.b)

    @classmethod
    def from_signs(cls, signs: np.ndarray) -> "BinaryCodeSet":
        signs = np.atleast_2d(np.asarray(signs))
        return cls(words=pack_signs(signs), b=signs.shape[1])

    def to_signs(self) -> np.ndarray:
        return unpack_to_signs(self.words, self.b)


def hard_hamming(a: BinaryCode, b_code: BinaryCode) -> int:
    """Number of differing bit positions, via XOR + popcount."""
    if a.b != b_code.b:
        raise InvalidInput(f"code length mismatch: {a.b} vs {b_code.b}")
    return int(popcount_words(np.bitwise_xor(a.words, b_code.words)).sum())


def hamming_to_all(query: BinaryCode, db: BinaryCodeSet) -> np.ndarray:
    """Hamming distances from one query to every code in the set (uint16)."""
    if query.b != db.b:
        raise InvalidInput(f"code length mismatch: {query.b} vs {db.b}")
    x = np.bitwise_xor(db.words, query.words[None, :])
    return popcount_words(x).sum(axis=1, dtype=np.uint16)


def save_codes(path, codes: BinaryCodeSet) -> None:
    """Write the "MIC1" packed-code file: magic, count, b, then LE words."""
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<II", codes.count, codes.b))
        fh.write(np.ascontiguousarray(codes.words, dtype="<u8").tobytes())


def load_codes(path) -> BinaryCodeSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CODES_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected MIC1")
        count, b = struct.unpack("<II", fh.read(8))
        nwords = words_per_code(b)
        raw = fh.read(count * nwords * 8)
        if len(raw) != count * nwords * 8:
            raise FileFormatError(f"{path}: truncated code payload")
        words = np.frombuffer(raw, dtype="<u8").reshape(count, nwords)
    return BinaryCodeSet(words=words.copy(), b=b)


def write_codes_csv(path, codes: BinaryCodeSet) -> None:
    """Text export: one row of +-1 entries per code."""
    np.savetxt(path, codes.to_signs(), fmt="%d", delimiter=",")
