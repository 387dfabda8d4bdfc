"""Toeplitz-hash randomness extraction and quick uniformity checks.

Bit strings are numpy ``uint8`` arrays of zeros and ones. On disk they are
packed little-endian within each byte (bit ``k`` of the stream is bit ``k % 8``
of byte ``k // 8``); a trailing partial byte is zero-padded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy.special import erfc
from scipy.stats import chi2

from .errors import ValidationError

DEFAULT_BLOCK_BITS = 10**6
DEFAULT_EPS_EXT = 1e-10
MIN_SELFTEST_BITS = 10**5


def output_length(n: int, h_min: float, eps_ext: float = DEFAULT_EPS_EXT) -> int:
    """Leftover-hash output length ``floor(n h_min - 2 log2(1/eps_ext))``, floored at 0."""
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")
    if not 0.0 < h_min <= 1.0:
        raise ValidationError(f"h_min must lie in (0, 1], got {h_min}")
    if not 0.0 < eps_ext < 1.0:
        raise ValidationError(f"eps_ext must lie in (0, 1), got {eps_ext}")
    return max(0, math.floor(n * h_min - 2.0 * math.log2(1.0 / eps_ext)))


def as_bits(bits) -> np.ndarray:
    b = np.asarray(bits)
    if b.ndim != 1:
        raise ValidationError("bit strings must be one-dimensional")
    if b.size and (b.min() < 0 or b.max() > 1):
        raise ValidationError("bit strings may only contain 0 and 1")
    return b.astype(np.uint8, copy=False)


@dataclass(frozen=True, eq=False)
class ExtractorConfig:
    """Block length, certified entropy, security parameter and Toeplitz seed."""

    n: int
    h_min: float
    seed: np.ndarray
    eps_ext: float = DEFAULT_EPS_EXT

    def __post_init__(self):
        seed = as_bits(self.seed)
        object.__setattr__(self, "seed", seed)
        if self.m < 1:
            raise ValidationError(
                f"block of {self.n} bits at h_min={self.h_min} yields no extractable output"
            )
        if seed.size != self.n + self.m - 1:
            raise ValidationError(f"seed must have {self.n + self.m - 1} bits, got {seed.size}")

    @property
    def m(self) -> int:
        return output_length(self.n, self.h_min, self.eps_ext)

    @staticmethod
    def seed_length(n: int, h_min: float, eps_ext: float = DEFAULT_EPS_EXT) -> int:
        return n + output_length(n, h_min, eps_ext) - 1


def _words(bits: np.ndarray, n_words: int) -> np.ndarray:
    padded = np.zeros(n_words * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    return np.packbits(padded, bitorder="little").view("<u8")


def toeplitz_extract(raw, cfg: ExtractorConfig) -> np.ndarray:
    """Multiply ``raw`` by the m x n Toeplitz matrix ``T[i, k] = seed[k - i + m - 1]`` over GF(2).

    Row 0 is ``seed[m-1 : n+m-1]``; column 0 read bottom-up is ``seed[0 : m]``.
    Rows are evaluated one at a time on 64-bit words.
    """
    raw = as_bits(raw)
    if raw.size != cfg.n:
        raise ValidationError(f"raw block must have {cfg.n} bits, got {raw.size}")
    m = cfg.m
    wn = -(-cfg.n // 64)
    r_words = _words(raw, wn)
    s_words = _words(cfg.seed, -(-cfg.seed.size // 64) + 1)
    # shifted[r][w] holds seed bits 64*w + r ... 64*w + r + 63
    shifted = [s_words[:-1]] + [
        (s_words[:-1] >> np.uint64(r)) | (s_words[1:] << np.uint64(64 - r)) for r in range(1, 64)
    ]
    out = np.empty(m, dtype=np.uint8)
    for i in range(m):
        s = m - 1 - i
        window = shifted[s & 63][s >> 6:(s >> 6) + wn]
        acc = np.bitwise_xor.reduce(window & r_words)
        out[i] = int(acc).bit_count() & 1
    return out


def extract_stream(
    raw,
    h_min: float,
    seed,
    block_bits: int = DEFAULT_BLOCK_BITS,
    eps_ext: float = DEFAULT_EPS_EXT,
    n_jobs: int | None = None,
) -> np.ndarray:
    """Extract every full block of ``raw`` with the same seed and concatenate in block order.

    A trailing partial block is discarded.
    """
    raw = as_bits(raw)
    if raw.size == 0:
        raise ValidationError("raw input is empty")
    n_blocks = raw.size // block_bits
    if n_blocks == 0:
        raise ValidationError(f"raw input has {raw.size} bits, fewer than one block of {block_bits}")
    cfg = ExtractorConfig(block_bits, h_min, seed, eps_ext)
    blocks = [raw[k * block_bits:(k + 1) * block_bits] for k in range(n_blocks)]
    if n_jobs in (None, 1):
        parts = [toeplitz_extract(b, cfg) for b in blocks]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(toeplitz_extract)(b, cfg) for b in blocks)
    return np.concatenate(parts)


def test_only_seed(length: int, seed: int) -> np.ndarray:
    """Pseudo-random Toeplitz seed from PCG64. Not suitable for production extraction."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(0, 2, size=length, dtype=np.uint8)


test_only_seed.__test__ = False  # keep pytest from collecting it


def read_bits(path, n_bits: int | None = None) -> np.ndarray:
    data = np.fromfile(Path(path), dtype=np.uint8)
    bits = np.unpackbits(data, bitorder="little")
    if n_bits is not None:
        if n_bits > bits.size:
            raise ValidationError(f"{path} holds {bits.size} bits, need {n_bits}")
        bits = bits[:n_bits]
    return bits


def pack_bits(bits) -> bytes:
    return np.packbits(as_bits(bits), bitorder="little").tobytes()


@dataclass(frozen=True)
class SelfTestReport:
    n_bits: int
    monobit_p: float
    chisq_byte_p: float

    def passed(self, alpha: float = 0.01) -> bool:
        return self.monobit_p > alpha and self.chisq_byte_p > alpha


def uniformity_selftest(bits) -> SelfTestReport:
    """Monobit z-test and 256-bin chi-square over whole bytes."""
    bits = as_bits(bits)
    n = bits.size
    if n < MIN_SELFTEST_BITS:
        raise ValidationError(f"self-test needs at least {MIN_SELFTEST_BITS} bits, got {n}")
    s = 2 * int(bits.sum()) - n
    monobit_p = float(erfc(abs(s) / math.sqrt(2.0 * n)))
    byte_vals = np.packbits(bits[: n - n % 8], bitorder="little")
    observed = np.bincount(byte_vals, minlength=256)
    expected = byte_vals.size / 256.0
    stat = float(np.sum((observed - expected) ** 2) / expected)
    chisq_p = float(chi2.sf(stat, 255))
    return SelfTestReport(n, monobit_p, chisq_p)
