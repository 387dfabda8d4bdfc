import hashlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdiqrng.errors import ValidationError
from mdiqrng.extract import (
    ExtractorConfig,
    as_bits,
    extract_stream,
    output_length,
    pack_bits,
    read_bits,
    test_only_seed,
    toeplitz_extract,
    uniformity_selftest,
)


def dense_toeplitz(raw, seed, m):
    """Independent oracle: build the full matrix from index arithmetic and multiply mod 2."""
    n = raw.size
    idx = np.arange(n)[None, :] - np.arange(m)[:, None] + m - 1
    return (seed[idx].astype(np.int64) @ raw.astype(np.int64)) % 2


def test_output_length_examples():
    assert output_length(10**6, 0.0737) == 73633
    assert output_length(100, 0.5) == 0
    assert output_length(int(5.625e10), 0.0737) > 4 * 10**9
    for bad in ((0, 0.5), (10, 0.0), (10, 1.5)):
        with pytest.raises(ValidationError):
            output_length(*bad)
    with pytest.raises(ValidationError):
        output_length(10, 0.5, 1.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        ExtractorConfig(100, 0.5, np.zeros(10, dtype=np.uint8))  # no output
    with pytest.raises(ValidationError):
        ExtractorConfig(1000, 0.5, np.zeros(10, dtype=np.uint8))  # wrong seed length
    with pytest.raises(ValidationError):
        as_bits([0, 2])


def test_small_dense_example():
    # n = 8, m = 4 written out by hand from T[i, k] = seed[k - i + 3]
    seed = np.array([1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1], dtype=np.uint8)
    t = np.array([
        [1, 0, 0, 1, 0, 1, 1, 1],
        [1, 1, 0, 0, 1, 0, 1, 1],
        [0, 1, 1, 0, 0, 1, 0, 1],
        [1, 0, 1, 1, 0, 0, 1, 0],
    ])
    raw = np.array([1, 1, 0, 1, 0, 0, 1, 1], dtype=np.uint8)
    cfg = ExtractorConfig(8, 1.0, seed, eps_ext=0.25)  # m = 8 - 2 log2(4) = 4
    assert cfg.m == 4
    np.testing.assert_array_equal(toeplitz_extract(raw, cfg), (t @ raw) % 2)
    np.testing.assert_array_equal(dense_toeplitz(raw, seed, 4), (t @ raw) % 2)


def test_matches_dense_oracle_on_random_shapes(rng):
    for _ in range(40):
        n = int(rng.integers(68, 700))
        h = float(rng.uniform(67.5 / n, 1.0))
        if output_length(n, h) < 1:
            continue
        seed = rng.integers(0, 2, ExtractorConfig.seed_length(n, h), dtype=np.uint8)
        raw = rng.integers(0, 2, n, dtype=np.uint8)
        cfg = ExtractorConfig(n, h, seed)
        np.testing.assert_array_equal(toeplitz_extract(raw, cfg), dense_toeplitz(raw, seed, cfg.m))


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_linear_over_gf2(sa, sb, ss):
    n, h = 200, 0.6
    cfg = ExtractorConfig(n, h, test_only_seed(ExtractorConfig.seed_length(n, h), ss))
    a = test_only_seed(n, sa)
    b = test_only_seed(n, sb)
    np.testing.assert_array_equal(toeplitz_extract(a ^ b, cfg), toeplitz_extract(a, cfg) ^ toeplitz_extract(b, cfg))
    assert not toeplitz_extract(np.zeros(n, dtype=np.uint8), cfg).any()


def test_golden_digest():
    # pins seed layout, word packing and output bit order
    raw = np.random.default_rng(1).integers(0, 2, 4096, dtype=np.uint8)
    seed = test_only_seed(ExtractorConfig.seed_length(4096, 0.5), 7)
    out = extract_stream(raw, 0.5, seed, block_bits=4096)
    assert out.size == 1981
    assert hashlib.sha256(pack_bits(out)).hexdigest() == (
        "5e78970540df721bb1f0c793f77422471be590684618853160b0348a8147d2f8"
    )


def test_bit_order_is_little_endian(tmp_path):
    assert pack_bits([1, 0, 0, 0, 0, 0, 0, 0]) == b"\x01"
    assert pack_bits([0, 0, 0, 0, 0, 0, 0, 1, 1]) == b"\x80\x01"
    path = tmp_path / "bits.bin"
    path.write_bytes(b"\x01\x80")
    np.testing.assert_array_equal(read_bits(path, 9), [1, 0, 0, 0, 0, 0, 0, 0, 0])
    with pytest.raises(ValidationError):
        read_bits(path, 17)


def test_stream_blocks_and_remainder():
    n, h = 256, 0.5
    seed = test_only_seed(ExtractorConfig.seed_length(n, h), 3)
    raw = test_only_seed(3 * n + 100, 4)
    out = extract_stream(raw, h, seed, block_bits=n)
    cfg = ExtractorConfig(n, h, seed)
    assert out.size == 3 * cfg.m
    np.testing.assert_array_equal(out[cfg.m:2 * cfg.m], toeplitz_extract(raw[n:2 * n], cfg))
    np.testing.assert_array_equal(extract_stream(raw, h, seed, block_bits=n, n_jobs=2), out)


def test_stream_errors():
    seed = test_only_seed(ExtractorConfig.seed_length(256, 0.5), 3)
    with pytest.raises(ValidationError):
        extract_stream(np.zeros(0, dtype=np.uint8), 0.5, seed, block_bits=256)
    with pytest.raises(ValidationError):
        extract_stream(np.zeros(100, dtype=np.uint8), 0.5, seed, block_bits=256)


def test_selftest_examples():
    rng = np.random.default_rng(5)
    good = uniformity_selftest(rng.integers(0, 2, 200_000, dtype=np.uint8))
    assert good.passed()
    biased = uniformity_selftest((rng.random(200_000) < 0.52).astype(np.uint8))
    assert biased.monobit_p < 1e-6
    assert not biased.passed()
    patterned = uniformity_selftest(np.tile([1, 0], 100_000))
    assert patterned.monobit_p == 1.0
    assert not patterned.passed()
    with pytest.raises(ValidationError):
        uniformity_selftest(np.zeros(1000, dtype=np.uint8))


def test_extracted_biased_source_passes_selftest():
    # Bernoulli(0.53) has min-entropy -log2(0.53) = 0.916 per bit, above the claimed 0.9
    n, h = 8192, 0.9
    length = ExtractorConfig.seed_length(n, h)
    passed = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        raw = (rng.random(14 * n) < 0.53).astype(np.uint8)
        out = extract_stream(raw, h, test_only_seed(length, 1000 + s), block_bits=n)
        assert out.size >= 10**5
        passed += uniformity_selftest(out).passed()
    assert passed >= 98
