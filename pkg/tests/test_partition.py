import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pktm.mapreduce import fnv1a_64, partition_of
from pktm.mapreduce.partition import partitions_of


def fnv1a_64_oracle(data: bytes) -> int:
    """Independent transliteration of the published FNV-1a algorithm."""
    h = 0xCBF29CE484222325
    for byte in data:
        h = h ^ byte
        h = (h * 0x100000001B3) % (1 << 64)
    return h


class TestFnv1a:
    def test_offset_basis(self):
        assert fnv1a_64(b"") == 14695981039346656037

    def test_single_byte(self):
        assert fnv1a_64(b"a") == fnv1a_64_oracle(b"a")

    def test_known_string(self):
        assert fnv1a_64(b"hello") == fnv1a_64_oracle(b"hello")

    @given(st.binary(min_size=0, max_size=64))
    def test_matches_reference(self, data):
        assert fnv1a_64(data) == fnv1a_64_oracle(data)

    @given(st.binary(min_size=0, max_size=32))
    def test_fits_in_64_bits(self, data):
        assert 0 <= fnv1a_64(data) < (1 << 64)


class TestPartitionOf:
    def test_hashes_little_endian_ordinal_bytes(self):
        ordinal = 123456
        for r in (1, 2, 8, 13):
            expected = fnv1a_64_oracle(
                ordinal.to_bytes(8, "little")) % r
            assert partition_of(ordinal, r) == expected

    def test_range(self):
        for o in range(100):
            p = partition_of(o, 7)
            assert 0 <= p < 7

    def test_single_partition(self):
        assert partition_of(999, 1) == 0

    def test_deterministic(self):
        assert partition_of(42, 8) == partition_of(42, 8)

    def test_rejects_bad_partition_count(self):
        with pytest.raises(ValueError):
            partition_of(0, 0)
        with pytest.raises(ValueError):
            partition_of(0, -3)

    def test_rejects_out_of_range_ordinal(self):
        with pytest.raises(ValueError):
            partition_of(-1, 4)
        with pytest.raises(ValueError):
            partition_of(1 << 64, 4)

    @given(st.integers(0, (1 << 64) - 1), st.integers(1, 64))
    def test_matches_hash_mod(self, ordinal, r):
        expected = fnv1a_64(ordinal.to_bytes(8, "little")) % r
        assert partition_of(ordinal, r) == expected


class TestPartitionsOfVectorized:
    def test_matches_scalar(self):
        rng = np.random.default_rng(2024)
        ordinals = rng.integers(0, 1 << 48, size=500, dtype=np.uint64)
        for r in (1, 2, 8, 16):
            vec = partitions_of(ordinals, r)
            scalar = [partition_of(int(o), r) for o in ordinals]
            assert vec.tolist() == scalar

    def test_covers_high_bit_ordinals(self):
        ordinals = np.array([0, 1, (1 << 63), (1 << 64) - 1],
                            dtype=np.uint64)
        vec = partitions_of(ordinals, 8)
        scalar = [partition_of(int(o), 8) for o in ordinals]
        assert vec.tolist() == scalar

    def test_empty(self):
        out = partitions_of(np.array([], dtype=np.uint64), 4)
        assert len(out) == 0

    def test_spreads_keys(self):
        """Not a uniformity proof, just a sanity floor: ten thousand
        consecutive ordinals across 8 partitions should hit all of them."""
        ordinals = np.arange(10_000, dtype=np.uint64)
        counts = np.bincount(partitions_of(ordinals, 8), minlength=8)
        assert counts.min() > 0
        assert counts.max() < 3 * counts.min()
