"""Exact floating-point summation helpers.

Reductions in this package are defined as the *correctly rounded exact sum*
of their inputs: conceptually the terms are added as real numbers and the
result is rounded to float64 once.  Computed this way, a sum does not depend
on term order, task chunking, or whether partial sums were pre-combined, so
serial and distributed runs of the same job agree bit for bit.

Two representations are used:

* a rounded total (``math.fsum``), for final per-key results;
* an *expansion*, a short list of floats whose real-number sum equals the
  exact sum, for partial results that still have to be added to other
  partials without losing information (the map-side combiner emits these).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "two_sum",
    "expansion_add",
    "exact_expansion",
    "grouped_fsum",
    "grouped_expansions",
]

# Above this padded-matrix size the vectorized path falls back to a
# per-group loop to bound memory on pathologically skewed group sizes.
_MATRIX_CELL_LIMIT = 8_000_000


def two_sum(a: float, b: float) -> tuple[float, float]:
    """Knuth's error-free transform: returns (s, e) with s = fl(a+b), s+e = a+b exactly."""
    s = a + b
    bv = s - a
    av = s - bv
    return s, (a - av) + (b - bv)


def expansion_add(components: list[float], x: float) -> list[float]:
    """Add one float to an expansion (Shewchuk grow-expansion, zeros eliminated).

    The returned list sums, as real numbers, to exactly sum(components) + x.
    """
    out: list[float] = []
    q = x
    for c in components:
        q, err = two_sum(q, c)
        if err != 0.0:
            out.append(err)
    if q != 0.0:
        out.append(q)
    return out


def exact_expansion(values) -> list[float]:
    """Exact expansion of the sum of ``values`` (possibly empty)."""
    comps: list[float] = []
    for v in values:
        comps = expansion_add(comps, float(v))
    return comps


def _fsum_residual_expansion(values: list[float]) -> list[float]:
    """Expansion of sum(values) extracted high-to-low with iterated fsum.

    Each pass appends the correctly rounded residual; the residual of a sum
    of doubles is an integer multiple of the smallest subnormal, so a zero
    residual certifies exactness and the loop terminates.
    """
    comps: list[float] = []
    while True:
        r = math.fsum(values + [-c for c in comps])
        if r == 0.0:
            return comps
        comps.append(r)


def _vec_two_sum(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = a + b
    bv = s - a
    av = s - bv
    return s, (a - av) + (b - bv)


def _group_slices(sorted_keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start offsets and unique keys of equal-key runs in a sorted key array."""
    n = sorted_keys.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64), sorted_keys[:0]
    boundaries = np.flatnonzero(sorted_keys[1:] != sorted_keys[:-1]) + 1
    starts = np.concatenate(([0], boundaries)).astype(np.int64)
    return starts, sorted_keys[starts]


def grouped_fsum(sorted_keys: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-key correctly rounded exact sums over a key-sorted record stream.

    Returns (unique_keys, totals); ``sorted_keys`` must be nondecreasing.
    """
    starts, unique_keys = _group_slices(sorted_keys)
    n = sorted_keys.shape[0]
    if n == 0:
        return unique_keys, np.empty(0, dtype=np.float64)
    ends = np.concatenate((starts[1:], [n]))
    vals = values.tolist()
    totals = np.fromiter(
        (math.fsum(vals[a:b]) for a, b in zip(starts, ends)),
        dtype=np.float64,
        count=len(starts),
    )
    return unique_keys, totals


def grouped_expansions(
    sorted_keys: np.ndarray, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-key exact expansions over a key-sorted record stream.

    Returns flat (keys_out, components): for each distinct input key, one or
    more components whose exact sum equals the exact sum of that key's
    values.  Keys whose values cancel to exactly zero are dropped entirely
    (absent keys read as zero downstream).  Output keys are nondecreasing.
    """
    starts, unique_keys = _group_slices(sorted_keys)
    n = sorted_keys.shape[0]
    if n == 0:
        return sorted_keys[:0], np.empty(0, dtype=np.float64)
    ends = np.concatenate((starts[1:], [n]))
    sizes = ends - starts
    kmax = int(sizes.max())
    n_groups = len(starts)

    if n_groups * kmax > _MATRIX_CELL_LIMIT:
        vals = values.tolist()
        keys_out: list = []
        comps_out: list[float] = []
        for key, a, b in zip(unique_keys.tolist(), starts, ends):
            for c in _fsum_residual_expansion(vals[a:b]):
                keys_out.append(key)
                comps_out.append(c)
        return (
            np.asarray(keys_out, dtype=unique_keys.dtype),
            np.asarray(comps_out, dtype=np.float64),
        )

    # Pad each group's values into one row; trailing zeros are exact no-ops.
    matrix = np.zeros((n_groups, kmax), dtype=np.float64)
    row = np.repeat(np.arange(n_groups), sizes)
    col = np.arange(n) - np.repeat(starts, sizes)
    matrix[row, col] = values

    # Iterated error-free folds (VecSum): each pass preserves the exact row
    # sum while concentrating it into fewer nonzero components.
    for _ in range(3):
        if kmax == 1:
            break
        acc = matrix[:, 0]
        errs = []
        for j in range(1, kmax):
            acc, err = _vec_two_sum(acc, matrix[:, j])
            errs.append(err)
        matrix = np.column_stack(errs + [acc])
        nonzero_cols = np.flatnonzero(np.any(matrix != 0.0, axis=0))
        if nonzero_cols.size == 0:
            matrix = matrix[:, :1]
            break
        matrix = matrix[:, nonzero_cols]
        kmax = matrix.shape[1]

    mask = matrix != 0.0
    counts = mask.sum(axis=1)
    keys_out = np.repeat(unique_keys, counts)
    comps_out = matrix[mask]
    # Row-major extraction keeps components of one key contiguous.
    return keys_out, comps_out
