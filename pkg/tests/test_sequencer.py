import numpy as np
import pytest

from phasemark.exceptions import SequenceError
from phasemark.sequencer import (
    DEFAULT_TAPS,
    LfsrSpec,
    alternate_taps,
    build_window_index,
    decode_span,
    decode_window,
    default_sequence,
    generate_msequence,
    parse_bits,
    reciprocal_taps,
)


def recurrence(n, taps, seed, count):
    """Direct evaluation of a[k+n] = XOR of a[k+t] over the lower taps, plus a[k]."""
    a = [(seed >> (n - 1 - k)) & 1 for k in range(n)]
    while len(a) < count:
        k = len(a) - n
        bit = a[k]
        for t in taps:
            if t < n:
                bit ^= a[k + t]
        a.append(bit)
    return np.array(a[:count], dtype=np.uint8)


def brute_positions(seq, window):
    L = len(seq)
    out = set()
    for p in range(L):
        if all(b is None or seq[(p + k) % L] == b for k, b in enumerate(window)):
            out.add(p)
    return out


def test_reference_stream_n4():
    seq = generate_msequence(LfsrSpec(4, (4, 1), 0b0001))
    assert "".join(map(str, seq)) == "000100110101111"


@pytest.mark.parametrize("n", sorted(DEFAULT_TAPS))
def test_matches_direct_recurrence(n):
    spec = LfsrSpec.default(n, seed=1)
    length = (1 << n) - 1
    np.testing.assert_array_equal(generate_msequence(spec), recurrence(n, spec.taps, 1, length))


@pytest.mark.parametrize("seed", range(1, 16))
def test_balance_n4_every_seed(seed):
    seq = generate_msequence(LfsrSpec(4, (4, 1), seed))
    assert seq.sum() == 8 and (seq == 0).sum() == 7


def test_non_primitive_taps_rejected():
    with pytest.raises(SequenceError, match="period 5"):
        generate_msequence(LfsrSpec(4, (4, 3, 2, 1), 1))


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=1), dict(n=17), dict(n=4, taps=(3, 1)), dict(n=4, taps=(4, 5)), dict(n=4, seed=0), dict(n=4, seed=16)],
)
def test_invalid_spec(kwargs):
    with pytest.raises(SequenceError):
        LfsrSpec(**kwargs)


def test_window_index_n4():
    seq = default_sequence(4)
    idx = build_window_index(seq, 4)
    assert len(idx) == 15
    assert idx.table[0b0001] == 0
    # exhaustive scan for the four aligned ones
    ones = [p for p in range(15) if all(seq[(p + k) % 15] for k in range(4))]
    assert ones == [11] and idx.table[0b1111] == 11
    assert sorted(idx.table.values()) == list(range(15))


def test_duplicate_window_rejected():
    with pytest.raises(SequenceError, match="repeats"):
        build_window_index([0, 1, 0, 1, 0, 1], 2)


def test_decode_window_known_and_unknown():
    seq = default_sequence(4)
    idx = build_window_index(seq, 4)
    for p in range(15):
        assert decode_window(idx, [seq[(p + k) % 15] for k in range(4)]) == {p}
    assert decode_window(idx, "????") == set(range(15))
    assert decode_window(idx, "00?1") == brute_positions(seq, [0, 0, None, 1])


@pytest.mark.parametrize("n", [5, 8])
def test_erasure_bound_random(n):
    rng = np.random.default_rng(n)
    seq = default_sequence(n)
    idx = build_window_index(seq, n)
    L = len(seq)
    for _ in range(200):
        p = int(rng.integers(L))
        k = int(rng.integers(0, n + 1))
        window = [int(seq[(p + i) % L]) for i in range(n)]
        for i in rng.choice(n, size=k, replace=False):
            window[i] = None
        found = decode_window(idx, window)
        assert p in found
        assert len(found) <= 2**k
        assert found == brute_positions(seq, window)


def test_decode_span_long_window_and_limit():
    seq = default_sequence(8)
    idx = build_window_index(seq, 8)
    L = len(seq)
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = int(rng.integers(L))
        span = [int(seq[(p + i) % L]) for i in range(12)]
        span[3] = None
        span[7] = None
        assert decode_span(idx, span) == [p]
    # without wrap-around, a window running past the end is not a candidate
    tail = [int(b) for b in seq[L - 5 :]] + [int(b) for b in seq[:5]]
    assert decode_span(idx, tail) == [L - 5]
    assert decode_span(idx, tail, limit=L) == []


def test_parse_bits():
    assert parse_bits("01?x") == [0, 1, None, None]
    assert parse_bits([1, -1, None]) == [1, None, None]
    with pytest.raises(ValueError):
        parse_bits([2])


def test_alternate_polynomial_distinct_and_primitive():
    for n in range(5, 13):
        alt = alternate_taps(n)
        default = tuple(sorted(DEFAULT_TAPS[n], reverse=True))
        assert alt not in (default, reciprocal_taps(n, default))
        assert len(generate_msequence(LfsrSpec(n, alt, 1))) == (1 << n) - 1


def test_every_nonzero_window_occurs_once():
    for n in range(2, 9):
        seq = default_sequence(n)
        idx = build_window_index(seq, n)
        assert set(idx.table) == set(range(1, 1 << n))
        for value, pos in idx.table.items():
            bits = [(value >> (n - 1 - k)) & 1 for k in range(n)]
            assert brute_positions(seq, bits) == {pos}
