"""Maximal-length shift-register sequences and their window lookup.

Conventions
-----------
The register is a Fibonacci LFSR whose taps are the exponents of the
feedback polynomial ``x^n + sum(x^t) + 1``, so the produced stream obeys::

    a[k + n] = a[k] ^ XOR(a[k + t] for t in taps if t < n)

The seed is read most-significant bit first: it holds the first ``n``
emitted bits, so ``seed=0b0001`` with ``n=4`` starts the stream ``0, 0, 0, 1``.
A window at position ``p`` is ``a[p], a[p+1], ..., a[p+n-1]`` read cyclically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import SequenceError

UNKNOWN = None

# One primitive polynomial per register length, given as tap exponents.
DEFAULT_TAPS = {
    2: (2, 1),
    3: (3, 1),
    4: (4, 1),
    5: (5, 2),
    6: (6, 1),
    7: (7, 1),
    8: (8, 6, 5, 4),
    9: (9, 4),
    10: (10, 7),
    11: (11, 2),
    12: (12, 11, 10, 4),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 1),
    16: (16, 5, 3, 2),
}


@dataclass(frozen=True)
class LfsrSpec:
    n: int
    taps: tuple = ()
    seed: int = 1

    def __post_init__(self):
        if not 2 <= self.n <= 16:
            raise SequenceError(f"register length must be in [2, 16], got {self.n}")
        taps = tuple(sorted({int(t) for t in (self.taps or DEFAULT_TAPS[self.n])}, reverse=True))
        if self.n not in taps:
            raise SequenceError(f"tap {self.n} must be included, got {taps}")
        if any(t < 1 or t > self.n for t in taps):
            raise SequenceError(f"taps must lie in [1, {self.n}], got {taps}")
        if not 0 < self.seed < (1 << self.n):
            raise SequenceError(f"seed must be a nonzero {self.n}-bit value, got {self.seed}")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def default(cls, n: int, seed: int = 1) -> "LfsrSpec":
        return cls(n=n, taps=DEFAULT_TAPS[n], seed=seed)


def _iterate_register(spec: LfsrSpec, count: int) -> np.ndarray:
    n = spec.n
    mask = (1 << n) - 1
    # bit (n - 1 - t) of the state holds a[k + t]
    tap_mask = 0
    for t in spec.taps:
        tap_mask |= 1 << (n - 1 - (t % n))
    state = spec.seed
    out = np.empty(count, dtype=np.uint8)
    for k in range(count):
        out[k] = state >> (n - 1)
        feedback = (state & tap_mask).bit_count() & 1
        state = ((state << 1) & mask) | feedback
    return out


def _register_period(spec: LfsrSpec) -> int:
    n = spec.n
    mask = (1 << n) - 1
    tap_mask = 0
    for t in spec.taps:
        tap_mask |= 1 << (n - 1 - (t % n))
    state = spec.seed
    for k in range(1, 1 << n):
        state = ((state << 1) & mask) | ((state & tap_mask).bit_count() & 1)
        if state == spec.seed:
            return k
    return -1


def generate_msequence(spec: LfsrSpec) -> np.ndarray:
    """Return one full period (``2**n - 1`` bits) of the register output.

    Raises
    ------
    SequenceError
        If the taps do not define a primitive polynomial, detected by the
        register state recurring before ``2**n - 1`` steps.
    """
    length = (1 << spec.n) - 1
    period = _register_period(spec)
    if period != length:
        raise SequenceError(
            f"taps {spec.taps} are not primitive for n={spec.n}: period {period} != {length}"
        )
    return _iterate_register(spec, length)


@lru_cache(maxsize=None)
def default_sequence(n: int, seed: int = 1) -> np.ndarray:
    seq = generate_msequence(LfsrSpec.default(n, seed))
    seq.setflags(write=False)
    return seq


def window_value(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


@dataclass
class WindowIndex:
    """Map from every cyclic ``n``-bit window value to its start position."""

    n: int
    table: dict
    sequence: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.table)

    @property
    def length(self) -> int:
        return len(self.sequence)


def build_window_index(seq: Sequence[int], n: int) -> WindowIndex:
    seq = np.asarray(seq, dtype=np.uint8)
    length = len(seq)
    if length < n:
        raise SequenceError("sequence shorter than the window")
    extended = np.concatenate([seq, seq[: n - 1]])
    weights = 1 << np.arange(n - 1, -1, -1)
    windows = np.lib.stride_tricks.sliding_window_view(extended, n)[:length] @ weights
    table = {}
    for pos, value in enumerate(windows.tolist()):
        if value in table:
            raise SequenceError(
                f"window {value:0{n}b} repeats at positions {table[value]} and {pos}"
            )
        table[value] = pos
    return WindowIndex(n=n, table=table, sequence=seq.copy())


def _normalize_bit(b):
    if b is None:
        return None
    if isinstance(b, str):
        if b in "?xX*":
            return None
        return int(b)
    b = int(b)
    if b < 0:
        return None
    if b not in (0, 1):
        raise ValueError(f"bits must be 0, 1 or unknown, got {b}")
    return b


def parse_bits(bits: Iterable) -> list:
    """Normalize a bit window; ``None``, ``'?'`` or negative values mean unknown."""
    return [_normalize_bit(b) for b in bits]


def decode_window(index: WindowIndex, window: Iterable) -> set:
    """All positions whose stored window agrees with every known bit."""
    window = parse_bits(window)
    if len(window) != index.n:
        raise ValueError(f"window length {len(window)} != {index.n}")
    unknown = [k for k, b in enumerate(window) if b is None]
    if not unknown:
        pos = index.table.get(window_value(window))
        return set() if pos is None else {pos}
    if len(unknown) <= 10:
        found = set()
        for fill in range(1 << len(unknown)):
            trial = list(window)
            for slot, k in enumerate(unknown):
                trial[k] = (fill >> slot) & 1
            pos = index.table.get(window_value(trial))
            if pos is not None:
                found.add(pos)
        return found
    return set(decode_span(index, window))


def decode_span(
    index: WindowIndex,
    bits: Iterable,
    limit: Optional[int] = None,
) -> list:
    """Start positions consistent with a window of any length.

    Parameters
    ----------
    index : WindowIndex
    bits : iterable of {0, 1, unknown}
        Consecutive code bits; may be longer than ``index.n``.
    limit : int, optional
        When given, the code is treated as materialized only on positions
        ``0 .. limit - 1`` (no wrap-around), and candidates that would put a
        known bit outside that range are discarded.
    """
    bits = parse_bits(bits)
    known = [(k, b) for k, b in enumerate(bits) if b is not None]
    length = index.length
    if not known:
        starts = np.arange(length)
    else:
        n = index.n
        # seed the search from the most-known n-bit chunk, then verify the rest
        best, best_known = None, -1
        for start in range(0, max(1, len(bits) - n + 1)):
            chunk = bits[start : start + n]
            if len(chunk) < n:
                break
            count = sum(b is not None for b in chunk)
            if count > best_known:
                best, best_known = start, count
        if best is None or n - best_known > 10:
            starts = np.arange(length)
        else:
            seeds = decode_window(index, bits[best : best + n])
            starts = np.array(sorted((p - best) % length for p in seeds), dtype=int)
        if len(starts):
            offsets = np.array([k for k, _ in known])
            values = np.array([b for _, b in known], dtype=np.uint8)
            observed = index.sequence[(starts[:, None] + offsets[None, :]) % length]
            starts = starts[np.all(observed == values, axis=1)]
    if limit is not None and known:
        last = known[-1][0]
        starts = starts[starts + last < min(limit, length)]
    return sorted(int(p) for p in starts)


def reciprocal_taps(n: int, taps) -> tuple:
    return tuple(sorted({n} | {n - t for t in taps if t < n}, reverse=True))


@lru_cache(maxsize=None)
def alternate_taps(n: int) -> tuple:
    """A primitive polynomial distinct from the default one and its reciprocal.

    Used for the second axis of a two-axis code so that a row read as a column
    (or backwards) is unlikely to decode. Falls back to the default taps when
    no other primitive polynomial exists (``n <= 4``).
    """
    default = tuple(sorted(DEFAULT_TAPS[n], reverse=True))
    excluded = {default, reciprocal_taps(n, default)}
    for k in (1, 3):
        for inner in _combinations_desc(n - 1, k):
            taps = (n,) + inner
            if taps in excluded:
                continue
            if _register_period(LfsrSpec(n, taps, 1)) == (1 << n) - 1:
                return taps
    return default


def _combinations_desc(top: int, k: int):
    from itertools import combinations

    for combo in combinations(range(top, 0, -1), k):
        yield tuple(combo)
