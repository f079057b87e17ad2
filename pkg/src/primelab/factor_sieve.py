"""Segmented sieves: primes and per-integer multiplicative data over large windows.

Windows are independent work units with deterministic output, so scans can be
split across workers and merged in increasing order.  All heavy loops are
vectorised with numpy; memory stays bounded by the segment size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

# Integers per segment for the prime sieve (boolean array, 64 MB).
DEFAULT_SEGMENT = 1 << 26
# Integers per window for full factor data (five arrays alive at once).
FACTOR_SEGMENT = 1 << 24

_WHEEL = 30
_WHEEL_COPRIME = (1, 7, 11, 13, 17, 19, 23, 29)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Window:
    """Half-open integer range [lo, hi), lo >= 1."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 1:
            raise ValueError(f"window lo must be >= 1, got {self.lo}")
        if self.hi <= self.lo:
            raise ValueError(f"empty window [{self.lo}, {self.hi})")
        if self.hi > 1 << 63:
            raise ValueError("window end exceeds the 64-bit sieve range")

    def __len__(self) -> int:
        return self.hi - self.lo

    def split(self, segment: int = DEFAULT_SEGMENT) -> Iterator["Window"]:
        lo = self.lo
        while lo < self.hi:
            hi = min(lo + segment, self.hi)
            yield Window(lo, hi)
            lo = hi


@dataclass
class FactorWindow:
    """Multiplicative data for every n in the window.

    mu: Moebius values in {-1, 0, 1}; big_omega: prime factors with
    multiplicity; small_omega: distinct prime factors; pplus: largest prime
    factor (0 for n = 1, the empty-product sentinel).
    """

    window: Window
    mu: np.ndarray
    big_omega: np.ndarray
    small_omega: np.ndarray
    pplus: np.ndarray

    def values_at(self, n: int) -> tuple[int, int, int, int]:
        i = n - self.window.lo
        if not 0 <= i < len(self.window):
            raise IndexError(f"{n} outside window {self.window}")
        return int(self.mu[i]), int(self.big_omega[i]), int(self.small_omega[i]), int(self.pplus[i])


_BASE_CACHE: dict[str, np.ndarray] = {}


def base_primes(limit: int) -> np.ndarray:
    """Primes <= limit as an int64 array (simple cached sieve)."""
    if limit < 2:
        return np.empty(0, dtype=np.int64)
    if limit > 1 << 32:
        raise ValueError("base prime limit too large; reduce window end")
    cached = _BASE_CACHE.get("primes")
    if cached is not None and _BASE_CACHE["limit"] >= limit:
        return cached[: int(np.searchsorted(cached, limit, side="right"))]
    n = int(limit)
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, math.isqrt(n) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    primes = np.flatnonzero(sieve).astype(np.int64)
    _BASE_CACHE["primes"] = primes
    _BASE_CACHE["limit"] = n
    return primes


def _wheel_template(length: int, lo: int) -> np.ndarray:
    pat = np.zeros(_WHEEL, dtype=bool)
    pat[list(_WHEEL_COPRIME)] = True
    off = lo % _WHEEL
    reps = (length + off) // _WHEEL + 2
    return np.tile(pat, reps)[off : off + length]


def _sieve_segment(lo: int, hi: int, bases: np.ndarray) -> np.ndarray:
    """Boolean primality mask for [lo, hi) using wheel-30 presieving."""
    m = hi - lo
    mask = _wheel_template(m, lo)
    # primes 7 <= p <= sqrt(hi); multiples of 2, 3, 5 are dead in the template
    root = math.isqrt(hi - 1)
    ps = bases[(bases >= 7) & (bases <= root)]
    small = ps[ps < m]
    for p in small.tolist():
        start = max(p * p, ((lo + p - 1) // p) * p)
        if start < hi:
            mask[start - lo :: p] = False
    large = ps[ps >= m]
    if large.size:
        # each large prime hits the segment at most once
        start = np.maximum(large * large, ((lo + large - 1) // large) * large)
        hit = start[start < hi]
        if hit.size:
            mask[hit - lo] = False
    if lo <= 1 < hi:
        mask[1 - lo] = False
    for p in (2, 3, 5):
        if lo <= p < hi:
            mask[p - lo] = True
    return mask


def prime_blocks(w: Window, segment: int = DEFAULT_SEGMENT) -> Iterator[np.ndarray]:
    """Primes in the window, one sorted int64 array per internal segment."""
    bases = base_primes(math.isqrt(w.hi - 1) + 1)
    for seg in w.split(segment):
        mask = _sieve_segment(seg.lo, seg.hi, bases)
        yield np.flatnonzero(mask).astype(np.int64) + seg.lo


def primes_in(w: Window, segment: int = DEFAULT_SEGMENT) -> Iterator[int]:
    """Primes in [w.lo, w.hi) in increasing order.

    Restartable: to resume from a checkpoint boundary b, call again with
    Window(b, w.hi); per-segment output is deterministic.
    """
    for block in prime_blocks(w, segment):
        yield from block.tolist()


def factor_window(w: Window, budget: int = DEFAULT_SEGMENT) -> FactorWindow:
    """Fill mu, big_omega, small_omega and pplus for every n in the window.

    Smallest-prime-factor propagation over the base primes <= sqrt(hi);
    cost O((hi-lo) log log hi).  The window must fit the memory budget.
    """
    m = len(w)
    if m > budget:
        raise ValueError(f"window of {m} integers exceeds budget {budget}; split it first")
    lo, hi = w.lo, w.hi
    rem = np.arange(lo, hi, dtype=np.int64)
    mu = np.ones(m, dtype=np.int8)
    big_omega = np.zeros(m, dtype=np.int8)
    small_omega = np.zeros(m, dtype=np.int8)
    pplus = np.zeros(m, dtype=np.int64)

    for p in base_primes(math.isqrt(hi - 1) + 1).tolist():
        start = ((lo + p - 1) // p) * p
        if start >= hi:
            continue
        idx = np.arange(start - lo, m, p)
        small_omega[idx] += 1
        big_omega[idx] += 1
        mu[idx] = -mu[idx]
        pplus[idx] = p
        rem[idx] //= p
        q = p * p
        first = True
        while q < hi:
            start = ((lo + q - 1) // q) * q
            idx = np.arange(start - lo, m, q)
            if idx.size == 0:
                break
            big_omega[idx] += 1
            rem[idx] //= p
            if first:
                mu[idx] = 0
                first = False
            q *= p

    # leftover cofactor is a prime exceeding sqrt(hi)
    big = rem > 1
    if np.any(big):
        small_omega[big] += 1
        big_omega[big] += 1
        mu[big] = -mu[big]
        pplus[big] = rem[big]
    return FactorWindow(w, mu, big_omega, small_omega, pplus)


def _jacobi(a: int, m: int) -> int:
    """Jacobi symbol (a/m) for odd m > 0."""
    a %= m
    result = 1
    while a:
        while a % 2 == 0:
            a //= 2
            if m % 8 in (3, 5):
                result = -result
        a, m = m, a
        if a % 4 == 3 and m % 4 == 3:
            result = -result
        a %= m
    return result if m == 1 else 0


def kronecker(D: int, n: int) -> int:
    """Kronecker symbol (D/n) for n > 0, completely multiplicative in n."""
    if n <= 0:
        raise ValueError("n must be positive")
    if n == 1:
        return 1
    e = (n & -n).bit_length() - 1  # power of 2 in n
    m = n >> e
    if e and D % 2 == 0:
        return 0
    two = 1
    if e:
        r = D % 8
        two = 1 if r in (1, 7) else -1
        if e % 2 == 0:
            two = 1
    return two * _jacobi(D, m)


def is_fundamental_discriminant(D: int) -> bool:
    """Whether D is 1 or a fundamental discriminant."""
    if D == 1:
        return True
    if D % 4 == 1:
        return _squarefree(abs(D))
    if D % 4 == 0:
        k = D // 4
        return k % 4 in (2, 3) and _squarefree(abs(k))
    return False


def _squarefree(n: int) -> bool:
    if n == 0:
        return False
    d = 2
    while d * d <= n:
        if n % (d * d) == 0:
            return False
        while n % d == 0:
            n //= d
        d += 1
    return True


@dataclass
class Checkpoint:
    """Completed-segment record: boundary plus accumulator snapshot.

    Line-based JSON, endianness-free by construction.  Floats inside
    ``accumulators`` must be pre-encoded by the caller (float.hex strings)
    so that resume is bit-exact.
    """

    segment_hi: int
    accumulators: dict
    config_hash: str = ""
    format_version: int = CHECKPOINT_FORMAT_VERSION
    meta: dict = field(default_factory=dict)


def append_checkpoint(path: str, cp: Checkpoint) -> None:
    rec = {
        "format_version": cp.format_version,
        "segment_hi": cp.segment_hi,
        "config_hash": cp.config_hash,
        "accumulators": cp.accumulators,
        "meta": cp.meta,
    }
    with open(path, "a", encoding="ascii") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_checkpoint(path: str) -> Checkpoint:
    """Latest complete checkpoint record in the file (torn tails tolerated)."""
    last = None
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue
            if rec.get("format_version") != CHECKPOINT_FORMAT_VERSION:
                raise ValueError(
                    f"unsupported checkpoint format_version {rec.get('format_version')}"
                )
            last = rec
    if last is None:
        raise ValueError(f"no complete checkpoint record in {path}")
    return Checkpoint(
        segment_hi=int(last["segment_hi"]),
        accumulators=last["accumulators"],
        config_hash=last.get("config_hash", ""),
        meta=last.get("meta", {}),
    )
