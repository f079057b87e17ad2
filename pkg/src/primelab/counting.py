"""Prime counting, race scans with crossing/tie detection, and averaged race integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .factor_sieve import DEFAULT_SEGMENT, Window, base_primes, prime_blocks

# Lowest zeta ordinate; re-derived by the zero finder, kept here for the
# Kaczorowski comparison value gamma_1/pi.
GAMMA1 = 14.134725141734693790

_EULER_GAMMA = 0.57721566490153286061

# Cap on stored ordering-change events; totals keep counting past it.
MAX_SIGN_EVENTS = 200_000


def euler_phi(q: int) -> int:
    n, result, p = q, q, 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


# ---------------------------------------------------------------------------
# Chebyshev functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChebyshevCounts:
    pi: int
    theta: float
    psi: float


def chebyshev_counts(x: float, segment: int = DEFAULT_SEGMENT) -> ChebyshevCounts:
    """pi(x), theta(x), psi(x); log sums are fsum-compensated per segment."""
    if x < 2:
        return ChebyshevCounts(0, 0.0, 0.0)
    n = int(math.floor(x))
    count = 0
    parts: list[float] = []
    for block in prime_blocks(Window(2, n + 1), segment):
        count += block.size
        parts.append(math.fsum(np.log(block)))
    theta = math.fsum(parts)
    # prime powers p^k <= x, k >= 2
    psi_extra: list[float] = []
    k = 2
    while 2**k <= n:
        y = int(round(n ** (1.0 / k)))
        while (y + 1) ** k <= n:
            y += 1
        while y**k > n:
            y -= 1
        if y >= 2:
            psi_extra.append(math.fsum(np.log(base_primes(y))))
        k += 1
    return ChebyshevCounts(count, theta, math.fsum([theta] + psi_extra))


def exact_psi0(x: float, segment: int = DEFAULT_SEGMENT) -> float:
    """psi with weight 1/2 on the jump when x itself is a prime power."""
    c = chebyshev_counts(x, segment)
    n = int(math.floor(x))
    if n != x or n < 2:
        return c.psi
    m, p = n, None
    for q in base_primes(math.isqrt(n) + 1).tolist():
        if m % q == 0:
            p = q
            while m % q == 0:
                m //= q
            break
    if p is None:
        p, m = m, 1  # n itself prime
    if m == 1:
        return c.psi - 0.5 * math.log(p)
    return c.psi


# ---------------------------------------------------------------------------
# Logarithmic integral, principal value from 0 (li(2) ~ 1.04516)
# ---------------------------------------------------------------------------


def li(x: float) -> float:
    """Principal-value integral of dt/log t from 0 to x, for x > 1.

    Series gamma + ln ln x + sum_k (ln x)^k / (k k!): all terms positive,
    accurate to ~1e-14 relative.  This is the Rubinstein-Sarnak normalisation;
    the offset integral Li(x) = li(x) - li(2) differs by 1.04516...
    """
    if x <= 1:
        raise ValueError("li(x) defined here for x > 1 only")
    L = math.log(x)
    terms = [_EULER_GAMMA, math.log(L)]
    u = 1.0
    k = 1
    while True:
        u *= L / k
        t = u / k
        terms.append(t)
        if t < 1e-18 and k > L:
            break
        k += 1
    return math.fsum(terms)


def _li_vec(xs: np.ndarray) -> np.ndarray:
    """Vectorised li over an array with entries > 1."""
    L = np.log(xs.astype(np.float64))
    out = _EULER_GAMMA + np.log(L)
    u = np.ones_like(L)
    kmax = int(3.2 * float(L.max())) + 20
    for k in range(1, kmax):
        u *= L / k
        out += u / k
    return out


def li_inverse(y: float, x0: float = 10.0) -> float:
    """Solve li(t) = y for t > 1 by Newton iteration."""
    t = max(x0, 1.5)
    for _ in range(100):
        t_new = t - (li(t) - y) * math.log(t)
        if t_new <= 1.0:
            t_new = 0.5 * (t + 1.0)
        if abs(t_new - t) < 1e-12 * max(1.0, abs(t)):
            return t_new
        t = t_new
    return t


# ---------------------------------------------------------------------------
# Race specification and reports
# ---------------------------------------------------------------------------

_WEIGHTS = ("unit", "log", "invsqrt")


@dataclass(frozen=True)
class RaceSpec:
    """A prime race: modulus, ordered residue classes, and a weighting mode."""

    modulus: int
    classes: tuple[int, ...]
    weight: str = "unit"

    def __post_init__(self) -> None:
        if self.modulus < 1:
            raise ValueError("modulus must be positive")
        if self.weight not in _WEIGHTS:
            raise ValueError(f"weight must be one of {_WEIGHTS}")
        if not self.classes:
            raise ValueError("at least one residue class required")
        norm = tuple(a % self.modulus if self.modulus > 1 else 1 for a in self.classes)
        if len(set(norm)) != len(norm):
            raise ValueError("race classes must be pairwise distinct")
        for a in norm:
            if self.modulus > 1 and math.gcd(a, self.modulus) != 1:
                raise ValueError(f"class {a} is not reduced mod {self.modulus}")
        object.__setattr__(self, "classes", norm)

    @property
    def r(self) -> int:
        return len(self.classes)


@dataclass
class TieStats:
    """Tie measures for one unordered pair, over x in [2, x_max]."""

    pair: tuple
    integer_count: int = 0
    real_measure: float = 0.0
    log_measure: float = 0.0
    per_decade: dict = field(default_factory=dict)


@dataclass
class ScanReport:
    spec: RaceSpec
    x_max: float
    baseline: Optional[str]
    final_counts: dict
    sign_changes: list  # (x, ordering_before, ordering_after), capped
    sign_change_total: int
    first_crossings: dict  # ordered pair -> least x where it leads after trailing, or None
    ties: dict  # unordered pair -> TieStats
    densities: dict  # natural/logarithmic per strict ordering + tie shares

    def density_vector_sum(self, kind: str = "natural") -> float:
        d = self.densities[kind]
        return math.fsum(list(d.values()) + [self.densities[f"tie_{kind}"]])

    def to_dict(self) -> dict:
        def okey(t):
            return ">".join(str(c) for c in t)

        return {
            "schema_version": 1,
            "modulus": self.spec.modulus,
            "classes": list(self.spec.classes),
            "weight": self.spec.weight,
            "baseline": self.baseline,
            "x_max": self.x_max,
            "final_counts": {str(k): v for k, v in self.final_counts.items()},
            "sign_change_total": self.sign_change_total,
            "sign_changes": [
                {"x": x, "before": okey(b), "after": okey(a)} for x, b, a in self.sign_changes
            ],
            "first_crossings": {f"{i}>{j}": x for (i, j), x in self.first_crossings.items()},
            "ties": {
                f"{i}={j}": {
                    "integer_count": t.integer_count,
                    "real_measure": t.real_measure,
                    "log_measure": t.log_measure,
                    "per_decade": {str(k): v for k, v in sorted(t.per_decade.items())},
                }
                for (i, j), t in self.ties.items()
            },
            "densities": {
                "natural": {okey(o): v for o, v in sorted(self.densities["natural"].items())},
                "logarithmic": {
                    okey(o): v for o, v in sorted(self.densities["logarithmic"].items())
                },
                "tie_natural": self.densities["tie_natural"],
                "tie_logarithmic": self.densities["tie_logarithmic"],
            },
        }


def _perm_code(counts: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordering code per row plus strictness mask; ties share the bucket r**r."""
    order = np.argsort(-counts, axis=1, kind="stable")
    srt = np.take_along_axis(counts, order, axis=1)
    strict = np.all(srt[:, :-1] > srt[:, 1:], axis=1)
    code = np.zeros(counts.shape[0], dtype=np.int64)
    for i in range(r):
        code = code * r + order[:, i]
    code[~strict] = r**r
    return code, strict


def _decades(lo: float, hi: float):
    k = max(0, int(math.floor(math.log10(max(lo, 1.0)))))
    while 10.0**k < hi:
        yield k, 10.0**k, 10.0 ** (k + 1)
        k += 1


class RaceScan:
    """Streaming race scan over prime segments with checkpointable state.

    Counts change only at primes, so orderings are evaluated on the constant
    intervals between breakpoints, giving exact real/integer tie measures and
    natural/logarithmic ordering densities.
    """

    def __init__(self, spec: RaceSpec, x_max: float, segment: int = DEFAULT_SEGMENT):
        if spec.r < 2:
            raise ValueError("plain race needs at least two classes")
        if x_max < 2:
            raise ValueError("x_max must be at least 2")
        self.spec = spec
        self.x_max = float(x_max)
        self.segment = segment
        r = spec.r
        self.r = r
        self._codes = r**r + 1
        self.counts = np.zeros(r, dtype=np.int64 if spec.weight == "unit" else np.float64)
        self.open_x = 2.0
        self.next_lo = 2
        self.nat = np.zeros(self._codes)
        self.logm = np.zeros(self._codes)
        self.pairs = [(i, j) for i in range(r) for j in range(i + 1, r)]
        self.tie_int = {p: 0 for p in self.pairs}
        self.tie_real = {p: 0.0 for p in self.pairs}
        self.tie_log = {p: 0.0 for p in self.pairs}
        self.tie_dec: dict = {p: {} for p in self.pairs}
        self.last_strict = -1
        self.sign_changes: list = []
        self.sign_total = 0
        self.behind = {}
        self.crossing = {}
        for i in range(r):
            for j in range(r):
                if i != j:
                    self.behind[(i, j)] = False
                    self.crossing[(i, j)] = None

    def _weight(self, primes: np.ndarray) -> np.ndarray:
        if self.spec.weight == "unit":
            return np.ones(primes.size, dtype=np.int64)
        if self.spec.weight == "log":
            return np.log(primes)
        return 1.0 / np.sqrt(primes)

    def consume(self, primes: np.ndarray, seg_lo: int, seg_hi: int) -> None:
        boundary = min(float(seg_hi), self.x_max)
        int_boundary = float(min(seg_hi, int(math.floor(self.x_max)) + 1))
        primes = primes[primes <= self.x_max]
        w = self._weight(primes)
        res = primes % self.spec.modulus
        inc = np.zeros((primes.size, self.r), dtype=self.counts.dtype)
        for i, a in enumerate(self.spec.classes):
            np.copyto(inc[:, i], np.where(res == a, w, 0))
        mat = np.empty((primes.size + 1, self.r), dtype=self.counts.dtype)
        mat[0] = self.counts
        if primes.size:
            mat[1:] = self.counts + np.cumsum(inc, axis=0)
        bps = np.concatenate(([self.open_x], primes.astype(np.float64), [boundary]))
        ibps = np.concatenate(([self.open_x], primes.astype(np.float64), [int_boundary]))
        self._flush_intervals(mat, bps, ibps)
        self._update_crossings(mat, primes)
        self.counts = mat[-1].copy()
        self.open_x = boundary
        self.next_lo = seg_hi

    def _flush_intervals(self, mat: np.ndarray, bps: np.ndarray, ibps: np.ndarray) -> None:
        lengths = np.diff(bps)
        ilengths = np.diff(ibps)
        loglen = np.diff(np.log(bps))
        code, strict = _perm_code(np.asarray(mat, dtype=np.float64), self.r)
        np.add.at(self.nat, code, lengths)
        np.add.at(self.logm, code, loglen)
        for (i, j) in self.pairs:
            eq = mat[:, i] == mat[:, j]
            if np.any(eq):
                self.tie_real[(i, j)] += float(lengths[eq].sum())
                self.tie_log[(i, j)] += float(loglen[eq].sum())
                self.tie_int[(i, j)] += int(round(float(ilengths[eq].sum())))
                s, e = bps[:-1][eq], ibps[1:][eq]
                for k, a, b in _decades(float(bps[0]), float(ibps[-1])):
                    ov = np.clip(np.minimum(e, b) - np.maximum(s, a), 0, None)
                    tot = int(round(float(ov.sum())))
                    if tot:
                        self.tie_dec[(i, j)][k] = self.tie_dec[(i, j)].get(k, 0) + tot
        idx = np.flatnonzero(strict)
        if idx.size:
            codes = code[idx]
            prev = np.concatenate(([self.last_strict], codes[:-1]))
            changed = np.flatnonzero((codes != prev) & (prev != -1))
            self.sign_total += int(changed.size)
            room = MAX_SIGN_EVENTS - len(self.sign_changes)
            for t in changed[: max(room, 0)]:
                k = int(idx[t])
                self.sign_changes.append(
                    (float(bps[k]), self._decode(int(prev[t])), self._decode(int(codes[t])))
                )
            self.last_strict = int(codes[-1])

    def _decode(self, code: int) -> tuple:
        digits = []
        for _ in range(self.r):
            digits.append(code % self.r)
            code //= self.r
        return tuple(self.spec.classes[d] for d in reversed(digits))

    def _update_crossings(self, mat: np.ndarray, primes: np.ndarray) -> None:
        for (i, j) in self.pairs:
            for (a, b) in ((i, j), (j, i)):
                if self.crossing[(a, b)] is not None:
                    continue
                D = mat[:, a] - mat[:, b]
                pos = 0
                if not self.behind[(a, b)]:
                    neg = D < 0
                    if not neg.any():
                        continue
                    pos = int(np.argmax(neg))
                    self.behind[(a, b)] = True
                lead = D[pos:] > 0
                if lead.any():
                    row = pos + int(np.argmax(lead))
                    if row >= 1:  # row 0 is the carried-in state, never a new lead
                        self.crossing[(a, b)] = int(primes[row - 1])

    def run(self, workers: int = 1, progress=None, on_segment=None) -> ScanReport:
        hi = int(math.floor(self.x_max)) + 1
        if self.next_lo < hi:
            w = Window(self.next_lo, hi)
            for seg_lo, seg_hi, block in _pooled_blocks(w, self.segment, workers):
                self.consume(block, seg_lo, seg_hi)
                if progress is not None:
                    progress(seg_hi)
                if on_segment is not None:
                    on_segment(self, seg_hi)
        return self.report()

    def report(self) -> ScanReport:
        classes = self.spec.classes
        total = self.x_max - 2.0
        logtotal = math.log(self.x_max / 2.0)
        nat, logd = {}, {}
        for code in range(self._codes - 1):
            if self.nat[code] or self.logm[code]:
                o = self._decode(code)
                nat[o] = self.nat[code] / total
                logd[o] = self.logm[code] / logtotal
        fc = {(classes[a], classes[b]): x for (a, b), x in self.crossing.items()}
        ties = {
            (classes[i], classes[j]): TieStats(
                (classes[i], classes[j]),
                self.tie_int[(i, j)],
                self.tie_real[(i, j)],
                self.tie_log[(i, j)],
                self.tie_dec[(i, j)],
            )
            for (i, j) in self.pairs
        }
        counts = {
            classes[i]: (int(self.counts[i]) if self.spec.weight == "unit"
                         else float(self.counts[i]))
            for i in range(self.r)
        }
        return ScanReport(
            spec=self.spec,
            x_max=self.x_max,
            baseline=None,
            final_counts=counts,
            sign_changes=self.sign_changes,
            sign_change_total=self.sign_total,
            first_crossings=fc,
            ties=ties,
            densities={
                "natural": nat,
                "logarithmic": logd,
                "tie_natural": float(self.nat[-1]) / total,
                "tie_logarithmic": float(self.logm[-1]) / logtotal,
            },
        )

    # -- checkpoint state, floats as hex for bit-exact resume ----------------

    def state(self) -> dict:
        fx = float.hex
        return {
            "next_lo": self.next_lo,
            "open_x": fx(self.open_x),
            "counts": [fx(float(c)) for c in self.counts],
            "nat": [fx(float(v)) for v in self.nat],
            "logm": [fx(float(v)) for v in self.logm],
            "tie_int": [self.tie_int[p] for p in self.pairs],
            "tie_real": [fx(self.tie_real[p]) for p in self.pairs],
            "tie_log": [fx(self.tie_log[p]) for p in self.pairs],
            "tie_dec": [sorted(self.tie_dec[p].items()) for p in self.pairs],
            "last_strict": self.last_strict,
            "sign_total": self.sign_total,
            "sign_changes": [[fx(x), list(b), list(a)] for x, b, a in self.sign_changes],
            "behind": [[list(k), v] for k, v in sorted(self.behind.items())],
            "crossing": [[list(k), v] for k, v in sorted(self.crossing.items())],
        }

    def restore(self, st: dict) -> None:
        fh = float.fromhex
        self.next_lo = int(st["next_lo"])
        self.open_x = fh(st["open_x"])
        vals = [fh(c) for c in st["counts"]]
        self.counts = (np.array([int(v) for v in vals], dtype=np.int64)
                       if self.spec.weight == "unit" else np.array(vals))
        self.nat = np.array([fh(v) for v in st["nat"]])
        self.logm = np.array([fh(v) for v in st["logm"]])
        for p, v in zip(self.pairs, st["tie_int"]):
            self.tie_int[p] = int(v)
        for p, v in zip(self.pairs, st["tie_real"]):
            self.tie_real[p] = fh(v)
        for p, v in zip(self.pairs, st["tie_log"]):
            self.tie_log[p] = fh(v)
        for p, items in zip(self.pairs, st["tie_dec"]):
            self.tie_dec[p] = {int(k): int(v) for k, v in items}
        self.last_strict = int(st["last_strict"])
        self.sign_total = int(st["sign_total"])
        self.sign_changes = [(fh(x), tuple(b), tuple(a)) for x, b, a in st["sign_changes"]]
        for k, v in st["behind"]:
            self.behind[tuple(k)] = bool(v)
        for k, v in st["crossing"]:
            self.crossing[tuple(k)] = v


def _pooled_blocks(w: Window, segment: int, workers: int):
    """Yield (seg_lo, seg_hi, primes) in window order, optionally via a pool.

    Per-window output is deterministic, so the merged stream is identical for
    any worker count.
    """
    segs = list(w.split(segment))
    if workers <= 1 or len(segs) <= 1:
        for seg in segs:
            yield seg.lo, seg.hi, _sieve_worker((seg.lo, seg.hi))
        return
    from concurrent.futures import ProcessPoolExecutor

    args = [(seg.lo, seg.hi) for seg in segs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for (lo, hi), block in zip(args, pool.map(_sieve_worker, args)):
            yield lo, hi, block


def _sieve_worker(arg: tuple) -> np.ndarray:
    from .factor_sieve import _sieve_segment

    lo, hi = arg
    bases = base_primes(math.isqrt(hi - 1) + 1)
    mask = _sieve_segment(lo, hi, bases)
    return np.flatnonzero(mask).astype(np.int64) + lo


class BaselineScan:
    """One class against li(x)/phi(q) (pi vs li when q=1), or its equal share.

    The li comparison function increases continuously, so the class can only
    take the lead at a prime and can only lose it at an interior point where
    li catches up; those points are located by inverting li.
    """

    def __init__(self, spec: RaceSpec, x_max: float, baseline: str,
                 segment: int = DEFAULT_SEGMENT):
        if spec.r != 1:
            raise ValueError("baseline scans compare exactly one class")
        if spec.weight != "unit":
            raise ValueError("baseline scans support unit weight only")
        if baseline not in ("li", "equal-share"):
            raise ValueError("baseline must be 'li' or 'equal-share'")
        if baseline == "equal-share" and spec.modulus == 1:
            raise ValueError("equal-share baseline needs a modulus > 1")
        if x_max < 2:
            raise ValueError("x_max must be at least 2")
        self.spec = spec
        self.baseline = baseline
        self.x_max = float(x_max)
        self.segment = segment
        self.phi = euler_phi(spec.modulus) if spec.modulus > 1 else 1
        self.count = 0
        self.other = 0  # equal-share only: all reduced primes
        self.open_x = 2.0
        self.next_lo = 2
        self.nat = {">": 0.0, "<": 0.0, "=": 0.0}
        self.logm = {">": 0.0, "<": 0.0, "=": 0.0}
        self.tie = TieStats((spec.classes[0], baseline))
        self.last_sign = 0
        self.sign_changes: list = []
        self.sign_total = 0
        self.behind_class = False
        self.behind_base = False
        self.crossing_class = None
        self.crossing_base = None

    def _event(self, x: float, new_sign: int) -> None:
        a = self.spec.classes[0]
        lead = (a, self.baseline)
        trail = (self.baseline, a)
        before, after = (trail, lead) if new_sign > 0 else (lead, trail)
        self.sign_total += 1
        if len(self.sign_changes) < MAX_SIGN_EVENTS:
            self.sign_changes.append((x, before, after))

    def consume(self, primes: np.ndarray, seg_lo: int, seg_hi: int) -> None:
        if self.baseline == "equal-share":
            self._consume_equal_share(primes, seg_lo, seg_hi)
            return
        boundary = min(float(seg_hi), self.x_max)
        primes = primes[primes <= self.x_max]
        a = self.spec.classes[0]
        hits = primes if self.spec.modulus == 1 else primes[primes % self.spec.modulus == a]
        bps = np.concatenate(([self.open_x], hits.astype(np.float64), [boundary]))
        counts = self.count + np.arange(hits.size + 1, dtype=np.int64)
        base = _li_vec(bps) / self.phi
        d_left = counts - base[:-1]
        d_right = counts - base[1:]
        sl = np.sign(d_left).astype(np.int64)
        sl[sl == 0] = -1  # the zero is instantaneous; li pulls ahead inside
        interior = (d_left > 0) & (d_right < 0)
        lengths = np.diff(bps)
        loglen = np.diff(np.log(bps))
        plain = ~interior
        pos = plain & (sl > 0)
        neg = plain & (sl < 0)
        self.nat[">"] += float(lengths[pos].sum())
        self.nat["<"] += float(lengths[neg].sum())
        self.logm[">"] += float(loglen[pos].sum())
        self.logm["<"] += float(loglen[neg].sum())
        # events: class takes the lead only at primes (jump up), loses it only
        # at interior points where li crosses the count level
        flips_up = np.flatnonzero(sl[1:] > 0) + 1  # candidate rows at primes
        event_rows = []
        for k in flips_up.tolist():
            if sl[k - 1] < 0 or interior[k - 1]:
                event_rows.append(k)
        cross_ts = []
        for k in np.flatnonzero(interior).tolist():
            t = li_inverse(float(counts[k]) * self.phi, float(0.5 * (bps[k] + bps[k + 1])))
            t = min(max(t, float(bps[k])), float(bps[k + 1]))
            s, e = float(bps[k]), float(bps[k + 1])
            self.nat[">"] += t - s
            self.nat["<"] += e - t
            self.logm[">"] += math.log(t / s)
            self.logm["<"] += math.log(e / t)
            cross_ts.append((t, k))
        events = sorted(
            [(float(bps[k]), 1, k) for k in event_rows] + [(t, -1, k) for t, k in cross_ts]
        )
        for x, sgn, _ in events:
            if self.last_sign != 0 and sgn != self.last_sign:
                self._event(x, sgn)
            if sgn > 0:
                if self.behind_class and self.crossing_class is None:
                    self.crossing_class = x
            else:
                self.behind_class = True
                if self.behind_base and self.crossing_base is None:
                    self.crossing_base = x
            self.last_sign = sgn
        if self.last_sign == 0 and sl.size:
            self.last_sign = int(sl[-1] if not interior[-1] else -1)
        if sl.size and np.any(sl < 0):
            self.behind_class = True
        if sl.size and np.any(sl > 0):
            self.behind_base = True
        self.count = int(counts[-1])
        self.open_x = boundary
        self.next_lo = seg_hi

    def _consume_equal_share(self, primes: np.ndarray, seg_lo: int, seg_hi: int) -> None:
        boundary = min(float(seg_hi), self.x_max)
        int_boundary = float(min(seg_hi, int(math.floor(self.x_max)) + 1))
        primes = primes[primes <= self.x_max]
        a = self.spec.classes[0]
        q = self.spec.modulus
        res = primes % q
        coprime_table = np.array([math.gcd(r, q) == 1 for r in range(q)])
        primes = primes[coprime_table[res]]
        res = primes % q
        inc0 = np.where(res == a, self.phi, 0).astype(np.int64)
        c0 = self.count + np.concatenate(([0], np.cumsum(inc0)))
        c1 = self.other + np.arange(primes.size + 1, dtype=np.int64)
        bps = np.concatenate(([self.open_x], primes.astype(np.float64), [boundary]))
        ibps = np.concatenate(([self.open_x], primes.astype(np.float64), [int_boundary]))
        D = c0 - c1
        lengths = np.diff(bps)
        ilengths = np.diff(ibps)
        loglen = np.diff(np.log(bps))
        s = np.sign(D)
        for key, v in ((">", 1), ("<", -1), ("=", 0)):
            m = s == v
            self.nat[key] += float(lengths[m].sum())
            self.logm[key] += float(loglen[m].sum())
        eq = s == 0
        self.tie.real_measure += float(lengths[eq].sum())
        self.tie.log_measure += float(loglen[eq].sum())
        self.tie.integer_count += int(round(float(ilengths[eq].sum())))
        for k, lo_d, hi_d in _decades(float(bps[0]), float(ibps[-1])):
            ov = np.clip(np.minimum(ibps[1:][eq], hi_d) - np.maximum(bps[:-1][eq], lo_d),
                         0, None)
            tot = int(round(float(ov.sum())))
            if tot:
                self.tie.per_decade[k] = self.tie.per_decade.get(k, 0) + tot
        nz = np.flatnonzero(s)
        if nz.size:
            seq = s[nz]
            prev = np.concatenate(([self.last_sign], seq[:-1]))
            flips = np.flatnonzero((seq != prev) & (prev != 0))
            for t in flips.tolist():
                self._event(float(bps[nz[t]]), int(seq[t]))
            self.last_sign = int(seq[-1])
        # first crossings on the exact integer difference
        for want, name in ((1, "class"), (-1, "base")):
            if getattr(self, f"crossing_{name}") is not None:
                continue
            pos = 0
            if not getattr(self, f"behind_{name}"):
                behind = D == -want if want == 1 else D == -want
                behind = (D * want) < 0
                if not behind.any():
                    continue
                pos = int(np.argmax(behind))
                setattr(self, f"behind_{name}", True)
            lead = (D[pos:] * want) > 0
            if lead.any():
                row = pos + int(np.argmax(lead))
                if row >= 1:
                    setattr(self, f"crossing_{name}", float(primes[row - 1]))
        self.count = int(c0[-1])
        self.other = int(c1[-1])
        self.open_x = boundary
        self.next_lo = seg_hi

    def run(self, workers: int = 1, progress=None, on_segment=None) -> ScanReport:
        hi = int(math.floor(self.x_max)) + 1
        if self.next_lo < hi:
            w = Window(self.next_lo, hi)
            for seg_lo, seg_hi, block in _pooled_blocks(w, self.segment, workers):
                self.consume(block, seg_lo, seg_hi)
                if progress is not None:
                    progress(seg_hi)
                if on_segment is not None:
                    on_segment(self, seg_hi)
        return self.report()

    def report(self) -> ScanReport:
        a = self.spec.classes[0]
        base = self.baseline
        total = self.x_max - 2.0
        logtotal = math.log(self.x_max / 2.0)
        final = {a: self.count}
        if base == "equal-share":
            final["reduced_total"] = self.other
        return ScanReport(
            spec=self.spec,
            x_max=self.x_max,
            baseline=base,
            final_counts=final,
            sign_changes=self.sign_changes,
            sign_change_total=self.sign_total,
            first_crossings={(a, base): self.crossing_class, (base, a): self.crossing_base},
            ties={(a, base): self.tie},
            densities={
                "natural": {(a, base): self.nat[">"] / total,
                            (base, a): self.nat["<"] / total},
                "logarithmic": {(a, base): self.logm[">"] / logtotal,
                                (base, a): self.logm["<"] / logtotal},
                "tie_natural": self.nat["="] / total,
                "tie_logarithmic": self.logm["="] / logtotal,
            },
        )


def race_scan(spec: RaceSpec, x_max: float, baseline: Optional[str] = None, *,
              segment: int = DEFAULT_SEGMENT, workers: int = 1,
              progress=None, on_segment=None) -> ScanReport:
    """Single streaming pass over primes up to x_max; see RaceScan/BaselineScan."""
    if baseline is None:
        scan = RaceScan(spec, x_max, segment)
    else:
        scan = BaselineScan(spec, x_max, baseline, segment)
    return scan.run(workers=workers, progress=progress, on_segment=on_segment)


# ---------------------------------------------------------------------------
# Koyama-style inverse-sqrt weighted bias
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedBias:
    value: float
    half_loglog: float


def weighted_bias(q: int, a: int, b: int, x: float,
                  segment: int = DEFAULT_SEGMENT) -> WeightedBias:
    """sum_{p<=x, p=a(q)} 1/sqrt(p) minus the same for b, with 0.5 log log x."""
    for c in (a, b):
        if math.gcd(c, q) != 1:
            raise ValueError(f"class {c} not reduced mod {q}")
    if x < 2:
        return WeightedBias(0.0, 0.0)
    pa: list[float] = []
    pb: list[float] = []
    for block in prime_blocks(Window(2, int(math.floor(x)) + 1), segment):
        res = block % q
        pa.append(math.fsum(1.0 / np.sqrt(block[res == a % q])))
        pb.append(math.fsum(1.0 / np.sqrt(block[res == b % q])))
    value = math.fsum(pa) - math.fsum(pb)
    return WeightedBias(value, 0.5 * math.log(math.log(x)) if x > 1 else 0.0)


# ---------------------------------------------------------------------------
# Averaged race integral
# ---------------------------------------------------------------------------


def _int_li(x: float, lower: float) -> float:
    """Integral of li(t) dt from `lower` to x via t*li(t) - li(t^2)."""
    head = x * li(x) - li(x * x)
    if lower == 0.0:
        return head  # principal value through the t=1 singularity
    return head - (lower * li(lower) - li(lower * lower))


def averaged_race_integral(x: float, q: int = 1, a: Optional[int] = None, *,
                           lower: float = 2.0,
                           segment: int = DEFAULT_SEGMENT) -> float:
    """Integral from `lower` to x of (phi(q) pi(t;q,a) - li(t)) dt; pi vs li when q=1.

    The step-function part integrates exactly (integer prime sums); the li part
    uses the closed-form antiderivative.  The default lower limit 2 makes the
    all-x negativity criterion sharp; lower=0 gives the principal-value variant
    (the pi part vanishes below 2 either way).
    """
    if x < 2:
        raise ValueError("x must be at least 2")
    if lower not in (0.0, 2.0):
        raise ValueError("lower limit must be 0 or 2")
    if q > 1:
        if a is None or math.gcd(a, q) != 1:
            raise ValueError("a must be a reduced class mod q")
        phi = euler_phi(q)
    else:
        phi = 1
    n = int(math.floor(x))
    count = 0
    psum = 0
    for block in prime_blocks(Window(2, n + 1), segment):
        if q > 1:
            block = block[block % q == a % q]
        count += int(block.size)
        psum += int(block.sum())
    pi_part = phi * (x * count - psum)
    return pi_part - _int_li(x, lower)


def a1_pi_negative_on(x_max: float, segment: int = DEFAULT_SEGMENT) -> dict:
    """Certify that int_2^x (pi - li) dt < 0 for every x in (2, x_max].

    The derivative of the integral is pi(t) - li(t); if pi stays strictly
    below li across the range, the integral decreases from 0 at x = 2 and the
    predicate holds everywhere, no sampling needed.
    """
    n = int(math.floor(x_max))
    count = 0
    min_margin = math.inf
    argmin = 2.0
    for block in prime_blocks(Window(2, n + 1), segment):
        livals = _li_vec(block.astype(np.float64))
        counts = count + np.arange(1, block.size + 1)
        margins = livals - counts  # li(p) - pi(p) at each prime, the interval minimum
        k = int(np.argmin(margins))
        if float(margins[k]) < min_margin:
            min_margin = float(margins[k])
            argmin = float(block[k])
        count += int(block.size)
    value_end = averaged_race_integral(x_max, segment=segment)
    return {
        "pi_below_li_everywhere": bool(min_margin > 0),
        "min_li_minus_pi": min_margin,
        "argmin": argmin,
        "value_at_end": value_end,
        "negative_on_range": bool(min_margin > 0 and value_end < 0),
    }


# ---------------------------------------------------------------------------
# Friedlander-Iwaniec style form prime counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryQuadraticForm:
    """Primitive positive definite form A u^2 + B u v + C v^2."""

    A: int
    B: int
    C: int

    def __post_init__(self) -> None:
        if math.gcd(math.gcd(self.A, self.B), self.C) != 1:
            raise ValueError("form must be primitive")
        if self.discriminant >= 0 or self.A <= 0:
            raise ValueError("form must be positive definite (D < 0, A > 0)")
        # f(u,1) == u(u+1) mod 2 as a function would trap all odd values
        if self.C % 2 == 0 and (self.A + self.B + self.C) % 2 == 0:
            raise ValueError("f(u,1) must not be congruent to u(u+1) mod 2")

    @property
    def discriminant(self) -> int:
        return self.B * self.B - 4 * self.A * self.C

    def __call__(self, u, v):
        return self.A * u * u + self.B * u * v + self.C * v * v


_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime_u64(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n below 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    s = (d & -d).bit_length() - 1
    d >>= s
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def count_form_primes(f: BinaryQuadraticForm, x: float) -> int:
    """Distinct primes p <= x representable as f(a, b^2)."""
    if x > 1e12:
        raise ValueError("x beyond the supported enumeration range")
    limit = int(math.floor(x))
    if limit < 2:
        return 0
    small = base_primes(997)
    found: list[np.ndarray] = []
    A, B, C = f.A, f.B, f.C
    b = 0
    while True:
        v = b * b
        if (4 * A * C - B * B) * v * v > 4 * A * limit:  # min over a exceeds limit
            break
        rad = math.isqrt(max(B * B * v * v - 4 * A * (C * v * v - limit), 0))
        a_lo = (-B * v - rad) // (2 * A) - 1
        a_hi = (-B * v + rad) // (2 * A) + 2
        a = np.arange(a_lo, a_hi, dtype=np.int64)
        vals = A * a * a + (B * v) * a + C * v * v
        vals = vals[(vals >= 2) & (vals <= limit)]
        if vals.size:
            keep = np.ones(vals.size, dtype=bool)
            for p in small.tolist():
                keep &= (vals % p != 0) | (vals == p)
            cand = np.unique(vals[keep])
            mask = np.fromiter((is_prime_u64(int(m)) for m in cand), dtype=bool,
                               count=cand.size)
            found.append(cand[mask])
        b += 1
    if not found:
        return 0
    return int(np.unique(np.concatenate(found)).size)


# ---------------------------------------------------------------------------
# Sign-change counting for sampled error terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignChanges:
    count: int
    locations: np.ndarray
    per_log: float
    kaczorowski: float  # gamma_1 / pi comparison value


def sign_change_count(xs, values, T: Optional[float] = None) -> SignChanges:
    """Sign changes of a sampled series on [2, T]; zeros do not reset the sign.

    A change is counted only when strictly opposite signs are attained, which
    makes the count invariant under positive rescaling of the series.
    """
    xs = np.asarray(xs, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if xs.size == 0:
        return SignChanges(0, np.empty(0), 0.0, GAMMA1 / math.pi)
    if T is None:
        T = float(xs[-1])
    m = (xs >= 2) & (xs <= T)
    xs, vals = xs[m], vals[m]
    s = np.sign(vals)
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return SignChanges(0, np.empty(0), 0.0, GAMMA1 / math.pi)
    seq = s[nz]
    flips = np.flatnonzero(seq[1:] != seq[:-1]) + 1
    locs = xs[nz[flips]]
    per_log = flips.size / math.log(T) if T > 1 else 0.0
    return SignChanges(int(flips.size), locs, per_log, GAMMA1 / math.pi)
