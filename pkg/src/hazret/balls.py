"""Interval maps, metric balls and their cylinder approximations.

Two maps carry an exact invariant measure: the doubling map with Lebesgue
measure and the Gauss map with density ``1 / (ln 2 (1 + x))``.  Points are
represented symbolically (binary digits or continued-fraction digits), so
orbits are the symbol streams of :mod:`hazret.measures` and ``T^k x`` is read
off a window of the stream.  Balls are half-open, ``B_r(x) = [x - r, x + r)``,
and partition cells are half-open too; boundaries carry no mass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import CylinderUnion
from .geolaw import TVInterval, tv_to_geometric
from .measures import (LN2, GaussDigitModel, IIDModel, _convergents, _gauss_interval,
                       path_generator)
from .montecarlo import SimulationResult, mc_noise, run_paths, summarize

log = logging.getLogger(__name__)

DOUBLING = "doubling"
GAUSS = "gauss"
MAX_CELLS = 2_000_000
BITS = 53
CF_DEPTH = 32
GOLDEN = (1 + math.sqrt(5)) / 2


class IntervalMap:
    """The doubling or Gauss map together with its invariant measure."""

    def __init__(self, kind: str, digit_cap: int = 64):
        if kind not in (DOUBLING, GAUSS):
            raise ValueError(f"unknown map {kind!r}")
        self.kind = kind
        self.digit_cap = int(digit_cap)
        self.symbolic = IIDModel([0.5, 0.5]) if kind == DOUBLING else GaussDigitModel(digit_cap)

    @property
    def diameter_rate(self) -> float:
        """Exponential decay rate of the largest ``n``-cell diameter."""
        return LN2 if self.kind == DOUBLING else 2.0 * math.log(GOLDEN)

    def measure(self, lo, hi) -> float:
        """Invariant measure of ``[lo, hi)`` intersected with ``[0, 1)``.

        Rational endpoints (``Fraction``) are evaluated exactly.
        """
        lo, hi = max(Fraction(lo), Fraction(0)), min(Fraction(hi), Fraction(1))
        if hi <= lo:
            return 0.0
        if self.kind == DOUBLING:
            return float(hi - lo)
        return _gauss_interval(lo.numerator, lo.denominator, hi.numerator, hi.denominator)

    def step(self, x: float) -> float:
        if self.kind == DOUBLING:
            return (2.0 * x) % 1.0
        return (1.0 / x) % 1.0 if x > 0 else 0.0

    def __repr__(self):
        return f"IntervalMap({self.kind!r})"


def interval_map(spec) -> IntervalMap:
    if isinstance(spec, IntervalMap):
        return spec
    if isinstance(spec, dict):
        return IntervalMap(spec["kind"], spec.get("digit_cap", 64))
    return IntervalMap(spec)


class IntervalUnion:
    """Finite union of half-open intervals with rational endpoints."""

    def __init__(self, intervals=()):
        iv = sorted((Fraction(a), Fraction(b)) for a, b in intervals if Fraction(b) > Fraction(a))
        merged = []
        for a, b in iv:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self.intervals = merged

    def __bool__(self):
        return bool(self.intervals)

    def __repr__(self):
        return "IntervalUnion(" + ", ".join(f"[{float(a):.6g}, {float(b):.6g})" for a, b in self.intervals) + ")"

    def measure(self, imap: IntervalMap) -> float:
        return math.fsum(imap.measure(a, b) for a, b in self.intervals)

    def issubset(self, other: "IntervalUnion") -> bool:
        return all(any(c <= a and b <= d for c, d in other.intervals) for a, b in self.intervals)

    def minus(self, other: "IntervalUnion") -> "IntervalUnion":
        out = []
        for a, b in self.intervals:
            pieces = [(a, b)]
            for c, d in other.intervals:
                nxt = []
                for s, e in pieces:
                    if d <= s or e <= c:
                        nxt.append((s, e))
                        continue
                    if s < c:
                        nxt.append((s, c))
                    if d < e:
                        nxt.append((d, e))
                pieces = nxt
            out.extend(pieces)
        return IntervalUnion(out)


def ball(x: float, r: float) -> IntervalUnion:
    """``B_r(x) = [x - r, x + r)`` intersected with ``[0, 1)``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    lo = max(Fraction(x) - Fraction(r), Fraction(0))
    hi = min(Fraction(x) + Fraction(r), Fraction(1))
    return IntervalUnion([(lo, hi)])


@dataclass
class Partition:
    intervals: list          # (lo, hi) pairs as Fractions, increasing
    words: list              # symbol words of the cells
    max_diameter: float
    uncovered_mass: float    # mass of cells with a digit above the cap (Gauss)


def partition_level(imap, n: int, digit_cap: Optional[int] = None) -> Partition:
    """The ``n``-th join of the natural partition as ordered half-open cells.

    Gauss cells are limited to digits ``<= digit_cap`` (default: the map's
    cap); the mass they leave out is reported.
    """
    imap = interval_map(imap)
    if n < 1:
        raise ValueError("n must be >= 1")
    if imap.kind == DOUBLING:
        if 2 ** n > MAX_CELLS:
            raise ValueError(f"2^{n} cells exceed the guard {MAX_CELLS}")
        N = 2 ** n
        iv = [(Fraction(j, N), Fraction(j + 1, N)) for j in range(N)]
        words = [tuple((j >> (n - 1 - i)) & 1 for i in range(n)) for j in range(N)]
        return Partition(iv, words, 1.0 / N, 0.0)
    cap = imap.digit_cap if digit_cap is None else int(digit_cap)
    if cap ** n > MAX_CELLS:
        raise ValueError(f"{cap}^{n} cells exceed the guard {MAX_CELLS}")
    cells = []
    stack = [((), (0, 1, 1, 0))]
    while stack:
        w, (p, q, pp, qq) = stack.pop()
        if len(w) == n:
            a, b = Fraction(p, q), Fraction(p + pp, q + qq)
            cells.append((min(a, b), max(a, b), tuple(d - 1 for d in w)))
            continue
        for d in range(1, cap + 1):
            stack.append((w + (d,), (d * p + pp, d * q + qq, p, q)))
    cells.sort()
    covered = math.fsum(imap.measure(a, b) for a, b, _ in cells)
    diam = max(float(b - a) for a, b, _ in cells)
    return Partition([(a, b) for a, b, _ in cells], [w for _, _, w in cells], diam,
                     max(0.0, 1.0 - covered))


def _classify(a, b, lo, hi):
    if b <= lo or hi <= a:
        return "out"
    if lo <= a and b <= hi:
        return "in"
    return "partial"


def _approx(imap: IntervalMap, x: float, r: float, k: int, max_children: int = 100_000):
    if k < 1:
        raise ValueError("k must be >= 1")
    (lo, hi), = ball(x, r).intervals
    if imap.kind == DOUBLING:
        N = 2 ** k
        first_in = math.ceil(lo * N)
        last_in = math.floor(hi * N) - 1
        first_meet = math.floor(lo * N)
        last_meet = math.ceil(hi * N) - 1
        minus = [(Fraction(first_in, N), Fraction(last_in + 1, N))] if last_in >= first_in else []
        plus = [(Fraction(max(first_meet, 0), N), Fraction(min(last_meet, N - 1) + 1, N))]
        return IntervalUnion(minus), IntervalUnion(plus)
    minus, plus = [], []

    def ends(p, q, s, t):
        u, v = Fraction(p, q), Fraction(s, t)
        return (u, v) if u < v else (v, u)

    def visit(state, d):
        p, q, pp, qq = state
        a_, b_ = ends(p, q, p + pp, q + qq)
        c = _classify(a_, b_, lo, hi)
        if c == "out":
            return
        if c == "in":
            minus.append((a_, b_))
            plus.append((a_, b_))
            return
        if d == k:
            plus.append((a_, b_))
            return
        a = 1
        while True:
            # cells with next digit >= a fill the interval between p/q and this endpoint
            ja, jb = ends(p, q, a * p + pp, a * q + qq)
            cj = _classify(ja, jb, lo, hi)
            if cj == "in":
                minus.append((ja, jb))
                plus.append((ja, jb))
                return
            if cj == "out":
                return
            if a > max_children:
                plus.append((ja, jb))
                return
            visit((a * p + pp, a * q + qq, p, q), d + 1)
            a += 1

    visit((0, 1, 1, 0), 0)
    return IntervalUnion(minus), IntervalUnion(plus)


def approx_minus(imap, x: float, r: float, k: int) -> IntervalUnion:
    """Union of the ``k``-cells contained in ``B_r(x)`` (possibly empty)."""
    return _approx(interval_map(imap), x, r, k)[0]


def approx_plus(imap, x: float, r: float, k: int) -> IntervalUnion:
    """Union of the ``k``-cells meeting ``B_r(x)``."""
    return _approx(interval_map(imap), x, r, k)[1]


@dataclass(frozen=True)
class ApproxConfig:
    """Scale ``w > 1`` with either a polynomial exponent ``p`` or an exponential ``rate``."""

    w: float
    p: Optional[float] = None
    rate: Optional[float] = None

    def __post_init__(self):
        if not self.w > 1:
            raise ValueError("w must exceed 1")
        if (self.p is None) == (self.rate is None):
            raise ValueError("give exactly one of p and rate")
        if (self.p is not None and self.p <= 0) or (self.rate is not None and self.rate <= 0):
            raise ValueError("p and rate must be positive")


def _snap(v: float) -> float:
    rv = round(v)
    return float(rv) if abs(v - rv) < 1e-9 * max(1.0, abs(v)) else v


def n_of_r(r: float, config: ApproxConfig) -> int:
    """Cylinder depth used to approximate balls of radius ``r``."""
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    if config.p is not None:
        return int(math.floor(_snap(r ** (-config.w / config.p)))) + 1
    return max(1, int(math.ceil(_snap(config.w * math.log(1.0 / r) / config.rate))))


def _check_interior(x, r):
    if not r < min(x, 1.0 - x):
        raise ValueError(f"ball of radius {r} around {x} is not interior to (0, 1)")


def balls_overlap(x, y, r, r_y=None) -> bool:
    r_y = r if r_y is None else r_y
    return abs(x - y) < r + r_y


def rho_balls(imap, x: float, y: float, r: float, r_y: Optional[float] = None,
              allow_overlap: bool = False) -> float:
    """``mu(B_{r_y}(y)) / (mu(B_r(x)) + mu(B_{r_y}(y)))`` with ``r_y = r`` by default."""
    imap = interval_map(imap)
    r_y = r if r_y is None else r_y
    _check_interior(x, r)
    _check_interior(y, r_y)
    if not allow_overlap and balls_overlap(x, y, r, r_y):
        raise ValueError("balls overlap")
    mx = ball(x, r).measure(imap)
    my = ball(y, r_y).measure(imap)
    return my / (mx + my)


class DoublingBallDetector:
    """Marks times whose point ``T^k x`` (53 binary digits) lies in either ball."""

    raw_digits = False

    def __init__(self, target: IntervalUnion, hazard: IntervalUnion):
        self.delay = BITS - 1
        self._t = [self._codes(a, b) for a, b in target.intervals]
        self._h = [self._codes(a, b) for a, b in hazard.intervals]

    @staticmethod
    def _codes(a, b):
        scale = 2 ** BITS
        return math.ceil(a * scale), math.ceil(b * scale)

    def init(self, n_paths):
        return np.zeros((self.delay, n_paths), dtype=np.int64)

    def take(self, state, idx):
        return state[:, idx]

    def scan(self, state, sym):
        ext = np.concatenate([state, sym.astype(np.int64)], axis=0)
        C = sym.shape[0]
        code = np.zeros(sym.shape, dtype=np.int64)
        for i in range(BITS):
            code <<= 1
            code |= ext[i:i + C]
        return _inside(code, self._t), _inside(code, self._h), ext[C:]


class GaussBallDetector:
    """Same for the Gauss map, evaluating ``T^k x`` from 32 continued-fraction digits."""

    raw_digits = True

    def __init__(self, target: IntervalUnion, hazard: IntervalUnion, depth: int = CF_DEPTH):
        self.delay = depth - 1
        self.depth = depth
        self._t = [(float(a), float(b)) for a, b in target.intervals]
        self._h = [(float(a), float(b)) for a, b in hazard.intervals]

    def init(self, n_paths):
        return np.ones((self.delay, n_paths))

    def take(self, state, idx):
        return state[:, idx]

    def scan(self, state, digits):
        ext = np.concatenate([state, digits.astype(float)], axis=0)
        C = digits.shape[0]
        v = np.zeros(digits.shape)
        for i in reversed(range(self.depth)):
            v = 1.0 / (ext[i:i + C] + v)
        return _inside(v, self._t), _inside(v, self._h), ext[C:]


def _inside(vals, bounds):
    out = np.zeros(vals.shape, dtype=bool)
    for a, b in bounds:
        out |= (vals >= a) & (vals < b)
    return out


def _detector(imap, target, hazard):
    if imap.kind == DOUBLING:
        return DoublingBallDetector(target, hazard)
    return GaussBallDetector(target, hazard)


def sigma_balls(imap, x: float, y: float, r: float, n_samples: int, seed: int,
                horizon: Optional[int] = None, r_y: Optional[float] = None,
                threads: int = 1) -> SimulationResult:
    """Visits to ``B_r(x)`` before the first entry to ``B_{r_y}(y)`` from invariant starts.

    Starts are distributed by the invariant measure because each orbit is the
    digit stream of a point drawn from it.
    """
    imap = interval_map(imap)
    r_y = r if r_y is None else r_y
    _check_interior(x, r)
    _check_interior(y, r_y)
    if balls_overlap(x, y, r, r_y):
        raise ValueError("balls overlap")
    bx, by = ball(x, r), ball(y, r_y)
    if horizon is None:
        horizon = int(math.ceil(50.0 / by.measure(imap)))
    det = _detector(imap, bx, by)
    return summarize(run_paths(imap.symbolic, det, n_samples, horizon, seed, threads=threads))


@dataclass
class BallRow:
    r: float
    rho: float
    tv: TVInterval
    noise: float
    censored: int
    samples: int
    pmf: object = None


def ball_experiment(imap, x: float, y: float, radii: Sequence[float], n_samples: int,
                    seed: int, r_y_factor: float = 1.0, threads: int = 1) -> list:
    """TV bracket to ``Geo(rho(x, y, r))`` for each radius of a schedule."""
    imap = interval_map(imap)
    rows = []
    for r in radii:
        ry = r * r_y_factor
        rho = rho_balls(imap, x, y, r, ry)
        sim = sigma_balls(imap, x, y, r, n_samples, seed, r_y=ry, threads=threads)
        tv = tv_to_geometric(sim.pmf, rho) if sim.pmf is not None else TVInterval(1.0, 1.0)
        rows.append(BallRow(float(r), rho, tv, mc_noise(rho, max(n_samples - sim.censored, 1)),
                            sim.censored, n_samples, sim.pmf))
    return rows


def aligned_cylinders(imap, x: float, r: float, k: int) -> Optional[CylinderUnion]:
    """Cylinder union equal to ``B_r(x)`` at depth ``k``, or ``None`` if the ball is not aligned."""
    imap = interval_map(imap)
    lo, hi = _approx(imap, x, r, k)
    if lo.intervals != hi.intervals or not lo:
        return None
    part = partition_level(imap, k)
    words = [w for (a, b), w in zip(part.intervals, part.words)
             if any(c <= a and b <= d for c, d in lo.intervals)]
    return CylinderUnion.of(words, imap.symbolic.alphabet_size)


def orbit_values(imap, length: int, seed: int, path: int = 0) -> np.ndarray:
    """``x, T x, ..., T^{length-1} x`` for the invariant start owned by ``(seed, path)``."""
    imap = interval_map(imap)
    model = imap.symbolic
    extra = BITS if imap.kind == DOUBLING else CF_DEPTH
    u = path_generator(seed, path).random(length + extra)[:, None]
    if imap.kind == DOUBLING:
        bits, _ = model.transform(u, None)
        b = bits[:, 0].astype(np.int64)
        code = np.zeros(length, dtype=np.int64)
        for i in range(BITS):
            code = (code << 1) | b[i:i + length]
        return code / float(2 ** BITS)
    digits, _ = model.digits(u, model.initial_state(1))
    d = digits[:, 0].astype(float)
    v = np.zeros(length)
    for i in reversed(range(CF_DEPTH)):
        v = 1.0 / (d[i:i + length] + v)
    return v


@dataclass
class RecurrenceEstimate:
    radii: list
    taus: list
    slope: float
    min_suffix_slope: float
    truncated: int

    def to_dict(self):
        return {"radii": self.radii, "taus": self.taus, "slope": self.slope,
                "min_suffix_slope": self.min_suffix_slope, "truncated": self.truncated}


def first_entry_times(values: np.ndarray, y: float, radii: Sequence[float]) -> list:
    """``min{k >= 1 : |values[k] - y| < r}`` for each radius, ``None`` if absent."""
    dist = np.abs(values[1:] - y)
    out = []
    for r in radii:
        hit = np.flatnonzero(dist < r)
        out.append(int(hit[0]) + 1 if hit.size else None)
    return out


def recurrence_rate_estimate(imap, radii: Sequence[float], seed: int, y: Optional[float] = None,
                             horizon: int = 1 << 22, path: int = 0) -> RecurrenceEstimate:
    """Slope of ``log tau_r`` against ``-log r`` along one orbit.

    With ``y=None`` the orbit returns to its own start (self-recurrence).
    The liminf is approximated by the smallest slope over schedule suffixes
    of at least three radii, reported next to the full fit.  Radii whose
    return is censored at ``horizon`` are dropped from the schedule.
    """
    imap = interval_map(imap)
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be decreasing")
    taus = [None] * len(radii)
    length = 1 << 16
    target = None
    seen = 0
    while any(t is None for t in taus) and seen < horizon:
        n = min(length, horizon + 1)
        vals = orbit_values(imap, n, seed, path)
        if target is None:
            target = vals[0] if y is None else y
        taus = first_entry_times(vals, target, radii)
        seen = n - 1
        length *= 4
    keep = [i for i, t in enumerate(taus) if t is not None]
    truncated = len(radii) - len(keep)
    if truncated:
        log.warning("%d radii censored at horizon %d", truncated, horizon)
    xs = np.array([-math.log(radii[i]) for i in keep])
    ys = np.array([math.log(taus[i]) for i in keep])
    if xs.size < 2:
        raise ValueError("fewer than two radii returned within the horizon")
    slope = float(np.polyfit(xs, ys, 1)[0])
    suffix = [float(np.polyfit(xs[s:], ys[s:], 1)[0]) for s in range(0, xs.size - 2)]
    return RecurrenceEstimate([radii[i] for i in keep], [taus[i] for i in keep], slope,
                              min(suffix) if suffix else slope, truncated)


def median_recurrence_slope(imap, radii: Sequence[float], seed: int, n_starts: int = 20,
                            horizon: int = 1 << 22) -> tuple:
    """Median slope over ``n_starts`` seeded starts, with the individual estimates."""
    ests = [recurrence_rate_estimate(imap, radii, seed, horizon=horizon, path=p)
            for p in range(n_starts)]
    return float(np.median([e.slope for e in ests])), ests
