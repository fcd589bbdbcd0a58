"""Discrete-time suspensions (towers) over a symbolic base.

A tower point is ``(x, k)`` with ``0 <= k < R(x)``.  One step climbs a level,
and at the roof it returns to ``(T x, 0)``.  The roof is read off the first
``s`` symbols of ``x``, so the lifted measure, floor masses and size-biased
sampling are exact finite sums over the ``s``-cells.

Target and hazard sets are single-floor lifts ``A x {j}`` of base cylinder
unions.  Along a tower orbit started at ``(x, i)`` such a lift is visited at
base index ``k`` exactly when ``T^k x`` lies in ``A`` and either ``k > 0`` or
``j >= i``.  This turns the tower count into the base count with a vetoed
first window, which the simulation engine already supports.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import CylinderUnion, as_word, lifted_intersect
from .measures import path_generator
from .montecarlo import CylinderDetector, SimulationResult, run_paths, summarize

ACCEPT_STREAM = 1
ATTEMPT_STREAM = 16


@dataclass(frozen=True)
class Roof:
    """Roof ``R(x)`` as a table over the first ``prefix_len`` symbols of ``x``."""

    prefix_len: int
    table: Mapping  # word -> positive int

    @classmethod
    def constant(cls, value: int) -> "Roof":
        return cls(0, {(): int(value)})

    @classmethod
    def of(cls, table: Mapping) -> "Roof":
        t = {as_word(w): int(v) for w, v in table.items()}
        lens = {len(w) for w in t}
        if len(lens) != 1:
            raise ValueError("roof cells must share one length")
        return cls(lens.pop(), t)

    def __post_init__(self):
        if any(v < 1 for v in self.table.values()):
            raise ValueError("roof values must be >= 1")

    @property
    def max(self) -> int:
        return max(self.table.values())

    def __call__(self, x) -> int:
        w = tuple(int(s) for s in x[: self.prefix_len])
        if len(w) < self.prefix_len:
            raise ValueError(f"base word shorter than the roof prefix {self.prefix_len}")
        try:
            return self.table[w]
        except KeyError:
            raise ValueError(f"roof undefined on cell {w}") from None

    def lookup(self, sym: np.ndarray) -> np.ndarray:
        """Roof of each column of a ``(prefix_len, P)`` symbol block."""
        P = sym.shape[1]
        if self.prefix_len == 0:
            return np.full(P, self.table[()], dtype=np.int64)
        return np.array([self(tuple(col)) for col in sym.T], dtype=np.int64)


@dataclass(frozen=True)
class TowerPoint:
    """``(x, level)`` where ``x`` is the suffix ``base[offset:]`` of a base orbit."""

    base: tuple
    level: int
    offset: int = 0

    @property
    def x(self) -> tuple:
        return self.base[self.offset:]


@dataclass(frozen=True)
class TowerSet:
    """Single-floor lift ``base x {level}``."""

    base: CylinderUnion
    level: int

    def contains(self, p: TowerPoint) -> bool:
        n = self.base.length
        w = p.base[p.offset:p.offset + n]
        return p.level == self.level and len(w) == n and tuple(w) in self.base


class TowerModel:
    """Tower over ``base_model`` with roof ``roof``."""

    def __init__(self, base_model, roof: Roof):
        self.base = base_model
        self.roof = roof
        A = base_model.alphabet_size
        self._cells = {}
        for w in itertools.product(range(A), repeat=roof.prefix_len):
            mass = base_model.cylinder_measure(w) if w else 1.0
            if mass > 0:
                if w not in roof.table:
                    raise ValueError(f"roof undefined on cell {w}")
                self._cells[w] = mass
        self.mean_roof = math.fsum(self._cells[w] * roof.table[w] for w in self._cells)

    def floor_measure(self, k: int) -> float:
        """Lifted measure of floor ``k``."""
        return math.fsum(m for w, m in self._cells.items() if self.roof.table[w] > k) / self.mean_roof

    def floor_measures(self) -> np.ndarray:
        return np.array([self.floor_measure(k) for k in range(self.roof.max)])

    def cell_weight(self, w) -> float:
        """Probability that a lifted-measure point sits over cell ``w``."""
        w = as_word(w)
        return self._cells.get(w, 0.0) * self.roof.table.get(w, 0) / self.mean_roof

    def lifted_measure(self, S: TowerSet) -> float:
        check_placement(self, S)
        return math.fsum(self.base.cylinder_measure(w) for w in S.base.words) / self.mean_roof

    def to_dict(self):
        return {"base": self.base.to_dict(), "roof_prefix": self.roof.prefix_len,
                "roof": {"".join(map(str, w)) if w else "": v for w, v in sorted(self.roof.table.items())}}


def tower_step(tower: TowerModel, p: TowerPoint) -> TowerPoint:
    """Climb one level, or return to ``(T x, 0)`` from the top floor."""
    R = tower.roof(p.base[p.offset:p.offset + tower.roof.prefix_len])
    if not 0 <= p.level < R:
        raise ValueError(f"level {p.level} outside [0, {R})")
    if p.level < R - 1:
        return TowerPoint(p.base, p.level + 1, p.offset)
    return TowerPoint(p.base, 0, p.offset + 1)


def _cells_under(tower: TowerModel, w: tuple):
    s = tower.roof.prefix_len
    if len(w) >= s:
        return [w[:s]] if w[:s] in tower._cells else []
    return [c for c in tower._cells if c[:len(w)] == w]


def check_placement(tower: TowerModel, S: TowerSet):
    if S.level < 0:
        raise ValueError("level must be >= 0")
    for w in S.base.words:
        for c in _cells_under(tower, w):
            if tower.roof.table[c] <= S.level:
                raise ValueError(f"level {S.level} is not below the roof on cell {c}")


def lift_set(tower: TowerModel, base_set: CylinderUnion, level: int = 0) -> TowerSet:
    """``base_set x {level}``, checked to lie below the roof on every cell it meets.

    A single-floor lift meets every fiber at most once, so it is well placed.
    """
    S = TowerSet(base_set, int(level))
    check_placement(tower, S)
    return S


@dataclass
class TowerStarts:
    streams: np.ndarray  # generator stream of each accepted base path
    levels: np.ndarray
    roofs: np.ndarray
    attempts: np.ndarray


def sample_tower_starts(tower: TowerModel, n: int, seed: int, path_offset: int = 0) -> TowerStarts:
    """Lifted-measure starts for paths ``path_offset .. path_offset + n - 1``.

    The base point is size-biased by ``R`` through rejection: attempt ``a`` of
    path ``p`` draws its base path from stream ``0`` (``a = 0``) or
    ``16 + a`` and accepts with probability ``R / max R`` using a separate
    stream, which then also supplies the uniform level.  A constant roof
    accepts the first attempt, so base paths coincide with the base model's.
    """
    s = tower.roof.prefix_len
    Rmax = tower.roof.max
    paths = np.arange(path_offset, path_offset + n)
    acc = [path_generator(seed, int(p), ACCEPT_STREAM) for p in paths]
    streams = np.full(n, -1, dtype=np.int64)
    roofs = np.zeros(n, dtype=np.int64)
    attempts = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    a = 0
    while pending.size:
        st = 0 if a == 0 else ATTEMPT_STREAM + a
        if s:
            u = np.stack([path_generator(seed, int(paths[i]), st).random(s) for i in pending], axis=1)
            sym, _ = tower.base.transform(u, tower.base.initial_state(pending.size))
            R = tower.roof.lookup(sym)
        else:
            R = np.full(pending.size, Rmax, dtype=np.int64)
        v = np.array([acc[i].random() for i in pending])
        ok = v * Rmax < R
        streams[pending[ok]] = st
        roofs[pending[ok]] = R[ok]
        attempts[pending] += 1
        pending = pending[~ok]
        a += 1
    levels = np.array([int(acc[i].random() * roofs[i]) for i in range(n)], dtype=np.int64)
    return TowerStarts(streams, levels, roofs, attempts)


def sample_tower_point(tower: TowerModel, seed: int, length: int = 64, path: int = 0) -> TowerPoint:
    """One lifted-measure point whose base orbit has ``length`` symbols."""
    st = sample_tower_starts(tower, 1, seed, path_offset=path)
    u = path_generator(seed, path, int(st.streams[0])).random(length)[:, None]
    sym, _ = tower.base.transform(u, tower.base.initial_state(1))
    return TowerPoint(tuple(int(s) for s in sym[:, 0]), int(st.levels[0]))


def _check_pair(tower, U: TowerSet, V: TowerSet):
    check_placement(tower, U)
    check_placement(tower, V)
    if lifted_intersect(U.base, V.base):
        raise ValueError("base projections of U and V intersect")


def sigma_tower(tower: TowerModel, U: TowerSet, V: TowerSet, n_samples: int, horizon: int,
                seed: int, threads: int = 1) -> SimulationResult:
    """Visit counts to ``U`` before ``V`` along tower orbits from lifted-measure starts.

    ``horizon`` counts base steps (returns to floor 0), not tower steps.
    """
    _check_pair(tower, U, V)
    st = sample_tower_starts(tower, n_samples, seed)
    first_u = U.level >= st.levels
    first_v = V.level >= st.levels
    det = CylinderDetector(U.base, V.base)
    out = run_paths(tower.base, det, n_samples, horizon, seed, first_u=first_u,
                    first_v=first_v, streams=st.streams, threads=threads)
    return summarize(out)


@dataclass
class TsigCheck:
    """Counts along one tower orbit, compared in the transfer identity.

    ``sigma`` counts visits to ``U`` and ``sigma_base`` visits to the floor-0
    lift of its projection, both before the first hazard visit (``V`` and the
    floor-0 lift of its projection respectively).  ``in_W`` says the start
    lies strictly below a point of ``U`` on its own fiber; ``in_W_V`` says the
    same for ``V``.
    """

    sigma: Optional[int]
    sigma_base: Optional[int]
    in_W: bool
    in_W_V: bool

    @property
    def indeterminate(self) -> bool:
        return self.sigma is None or self.sigma_base is None

    @property
    def holds(self) -> Optional[bool]:
        """``sigma == sigma_base + 1_W``; ``None`` when censored."""
        if self.indeterminate:
            return None
        return self.sigma == self.sigma_base + int(self.in_W)

    @property
    def corrected_holds(self) -> Optional[bool]:
        """Identity that also covers starts below the hazard: there ``sigma = 0``."""
        if self.indeterminate:
            return None
        if self.in_W_V:
            return self.sigma == 0
        return self.sigma == self.sigma_base + int(self.in_W)


def _count_walk(tower, p: TowerPoint, U: TowerSet, V: TowerSet, max_steps: int):
    count = 0
    for _ in range(max_steps):
        if p.offset + max(U.base.length, V.base.length, tower.roof.prefix_len) > len(p.base):
            return None
        if V.contains(p):
            return count
        if U.contains(p):
            count += 1
        p = tower_step(tower, p)
    return None


def _below_on_fiber(tower, p: TowerPoint, S: TowerSet) -> bool:
    w = p.x[:S.base.length]
    return p.level > 0 and S.level >= p.level and len(w) == S.base.length and tuple(w) in S.base


def lemma_tsig_check(tower: TowerModel, start: TowerPoint, U: TowerSet, V: TowerSet,
                     max_steps: int = 100_000) -> TsigCheck:
    """Walk the tower orbit of ``start`` step by step and evaluate both counts."""
    _check_pair(tower, U, V)
    R = tower.roof(start.x)
    if not 0 <= start.level < R:
        raise ValueError("start level above the roof")
    U0, V0 = TowerSet(U.base, 0), TowerSet(V.base, 0)
    return TsigCheck(_count_walk(tower, start, U, V, max_steps),
                     _count_walk(tower, start, U0, V0, max_steps),
                     _below_on_fiber(tower, start, U), _below_on_fiber(tower, start, V))


@dataclass
class TsigSummary:
    checked: int
    indeterminate: int
    violations: int
    corrected_violations: int
    in_W: int


def tsig_survey(tower: TowerModel, U: TowerSet, V: TowerSet, n_orbits: int, seed: int,
                length: int = 4096) -> TsigSummary:
    """Check the transfer identity on ``n_orbits`` lifted-measure starts."""
    st = sample_tower_starts(tower, n_orbits, seed)
    checked = indet = bad = bad_corr = inw = 0
    for p in range(n_orbits):
        u = path_generator(seed, p, int(st.streams[p])).random(length)[:, None]
        sym, _ = tower.base.transform(u, tower.base.initial_state(1))
        start = TowerPoint(tuple(sym[:, 0].tolist()), int(st.levels[p]))
        res = lemma_tsig_check(tower, start, U, V)
        if res.indeterminate:
            indet += 1
            continue
        checked += 1
        inw += res.in_W
        bad += not res.holds
        bad_corr += not res.corrected_holds
    return TsigSummary(checked, indet, bad, bad_corr, inw)
