"""Seeded orbit sampling of the visit count.

Every path owns a generator derived from ``(seed, path index)`` and its
symbols are a fixed function of that generator's uniforms, so a path is the
same whatever chunking, block size or thread count is used.  Paths advance in
blocks; a detector turns symbol chunks into target/hazard window marks and
paths leave the block as soon as they hit the hazard.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Convention, CylinderUnion, kappa, lifted_intersect, shift_set
from .geolaw import (PROOF_FINAL, STATEMENT, Pmf, TVInterval, default_grids,
                     empirical_pmf, geo_pmf, optimize_bound, tv_to_geometric)
from .measures import (FiniteMarkovModel, GaussDigitModel, IIDModel, path_generator,
                       phi_function, set_measure, take_state)

log = logging.getLogger(__name__)

BLOCK = 8192
CHUNK_ELEMS = 1 << 22
CENSOR_FLAG = 0.10


class CylinderDetector:
    """Marks windows that start a word of ``U`` (target) or ``V`` (hazard)."""

    raw_digits = False

    def __init__(self, U: CylinderUnion, V: CylinderUnion):
        if U.alphabet_size != V.alphabet_size:
            raise ValueError("alphabet mismatch")
        self.A = U.alphabet_size
        self.n, self.m = U.length, V.length
        self.L = max(self.n, self.m)
        if self.A ** self.L >= 2 ** 62:
            raise ValueError("window codes overflow 64 bits")
        self.delay = self.L - 1
        self._u = self._member(U)
        self._v = self._member(V)

    def _member(self, S: CylinderUnion):
        codes = S.codes()
        size = self.A ** S.length
        shift = self.A ** (self.L - S.length)
        if size <= 1 << 24:
            table = np.zeros(size, dtype=bool)
            table[codes] = True
            return lambda c: table[c // shift]
        return lambda c: _sorted_member(codes, c // shift)

    def init(self, n_paths):
        return np.zeros((self.delay, n_paths), dtype=np.int64)

    def take(self, state, idx):
        return state[:, idx]

    def scan(self, state, sym):
        ext = np.concatenate([state, sym], axis=0)
        C = sym.shape[0]
        code = np.zeros(sym.shape, dtype=np.int64)
        for i in range(self.L):
            code *= self.A
            code += ext[i:i + C]
        return self._u(code), self._v(code), ext[C:]


def _sorted_member(codes, query):
    i = np.searchsorted(codes, query)
    i = np.minimum(i, codes.size - 1)
    return codes[i] == query


@dataclass
class RunOutput:
    tau: np.ndarray     # -1 when censored
    sigma: np.ndarray   # -1 when censored


def _chunk_len(done_rows, n_active):
    sched = 64 << min(done_rows // 64, 1 << 20).bit_length() if done_rows else 64
    return int(max(64, min(sched, 1 << 14, CHUNK_ELEMS // max(n_active, 1))))


def _run_block(model, detector, paths, horizon, seed, streams, first_u, first_v):
    P = paths.size
    gens = [path_generator(seed, p, st) for p, st in zip(paths.tolist(), streams.tolist())]
    mstate = model.initial_state(P)
    dstate = detector.init(P)
    active = np.arange(P)
    counts = np.zeros(P, dtype=np.int64)
    tau = np.full(P, -1, dtype=np.int64)
    sigma = np.full(P, -1, dtype=np.int64)
    consumed = 0
    transform = model.digits if detector.raw_digits else model.transform
    while active.size:
        C = _chunk_len(consumed, active.size)
        u = np.stack([gens[i].random(C) for i in active], axis=1)
        sym, mstate = transform(u, mstate)
        inU, inV, dstate = detector.scan(dstate, sym)
        w = consumed + np.arange(C) - detector.delay
        consumed += C
        valid = (w >= 0) & (w <= horizon)
        if not valid.any():
            continue
        inU, inV, w = inU[valid], inV[valid], w[valid]
        if w[0] == 0:
            inU[0] &= first_u[active]
            inV[0] &= first_v[active]
        hit = inV.any(axis=0)
        first = np.argmax(inV, axis=0)
        before = np.cumsum(inU, axis=0)
        # U marks strictly before the first V row; U and V rows never coincide
        upto = np.where(hit, before[first, np.arange(active.size)], before[-1])
        cnt = counts[active] + upto
        done = active[hit]
        tau[done] = w[first[hit]]
        sigma[done] = cnt[hit]
        counts[active] = cnt
        keep = ~hit
        if w[-1] >= horizon:
            break
        active = active[keep]
        if not active.size:
            break
        idx = np.flatnonzero(keep)
        mstate = take_state(model, mstate, idx)
        dstate = detector.take(dstate, idx)
    return tau, sigma


def run_paths(model, detector, n_paths: int, horizon: int, seed: int, *,
              convention=Convention.TAU_FROM_0, first_u=None, first_v=None,
              streams=None, threads: int = 1) -> RunOutput:
    """Hitting index and visit count of ``n_paths`` independent paths.

    ``first_u``/``first_v`` (boolean per path) may veto the target/hazard mark
    of window 0; the from-1 convention vetoes every hazard mark at 0.
    ``streams`` selects the generator stream of each path (default 0).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    first_u = np.ones(n_paths, dtype=bool) if first_u is None else np.asarray(first_u, bool)
    first_v = np.ones(n_paths, dtype=bool) if first_v is None else np.asarray(first_v, bool)
    if Convention(convention) is Convention.TAU_FROM_1:
        first_v = np.zeros(n_paths, dtype=bool)
    streams = np.zeros(n_paths, dtype=np.int64) if streams is None else np.asarray(streams, np.int64)
    starts = list(range(0, n_paths, BLOCK))

    def job(b0):
        sl = slice(b0, min(b0 + BLOCK, n_paths))
        return _run_block(model, detector, np.arange(sl.start, sl.stop), horizon,
                          seed, streams[sl], first_u[sl], first_v[sl])

    threads = _resolve_threads(threads)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(job, starts))
    else:
        parts = [job(b) for b in starts]
    return RunOutput(np.concatenate([p[0] for p in parts]),
                     np.concatenate([p[1] for p in parts]))


def _resolve_threads(threads):
    if threads is None or threads <= 0:
        import os
        return os.cpu_count() or 1
    return int(threads)


@dataclass
class SimulationResult:
    pmf: Optional[Pmf]
    censored: int
    n_samples: int
    sigma: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n_samples

    @property
    def flagged(self) -> bool:
        return self.censored_fraction > CENSOR_FLAG


def summarize(out: RunOutput) -> SimulationResult:
    ok = out.tau >= 0
    pmf = empirical_pmf(out.sigma[ok]) if ok.any() else None
    res = SimulationResult(pmf, int((~ok).sum()), int(out.tau.size), out.sigma, out.tau)
    if res.flagged:
        log.warning("%d of %d paths censored", res.censored, res.n_samples)
    return res


def simulate_sigma(model, U: CylinderUnion, V: CylinderUnion, n_samples: int,
                   horizon: int, seed: int, convention=Convention.TAU_FROM_0,
                   threads: int = 1) -> SimulationResult:
    """Empirical law of the visit count over ``n_samples`` stationary paths.

    Censored paths (no hazard window within ``horizon``) are excluded from
    the pmf and counted; more than 10% censored flags the result.
    """
    if U.alphabet_size != model.alphabet_size or V.alphabet_size != model.alphabet_size:
        raise ValueError("alphabet mismatch between sets and model")
    if lifted_intersect(U, V):
        raise ValueError("U and V intersect")
    det = CylinderDetector(U, V)
    return summarize(run_paths(model, det, n_samples, horizon, seed,
                               convention=convention, threads=threads))


def mc_noise(rho: float, n_samples: int) -> float:
    """Expected TV between an ``n_samples`` empirical law and ``Geo(rho)`` (normal approximation)."""
    K = int(math.ceil(math.log(1e-12) / math.log1p(-rho))) if rho < 1 else 0
    p = geo_pmf(rho, max(K, 1)).probs
    return float(0.5 * np.sum(np.sqrt(2.0 * p * (1.0 - p) / (math.pi * n_samples))))


def entropy_rate(model) -> float:
    if isinstance(model, IIDModel):
        p = model.probs
        return float(-(p * np.log(p)).sum())
    if isinstance(model, FiniteMarkovModel):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(model.Q > 0, model.Q * np.log(model.Q), 0.0)
        return float(-(model.pi @ t.sum(axis=1)))
    raise TypeError("entropy rate needs an i.i.d. or Markov model")


@dataclass
class BoundReport:
    statement: float
    proof_final: float
    M: int
    R: int
    r: int
    kappa: int


def bound_for_sets(model, U: CylinderUnion, V: CylinderUnion, extra_points=()) -> Optional[BoundReport]:
    """Optimised bound for cylinder sets of an i.i.d. or Markov model; ``None`` otherwise."""
    if isinstance(model, GaussDigitModel):
        return None
    pU, pV = set_measure(model, U), set_measure(model, V)
    if not (0 < pU < 1 and 0 < pV < 1):
        return None
    n, m = U.length, V.length
    kap = kappa(U, V)
    phi = phi_function(model)
    cache = {}

    def shifted(S):
        def f(r):
            key = (id(S), r)
            if key not in cache:
                cache[key] = set_measure(model, shift_set(S, r))
            return cache[key]
        return f

    Mg, Rg, rg = default_grids(pU, pV, n, m)
    for M, R in extra_points:
        Mg.append(M)
        Rg.append(R)
    best = optimize_bound(pU, pV, shifted(U), shifted(V), n, m, kap, phi, Mg, Rg, rg, STATEMENT)
    proof = optimize_bound(pU, pV, shifted(U), shifted(V), n, m, kap, phi, Mg, Rg, rg, PROOF_FINAL)
    return BoundReport(best.value, proof.value, best.M, best.R, best.r, kap)


@dataclass
class PairRow:
    n: int
    m: int
    pU: float
    pV: float
    rho: float
    tv: TVInterval
    noise: float
    censored: int
    samples: int
    kappa: int
    bound: Optional[BoundReport]
    pmf: Optional[Pmf] = field(default=None, repr=False)


@dataclass
class PairReport:
    xi: tuple
    eta: tuple
    resamples: int
    seed: int
    rows: list

    @property
    def tv_lower(self):
        return [r.tv.lower for r in self.rows]


def _pick_m(rule, n, xi_meas, eta_meas, lam):
    if rule == "equal":
        return n
    if isinstance(rule, int):
        return max(1, n + rule)
    if rule == "match":
        target = math.log(xi_meas(n)) - math.log(lam)
        width = max(2, n // 2)
        cands = range(max(1, n - width), n + width + 1)
        return min(cands, key=lambda m: (abs(math.log(eta_meas(m)) - target), abs(m - n), m))
    if callable(rule):
        return int(rule(n))
    raise ValueError(f"unknown m rule {rule!r}")


def cylinder_pair_experiment(model, ns: Sequence[int], n_samples: int, seed: int,
                             m_rule="equal", lam: float = 1.0, horizon: Optional[int] = None,
                             xi=None, eta=None, resample_budget: int = 1000,
                             threads: int = 1) -> PairReport:
    """Visit counts to ``[xi_0..xi_{n-1}]`` before ``[eta_0..eta_{m(n)-1}]`` along a schedule of ``n``.

    ``xi`` and ``eta`` are drawn from the model unless both are given.  A pair
    whose cylinders intersect for some ``n`` is redrawn; the number of
    redraws is reported.  With ``horizon=None`` each ``n`` uses ``50 / P(V)``.
    """
    ns = [int(n) for n in ns]
    if not ns or min(ns) < 1:
        raise ValueError("schedule must contain positive lengths")
    A = model.alphabet_size
    length = 2 * max(ns) + 8
    fixed = xi is not None and eta is not None
    resamples = 0
    attempt = 0
    while True:
        if not fixed:
            xi = tuple(_aux_path(model, length, seed, 2 * attempt))
            eta = tuple(_aux_path(model, length, seed, 2 * attempt + 1))
        xi, eta = tuple(int(s) for s in xi), tuple(int(s) for s in eta)
        xi_meas = lambda k: model.cylinder_measure(xi[:k])
        eta_meas = lambda k: model.cylinder_measure(eta[:k])
        plan = [(n, _pick_m(m_rule, n, xi_meas, eta_meas, lam)) for n in ns]
        if max(max(n, m) for n, m in plan) > min(len(xi), len(eta)):
            raise ValueError("words too short for the schedule")
        clash = any(xi[:min(n, m)] == eta[:min(n, m)] for n, m in plan)
        if not clash:
            break
        if fixed:
            raise ValueError("the given words produce intersecting cylinders")
        resamples += 1
        attempt += 1
        if resamples > resample_budget:
            raise RuntimeError("resampling budget exhausted: cylinders keep intersecting")
    rows = []
    for n, m in plan:
        U = CylinderUnion.of([xi[:n]], A)
        V = CylinderUnion.of([eta[:m]], A)
        pU, pV = set_measure(model, U), set_measure(model, V)
        rho = pV / (pU + pV)
        h = horizon if horizon is not None else int(math.ceil(50.0 / pV))
        sim = simulate_sigma(model, U, V, n_samples, h, seed, threads=threads)
        tv = tv_to_geometric(sim.pmf, rho) if sim.pmf is not None else TVInterval(1.0, 1.0)
        extra = []
        if not isinstance(model, GaussDigitModel):
            M = int(math.exp((entropy_rate(model) + 0.1) * n))
            extra.append((max(M, 1), n * n))
        bound = bound_for_sets(model, U, V, extra)
        rows.append(PairRow(n, m, pU, pV, rho, tv, mc_noise(rho, n_samples - sim.censored or 1),
                            sim.censored, n_samples, kappa(U, V), bound, sim.pmf))
        log.info("n=%d m=%d rho=%.4f tv=[%.4f, %.4f]", n, m, rho, tv.lower, tv.upper)
    return PairReport(xi, eta, resamples, seed, rows)


def _aux_path(model, length, seed, k):
    # words for the target/hazard come from a stream disjoint from the simulated paths
    u = path_generator(seed, k, stream=7).random(length)[:, None]
    sym, _ = model.transform(u, model.initial_state(1))
    return sym[:, 0].tolist()
