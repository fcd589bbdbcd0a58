"""Stationary symbolic process models.

Three models are provided: i.i.d. symbols, a finite stationary Markov chain,
and the continued-fraction digits of a Gauss-distributed point.  Each model
knows the exact measure of a cylinder and can turn a (time x path) block of
uniforms into symbols, which is how every sampler in the package draws paths.

For a Markov measure the phi coefficient has a closed form.  Conditioning on
a past event ``G`` in ``F_{0,k}`` makes the future a mixture of the chains
started from ``X_k = i`` with weights ``P(X_k = i | G)``, so
``|P(D | G) - P(D)|`` is at most the largest total variation distance between
row ``i`` of ``Q^n`` and ``pi``; taking ``G = {X_k = i}`` attains it.  Hence
``phi(n) = max_i ||Q^n(i, .) - pi||_TV`` over states with ``pi(i) > 0``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .core import CylinderUnion, as_word

LN2 = math.log(2.0)
# digits beyond this are clipped when drawn from a floating point position
MAX_DIGIT = 2 ** 62


def _gcd_period(adj: np.ndarray) -> int:
    """Period of an irreducible chain given its boolean adjacency matrix."""
    s = adj.shape[0]
    level = np.full(s, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.flatnonzero(adj[i]):
                if level[j] < 0:
                    level[j] = level[i] + 1
                    nxt.append(j)
        frontier = nxt
    g = 0
    for i, j in zip(*np.nonzero(adj)):
        g = math.gcd(g, int(level[i] + 1 - level[j]))
    return g


def stationary_distribution(Q) -> np.ndarray:
    """Unique invariant probability vector of an irreducible aperiodic chain.

    Raises
    ------
    ValueError
        If ``Q`` is not square, not row-stochastic, reducible or periodic.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(Q < 0) or np.max(np.abs(Q.sum(axis=1) - 1.0)) > 1e-12:
        raise ValueError("rows of Q must be probability vectors")
    s = Q.shape[0]
    adj = Q > 0
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    if ncomp != 1:
        raise ValueError("chain is reducible")
    if _gcd_period(adj) != 1:
        raise ValueError("chain is periodic")
    if s <= 512:
        A = Q.T - np.eye(s)
        A[-1, :] = 1.0
        b = np.zeros(s)
        b[-1] = 1.0
        pi = scipy.linalg.solve(A, b)
    else:
        pi = np.full(s, 1.0 / s)
        for _ in range(100_000):
            nxt = pi @ Q
            if np.max(np.abs(nxt - pi)) < 1e-13:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(pi @ Q - pi)) > 1e-10:
        raise ValueError("stationary solve did not converge")
    return pi


class IIDModel:
    """Independent symbols with law ``probs``."""

    kind = "iid"

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("need a probability vector over at least two symbols")
        if np.any(p <= 0):
            raise ValueError("every symbol must have positive probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        self.probs = p
        self._cum = np.cumsum(p)[:-1]

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    def as_markov(self) -> "FiniteMarkovModel":
        return FiniteMarkovModel(np.tile(self.probs, (self.alphabet_size, 1)))

    def cylinder_measure(self, w) -> float:
        w = _checked(w, self.alphabet_size)
        return float(np.prod(self.probs[list(w)]))

    def initial_state(self, n_paths):
        return None

    def transform(self, uniforms, state):
        return np.searchsorted(self._cum, uniforms, side="right").astype(np.int64), None

    def to_dict(self):
        return {"kind": "iid", "probs": self.probs.tolist()}

    def __repr__(self):
        return f"IIDModel(probs={self.probs.tolist()})"


class FiniteMarkovModel:
    """Stationary Markov chain on ``{0, ..., s-1}`` with transition matrix ``Q``."""

    kind = "markov"

    def __init__(self, Q):
        self.Q = np.asarray(Q, dtype=float)
        self.pi = stationary_distribution(self.Q)
        self._cum_pi = np.cumsum(self.pi)[:-1]
        self._cum_Q = np.cumsum(self.Q, axis=1)[:, :-1]

    @property
    def alphabet_size(self) -> int:
        return self.Q.shape[0]

    def cylinder_measure(self, w) -> float:
        w = _checked(w, self.alphabet_size)
        out = self.pi[w[0]]
        for a, b in zip(w[:-1], w[1:]):
            out *= self.Q[a, b]
        return float(out)

    def initial_state(self, n_paths):
        return None

    def transform(self, uniforms, state):
        out = np.empty(uniforms.shape, dtype=np.int64)
        prev = state
        for t in range(uniforms.shape[0]):
            u = uniforms[t]
            if prev is None:
                cur = np.searchsorted(self._cum_pi, u, side="right")
            else:
                cur = (u[:, None] >= self._cum_Q[prev]).sum(axis=1)
            out[t] = cur
            prev = cur
        return out, prev

    def take_state(self, state, idx):
        return None if state is None else state[idx]

    def to_dict(self):
        return {"kind": "markov", "Q": self.Q.tolist()}

    def __repr__(self):
        return f"FiniteMarkovModel(Q={self.Q.tolist()})"


def _convergents(digits):
    """Return ``(p_n, q_n, p_{n-1}, q_{n-1})`` for ``[0; d_1, ..., d_n]``."""
    p, q, pp, qq = 0, 1, 1, 0
    for d in digits:
        p, pp = d * p + pp, p
        q, qq = d * q + qq, q
    return p, q, pp, qq


def _gauss_interval(a: int, b: int, c: int, d: int) -> float:
    """Gauss measure of the interval between ``a/b`` and ``c/d``."""
    num = (d + c) * b - (b + a) * d
    return abs(math.log1p(num / ((b + a) * d))) / LN2


def gauss_measure(lo: float, hi: float) -> float:
    """Gauss measure of ``[lo, hi]`` intersected with ``[0, 1]``."""
    lo, hi = max(lo, 0.0), min(hi, 1.0)
    if hi <= lo:
        return 0.0
    return math.log1p((hi - lo) / (1.0 + lo)) / LN2


def gauss_cylinder_measure(digits: Sequence[int]) -> float:
    """Exact Gauss measure of the continued-fraction cylinder of ``digits``."""
    if any(int(d) < 1 for d in digits):
        raise ValueError("continued fraction digits are positive integers")
    p, q, pp, qq = _convergents(int(d) for d in digits)
    return _gauss_interval(p, q, p + pp, q + qq)


def gauss_cylinder_interval(digits: Sequence[int]) -> tuple:
    """Endpoints ``(lo, hi)`` of the cylinder of ``digits``."""
    p, q, pp, qq = _convergents(int(d) for d in digits)
    a, b = p / q, (p + pp) / (q + qq)
    return (min(a, b), max(a, b))


class GaussDigitModel:
    """Continued-fraction digits of a point drawn from the Gauss measure.

    Symbol ``s < digit_cap`` stands for digit ``s + 1``; symbol ``digit_cap``
    collects every digit larger than ``digit_cap``.  Cylinder measures are
    exact and do not depend on the cap.
    """

    kind = "gauss"

    def __init__(self, digit_cap: int = 64):
        if digit_cap < 1:
            raise ValueError("digit_cap must be positive")
        self.digit_cap = int(digit_cap)

    @property
    def alphabet_size(self) -> int:
        return self.digit_cap + 1

    @property
    def overflow_mass(self) -> float:
        """Gauss mass of a single position carrying the overflow symbol."""
        return math.log1p(1.0 / (self.digit_cap + 1)) / LN2

    def cylinder_measure(self, w) -> float:
        w = _checked(w, self.alphabet_size)
        cap = self.digit_cap
        if cap in w[:-1]:
            raise ValueError("overflow symbol is only supported in the last position")
        if w[-1] != cap:
            return gauss_cylinder_measure([s + 1 for s in w])
        p, q, pp, qq = _convergents(s + 1 for s in w[:-1])
        D = cap + 1
        return _gauss_interval(p, q, D * p + pp, D * q + qq)

    def initial_state(self, n_paths):
        # beta = q_{k-1}/q_k and delta = alpha - beta with
        # alpha = (q_{k-1}+p_{k-1})/(q_k+p_k); before any digit beta=0, alpha=1
        return (np.zeros(n_paths), np.ones(n_paths))

    def digits(self, uniforms, state):
        """Turn uniforms in ``[0, 1)`` into exact-law digits; returns raw digits."""
        beta, delta = state
        out = np.empty(uniforms.shape, dtype=np.int64)
        for t in range(uniforms.shape[0]):
            u = 1.0 - uniforms[t]
            c = np.log1p(delta / (1.0 + beta))
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(delta != 0.0, np.expm1(u * c) / delta, u / (1.0 + beta))
            tpos = z / (1.0 - beta * z)
            with np.errstate(divide="ignore"):
                inv = 1.0 / tpos
            d = np.floor(np.minimum(inv, float(MAX_DIGIT))).astype(np.int64)
            d = np.maximum(d, 1)
            df = d.astype(float)
            delta = -delta / ((df + beta + delta) * (df + beta))
            beta = 1.0 / (df + beta)
            out[t] = d
        return out, (beta, delta)

    def transform(self, uniforms, state):
        d, state = self.digits(uniforms, state)
        return np.minimum(d, self.digit_cap + 1) - 1, state

    def take_state(self, state, idx):
        return (state[0][idx], state[1][idx])

    def to_dict(self):
        return {"kind": "gauss", "digit_cap": self.digit_cap}

    def __repr__(self):
        return f"GaussDigitModel(digit_cap={self.digit_cap})"


def _checked(w, alphabet_size) -> tuple:
    w = as_word(w)
    if not w:
        raise ValueError("empty word")
    for s in w:
        if not 0 <= s < alphabet_size:
            raise ValueError(f"symbol {s} outside alphabet of size {alphabet_size}")
    return w


def take_state(model, state, idx):
    """Restrict a sampler state to the paths ``idx``."""
    if state is None:
        return None
    return model.take_state(state, idx)


def cylinder_measure(model, w) -> float:
    return model.cylinder_measure(w)


def set_measure(model, U: CylinderUnion) -> float:
    """Measure of a union of disjoint cylinders."""
    if U.alphabet_size != model.alphabet_size:
        raise ValueError("alphabet mismatch between set and model")
    return float(math.fsum(model.cylinder_measure(w) for w in U.words))


def path_generator(seed: int, path: int, stream: int = 0) -> np.random.Generator:
    """Generator owned by one path, derived from ``(seed, path, stream)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_path(model, length: int, seed: int, path: int = 0) -> np.ndarray:
    """One stationary path of ``length`` symbols, identical to path ``path`` of a simulation."""
    if length < 1:
        raise ValueError("length must be >= 1")
    u = path_generator(seed, path).random(length)[:, None]
    sym, _ = model.transform(u, model.initial_state(1))
    return sym[:, 0]


def _markov_of(model) -> FiniteMarkovModel:
    if isinstance(model, IIDModel):
        return model.as_markov()
    if isinstance(model, FiniteMarkovModel):
        return model
    raise TypeError(f"exact phi needs an i.i.d. or Markov model, got {model!r}")


def phi_exact_markov(model, n: int) -> float:
    """``phi(n)`` of a stationary Markov measure (see module docstring)."""
    mk = _markov_of(model)
    Qn = np.linalg.matrix_power(mk.Q, int(n))
    tv = 0.5 * np.abs(Qn - mk.pi[None, :]).sum(axis=1)
    return float(tv[mk.pi > 0].max())


def phi_function(model):
    """``k -> phi(k)`` with ``phi(k) = 1`` for ``k <= 0``, cached."""
    if isinstance(model, IIDModel):
        return lambda k: 1.0 if k <= 0 else 0.0
    mk = _markov_of(model)
    cache = {}

    def phi(k):
        k = int(k)
        if k <= 0:
            return 1.0
        if k not in cache:
            cache[k] = phi_exact_markov(mk, k)
        return cache[k]
    return phi


def _word_measures(model, L):
    words = list(itertools.product(range(model.alphabet_size), repeat=L))
    return words, np.array([model.cylinder_measure(w) for w in words])


def phi_empirical_lower(model, n: int, L: int = 1, budget: int = 2_000_000,
                        max_digit: int = 4) -> float:
    """Certified lower bound on ``phi(n)`` from past/future blocks of length ``L``.

    The past event ranges over ``L``-cylinders on coordinates ``0..L-1`` and
    the future event over ``F_{L-1+n, 2L-2+n}``.  For i.i.d. and Markov models
    every pair is enumerated with exact measures and the future event is
    optimised over unions (the supremum is a total variation distance).  For
    the Gauss model only digits up to ``max_digit`` are enumerated, the
    unenumerated gap digits are bracketed, and single future cylinders are
    used; the returned value is the smallest deviation compatible with the
    bracket.
    """
    if L < 1 or n < 1:
        raise ValueError("need L >= 1 and n >= 1")
    if isinstance(model, GaussDigitModel):
        return _phi_lower_gauss(model, n, L, budget, max_digit)
    mk = _markov_of(model)
    A = mk.alphabet_size
    if A ** (2 * L) > budget:
        raise ValueError(f"{A}^{2 * L} event pairs exceed budget {budget}")
    words, past = _word_measures(mk, L)
    _, future = _word_measures(mk, L)
    # P(future block = d | past block = g) = Q^n(g_last, d_0) * prod Q(d) / ...
    Qn = np.linalg.matrix_power(mk.Q, n)
    first = np.array([w[0] for w in words])
    last = np.array([w[-1] for w in words])
    tail = np.where(mk.pi[first] > 0, future / np.where(mk.pi[first] > 0, mk.pi[first], 1.0), 0.0)
    best = 0.0
    for gi, g in enumerate(words):
        if past[gi] <= 0:
            continue
        cond = Qn[last[gi], first] * tail
        best = max(best, 0.5 * float(np.abs(cond - future).sum()))
    return best


def _phi_lower_gauss(model, n, L, budget, max_digit):
    D = min(max_digit, model.digit_cap)
    gap = n - 1
    if D ** (2 * L + gap) > budget:
        raise ValueError("enumeration exceeds budget")
    blocks = list(itertools.product(range(1, D + 1), repeat=L))
    gaps = list(itertools.product(range(1, D + 1), repeat=gap))
    mu = {b: gauss_cylinder_measure(b) for b in blocks}
    best = 0.0
    for g in blocks:
        pg = mu[g]
        covered = math.fsum(gauss_cylinder_measure(g + h) for h in gaps) if gap else pg
        slack = pg - covered
        for d in blocks:
            lo = math.fsum(gauss_cylinder_measure(g + h + d) for h in gaps)
            hi = lo + max(slack, 0.0)
            pd = mu[d]
            a, b = lo / pg, hi / pg
            dev = 0.0 if a <= pd <= b else min(abs(a - pd), abs(b - pd))
            best = max(best, dev)
    return best


@dataclass
class DecayReport:
    depths: np.ndarray
    max_measure: np.ndarray
    upsilon_hat: float


def cylinder_decay_check(model, depths: Sequence[int], beam: int = 64,
                         max_digit: int = 4) -> DecayReport:
    """Largest ``n``-cylinder measure per depth and the fitted decay rate.

    i.i.d. and Markov maxima are exact (max-product recursion).  For the
    Gauss model a beam search over digits up to ``max_digit`` is used.
    """
    depths = np.asarray(sorted(int(d) for d in depths))
    if depths.size == 0 or depths[0] < 1:
        raise ValueError("depths must be positive")
    out = []
    if isinstance(model, GaussDigitModel):
        frontier = [((), 1.0)]
        for depth in range(1, depths[-1] + 1):
            cand = [(w + (d,), gauss_cylinder_measure(w + (d,)))
                    for w, _ in frontier for d in range(1, max_digit + 1)]
            cand.sort(key=lambda c: -c[1])
            frontier = cand[:beam]
            if depth in depths:
                out.append(frontier[0][1])
    else:
        mk = _markov_of(model)
        with np.errstate(divide="ignore"):
            lQ = np.log(mk.Q)
            v = np.log(mk.pi)
        for depth in range(1, depths[-1] + 1):
            if depth > 1:
                v = (v[:, None] + lQ).max(axis=0)
            if depth in depths:
                out.append(math.exp(v.max()))
    mx = np.array(out)
    if depths.size > 1:
        slope = np.polyfit(depths, np.log(mx), 1)[0]
    else:
        slope = math.log(mx[0]) / depths[0]
    return DecayReport(depths, mx, float(-slope))


def load_model(spec: dict):
    """Build a model from ``{"kind": "iid"|"markov"|"gauss", ...}``."""
    kind = spec.get("kind")
    if kind == "iid":
        return IIDModel(spec["probs"])
    if kind == "markov":
        return FiniteMarkovModel(spec["Q"])
    if kind == "gauss":
        return GaussDigitModel(spec.get("digit_cap", 64))
    raise ValueError(f"unknown model kind {kind!r}")
