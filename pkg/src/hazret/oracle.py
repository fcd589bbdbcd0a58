"""Exact law of the visit count for i.i.d. and finite Markov models.

The process of sliding ``L``-symbol windows is itself a finite Markov chain.
With hazard windows made absorbing, the law of the count of target windows
before absorption solves a sequence of sparse linear systems that share one
matrix.  A forward dynamic program over ``(window, count)`` gives an
independent check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order

from .core import Convention, CylinderUnion
from .geolaw import Pmf
from .measures import FiniteMarkovModel, IIDModel

MAX_STATES = 2_000_000
DIRECT_SOLVE_LIMIT = 200_000


@dataclass
class WindowChain:
    """Markov chain of the positive-measure ``L``-words of a model."""

    L: int
    alphabet_size: int
    codes: np.ndarray      # base-A code of each state, increasing
    init: np.ndarray       # stationary measure of each state
    trans: sp.csr_matrix   # row-stochastic transitions between states

    @property
    def n_states(self) -> int:
        return self.codes.size

    def words(self) -> list:
        A, L = self.alphabet_size, self.L
        out = []
        for c in self.codes.tolist():
            w = []
            for _ in range(L):
                c, s = divmod(c, A)
                w.append(s)
            out.append(tuple(reversed(w)))
        return out

    def lift(self, U: CylinderUnion) -> np.ndarray:
        """States whose leading ``n`` symbols form a word of ``U``."""
        if U.alphabet_size != self.alphabet_size:
            raise ValueError("alphabet mismatch")
        if U.length > self.L:
            raise ValueError(f"word length {U.length} exceeds window length {self.L}")
        prefix = self.codes // self.alphabet_size ** (self.L - U.length)
        return np.isin(prefix, U.codes())


def build_window_chain(model, L: int) -> WindowChain:
    """Window chain of ``model`` for windows of length ``L``."""
    if isinstance(model, IIDModel):
        Q = np.tile(model.probs, (model.alphabet_size, 1))
        pi = model.probs
    elif isinstance(model, FiniteMarkovModel):
        Q, pi = model.Q, model.pi
    else:
        raise TypeError(f"no window chain for {model!r}")
    A = Q.shape[0]
    if L < 1:
        raise ValueError("L must be >= 1")
    if A ** L > MAX_STATES:
        raise ValueError(f"{A}^{L} windows exceed the state guard {MAX_STATES}")
    codes = np.arange(A)
    meas = pi.copy()
    for _ in range(L - 1):
        last = codes % A
        meas = (meas[:, None] * Q[last]).ravel()
        codes = (codes[:, None] * A + np.arange(A)[None, :]).ravel()
    keep = meas > 0
    codes, meas = codes[keep], meas[keep]
    index = np.full(A ** L, -1, dtype=np.int64)
    index[codes] = np.arange(codes.size)
    last = codes % A
    shifted = (codes % A ** (L - 1)) * A if L > 1 else np.zeros_like(codes)
    rows, cols, vals = [], [], []
    for a in range(A):
        p = Q[last, a]
        tgt = index[shifted + a]
        ok = (p > 0) & (tgt >= 0)
        rows.append(np.flatnonzero(ok))
        cols.append(tgt[ok])
        vals.append(p[ok])
    trans = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(codes.size, codes.size))
    return WindowChain(L, A, codes, meas / meas.sum(), trans)


def _prepare(chain: WindowChain, U: CylinderUnion, V: CylinderUnion):
    inU, inV = chain.lift(U), chain.lift(V)
    if np.any(inU & inV):
        raise ValueError("lifted U and V intersect")
    if not inV.any():
        raise ValueError("V has no positive-measure window; it is never hit")
    # every state must be able to reach V, otherwise the count is not a.s. finite
    rev = chain.trans.T.tocsr()
    reach = np.zeros(chain.n_states, dtype=bool)
    for s in np.flatnonzero(inV):
        if not reach[s]:
            reach[breadth_first_order(rev, s, directed=True, return_predecessors=False)] = True
    if not reach.all():
        raise ValueError("V is unreachable from some windows (singular system)")
    return inU, inV


def _count_law(chain, inU, inV, K):
    """Matrix ``F`` with ``F[w, j] = P(count = j | first window w)``, ``j <= K``."""
    S = chain.n_states
    N = np.flatnonzero(~inV)
    pos = np.full(S, -1)
    pos[N] = np.arange(N.size)
    P = chain.trans
    P_NN = P[N][:, N].tocsc()
    toV = np.asarray(P[N][:, np.flatnonzero(inV)].sum(axis=1)).ravel()
    isU = inU[N]
    free = (~isU).astype(float)
    A = sp.identity(N.size, format="csc") - sp.diags(free) @ P_NN
    if N.size <= DIRECT_SOLVE_LIMIT:
        lu = spla.splu(A.tocsc())
        solve = lu.solve
    else:
        def solve(b):
            x, info = spla.gmres(A, b, rtol=1e-12, atol=0.0)
            if info != 0:
                raise RuntimeError("iterative solve did not converge")
            return x
    F = np.zeros((S, K + 1))
    F[inV, 0] = 1.0
    g_prev = np.zeros(N.size)
    for j in range(K + 1):
        b = np.where(isU, 0.0, toV if j == 0 else 0.0)
        if j == 1:
            b = b + np.where(isU, toV, 0.0)
        if j >= 1:
            b = b + np.where(isU, P_NN @ g_prev, 0.0)
        g = solve(b)
        res = np.max(np.abs(A @ g - b)) if b.size else 0.0
        if res > 1e-10:
            raise RuntimeError(f"linear solve residual {res:.3e} too large")
        F[N, j] = g
        g_prev = g
    return F


def _finish(chain, inU, F, convention, K):
    if Convention(convention) is Convention.TAU_FROM_0:
        probs = chain.init @ F
    else:
        # one step first, then the from-0 law shifted by the first window's U mark
        nxt = chain.trans @ F
        probs = (chain.init * ~inU) @ nxt
        shifted = (chain.init * inU) @ nxt
        probs[1:] += shifted[:-1]
    probs = np.clip(probs, 0.0, None)
    tail = max(0.0, 1.0 - probs.sum())
    if probs.sum() > 1.0:
        probs = probs / probs.sum()
    return Pmf(probs, tail)


def exact_sigma_distribution(chain: WindowChain, U: CylinderUnion, V: CylinderUnion,
                             K: int, convention=Convention.TAU_FROM_0) -> Pmf:
    """Exact ``P(count = j)`` for ``j <= K`` with the remainder as the tail."""
    if K < 0:
        raise ValueError("K must be >= 0")
    inU, inV = _prepare(chain, U, V)
    # one extra column so the shifted from-1 law still reaches K
    F = _count_law(chain, inU, inV, K + 1)
    pmf = _finish(chain, inU, F, convention, K + 1)
    probs = pmf.probs[: K + 1]
    return Pmf(probs, max(0.0, 1.0 - probs.sum()))


@dataclass
class DPResult:
    pmf: Pmf
    residual: float


def exact_sigma_dp(chain: WindowChain, U: CylinderUnion, V: CylinderUnion,
                   K: int, T_max: int) -> DPResult:
    """Forward recursion over ``(window, count)`` for ``T_max`` steps.

    Mass not yet absorbed after inspecting times ``0..T_max`` is returned as
    ``residual`` and is included in the tail of the pmf.
    """
    if K < 0 or T_max < 0:
        raise ValueError("K and T_max must be >= 0")
    inU, inV = _prepare(chain, U, V)
    PT = chain.trans.T.tocsr()
    h = np.zeros((chain.n_states, K + 2))
    h[:, 0] = chain.init
    absorbed = np.zeros(K + 2)
    for t in range(T_max + 1):
        absorbed += h[inV].sum(axis=0)
        h[inV] = 0.0
        if t == T_max:
            break
        hu = h[inU]
        bumped = np.zeros_like(hu)
        bumped[:, 1:] = hu[:, :-1]
        bumped[:, -1] += hu[:, -1]
        h[inU] = bumped
        h = PT @ h
    residual = float(max(0.0, h.sum()))
    probs = absorbed[: K + 1]
    return DPResult(Pmf(probs, max(0.0, 1.0 - probs.sum())), residual)


def bernoulli_pair_instance(p: float, q: float):
    """Model and sets for counting ``q``-coins before the first ``p``-coin.

    Each step tosses an independent pair ``(Y0, Y1)`` with ``P(Y0 = 1) = p``
    and ``P(Y1 = 1) = q``, encoded as the symbol ``2 Y0 + Y1``.  The hazard is
    ``Y0 = 1``; the target is ``Y1 = 1`` on steps where the hazard does not
    fire, which keeps the two sets disjoint without changing the count.
    """
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ValueError("p and q must lie in (0, 1)")
    model = IIDModel([(1 - p) * (1 - q), (1 - p) * q, p * (1 - q), p * q])
    U = CylinderUnion.of([(1,)], 4)
    V = CylinderUnion.of([(2,), (3,)], 4)
    return model, U, V
