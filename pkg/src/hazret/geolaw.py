"""Geometric laws, total variation intervals and the finite-size TV bound.

The bound compares the law of the visit count with ``Geo(pV / (pU + pV))``.
Two sets of constants are available: ``"statement"`` (the form usually
quoted) and ``"proof_final"`` (the last display of the argument, which has
larger constants and extra quadratic terms).  Both are reported side by side.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

STATEMENT = "statement"
PROOF_FINAL = "proof_final"


@dataclass(frozen=True)
class Pmf:
    """Law on ``{0, ..., K}`` plus the mass ``tail`` sitting beyond ``K``."""

    probs: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if np.any(p < -1e-15) or self.tail < -1e-12:
            raise ValueError("negative mass")
        if abs(p.sum() + self.tail - 1.0) > 1e-9:
            raise ValueError(f"total mass {p.sum() + self.tail!r} != 1")

    @property
    def K(self) -> int:
        return self.probs.size - 1

    def padded(self, K: int) -> np.ndarray:
        out = np.zeros(K + 1)
        out[: self.probs.size] = self.probs
        return out

    def mean(self) -> float:
        """Mean of the listed part (ignores the tail)."""
        return float(np.arange(self.probs.size) @ self.probs)

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist(), "tail": float(self.tail)}


def empirical_pmf(samples) -> Pmf:
    """Empirical law of a nonempty integer sample."""
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size == 0:
        raise ValueError("no samples")
    counts = np.bincount(samples)
    return Pmf(counts / samples.size, 0.0)


def geo_pmf(rho: float, K: int) -> Pmf:
    """``rho (1 - rho)^k`` for ``k <= K``; the rest is the tail ``(1 - rho)^(K+1)``."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho={rho} must lie in (0, 1)")
    if K < 0:
        raise ValueError("K must be >= 0")
    k = np.arange(K + 1)
    probs = rho * np.exp(k * math.log1p(-rho))
    tail = math.exp((K + 1) * math.log1p(-rho))
    return Pmf(probs, tail)


class TVInterval(NamedTuple):
    lower: float
    upper: float


def tv_distance(p: Pmf, q: Pmf) -> TVInterval:
    """Bracket the total variation distance of two laws known up to a tail.

    The lower end treats each tail as a single atom; the upper end lets the
    two tails be mutually singular.
    """
    K = max(p.K, q.K)
    body = float(np.abs(p.padded(K) - q.padded(K)).sum())
    lower = 0.5 * (body + abs(p.tail - q.tail))
    upper = 0.5 * body + max(p.tail, q.tail)
    return TVInterval(float(min(lower, 1.0)), float(min(upper, 1.0)))


def tv_to_geometric(p: Pmf, rho: float, K: Optional[int] = None) -> TVInterval:
    """TV bracket between ``p`` and ``Geo(rho)`` truncated at ``max(K, p.K)``."""
    K = p.K if K is None else max(K, p.K)
    return tv_distance(p, geo_pmf(rho, K))


def lemma34_parameter(p: float, q: float) -> float:
    """Parameter of the count of ``q``-coins before the first ``p``-coin."""
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ValueError("p and q must lie in (0, 1)")
    return p / (p + q - p * q)


def intro_parameter(lam: float, nu: float) -> float:
    """Limit parameter ``lam / (lam + nu)`` for Poisson rates ``lam`` and ``nu``."""
    if lam <= 0 or nu <= 0:
        raise ValueError("rates must be positive")
    return lam / (lam + nu)


def clamp_phi(phi: Callable[[int], float]) -> Callable[[int], float]:
    """Wrap ``phi`` so that arguments ``<= 0`` return the trivial value 1."""
    def wrapped(k):
        k = int(k)
        return 1.0 if k <= 0 else min(1.0, float(phi(k)))
    return wrapped


@dataclass
class BoundInputs:
    pU: float
    pV: float
    pUr: float
    pVr: float
    n: int
    m: int
    M: int
    R: int
    r: int
    kappa: int
    phi: Callable[[int], float]

    def validate(self):
        if not (0.0 < self.pU < 1.0 and 0.0 < self.pV < 1.0):
            raise ValueError("pU and pV must lie in (0, 1)")
        if self.pUr < self.pU - 1e-15 or self.pVr < self.pV - 1e-15:
            raise ValueError("shifted sets cannot be smaller than the sets")
        if min(self.n, self.m, self.M, self.R) < 1:
            raise ValueError("n, m, M, R must be >= 1")
        if not 0 <= self.r < min(self.n, self.m):
            raise ValueError(f"r={self.r} must satisfy 0 <= r < n ∧ m")


def hazard_bound(inputs: BoundInputs, variant: str = STATEMENT) -> float:
    """Evaluate the finite-size TV bound for one choice of ``(M, R, r)``."""
    b = inputs
    b.validate()
    phi = clamp_phi(b.phi)
    nm = max(b.n, b.m)
    s = b.pU + b.pV
    M, R = b.M, b.R
    miss = math.exp((M + 1) * math.log1p(-b.pV))
    if variant == STATEMENT:
        return 2.0 * (miss + b.pU + 6 * M * R * s * s + 6 * M * phi(R - nm)
                      + 8 * M * R * s * (b.pUr + b.pVr + phi(b.kappa + b.r - nm)))
    if variant == PROOF_FINAL:
        return (2 * miss + 2 * b.pU + 8 * M * R * s * s
                + 16 * M * R * s * phi(b.kappa - abs(b.m - b.n))
                + 12 * M * phi(R - nm) + 4 * M * (b.pU ** 2 + b.pV ** 2))
    raise ValueError(f"unknown variant {variant!r}")


class BoundOptimum(NamedTuple):
    M: int
    R: int
    r: int
    value: float


def optimize_bound(pU: float, pV: float, pUr: Callable[[int], float],
                   pVr: Callable[[int], float], n: int, m: int, kappa: int,
                   phi: Callable[[int], float], M_grid: Sequence[int],
                   R_grid: Sequence[int], r_grid: Sequence[int],
                   variant: str = STATEMENT) -> BoundOptimum:
    """Grid minimum of the bound; ties go to the lexicographically smallest ``(M, R, r)``."""
    if not (len(M_grid) and len(R_grid) and len(r_grid)):
        raise ValueError("empty grid")
    best = None
    r_vals = {r: (pUr(r), pVr(r)) for r in sorted(set(r_grid))}
    for M, R, r in itertools.product(sorted(set(M_grid)), sorted(set(R_grid)), sorted(r_vals)):
        ur, vr = r_vals[r]
        val = hazard_bound(BoundInputs(pU, pV, ur, vr, n, m, M, R, r, kappa, phi), variant)
        if best is None or val < best.value:
            best = BoundOptimum(M, R, r, val)
    return best


def default_grids(pU: float, pV: float, n: int, m: int):
    """Grids around the natural scales ``M ~ 1/(pU+pV)`` and ``R ~ n^2``."""
    base = 1.0 / (pU + pV)
    M_grid = sorted({max(1, int(base * f)) for f in
                     (0.01, 0.03, 0.1, 0.3, 1, 3, 10, 30, 100)})
    nm = max(n, m)
    R_grid = sorted({max(1, int(x)) for x in (nm, nm + 1, 2 * nm, 4 * nm, n * n, 2 * n * n)})
    r_grid = list(range(min(n, m)))
    return M_grid, R_grid, r_grid
