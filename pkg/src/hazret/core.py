"""Words, cylinder unions, overlap lags and return counting along orbits.

A cylinder union of length ``n`` is stored as a set of equal-length words over
``{0, ..., alphabet_size - 1}``.  Every operation here is a pure function of
its arguments.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

Word = tuple  # tuple[int, ...]


class Convention(str, enum.Enum):
    """Where the search for the first hazard hit starts."""

    TAU_FROM_0 = "tau_from_0"
    TAU_FROM_1 = "tau_from_1"


def as_word(w) -> Word:
    """Coerce ``"0110"``, ``[0, 1, 1, 0]`` or an array into a tuple of ints."""
    if isinstance(w, str):
        return tuple(int(c) for c in w)
    return tuple(int(s) for s in w)


@dataclass(frozen=True)
class CylinderUnion:
    """A nonempty union of cylinders ``[w]`` whose words share one length."""

    words: frozenset
    alphabet_size: int

    def __post_init__(self):
        if self.alphabet_size < 1:
            raise ValueError("alphabet_size must be positive")
        if not self.words:
            raise ValueError("a cylinder union must contain at least one word")
        lengths = {len(w) for w in self.words}
        if len(lengths) != 1:
            raise ValueError(f"words have mixed lengths {sorted(lengths)}")
        if 0 in lengths:
            raise ValueError("words must have length >= 1")
        for w in self.words:
            for s in w:
                if not 0 <= s < self.alphabet_size:
                    raise ValueError(f"symbol {s} outside alphabet of size {self.alphabet_size}")

    @classmethod
    def of(cls, words: Iterable, alphabet_size: int = 2) -> "CylinderUnion":
        return cls(frozenset(as_word(w) for w in words), int(alphabet_size))

    @property
    def length(self) -> int:
        return len(next(iter(self.words)))

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, window) -> bool:
        return tuple(window) in self.words

    def sorted_words(self) -> list:
        return sorted(self.words)

    def codes(self) -> np.ndarray:
        """Base-``alphabet_size`` integer codes of the words, sorted."""
        a = self.alphabet_size
        out = []
        for w in self.words:
            c = 0
            for s in w:
                c = c * a + s
            out.append(c)
        return np.array(sorted(out), dtype=np.int64)


def _check_alphabets(U: CylinderUnion, V: CylinderUnion):
    if U.alphabet_size != V.alphabet_size:
        raise ValueError(
            f"alphabet mismatch: {U.alphabet_size} != {V.alphabet_size}")


def _meets(A: CylinderUnion, B: CylinderUnion, k: int) -> Optional[bool]:
    """Whether ``A`` intersects ``T^{-k} B``; ``None`` when the overlap is empty."""
    ov = min(A.length, k + B.length) - k
    if ov <= 0:
        return None
    tails = {a[k:k + ov] for a in A.words}
    return any(b[:ov] in tails for b in B.words)


def pi_self(U: CylinderUnion) -> int:
    """Smallest lag ``1 <= k <= n`` at which ``U`` can recur.

    For ``k = n`` the overlap is empty, so the result never exceeds ``n``.
    """
    n = U.length
    for k in range(1, n):
        if _meets(U, U, k):
            return k
    return n


def pi_cross(U: CylinderUnion, V: CylinderUnion) -> Optional[int]:
    """Smallest lag ``0 <= k <= n ∧ m`` at which ``U`` and ``V`` overlap.

    Only lags with a nonempty overlap window are considered, so two unions
    that never agree on a shared window (``{000}`` and ``{111}``) give
    ``None``.
    """
    _check_alphabets(U, V)
    for k in range(0, min(U.length, V.length) + 1):
        if _meets(U, V, k) or _meets(V, U, k):
            return k
    return None


def kappa(U: CylinderUnion, V: CylinderUnion) -> int:
    """Minimum of the two self-overlap lags and the cross lag (when defined)."""
    lags = [pi_self(U), pi_self(V)]
    cross = pi_cross(U, V)
    if cross is not None:
        lags.append(cross)
    return min(lags)


def shift_set(U: CylinderUnion, r: int) -> CylinderUnion:
    """Image ``T^r U``: drop the first ``r`` symbols of every word."""
    if not 0 <= r < U.length:
        raise ValueError(f"shift r={r} must satisfy 0 <= r < {U.length}")
    return CylinderUnion(frozenset(w[r:] for w in U.words), U.alphabet_size)


def lifted_intersect(U: CylinderUnion, V: CylinderUnion) -> bool:
    """Whether ``U`` and ``V`` share a point, i.e. ``pi_cross(U, V) == 0``."""
    _check_alphabets(U, V)
    return bool(_meets(U, V, 0))


@dataclass(frozen=True)
class HitStats:
    """First hazard index ``tau`` and the number of target visits before it.

    ``tau is None`` marks a censored orbit, in which case ``sigma`` is also
    ``None``.
    """

    tau: Optional[int]
    sigma: Optional[int]

    @property
    def censored(self) -> bool:
        return self.tau is None


CENSORED = HitStats(None, None)


def tau_and_sigma(orbit: Sequence[int], U: CylinderUnion, V: CylinderUnion,
                  convention: Convention = Convention.TAU_FROM_0,
                  horizon: int = 10_000) -> HitStats:
    """Scan ``orbit`` for the first ``V`` window and count ``U`` windows before it."""
    _check_alphabets(U, V)
    n, m = U.length, V.length
    need = horizon + max(n, m)
    if len(orbit) < need:
        raise ValueError(f"orbit has length {len(orbit)}, need at least {need}")
    orbit = tuple(int(s) for s in orbit[:need])
    start = 0 if Convention(convention) is Convention.TAU_FROM_0 else 1
    sigma = 0
    for k in range(horizon + 1):
        if k >= start and orbit[k:k + m] in V.words:
            return HitStats(k, sigma)
        if orbit[k:k + n] in U.words:
            sigma += 1
    return CENSORED
