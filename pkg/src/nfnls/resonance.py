"""Interaction phases, divisor counting and the resonance frequency sets.

The quartic interaction phase is

    Phi(xi, xi1, xi2, xi3) = xi^2 - xi1^2 + xi2^2 - xi3^2,

which factors as 2*(xi - xi1)*(xi - xi3) on the convolution surface
xi = xi1 - xi2 + xi3.  Integer box triples satisfy the surface equation only
up to the near-match slack (n1 - n2 + n3 in {n-1, n, n+1}), so the quartic
value and the product 2*(n-n1)*(n-n3) differ on a thin shell.  Both
conventions are implemented; ``phase_value`` dispatches on a convention tag
and the quartic form is the default used for set membership.  The continuous
kernels elsewhere always use the (exact there) product form.

Set modes for :func:`enumerate_triples`:

* ``resonant_R1`` — doubly matched: n1 ~ n and n3 ~ n.
* ``resonant_R2`` — singly-or-doubly matched union: n1 ~ n or n3 ~ n
  (emitted as a set; the operator layer re-applies multiplicity two on the
  doubly matched overlap).
* ``A_N`` — non-resonant with |Phi| <= N.
* ``A_N_complement`` — non-resonant with |Phi| > N.

Enumeration is window-bounded and lexicographic (deterministic, order-stable);
truncation to the window is the sole deviation from infinite sums.  All
functions here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import BoxRangeError, DomainError

__all__ = [
    "FrequencyTriple",
    "ResonanceThreshold",
    "QUARTIC",
    "PRODUCT",
    "phase_phi",
    "phase_value",
    "is_near",
    "divisor_count",
    "divisor_sieve",
    "enumerate_triples",
    "triple_arrays",
    "c_set_member",
    "c_chain_ok",
    "divisor_choice_count",
]

QUARTIC = "quartic"
PRODUCT = "product"


class FrequencyTriple(NamedTuple):
    n: int
    n1: int
    n2: int
    n3: int


@dataclass(frozen=True)
class ResonanceThreshold:
    """The large splitting threshold N > 0 for |Phi| <= N vs |Phi| > N."""

    N: float

    def __post_init__(self):
        if not self.N > 0:
            raise DomainError(f"threshold must be positive, got {self.N}")


def phase_phi(xi: float, xi1: float, xi2: float, xi3: float) -> float:
    """Quartic phase xi^2 - xi1^2 + xi2^2 - xi3^2 (works on arrays too)."""
    return xi * xi - xi1 * xi1 + xi2 * xi2 - xi3 * xi3


def phase_value(n, n1, n2, n3, convention: str = QUARTIC):
    """Integer-tuple phase under the chosen convention.

    ``quartic`` evaluates Phi on the box labels; ``product`` evaluates
    2*(n-n1)*(n-n3).  They agree exactly when n1 - n2 + n3 == n and differ by
    the slack term otherwise.
    """
    if convention == QUARTIC:
        return phase_phi(n, n1, n2, n3)
    if convention == PRODUCT:
        return 2 * (n - n1) * (n - n3)
    raise DomainError(f"unknown phase convention {convention!r}")


def is_near(a, b):
    """The near-match relation: a ~ b iff a in {b-1, b, b+1}."""
    return np.abs(np.asarray(a) - np.asarray(b)) <= 1


def divisor_count(m: int) -> int:
    """Exact number of divisors d(m) by trial division, m >= 1."""
    if m < 1:
        raise DomainError(f"divisor_count needs m >= 1, got {m}")
    count = 1
    rem = m
    p = 2
    while p * p <= rem:
        if rem % p == 0:
            e = 0
            while rem % p == 0:
                rem //= p
                e += 1
            count *= e + 1
        p += 1 if p == 2 else 2
    if rem > 1:
        count *= 2
    return count


def divisor_sieve(limit: int) -> np.ndarray:
    """d(m) for all 1 <= m <= limit; index 0 unused."""
    if limit < 1:
        raise DomainError(f"sieve limit must be >= 1, got {limit}")
    d = np.zeros(limit + 1, dtype=np.int64)
    for k in range(1, limit + 1):
        d[k::k] += 1
    return d


def _candidate_pairs(window: int):
    rng = range(-window, window + 1)
    for n1 in rng:
        for n3 in rng:
            yield n1, n3


def enumerate_triples(
    n: int,
    window: int,
    N: ResonanceThreshold | float | None = None,
    mode: str = "A_N_complement",
    convention: str = QUARTIC,
) -> list[FrequencyTriple]:
    """All triples (n1, n2, n3) in [-window, window]^3 with n1-n2+n3 ~ n, by mode.

    Exhaustive within the window, duplicate-free, lexicographic in
    (n1, n2, n3).
    """
    if window < 1:
        raise BoxRangeError(f"window must be >= 1, got {window}")
    thr = None
    if N is not None:
        thr = N.N if isinstance(N, ResonanceThreshold) else float(N)
    if mode in ("A_N", "A_N_complement") and thr is None:
        raise DomainError(f"mode {mode} needs a threshold")

    out = []
    for n1, n3 in _candidate_pairs(window):
        near1 = abs(n1 - n) <= 1
        near3 = abs(n3 - n) <= 1
        for n2 in (n1 + n3 - n - 1, n1 + n3 - n, n1 + n3 - n + 1):
            if not (-window <= n2 <= window):
                continue
            if mode == "resonant_R1":
                if near1 and near3:
                    out.append(FrequencyTriple(n, n1, n2, n3))
            elif mode == "resonant_R2":
                if near1 or near3:
                    out.append(FrequencyTriple(n, n1, n2, n3))
            elif mode in ("A_N", "A_N_complement"):
                if near1 or near3:
                    continue
                phi = phase_value(n, n1, n2, n3, convention)
                inside = abs(phi) <= thr
                if inside == (mode == "A_N"):
                    out.append(FrequencyTriple(n, n1, n2, n3))
            else:
                raise DomainError(f"unknown mode {mode!r}")
    out.sort()
    return out


def triple_arrays(triples: Iterable[FrequencyTriple]):
    """Column arrays (n, n1, n2, n3) for vectorized work."""
    arr = np.array([tuple(t) for t in triples], dtype=np.int64).reshape(-1, 4)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]


def c_set_member(J: int, mu_tilde_J: float, mu_tilde_J1: float, mu_1: float) -> bool:
    """Membership in C_J for the prefix phases.

    C_J = {|mu~_{J+1}| <= (2J+3)^3 |mu~_J|^{1-1/100}}
        union {|mu~_{J+1}| <= (2J+3)^3 |mu_1|^{1-1/100}},
    with exponent exactly 1 - 1/100; J = 1 gives the constant 5^3.
    """
    if J < 1:
        raise DomainError(f"generation index must be >= 1, got {J}")
    k = float(2 * J + 3) ** 3
    e = 1.0 - 1.0 / 100.0
    lhs = abs(mu_tilde_J1)
    return lhs <= k * abs(mu_tilde_J) ** e or lhs <= k * abs(mu_1) ** e


def c_chain_ok(mu_tilde: "np.ndarray | list[float]") -> bool:
    """True iff generations 2..J all avoid their C sets (the complement chain).

    ``mu_tilde`` holds the signed prefix phases mu~_1..mu~_J in chronicle
    order; generation j is checked against C_{j-1}.
    """
    mt = list(mu_tilde)
    for j in range(1, len(mt)):
        if c_set_member(j, mt[j - 1], mt[j], mt[0]):
            return False
    return True


def divisor_choice_count(n: int, mu: int, window: int) -> int:
    """Number of (n1, n3) in [-window, window]^2 with 2*(n-n1)*(n-n3) == mu.

    Zero for odd mu (parity obstruction); for even nonzero mu the count is
    bounded by 2*d(|mu|/2).  mu == 0 counts the degenerate pairs where a gap
    vanishes.
    """
    if mu % 2 != 0:
        return 0
    half = mu // 2
    lo, hi = -window, window
    if half == 0:
        count = 0
        for n1 in range(lo, hi + 1):
            for n3 in range(lo, hi + 1):
                if (n - n1) * (n - n3) == 0:
                    count += 1
        return count
    count = 0
    a = 1
    while a * a <= abs(half):
        if half % a == 0:
            for d1 in {a, -a, half // a, -(half // a)}:
                d3, r = divmod(half, d1)
                if r != 0:
                    continue
                n1, n3 = n - d1, n - d3
                if lo <= n1 <= hi and lo <= n3 <= hi:
                    count += 1
        a += 1
    return count
