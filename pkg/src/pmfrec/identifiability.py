"""Executable rank bounds for recovering a joint PMF from marginal tuples.

Every calculator answers: up to which latent rank F is the joint PMF of N
variables on a common alphabet of size I generically recoverable from the
given marginal order? All arithmetic is exact integer arithmetic (integer
square roots plus verification loops), because several table values sit on
exact boundary cases of the quadratic conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt


def kruskal_generic_bound(I1: int, I2: int, I3: int) -> int:
    """Largest F with min(I1,F) + min(I2,F) + min(I3,F) >= 2F + 2 (0 if none)."""
    if min(I1, I2, I3) < 1:
        raise ValueError("dimensions must be positive")
    best = 0
    for F in range(1, I1 + I2 + I3):
        if min(I1, F) + min(I2, F) + min(I3, F) >= 2 * F + 2:
            best = F
    return best


def lemma2_applicable(I1: int, I2: int, I3: int) -> bool:
    """The unique-decomposition rank characterization needs sorted I1 >= 3."""
    return min(I1, I2, I3) >= 3


def lemma2_bound(I1: int, I2: int, I3: int) -> int:
    """min(I3, (I1-1)(I2-1)) after sorting dims; 0 when the precondition fails."""
    a, b, c = sorted((I1, I2, I3))
    if a < 3:
        return 0
    return min(c, (a - 1) * (b - 1))


def lemma3_bound(I1: int, I2: int) -> int:
    """2^(alpha+beta-2) with alpha, beta the largest powers of two inside I1, I2."""
    if min(I1, I2) < 1:
        raise ValueError("dimensions must be positive")
    alpha = I1.bit_length() - 1
    beta = I2.bit_length() - 1
    return 2 ** (alpha + beta - 2) if alpha + beta >= 2 else 0


def theorem1_bound(N: int, I: int) -> int:
    """Rank bound from stacking variables into a virtual three-way tensor
    with two singleton-style groups: I(N-2) when N <= I, else
    (floor(sqrt(NI-1)/I) * I - 1)^2."""
    if N < 3 or I < 1:
        raise ValueError("need N >= 3 and I >= 1")
    if N <= I:
        return I * (N - 2)
    s = isqrt(N * I - 1) // I
    return (s * I - 1) ** 2


def theorem1_partition(N: int, I: int) -> tuple[int, int, int]:
    """Group sizes achieving theorem1_bound."""
    if N <= I:
        return (1, 1, N - 2)
    s = isqrt(N * I - 1) // I
    return (s, s, N - 2 * s)


def theorem2_bound(N: int, I: int) -> int:
    """Rank bound from the balanced three-way stacking, via the closed form
    floor((floor(N/3) * I + 1)^2 / 16)."""
    if N < 3 or I < 1:
        raise ValueError("need N >= 3 and I >= 1")
    x = (N // 3) * I
    return (x + 1) ** 2 // 16


def theorem2_partition(N: int, I: int) -> tuple[int, int, int]:
    s = N // 3
    return (s, s, N - 2 * s)


def _largest_f_quadratic(budget: int) -> int:
    """Largest F >= 0 with 2F(F-1) <= budget, by integer root plus verification."""
    if budget < 0:
        return 0
    F = (1 + isqrt(1 + 2 * budget)) // 2
    while F > 0 and 2 * F * (F - 1) > budget:
        F -= 1
    while 2 * (F + 1) * F <= budget:
        F += 1
    return F


def theorem3_bound(N: int, I: int) -> tuple[int, tuple[int, int, int, int]]:
    """Best rank bound over all 4-group stackings usable with order-4 marginals.

    For group sizes (s1, s2, s3, s4) the admissible rank is
    min(I^2 s3 s4, largest F with 2F(F-1) <= I^2 s1 s2 (I s1 - 1)(I s2 - 1));
    the search checks every ordered composition of N into four positive parts
    and returns the maximum with the first composition attaining it.
    """
    if N < 4:
        raise ValueError("four-way stacking requires N >= 4")
    if I < 1:
        raise ValueError("alphabet size must be positive")
    best = -1
    best_part = (1, 1, 1, N - 3)
    for s1 in range(1, N - 2):
        for s2 in range(1, N - 1 - s1):
            for s3 in range(1, N - s1 - s2):
                s4 = N - s1 - s2 - s3
                cap = I * I * s3 * s4
                budget = I * I * s1 * s2 * (I * s1 - 1) * (I * s2 - 1)
                f = min(cap, _largest_f_quadratic(budget))
                if f > best:
                    best = f
                    best_part = (s1, s2, s3, s4)
    return best, best_part


def triples_bound(N: int, I: int) -> int:
    """Best available bound when all order-3 marginals are known."""
    return max(theorem1_bound(N, I), theorem2_bound(N, I))


@dataclass(frozen=True)
class RuleBound:
    name: str
    bound: int
    partition: tuple[int, ...] | None = None
    note: str | None = None

    @property
    def applicable(self) -> bool:
        return self.note is None


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Per-rule bounds for one (N, I, marginal order) question."""

    n_vars: int
    alphabet: int
    marginal_order: int
    rules: tuple[RuleBound, ...]

    @property
    def combined_bound(self) -> int:
        vals = [r.bound for r in self.rules if r.applicable]
        return max(vals) if vals else 0


def build_report(N: int, I: int, marginal_order: int) -> IdentifiabilityReport:
    """Assemble every rule that applies to the requested marginal order.

    Order 3 combines the single-tensor rules on one I x I x I marginal with
    the two coupled stacking theorems; order 4 is the partition search.
    """
    if marginal_order == 3:
        rules = [
            RuleBound("kruskal_generic", kruskal_generic_bound(I, I, I)),
            RuleBound(
                "lemma2",
                lemma2_bound(I, I, I),
                note=None if lemma2_applicable(I, I, I) else "needs alphabet >= 3",
            ),
            RuleBound("lemma3", lemma3_bound(I, I)),
            RuleBound("theorem1", theorem1_bound(N, I), partition=theorem1_partition(N, I)),
            RuleBound("theorem2", theorem2_bound(N, I), partition=theorem2_partition(N, I)),
        ]
    elif marginal_order == 4:
        if N < 4:
            rules = [RuleBound("theorem3", 0, note="requires N >= 4")]
        else:
            bound, part = theorem3_bound(N, I)
            rules = [RuleBound("theorem3", bound, partition=part)]
    else:
        raise ValueError(f"no identifiability rules for marginal order {marginal_order}")
    return IdentifiabilityReport(
        n_vars=N, alphabet=I, marginal_order=marginal_order, rules=tuple(rules)
    )
