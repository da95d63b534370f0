"""Independent exact oracles used by the tests.

Everything here is computed by a different route than the library code:
rational arithmetic for Beta comparisons and scipy special functions for
Gaussian ones, so agreement is meaningful.
"""
import math
from fractions import Fraction


def exact_beta_prob_greater(a: int, b: int, c: int, d: int) -> Fraction:
    """P[X > Y] for X ~ Beta(a, b), Y ~ Beta(c, d), integer parameters.

    Uses the Beta-Binomial identity P[X > y] = P[Bin(a+b-1, y) <= a-1]
    and integrates the binomial terms against the Beta(c, d) density in
    exact rational arithmetic.
    """
    if min(a, b, c, d) < 1:
        raise ValueError("parameters must be positive integers")
    n = a + b - 1

    def beta_fn(p: int, q: int) -> Fraction:
        # B(p, q) = (p-1)! (q-1)! / (p+q-1)! exactly for integer p, q
        return Fraction(math.factorial(p - 1) * math.factorial(q - 1),
                        math.factorial(p + q - 1))

    norm = beta_fn(c, d)
    total = Fraction(0)
    for k in range(a):
        total += math.comb(n, k) * beta_fn(c + k, d + n - k)
    return total / norm
