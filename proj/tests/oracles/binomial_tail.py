"""Exact binomial upper tails P[Bin(n, p) >= k] from rational arithmetic."""
import sys
from fractions import Fraction
from math import comb


def tail(n, k, p):
    q = 1 - p
    return sum(comb(n, j) * p**j * q**(n - j) for j in range(k, n + 1))


CASES = [
    (20, 20, Fraction(1, 20)), (20, 18, Fraction(1, 20)), (20, 0, Fraction(1, 20)), (20, 1, Fraction(1, 20)),
    (20, 10, Fraction(1, 2)), (10, 3, Fraction(3, 10)), (100, 10, Fraction(1, 20)), (100, 95, Fraction(9, 10)),
    (50, 25, Fraction(1, 3)), (1, 1, Fraction(1, 2)), (7, 4, Fraction(1, 7)), (200, 30, Fraction(1, 10)),
    (1000, 60, Fraction(1, 20)), (1000, 500, Fraction(1, 2)), (30, 27, Fraction(1, 20)), (40, 2, Fraction(1, 100)),
    (1500, 90, Fraction(1, 20)), (2000, 1100, Fraction(1, 2)),
]


def main():
    w = sys.stdout.write
    w("// Generated by tests/oracles/binomial_tail.py. Do not edit.\n")
    w("// {n, k, p_num, p_den, tail}\n")
    for n, k, p in CASES:
        t = tail(n, k, p)
        # 17 significant digits round-trip a double.
        w("{%d, %d, %d, %d, %.17g},\n" % (n, k, p.numerator, p.denominator, float(t)))


if __name__ == "__main__":
    main()
