"""Wilson score intervals at 50 digits, written as a C++ initializer table.

Independent of the C++ code: the z quantile comes from mpmath's erfinv and
the interval from the textbook closed form.
"""
import random
import sys

import mpmath as mp

mp.mp.dps = 50


def wilson(k, n, conf):
    z = mp.sqrt(2) * mp.erfinv(mp.mpf(conf))
    n = mp.mpf(n)
    p = k / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * mp.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo, hi = center - half, center + half
    if k == 0:
        lo = mp.mpf(0)
    if k == n:
        hi = mp.mpf(1)
    return max(lo, mp.mpf(0)), min(hi, mp.mpf(1))


def cases():
    fixed = [(0, 1, "0.95"), (1, 1, "0.95"), (0, 100, "0.95"), (100, 100, "0.95"), (50, 100, "0.95"),
             (1, 100, "0.99"), (99, 100, "0.9"), (20, 20, "0.95"), (0, 20, "0.95"), (7, 13, "0.8")]
    rng = random.Random(20240611)
    confs = ["0.8", "0.9", "0.95", "0.99", "0.999", "0.5"]
    out = list(fixed)
    while len(out) < 50:
        n = rng.choice([rng.randint(1, 30), rng.randint(31, 500), rng.randint(501, 100000)])
        k = rng.randint(0, n)
        out.append((k, n, rng.choice(confs)))
    return out


def main():
    w = sys.stdout.write
    w("// Generated by tests/oracles/wilson_table.py. Do not edit.\n")
    w("// {successes, trials, confidence, low, high}\n")
    for k, n, c in cases():
        lo, hi = wilson(k, n, c)
        w("{%d, %d, %s, %s, %s},\n" % (k, n, c, mp.nstr(lo, 20, min_fixed=-1, max_fixed=1),
                                       mp.nstr(hi, 20, min_fixed=-1, max_fixed=1)))


if __name__ == "__main__":
    main()
