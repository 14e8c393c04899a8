"""Fisher's combined p-value, chi^2 survival with 2m dof, evaluated in mpmath.

Also prints natural logs so tiny combined values can be checked without
underflow.
"""
import sys

import mpmath as mp

mp.mp.dps = 60

CASES = [
    ["0.5"],
    ["0.05", "0.05"],
    ["0.01", "0.2", "0.7"],
    ["0.9", "0.8"],
    ["1e-5", "0.3", "0.3", "0.3"],
    ["0.04", "0.04", "0.04", "0.04", "0.04", "0.04", "0.04", "0.04"],
    ["9.5367431640625e-27"] * 4,  # 0.05^20
    ["9.5367431640625e-27"] * 8,
    ["1e-300", "1e-300"],
    ["0.999", "0.999", "0.999"],
]


def combined(ps):
    x = -2 * mp.fsum(mp.log(mp.mpf(p)) for p in ps)
    return mp.gammainc(len(ps), x / 2, mp.inf, regularized=True)


def main():
    w = sys.stdout.write
    w("// Generated by tests/oracles/fisher.py. Do not edit.\n")
    w("// {{p...}, combined, log(combined)}\n")
    for ps in CASES:
        c = combined(ps)
        shown = c if c > mp.mpf("1e-300") else mp.mpf(0)  # below double range: check the log only
        w("{{%s}, %s, %s},\n" % (", ".join(ps), mp.nstr(shown, 20, min_fixed=-1, max_fixed=1),
                                 mp.nstr(mp.log(c), 20, min_fixed=-1, max_fixed=1)))


if __name__ == "__main__":
    main()
