"""Regenerates outage_oracle.csv: reference outage values at 60 digits.

    python3 gen_outage_oracle.py > outage_oracle.csv
"""
import random

from mpmath import mp, mpf, exp, log

mp.dps = 60
N0, KAPPA, SIGMA, P_R = mpf("2e-7"), mpf(1), mpf(3), mpf("0.3")
D_MAX = 113.137  # diagonal of the 80 x 80 m space


def outage(p_i, d_i, d_s):
    psi2 = N0 * KAPPA * d_s**SIGMA / P_R
    return 1 - (1 + psi2 * log(psi2)) * exp(-N0 * KAPPA * d_i**SIGMA / p_i)


def main():
    rng = random.Random(20240601)
    print("p_sensor,p_relay,d_sensor_relay,d_relay_dest,raw")
    for _ in range(10_000):
        p_i = rng.uniform(0.001, 0.3)
        d_i = rng.uniform(0.1, D_MAX)
        d_s = rng.uniform(0.1, D_MAX)
        raw = outage(mpf(p_i), mpf(d_i), mpf(d_s))
        print(f"{p_i!r},{float(P_R)!r},{d_i!r},{d_s!r},{mp.nstr(raw, 25, strip_zeros=False)}")


if __name__ == "__main__":
    main()
