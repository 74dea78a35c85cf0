"""Regenerate special_oracle.json with mpmath at 40 significant digits.

Run from the repository root: ``python3 tests/data/make_oracle.py``. The
output is committed; tests only read it.
"""

import json

import mpmath as mp

mp.mp.dps = 40

NUS = [0.1, 0.5, 1.0, 1.5, 2.37, 5.0, 12.5, 30.0]
XS = [1e-6, 1e-3, 0.05, 0.5, 1.0, 3.7, 10.0, 50.0, 300.0]


def main():
    bessel = []
    for nu in NUS:
        for x in XS:
            k = mp.besselk(nu, x)
            bessel.append({"nu": nu, "x": x, "log_k": float(mp.log(k)),
                           "k": float(k) if k < mp.mpf("1e300") else None})
    lgamma = [{"x": x, "value": float(mp.loggamma(x))}
              for x in [1e-8, 0.01, 0.5, 1.0, 2.5, 7.0, 50.0, 171.5, 1e4]]
    matern = []
    for nu in [0.3, 0.5, 1.0, 1.7, 3.0, 8.0]:
        for z in [1e-4, 0.01, 0.3, 1.0, 2.5, 6.0, 20.0]:
            v = 2 ** (1 - mp.mpf(nu)) / mp.gamma(nu) * mp.mpf(z) ** nu * mp.besselk(nu, z)
            matern.append({"nu": nu, "z": z, "value": float(v)})
    ncdf = [{"z": z, "cdf": float(mp.ncdf(z)), "pdf": float(mp.npdf(z))}
            for z in [-8.0, -3.0, -1.0, 0.0, 0.7, 2.0, 5.0]]
    out = {"bessel_k": bessel, "log_gamma": lgamma, "matern": matern, "normal": ncdf}
    with open("tests/data/special_oracle.json", "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
