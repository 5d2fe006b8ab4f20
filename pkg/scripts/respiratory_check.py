"""Optional check against the Ohio respiratory data (not distributed here).

Expects a long-format CSV ``subject,time,y,intercept,age,smoke,age_smoke``
with five visits per child (time 1..5), the binary illness indicator as
``y``, age centred as in the published analysis and smoking coded 0/1.

    python scripts/respiratory_check.py path/to/ohio.csv

Compares the AR-1 fit with the published coefficients (to 0.002) and the
sub-model tests with the published (Q, T_N, P) rows (to 0.01).
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from qif import BERNOULLI, LinearConstraint, fit, make_basis, read_csv, test_linear

COEFFICIENTS = {"intercept": -1.89404, "age": -0.12933, "smoke": 0.26384, "age_smoke": 0.06070}

# kept covariates -> (Q at the restricted minimum, T_N, df, P)
SUBMODELS = [
    (("intercept",), (11.898, 7.926, 3, 0.048)),
    (("intercept", "smoke"), (10.337, 6.365, 2, 0.041)),
    (("intercept", "age"), (5.823, 1.851, 2, 0.396)),
    (("intercept", "smoke", "age"), (4.449, 0.477, 1, 0.490)),
]
FULL_Q = 3.972


def check(path: str, out=sys.stdout) -> bool:
    ds = read_csv(path)
    names = list(ds.covariate_names)
    basis = make_basis("AR1", ds.n_times)
    res = fit(BERNOULLI, basis, ds)
    ok = res.converged and abs(res.q_min - FULL_Q) <= 0.01
    out.write(f"full model: Q = {res.q_min:.3f} (published {FULL_Q})\n")
    for name, beta in zip(names, res.beta_hat):
        ref = COEFFICIENTS.get(name)
        good = ref is not None and abs(beta - ref) <= 0.002
        ok &= good
        out.write(f"  {name:<12s} {beta:>10.5f}  published {ref}  {'ok' if good else 'MISMATCH'}\n")
    for kept, (q_ref, t_ref, df_ref, p_ref) in SUBMODELS:
        dropped = [names.index(n) for n in names if n not in kept]
        t = test_linear(BERNOULLI, basis, ds, LinearConstraint.pin(len(names), dropped))
        good = (abs(t.q_restricted - q_ref) <= 0.01 and abs(t.t_n - t_ref) <= 0.01
                and t.df == df_ref and abs(t.p_value - p_ref) <= 0.01)
        ok &= good
        out.write(f"  keep {'+'.join(kept):<24s} Q {t.q_restricted:.3f} T {t.t_n:.3f} "
                  f"df {t.df} P {t.p_value:.3f}  {'ok' if good else 'MISMATCH'}\n")
    return bool(ok)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    args = ap.parse_args(argv)
    ok = check(args.csv)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
