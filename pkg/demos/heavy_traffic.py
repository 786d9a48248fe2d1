"""Heavy traffic: (1 - rho_r) Q approaches Exp(1), and Q(r^2 t)/r approaches RBM.

First prints the KS distance of the scaled stationary law to Exp(1) against
the exact geometric value 1/r, then compares Q(r^2)/r from empty with the
reflected Brownian motion transition law at t = 1.
"""

from symq import Discipline, Exponential
from symq import scaling


def main(seed=3):
    d, sd = Discipline.ps(), Exponential(1.0)
    print("stationary:  r     ks      exact")
    for row in scaling.stationary_limit_experiment(d, sd, [5, 10, 30], 1.0, 50_000, seed):
        print(f"          {row.r:5g}  {row.ks:.4f}  {row.ks_oracle:.4f}")
    print("transient at t=1:  r     ks to RBM")
    for r in (5, 30):
        res = scaling.rbm_compare(d, sd, r, 1.0, 1.0, 5_000, seed)
        print(f"                {r:5g}  {res.test.statistic:.4f}  (mu={res.params.mu:g}, sigma2={res.params.sigma2:g})")


if __name__ == "__main__":
    main()
