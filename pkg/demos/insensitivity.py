"""Insensitivity: the stationary law depends on service only through its mean.

Four service laws with mean 1 (deterministic, exponential, hyperexponential
with scv 4, Pareto 1.5) under LCFS at rho = 0.7.
"""

from symq import Deterministic, Discipline, Exponential, HyperExp, Pareto
from symq import scaling, stats


def main(n_cycles=50_000, seed=5):
    lam = 0.7
    laws = [Deterministic(1.0), Exponential(1.0), HyperExp.balanced(1.0, 4.0), Pareto.with_mean(1.5, 1.0)]
    batches = [scaling.collect_cycles(Discipline.lcfs(), sd, lam, n_cycles, seed, (i,)) for i, sd in enumerate(laws)]
    print("k   " + "".join(f"{type(sd).__name__:>14}" for sd in laws) + "  geometric")
    pmfs = [stats.stationary_pmf(b) for b in batches]
    for k in range(6):
        row = "".join(f"{p[k] if k < p.size else 0.0:14.4f}" for p in pmfs)
        print(f"{k:<4}{row}{(1 - lam) * lam ** k:11.4f}")


if __name__ == "__main__":
    main()
