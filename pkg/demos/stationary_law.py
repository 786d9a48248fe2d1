"""Stationary queue length is geometric, whatever the symmetric discipline.

Runs PS, LCFS and a table discipline with Erlang service at rho = 0.7 and
prints the regenerative estimate of P(Q >= k) next to rho**k.
"""

from symq import Discipline, Erlang
from symq import scaling, stats

LAM = 0.7
SD = Erlang(3, 1.0)
DISCIPLINES = [Discipline.ps(), Discipline.lcfs(),
               Discipline.table([[1], [0.7, 0.3], [0.2, 0.5, 0.3]], name="table")]


def main(n_cycles=50_000, seed=1):
    rho = LAM * SD.mean
    print(f"rho = {rho}")
    print("k   " + "".join(f"{d.name:>18}" for d in DISCIPLINES) + "     rho^k")
    batches = [scaling.collect_cycles(d, SD, LAM, n_cycles, seed, (i,)) for i, d in enumerate(DISCIPLINES)]
    for k in range(1, 7):
        cells = []
        for b in batches:
            est = stats.stationary_tail_ci(b, k)
            cells.append(f"{est.estimate:.4f} +- {1.96 * est.se:.4f}")
        print(f"{k:<4}" + "".join(f"{c:>18}" for c in cells) + f"{rho ** k:10.4f}")


if __name__ == "__main__":
    main()
