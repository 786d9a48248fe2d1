"""Command-line experiment runner.

    symq run <config.json> [--seed N] [--out DIR] [--threads K]
    symq validate <config.json>

Exit codes: 0 ok, 1 runtime failure, 2 config error. Every CSV starts with
``#`` comment lines holding the version and the effective config; JSON
outputs carry the same under a leading ``"_meta"`` key.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from . import __version__, config, scaling, stats
from ._parallel import resolve_threads, stream
from .rbm import RBMParams, rbm_params_from_queue, rbm_transition_cdf, simulate_rbm
from .service import Exponential

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _log(msg: str) -> None:
    print(f"[symq] {msg}", file=sys.stderr)


class Writer:
    """Writes output files into one directory, each prefixed with the config header."""

    def __init__(self, out: Path, cfg: dict):
        self.out = out
        self.cfg = cfg
        self.written: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def _header(self) -> str:
        return (f"# symq {__version__}\n"
                f"# config: {json.dumps(self.cfg, sort_keys=True)}\n")

    def csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(self._header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self._put(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> Path:
        doc = {"_meta": {"version": __version__, "config": self.cfg}}
        doc.update(payload)
        return self._put(name, json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n")

    def _put(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.written.append(path)
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _pair(a: str, b: str) -> str:
    return f"{a} vs {b}"


def _service_labels(sds) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for sd in sds:
        name = sd.to_config()["kind"]
        seen[name] = seen.get(name, 0) + 1
        out.append(name if seen[name] == 1 else f"{name}#{seen[name]}")
    return out


# ---------------------------------------------------------------------------
# experiments


def _stationary(cfg, w: Writer, threads):
    d = config.build_disciplines(cfg)[0]
    sd = config.build_services(cfg)[0]
    seed, n = cfg["seed"], cfg["cycles"]
    if "lambda" in cfg:
        lam = cfg["lambda"]
        rho = lam * sd.mean
        cycles = scaling.collect_cycles(d, sd, lam, n, seed, (0,), threads)
        rows, summary = [], []
        for k in range(1, cfg.get("k_max", 6) + 1):
            est = stats.stationary_tail_ci(cycles, k)
            rows.append((k, est.estimate, rho ** k, est.se, est.lower, est.upper))
            summary.append({"k": k, "p_emp": est.estimate, "rho_k": rho ** k, "se": est.se,
                            "within_3se": abs(est.estimate - rho ** k) <= 3 * est.se})
        w.csv("stationary.csv", ["k", "p_emp", "rho_k", "se", "ci_low", "ci_high"], rows)
        w.json("stationary.json", {"rho": rho, "n_cycles": len(cycles), "tails": summary})
        return
    beta = cfg["scaling"]["beta"]
    res = scaling.stationary_limit_experiment(d, sd, config._r_values(cfg), beta, n, seed,
                                              threads=threads)
    w.csv("stationary_scaled.csv", ["r", "x", "ecdf"], (row for rr in res for row in rr.rows()))
    w.json("stationary_scaled.json", {"rows": [
        {"r": rr.r, "rho": rr.rho, "ks": rr.ks, "ks_se": rr.ks_se, "ks_oracle": rr.ks_oracle,
         "n_cycles": rr.n_cycles} for rr in res]})


def _insensitivity(cfg, w: Writer, threads):
    d = config.build_disciplines(cfg)[0]
    sds = config.build_services(cfg)
    labels = _service_labels(sds)
    lam = cfg["lambda"] if "lambda" in cfg else scaling.lambda_r(config._r_values(cfg)[0],
                                                               cfg["scaling"]["beta"], sds[0].mean)
    kmax = cfg.get("k_max", 10)
    batches = {}
    for idx, (label, sd) in enumerate(zip(labels, sds)):
        batches[label] = scaling.collect_cycles(d, sd, lam, cfg["cycles"], cfg["seed"], (idx,), threads)
        _log(f"{label}: {len(batches[label])} cycles")
    rows = []
    for label, b in batches.items():
        pmf = stats.level_time_matrix(b, kmax + 1).sum(axis=0) / b.cycle_length.sum()
        rows += [(label, k, p) for k, p in enumerate(pmf[:kmax])]
    w.csv("insensitivity_pmf.csv", ["service", "k", "pmf"], rows)
    tests = {_pair(a, b): stats.chi_square_regenerative(batches[a], batches[b]).to_json()
             for a, b in combinations(labels, 2)}
    rho = lam * sds[0].mean
    w.json("insensitivity_tests.json", {"rho": rho, "tests": tests})


def _transient(cfg, w: Writer, threads):
    ds = config.build_disciplines(cfg)
    sd = config.build_services(cfg)[0]
    beta = cfg["scaling"]["beta"]
    regime = cfg.get("regime", "diffusion")
    rows, out = [], []
    for r in config._r_values(cfg):
        res = scaling.transient_marginal_experiment(ds, sd, r, beta, cfg["t"], cfg["replications"],
                                                    cfg["seed"], regime=regime, threads=threads)
        rows += list(res.rows())
        out.append({"r": r, "lambda_r": res.params.lambda_r, "insufficient_data": res.insufficient_data,
                    "tests": {_pair(a, b): tr.to_json() for (a, b), tr in res.tests.items()}})
    w.csv("transient_pmf.csv", ["r", "t", "discipline", "k", "pmf"], rows)
    w.json("transient_tests.json", {"results": out})


def _paths(cfg, w: Writer, threads, regime: str, name: str):
    sd = config.build_services(cfg)[0]
    beta = cfg["scaling"]["beta"]
    grid = cfg.get("grid", {})
    T, step = grid.get("T", 2.0), grid.get("step", 0.01)
    ds = config.build_disciplines(cfg)
    labels = scaling._labels(ds)
    for idx, (label, d) in enumerate(zip(labels, ds)):
        rows, means = [], []
        for r in config._r_values(cfg):
            ts, q = scaling.scaled_paths(d, sd, r, beta, cfg["replications"], cfg["seed"],
                                         regime=regime, T=T, step=step, key=(idx,), threads=threads)
            for rep in range(q.shape[0]):
                rows += [(r, rep, t, x) for t, x in zip(ts, q[rep])]
            means += [(r, t, m) for t, m in zip(ts, q.mean(axis=0))]
        suffix = "" if len(ds) == 1 else f"_{label}"
        w.csv(f"{name}_paths{suffix}.csv", ["r", "replication", "t", "q_hat"], rows)
        w.csv(f"{name}_mean{suffix}.csv", ["r", "t", "mean_q_hat"], means)


def _diffusion(cfg, w: Writer, threads):
    _paths(cfg, w, threads, "diffusion", "diffusion")


def _heavy(cfg, w: Writer, threads):
    if "t1" not in cfg:
        _paths(cfg, w, threads, "heavy", "heavy")
        return
    ds = config.build_disciplines(cfg)
    sd = config.build_services(cfg)[0]
    labels = scaling._labels(ds)
    rows = {label: [] for label in labels}
    out = []
    for r in config._r_values(cfg):
        res = scaling.two_time_experiment(ds, sd, r, cfg["scaling"]["beta"], cfg["t1"], cfg["t2"],
                                          cfg["replications"], cfg["seed"], threads=threads)
        for label in labels:
            rows[label] += list(res.rows(label))
        out.append({
            "r": r, "c_r": res.params.c_r, "lambda_r": res.params.lambda_r,
            "summary": {label: res.summary(label) for label in labels},
            "marginal_tests": {_pair(a, b): {"t1": m[0].to_json(), "t2": m[1].to_json()}
                               for (a, b), m in res.marginal_tests.items()},
            "increment_tests": {_pair(a, b): tr.to_json() for (a, b), tr in res.increment_tests.items()},
            "joint_tests": {_pair(a, b): tr.to_json() for (a, b), tr in res.joint_tests.items()},
        })
        _log(f"two-time r={r} done")
    for label in labels:
        w.csv(f"two_time_{label}.csv", ["r", "t1", "t2", "q1", "q2"], rows[label])
    w.json("two_time_summary.json", {"results": out})


def _collapse(cfg, w: Writer, threads):
    d = config.build_disciplines(cfg)[0]
    sd = config.build_services(cfg)[0]
    rows, out = [], []
    for r in config._r_values(cfg):
        res = scaling.collapse_check(d, sd, r, cfg["scaling"]["beta"], cfg["t"], cfg["replications"],
                                     cfg["seed"], threads)
        rows += [(r, q, x) for q, x in zip(res.q_hat, res.w_scaled)]
        out.append({"r": r, "t": res.t, "correlation": res.correlation,
                    "mean_abs_deviation": res.mean_abs_deviation})
    w.csv("collapse.csv", ["r", "q_hat", "w_scaled"], rows)
    w.json("collapse.json", {"results": out})


def _ecdf_rows(r, values, cdf):
    e = stats.Ecdf(values)
    return [(r, x, p, float(cdf(x))) for x, p in zip(e.x, e.cum)]


def _rbm_compare(cfg, w: Writer, threads):
    d = config.build_disciplines(cfg)[0]
    sd = config.build_services(cfg)[0]
    rows, out = [], []
    for r in config._r_values(cfg):
        res = scaling.rbm_compare(d, sd, r, cfg["scaling"]["beta"], cfg["t"], cfg["replications"],
                                  cfg["seed"], threads)
        rows += _ecdf_rows(r, res.q_hat, lambda x: rbm_transition_cdf(x, res.t, res.params))
        out.append({"r": r, "t": res.t, "mu": res.params.mu, "sigma2": res.params.sigma2,
                    "ks": res.test.statistic, "p": res.test.p_value})
        _log(f"rbm-compare r={r}: ks={res.test.statistic:.4f}")
    w.csv("rbm_compare.csv", ["r", "x", "ecdf", "rbm_cdf"], rows)
    w.json("rbm_compare.json", {"results": out})


def _cycle_tails(cfg, w: Writer, threads):
    d = config.build_disciplines(cfg)[0]
    sd = config.build_services(cfg)[0]
    lam = cfg["lambda"] if "lambda" in cfg else scaling.lambda_r(config._r_values(cfg)[0],
                                                               cfg["scaling"]["beta"], sd.mean)
    rho = lam * sd.mean
    cycles = scaling.collect_cycles(d, sd, lam, cfg["cycles"], cfg["seed"], (0,), threads)
    x_grid = cfg.get("x_grid") or [1, 2, 3, 5, 10, 20, 50, 100]
    exact = isinstance(sd, Exponential)
    rows = []
    for tp in stats.tail_curve(cycles, x_grid):
        # P(max > x) = P(max >= floor(x) + 1) for integer-valued maxima
        oracle = stats.mm1_cycle_max_tail(rho, int(np.floor(tp.x)) + 1) if exact else ""
        rows.append((tp.x, tp.prob, tp.lower, tp.upper, tp.log_x, tp.log_prob, oracle))
    w.csv("cycle_tails.csv", ["x", "prob", "lower", "upper", "log_x", "log_prob", "mm1_oracle"], rows)
    w.json("cycle_tails.json", {"rho": rho, "n_cycles": len(cycles),
                                "max_q": int(cycles.max_q.max()),
                                "mean_cycle_length": float(cycles.cycle_length.mean())})


def _rbm_selftest(cfg, w: Writer, threads):
    if "rbm" in cfg:
        p = RBMParams(cfg["rbm"]["mu"], cfg["rbm"]["sigma2"])
    else:
        sd = config.build_services(cfg)[0]
        p = rbm_params_from_queue(sd.mean, sd.second_moment, cfg["scaling"]["beta"])
    t = cfg["t"]
    x = simulate_rbm(p, [t], stream(cfg["seed"], 0), cfg["paths"], cfg.get("substeps", 1000),
                     method=cfg.get("method", "bridge"))[:, 0]
    test = stats.ks_one_sample(x, lambda v: rbm_transition_cdf(v, t, p))
    qs = np.quantile(x, np.linspace(0.0, 1.0, 201))
    e = stats.Ecdf(x)
    rows = [(v, float(e(v)), float(rbm_transition_cdf(v, t, p))) for v in qs]
    w.csv("rbm_selftest.csv", ["x", "ecdf", "cdf"], rows)
    w.json("rbm_selftest.json", {"mu": p.mu, "sigma2": p.sigma2, "t": t, "paths": int(x.size),
                                 "ks": test.statistic, "p": test.p_value})


RUNNERS = {
    "stationary": _stationary,
    "insensitivity": _insensitivity,
    "transient-marginal": _transient,
    "diffusion-scale": _diffusion,
    "heavy-tail-scale": _heavy,
    "collapse": _collapse,
    "rbm-compare": _rbm_compare,
    "cycle-tails": _cycle_tails,
    "rbm-selftest": _rbm_selftest,
}


def run(cfg: dict, out: str | Path | None = None, threads: int | None = None) -> list[Path]:
    """Validate and execute one experiment config; returns the written paths."""
    rep = config.check(cfg)
    if not rep.ok:
        raise config.ConfigError(str(rep))
    out = Path(out if out is not None else cfg.get("output", f"out/{cfg['experiment']}"))
    threads = resolve_threads(threads if threads is not None else cfg.get("threads"))
    w = Writer(out, cfg)
    RUNNERS[cfg["experiment"]](cfg, w, threads)
    return w.written


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symq", description="Symmetric-queue simulation experiments.")
    ap.add_argument("--version", action="version", version=f"symq {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--threads", type=int)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = config.load(args.config)
    except FileNotFoundError:
        print(f"error: {args.config}: no such file", file=sys.stderr)
        return EXIT_CONFIG
    except config.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        rep = config.check(cfg)
        print(f"{args.config}: {rep}")
        return EXIT_OK if rep.ok else EXIT_CONFIG

    if isinstance(cfg, dict) and args.seed is not None:
        cfg["seed"] = args.seed
    rep = config.check(cfg)
    if not rep.ok:
        print(f"error: {args.config}:\n{rep}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = run(cfg, args.out, args.threads)
    except Exception as e:  # runtime failure, config was valid
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
