"""Experiment config files: JSON schema, semantic checks, object builders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import disciplines, service

EXPERIMENTS = (
    "stationary", "insensitivity", "transient-marginal", "diffusion-scale",
    "heavy-tail-scale", "collapse", "rbm-compare", "cycle-tails", "rbm-selftest",
)

_DISCIPLINE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["ps", "lcfs", "table"]},
        "rows": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1},
        "extension": {"enum": ["repeat", "uniform"]},
        "normalize": {"type": "boolean"},
        "name": {"type": "string"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_SERVICE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["exponential", "deterministic", "erlang", "hyperexp", "pareto", "paretolog"]},
        "mean": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "integer", "minimum": 1},
        "probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "means": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "scv": {"type": "number", "exclusiveMinimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 1},
        "xmin": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "discipline": _DISCIPLINE,
        "disciplines": {"type": "array", "items": _DISCIPLINE, "minItems": 1},
        "service": _SERVICE,
        "services": {"type": "array", "items": _SERVICE, "minItems": 2},
        "scaling": {
            "type": "object",
            "properties": {
                "r": {"type": "number", "exclusiveMinimum": 0},
                "r_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "beta": {"type": "number"},
            },
            "required": ["beta"],
            "additionalProperties": False,
        },
        "lambda": {"type": "number", "minimum": 0},
        "t": {"type": "number", "exclusiveMinimum": 0},
        "t1": {"type": "number", "exclusiveMinimum": 0},
        "t2": {"type": "number", "exclusiveMinimum": 0},
        "grid": {
            "type": "object",
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                           "step": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "replications": {"type": "integer", "minimum": 1},
        "cycles": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 1},
        "x_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "regime": {"enum": ["diffusion", "heavy"]},
        "rbm": {
            "type": "object",
            "properties": {"mu": {"type": "number"}, "sigma2": {"type": "number", "minimum": 0}},
            "required": ["mu", "sigma2"],
            "additionalProperties": False,
        },
        "paths": {"type": "integer", "minimum": 1},
        "substeps": {"type": "integer", "minimum": 1},
        "method": {"enum": ["refine", "bridge"]},
        "output": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
    },
    "required": ["experiment"],
    "additionalProperties": False,
}

# keys each experiment needs (beyond "experiment" and "seed")
REQUIRED = {
    "stationary": [("discipline",), ("service",), ("cycles",)],
    "insensitivity": [("discipline",), ("services",), ("cycles",)],
    "transient-marginal": [("disciplines",), ("service",), ("scaling",), ("t",), ("replications",)],
    "diffusion-scale": [("discipline",), ("service",), ("scaling",), ("replications",)],
    "heavy-tail-scale": [("disciplines", "discipline"), ("service",), ("scaling",), ("replications",)],
    "collapse": [("discipline",), ("service",), ("scaling",), ("t",), ("replications",)],
    "rbm-compare": [("discipline",), ("service",), ("scaling",), ("t",), ("replications",)],
    "cycle-tails": [("discipline",), ("service",), ("cycles",)],
    "rbm-selftest": [("t",), ("paths",)],
}

RATE_EXPERIMENTS = ("stationary", "insensitivity", "cycle-tails")


class ConfigError(ValueError):
    pass


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.errors)


def load(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def check(cfg: dict, require_seed: bool = True) -> ValidationReport:
    """Schema plus semantic validation; never raises on bad content."""
    rep = ValidationReport()
    if not isinstance(cfg, dict):
        rep.errors.append("config must be a JSON object")
        return rep
    for err in sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in err.path) or "<root>"
        rep.errors.append(f"field {where}: {err.message}")
    if rep.errors:
        return rep
    if require_seed and "seed" not in cfg:
        rep.errors.append("seed required")
    exp = cfg["experiment"]
    for alternatives in REQUIRED[exp]:
        if not any(k in cfg for k in alternatives):
            rep.errors.append(f"field {'|'.join(alternatives)}: required for experiment {exp!r}")
    if exp in RATE_EXPERIMENTS or exp in ("transient-marginal", "diffusion-scale", "heavy-tail-scale",
                                          "collapse", "rbm-compare"):
        has_scaling, has_lambda = "scaling" in cfg, "lambda" in cfg
        if exp in RATE_EXPERIMENTS and has_scaling == has_lambda:
            rep.errors.append("exactly one of scaling and lambda must be given")
        if exp not in RATE_EXPERIMENTS and has_lambda:
            rep.errors.append(f"field lambda: experiment {exp!r} is driven by scaling (r, beta)")
    sc = cfg.get("scaling")
    if sc is not None and ("r" in sc) == ("r_list" in sc):
        rep.errors.append("field scaling: give exactly one of r and r_list")
    if rep.errors:
        return rep

    for key, spec in _discipline_specs(cfg):
        try:
            d = disciplines.from_config(spec)
        except (disciplines.InvalidDisciplineError, KeyError, TypeError) as e:
            rep.errors.append(f"field {key}: {e}")
            continue
        vr = disciplines.validate(d, max(d.n_max + 1, 50))
        for n, i, msg in vr.violations:
            rep.errors.append(f"field {key}: (n={n}, i={i}) {msg}")

    sds = []
    for key, spec in _service_specs(cfg):
        try:
            sds.append(service.from_config(spec))
        except ValueError as e:
            rep.errors.append(f"field {key}: {e}")
    if rep.errors:
        return rep

    if exp == "heavy-tail-scale" or cfg.get("regime") == "heavy":
        sd = sds[0]
        if not isinstance(sd, service.HEAVY_TAILED) or not 1 < sd.alpha < 2:
            rep.errors.append("field service: heavy-tail scaling requires alpha in (1,2) "
                              "(pareto or paretolog service)")
    if exp in ("collapse", "rbm-compare") and not sds[0].has_finite_variance:
        rep.errors.append(f"field service: experiment {exp!r} requires a finite second moment")
    if exp == "insensitivity":
        means = [sd.mean for sd in sds]
        if max(means) - min(means) > 1e-9 * max(means):
            rep.errors.append(f"field services: means must be equal, got {means}")
    if exp == "heavy-tail-scale" and ("t1" in cfg) != ("t2" in cfg):
        rep.errors.append("fields t1, t2: give both or neither")
    if "t1" in cfg and "t2" in cfg and not cfg["t1"] < cfg["t2"]:
        rep.errors.append("fields t1, t2: need t1 < t2")
    if exp == "rbm-selftest" and "rbm" not in cfg and not ("service" in cfg and "scaling" in cfg):
        rep.errors.append("field rbm: give rbm {mu, sigma2} or service plus scaling.beta")

    if exp in RATE_EXPERIMENTS:
        for sd in sds:
            for lam, label in _rates(cfg, sd):
                rho = lam * sd.mean
                if rho >= 1:
                    rep.errors.append(f"unstable configuration: rho = {rho:.6g} >= 1 ({label})")
                if lam <= 0 and "lambda" in cfg:
                    rep.errors.append("field lambda: must be positive for cycle-based experiments")
        if sc is not None and sc["beta"] <= 0:
            rep.errors.append(f"unstable configuration: beta = {sc['beta']} gives rho >= 1")
    if sc is not None:
        for r in _r_values(cfg):
            if sc["beta"] > r:
                rep.errors.append(f"field scaling: beta={sc['beta']} > r={r} gives a negative arrival rate")
    return rep


def _discipline_specs(cfg):
    if "discipline" in cfg:
        yield "discipline", cfg["discipline"]
    for j, spec in enumerate(cfg.get("disciplines", [])):
        yield f"disciplines/{j}", spec


def _service_specs(cfg):
    if "service" in cfg:
        yield "service", cfg["service"]
    for j, spec in enumerate(cfg.get("services", [])):
        yield f"services/{j}", spec


def _r_values(cfg):
    sc = cfg.get("scaling") or {}
    return list(sc.get("r_list", [])) + ([sc["r"]] if "r" in sc else [])


def _rates(cfg, sd):
    if "lambda" in cfg:
        return [(cfg["lambda"], f"lambda={cfg['lambda']}, m={sd.mean:.6g}")]
    beta = cfg["scaling"]["beta"]
    return [((1.0 - beta / r) / sd.mean, f"r={r}, beta={beta}") for r in _r_values(cfg) if r > 0]


def validate_config(path: str | Path) -> ValidationReport:
    try:
        cfg = load(path)
    except ConfigError as e:
        return ValidationReport([str(e)])
    return check(cfg)


def build_disciplines(cfg: dict) -> list[disciplines.Discipline]:
    return [disciplines.from_config(spec) for _, spec in _discipline_specs(cfg)]


def build_services(cfg: dict) -> list[service.ServiceDistribution]:
    return [service.from_config(spec) for _, spec in _service_specs(cfg)]
