"""Run configuration: a flat-sectioned plain-text key/value file.

Sections: [domain], [potential], [solver], [init], [sweep], [diagnostics],
[output].  All defaults are documented in the generated example config.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import SHAPES_1D, SHAPES_2D
from .solver import RECIPES

DIAGNOSTIC_CHECKS = ("equipartition", "ratios", "monotonicity", "pohozaev",
                     "boundary-energy", "varifold")

EXAMPLE_CONFIG = """\
# aclab run configuration (key = value per section; '#' starts a comment)

[domain]
# shape: interval | rectangle | disk | annulus | half-disk
shape = interval
# shape dimensions: interval length | rectangle sides | disk radius |
# annulus inner outer | half-disk radius
params = 1.0
# cells per axis (one value per axis; spacing must be uniform)
cells = 2048

[potential]
# kind: standard-quartic | user-polynomial
kind = standard-quartic
# coefficients (ascending degree), only for user-polynomial
# coefficients = 0.25 0.0 -0.5 0.0 0.25

[solver]
# Newton stopping tolerance on the discrete L2 residual
tol = 1e-10
# flow time step as a fraction of eps*h^2 (stability bound is 0.25)
dt_factor = 0.125
# flow iteration budget per epsilon
max_steps = 20000
# target spatial mean m in (-1, 1); comment out for unconstrained runs
constraint_mean = 0.0

[init]
# recipe: constant | step-x | step-y | two-layer | radial | file
recipe = step-x
# smoothing steps of pre-flow before Newton (tuning knob)
pre_steps = 100
# value = 0.0          # constant recipe
# offset = 0.5         # step recipes: interface position
# center = 0.0 0.0     # radial recipe
# radius = 0.25        # radial recipe
# file = init.txt      # file recipe: one nodal value per line, row-major

[sweep]
# strictly descending epsilons, each > 2h
epsilons = 0.1 0.05 0.025

[diagnostics]
# any of: equipartition ratios monotonicity pohozaev boundary-energy varifold
checks = equipartition ratios monotonicity pohozaev boundary-energy varifold
# sampled interface centers for ratio/monotonicity/integrality scans
samples = 10
# random tangential fields for the free-boundary check
fields = 5

[output]
dir = out
seed = 7
"""


@dataclass(frozen=True)
class RunConfig:
    shape: str
    params: tuple
    cells: tuple
    potential_kind: str = "standard-quartic"
    coefficients: tuple = ()
    tol: float = 1e-10
    dt_factor: float = 0.125
    max_steps: int = 20000
    constraint_mean: float | None = 0.0
    recipe: str = "step-x"
    pre_steps: int = 100
    recipe_params: dict = field(default_factory=dict)
    epsilons: tuple = (0.1, 0.05, 0.025)
    checks: tuple = DIAGNOSTIC_CHECKS
    samples: int = 10
    fields: int = 5
    out_dir: str = "out"
    seed: int = 7


def _floats(text):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def parse_config(text: str) -> RunConfig:
    """Parse the sectioned key/value format into a validated RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    if not cp.has_section("domain"):
        raise ConfigError("missing [domain] block")
    dom = cp["domain"]
    for key in ("shape", "params", "cells"):
        if key not in dom:
            raise ConfigError(f"[domain] is missing key {key!r}")
    shape = dom["shape"].strip()
    if shape not in SHAPES_1D + SHAPES_2D:
        raise ConfigError(f"domain.shape {shape!r} is not a supported shape")

    kw = dict(shape=shape, params=_floats(dom["params"]),
              cells=_ints(dom["cells"]))

    if cp.has_section("potential"):
        pot = cp["potential"]
        kind = pot.get("kind", "standard-quartic").strip()
        if kind not in ("standard-quartic", "user-polynomial"):
            raise ConfigError(f"potential.kind {kind!r} unknown")
        kw["potential_kind"] = kind
        if "coefficients" in pot:
            kw["coefficients"] = _floats(pot["coefficients"])

    if cp.has_section("solver"):
        sv = cp["solver"]
        if "tol" in sv:
            kw["tol"] = float(sv["tol"])
        if "dt_factor" in sv:
            kw["dt_factor"] = float(sv["dt_factor"])
            if kw["dt_factor"] > 0.25:
                raise ConfigError("solver.dt_factor exceeds the stability "
                                  "bound 0.25")
        if "max_steps" in sv:
            kw["max_steps"] = int(sv["max_steps"])
        kw["constraint_mean"] = (float(sv["constraint_mean"])
                                 if "constraint_mean" in sv else None)
        if kw["constraint_mean"] is not None \
                and not -1.0 < kw["constraint_mean"] < 1.0:
            raise ConfigError("solver.constraint_mean must lie in (-1, 1)")

    if cp.has_section("init"):
        init = cp["init"]
        recipe = init.get("recipe", "step-x").strip()
        if recipe not in RECIPES:
            raise ConfigError(f"init.recipe {recipe!r} not one of {RECIPES}")
        kw["recipe"] = recipe
        if "pre_steps" in init:
            kw["pre_steps"] = int(init["pre_steps"])
        rp = {}
        for key in ("value", "offset", "radius", "left", "right"):
            if key in init:
                rp[key] = float(init[key])
        if "center" in init:
            rp["center"] = _floats(init["center"])
        if "file" in init:
            rp["file"] = init["file"].strip()
        if recipe == "file" and "file" not in rp:
            raise ConfigError("init.recipe = file needs init.file = PATH")
        kw["recipe_params"] = rp

    if cp.has_section("sweep") and "epsilons" in cp["sweep"]:
        kw["epsilons"] = _floats(cp["sweep"]["epsilons"])
    if any(b >= a for a, b in zip(kw.get("epsilons", ()),
                                  kw.get("epsilons", ())[1:])):
        raise ConfigError("sweep.epsilons must descend")

    if cp.has_section("diagnostics"):
        dg = cp["diagnostics"]
        if "checks" in dg:
            checks = tuple(dg["checks"].split())
            for c in checks:
                if c not in DIAGNOSTIC_CHECKS:
                    raise ConfigError(
                        f"diagnostics check {c!r} not one of "
                        f"{DIAGNOSTIC_CHECKS}")
            kw["checks"] = checks
        if "samples" in dg:
            kw["samples"] = int(dg["samples"])
        if "fields" in dg:
            kw["fields"] = int(dg["fields"])

    if cp.has_section("output"):
        out = cp["output"]
        if "dir" in out:
            kw["out_dir"] = out["dir"].strip()
        if "seed" in out:
            kw["seed"] = int(out["seed"])

    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def example_config() -> str:
    return EXAMPLE_CONFIG
