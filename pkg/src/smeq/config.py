"""Config-file loading: TOML sections to scenario objects.

Every validation failure raises ConfigError whose message starts with the
dotted path of the offending field, so a batch driver can point at the
exact line of a bad config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from .geometry import Domain
from .measures import MeasureSpec, PotentialMeasure
from .stochastic import PathConfig
from .verify import CHECK_NAMES, Scenario

__all__ = ["ConfigError", "LoadedConfig", "load_config", "parse_config"]

_DOMAIN_ARITY = {"interval": 2, "disk": 3, "rectangle": 4}
_DOMAIN_SHAPE = {
    "interval": "[a, b]",
    "disk": "[cx, cy, r]",
    "rectangle": "[a1, b1, a2, b2]",
}

_SECTIONS = ("domain", "potential", "data", "grid", "mc", "checks")

_DEFAULT_PROBES_1D = ((0.15,), (0.35,), (0.55,), (0.75,), (0.9,))


class ConfigError(ValueError):
    """A config file failed validation; the message names the field."""

    def __init__(self, field: str, problem: str):
        self.field = field
        super().__init__(f"{field}: {problem}")


@dataclass(frozen=True)
class LoadedConfig:
    """Everything a subcommand needs, parsed and validated."""

    scenario: Scenario
    probes: tuple
    mollifier_ladder: tuple


def _require(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}", "required key is missing")
    return table[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _point(value, dim: int, path: str) -> tuple:
    if not isinstance(value, list) or len(value) != dim:
        raise ConfigError(
            path, f"expected a point with {dim} coordinate(s), got {value!r}"
        )
    return tuple(_number(c, f"{path}[{i}]") for i, c in enumerate(value))


def _reject_unknown(table: dict, known: tuple, path: str):
    for key in table:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")


def _parse_domain(table) -> Domain:
    if not isinstance(table, dict):
        raise ConfigError("domain", "expected a table")
    _reject_unknown(table, ("kind", "params"), "domain")
    kind = _require(table, "kind", "domain")
    if kind not in _DOMAIN_ARITY:
        raise ConfigError(
            "domain.kind", f"expected interval, disk, or rectangle, got {kind!r}"
        )
    params = _require(table, "params", "domain")
    if not isinstance(params, list) or len(params) != _DOMAIN_ARITY[kind]:
        raise ConfigError(
            "domain.params", f"{kind} requires {_DOMAIN_SHAPE[kind]}, got {params!r}"
        )
    vals = [_number(v, f"domain.params[{i}]") for i, v in enumerate(params)]
    try:
        if kind == "interval":
            return Domain.interval(vals[0], vals[1])
        if kind == "disk":
            return Domain.disk((vals[0], vals[1]), vals[2])
        return Domain.rectangle(*vals)
    except ValueError as e:
        raise ConfigError("domain.params", str(e)) from e


def _parse_measure(table, domain: Domain, path: str) -> MeasureSpec:
    if not isinstance(table, dict):
        raise ConfigError(path, "expected a table")
    _reject_unknown(table, ("lebesgue", "power", "atoms"), path)
    terms = []
    if "lebesgue" in table:
        terms.append((_number(table["lebesgue"], f"{path}.lebesgue"), ()))
    power = table.get("power", [])
    if not isinstance(power, list):
        raise ConfigError(f"{path}.power", "expected a list of tables")
    power_triples = []
    for i, entry in enumerate(power):
        epath = f"{path}.power[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(epath, "expected a table")
        _reject_unknown(entry, ("center", "beta", "coef"), epath)
        center = _point(_require(entry, "center", epath), domain.dimension,
                        f"{epath}.center")
        beta = _number(_require(entry, "beta", epath), f"{epath}.beta")
        coef = _number(entry.get("coef", 1.0), f"{epath}.coef")
        power_triples.append((center, beta, coef))
        terms.append((coef, ((center, beta),)))
    atoms = table.get("atoms", [])
    if not isinstance(atoms, list):
        raise ConfigError(f"{path}.atoms", "expected a list of tables")
    atom_pairs = []
    for i, entry in enumerate(atoms):
        epath = f"{path}.atoms[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(epath, "expected a table")
        _reject_unknown(entry, ("point", "weight"), epath)
        point = _point(_require(entry, "point", epath), domain.dimension,
                       f"{epath}.point")
        weight = _number(entry.get("weight", 1.0), f"{epath}.weight")
        atom_pairs.append((point, weight))
    try:
        if terms:
            m = MeasureSpec.from_terms(domain, tuple(terms))
            if atom_pairs:
                m = replace(m, atoms=tuple(atom_pairs))
        else:
            m = MeasureSpec(domain, atoms=tuple(atom_pairs))
    except ValueError as e:
        raise ConfigError(path, str(e)) from e
    return m


def _parse_potential(table, domain: Domain) -> PotentialMeasure:
    base = _parse_measure(table, domain, "potential")
    singular = tuple(
        (center, beta, coef)
        for center, beta, coef in _power_triples(table, domain)
        if beta > 0
    )
    try:
        return PotentialMeasure(base, singular_points=singular)
    except ValueError as e:
        raise ConfigError("potential", str(e)) from e


def _power_triples(table, domain: Domain):
    out = []
    for entry in table.get("power", []):
        center = tuple(float(c) for c in entry["center"])
        out.append((center, float(entry["beta"]), float(entry.get("coef", 1.0))))
    return out


def _parse_mc(table) -> Optional[PathConfig]:
    if table is None:
        return None
    if not isinstance(table, dict):
        raise ConfigError("mc", "expected a table")
    _reject_unknown(
        table, ("dt", "n_paths", "seed", "shell_epsilon", "max_time"), "mc"
    )
    dt = _number(_require(table, "dt", "mc"), "mc.dt")
    seed = _integer(_require(table, "seed", "mc"), "mc.seed")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("mc.seed", f"expected an unsigned 64-bit value, got {seed}")
    kwargs = {}
    if "n_paths" in table:
        kwargs["n_paths"] = _integer(table["n_paths"], "mc.n_paths")
    if "shell_epsilon" in table:
        kwargs["shell_epsilon"] = _number(table["shell_epsilon"], "mc.shell_epsilon")
    if "max_time" in table:
        kwargs["max_time"] = _number(table["max_time"], "mc.max_time")
    try:
        return PathConfig(dt=dt, seed=seed, **kwargs)
    except ValueError as e:
        raise ConfigError("mc", str(e)) from e


def parse_config(raw: dict) -> LoadedConfig:
    """Validate a parsed TOML document and build the scenario."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a TOML document")
    _reject_unknown(raw, _SECTIONS, "<root>")
    domain = _parse_domain(_require(raw, "domain", "<root>"))

    nu_base = _parse_potential(raw.get("potential", {}), domain)
    mu = _parse_measure(raw.get("data", {}), domain, "data")

    grid_tab = raw.get("grid", {})
    if not isinstance(grid_tab, dict):
        raise ConfigError("grid", "expected a table")
    _reject_unknown(grid_tab, ("resolution", "levels"), "grid")
    resolution = _integer(grid_tab.get("resolution", 512), "grid.resolution")
    if resolution < 2:
        raise ConfigError("grid.resolution", f"expected at least 2, got {resolution}")
    levels_raw = grid_tab.get("levels", [])
    if not isinstance(levels_raw, list):
        raise ConfigError("grid.levels", "expected a list of numbers")
    levels = tuple(
        _number(v, f"grid.levels[{i}]") for i, v in enumerate(levels_raw)
    )
    if any(b <= a for a, b in zip(levels, levels[1:])) or any(
        not (l > 0 and math.isfinite(l)) for l in levels
    ):
        raise ConfigError("grid.levels", "expected finite, strictly increasing caps")

    path_config = _parse_mc(raw.get("mc"))

    checks_tab = raw.get("checks", {})
    if not isinstance(checks_tab, dict):
        raise ConfigError("checks", "expected a table")
    _reject_unknown(checks_tab, ("names", "probes", "mollifier_ladder"), "checks")
    names_raw = checks_tab.get("names", list(CHECK_NAMES))
    if not isinstance(names_raw, list):
        raise ConfigError("checks.names", "expected a list of check names")
    for i, name in enumerate(names_raw):
        if name not in CHECK_NAMES:
            raise ConfigError(
                f"checks.names[{i}]",
                f"unknown check {name!r}; valid names: {', '.join(CHECK_NAMES)}",
            )
    probes_raw = checks_tab.get("probes")
    if probes_raw is None:
        probes = _DEFAULT_PROBES_1D if domain.dimension == 1 else ()
    else:
        if not isinstance(probes_raw, list):
            raise ConfigError("checks.probes", "expected a list of points")
        probes = tuple(
            _point(p, domain.dimension, f"checks.probes[{i}]")
            for i, p in enumerate(probes_raw)
        )
    for i, p in enumerate(probes):
        if not domain.contains(p):
            raise ConfigError(f"checks.probes[{i}]", f"point {p} is not interior")
    ladder_raw = checks_tab.get("mollifier_ladder", [1e1, 1e2, 1e3, 1e4])
    if not isinstance(ladder_raw, list) or not ladder_raw:
        raise ConfigError("checks.mollifier_ladder", "expected a nonempty list")
    ladder = tuple(
        _number(v, f"checks.mollifier_ladder[{i}]") for i, v in enumerate(ladder_raw)
    )

    try:
        scenario = Scenario(
            domain=domain,
            nu=nu_base,
            mu=mu,
            resolution=resolution,
            levels=levels,
            path_config=path_config,
            checks=tuple(names_raw),
        )
    except ValueError as e:
        raise ConfigError("<root>", str(e)) from e
    return LoadedConfig(scenario=scenario, probes=probes, mollifier_ladder=ladder)


def load_config(path: str) -> LoadedConfig:
    """Read and validate a TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<file>", f"TOML parse error: {e}")
    return parse_config(raw)
