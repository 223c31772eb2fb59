"""Run configuration: TOML file, schema validation and command-line overrides."""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .nbody import ComparisonSettings

DEFAULTS: dict = {
    "seed": 1234,
    "basis": {"d": 1, "L": 2 * math.pi, "kmax": 2},
    "potential": {"profile": "cosine-bump", "c": 1.0, "R": 1.0},
    "sweep": {"N": [4, 8, 16, 32], "beta": [0.0, 0.3], "times": [0.5], "fit_time": None},
    "integrator": {"hartree_dt": 1e-3, "hartree_scheme": "rk4", "fock_dt": 5e-3, "nmax": 12,
                   "leak_budget": 1e-6, "nbody_method": "expm", "nbody_dt": 1e-3},
    "initial": {"condensate": "constant", "epsilon": 0.2, "excitation": "vacuum", "shift": 0.0},
    "budget": {"sector": 3_000_000},
    "gse": {"draws": 200, "max_modes": 3, "nmax": 16},
    "run": {"workers": 1},
    "output": {"dir": "out", "prefix": "bogodyn"},
}

_TYPES = {
    ("seed",): int,
    ("basis", "d"): int, ("basis", "L"): float, ("basis", "kmax"): int,
    ("potential", "profile"): str, ("potential", "c"): float, ("potential", "R"): float,
    ("sweep", "N"): list, ("sweep", "beta"): list, ("sweep", "times"): list,
    ("sweep", "fit_time"): (float, type(None)),
    ("integrator", "hartree_dt"): float, ("integrator", "hartree_scheme"): str,
    ("integrator", "fock_dt"): float, ("integrator", "nmax"): int,
    ("integrator", "leak_budget"): float, ("integrator", "nbody_method"): str,
    ("integrator", "nbody_dt"): float,
    ("initial", "condensate"): str, ("initial", "epsilon"): float,
    ("initial", "excitation"): str, ("initial", "shift"): float,
    ("budget", "sector"): int,
    ("gse", "draws"): int, ("gse", "max_modes"): int, ("gse", "nmax"): int,
    ("run", "workers"): int,
    ("output", "dir"): str, ("output", "prefix"): str,
}


def _merge(base: dict, extra: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(where)!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {'.'.join(where)!r} must be a table")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _coerce(path, val):
    want = _TYPES[path]
    name = ".".join(path)
    if want is float and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    if isinstance(want, tuple):
        if val is None:
            return None
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            return float(val)
        raise ConfigError(f"{name} must be a number or absent")
    if not isinstance(val, want) or isinstance(val, bool):
        raise ConfigError(f"{name} must be of type {want.__name__}, got {val!r}")
    return val


@dataclass
class SweepConfig:
    raw: dict = field(repr=False)
    source: str | None = None

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def n_modes(self) -> int:
        return (2 * self.raw["basis"]["kmax"] + 1) ** self.raw["basis"]["d"]

    def cells(self) -> list[tuple[int, float]]:
        return [(N, b) for b in self.raw["sweep"]["beta"] for N in self.raw["sweep"]["N"]]

    def fit_time(self) -> float:
        ft = self.raw["sweep"]["fit_time"]
        return max(self.raw["sweep"]["times"]) if ft is None else ft

    def comparison(self, N: int, beta: float) -> ComparisonSettings:
        b, p, i, ini = (self.raw[k] for k in ("basis", "potential", "integrator", "initial"))
        params = {} if p["profile"] == "zero" else {"c": p["c"], "R": p["R"]}
        return ComparisonSettings(
            d=b["d"], L=b["L"], kmax=b["kmax"], N=int(N), beta=float(beta),
            profile=p["profile"], profile_params=params,
            times=tuple(self.raw["sweep"]["times"]), nmax=i["nmax"],
            hartree_dt=i["hartree_dt"], hartree_scheme=i["hartree_scheme"], fock_dt=i["fock_dt"],
            leak_budget=i["leak_budget"], condensate=ini["condensate"],
            condensate_epsilon=ini["epsilon"], initial=ini["excitation"],
            initial_shift=ini["shift"], nbody_method=i["nbody_method"],
            nbody_dt=i["nbody_dt"], sector_budget=self.raw["budget"]["sector"])


def validate(raw: dict) -> dict:
    out = copy.deepcopy(raw)
    for path in _TYPES:
        node = out
        for k in path[:-1]:
            node = node[k]
        node[path[-1]] = _coerce(path, node[path[-1]])
    s = out["sweep"]
    for key in ("N", "beta", "times"):
        if not s[key]:
            raise ConfigError(f"sweep.{key} must be a non-empty list")
    if any(not isinstance(n, int) or isinstance(n, bool) or n < 2 for n in s["N"]):
        raise ConfigError(f"sweep.N entries must be integers >= 2, got {s['N']}")
    s["beta"] = [float(b) for b in s["beta"]]
    if any(not 0 <= b < 0.5 for b in s["beta"]):
        raise ConfigError(f"sweep.beta entries must lie in [0, 1/2), got {s['beta']}")
    s["times"] = [float(t) for t in s["times"]]
    if any(t < 0 for t in s["times"]):
        raise ConfigError("sweep.times must be non-negative")
    if s["fit_time"] is not None and s["fit_time"] not in s["times"]:
        raise ConfigError("sweep.fit_time must be one of sweep.times")
    b = out["basis"]
    if b["d"] < 1 or b["kmax"] < 0 or b["L"] <= 0:
        raise ConfigError("basis needs d >= 1, kmax >= 0, L > 0")
    i = out["integrator"]
    if i["hartree_scheme"] not in ("rk4", "strang"):
        raise ConfigError("integrator.hartree_scheme must be 'rk4' or 'strang'")
    if i["nbody_method"] not in ("expm", "rk4"):
        raise ConfigError("integrator.nbody_method must be 'expm' or 'rk4'")
    for key in ("hartree_dt", "fock_dt", "nbody_dt", "leak_budget"):
        if not i[key] > 0:
            raise ConfigError(f"integrator.{key} must be positive")
    for t in s["times"]:
        steps = t / i["fock_dt"]
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"sample time {t} is not a multiple of integrator.fock_dt")
    if out["potential"]["profile"] not in ("cosine-bump", "zero"):
        raise ConfigError(f"unknown potential profile {out['potential']['profile']!r}")
    if out["initial"]["condensate"] not in ("constant", "two-mode"):
        raise ConfigError("initial.condensate must be 'constant' or 'two-mode'")
    if out["initial"]["excitation"] not in ("vacuum", "ground"):
        raise ConfigError("initial.excitation must be 'vacuum' or 'ground'")
    if out["run"]["workers"] < 1:
        raise ConfigError("run.workers must be >= 1")
    return out


def parse_override(text: str) -> dict:
    """``section.key=value`` with a TOML value; bare words are taken as strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, val = text.split("=", 1)
    parts = key.strip().split(".")
    try:
        value = tomllib.loads(f"v = {val.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = val.strip()
    out: dict = {}
    node = out
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def load_config(path: str | Path | None = None, overrides=()) -> SweepConfig:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        raw = _merge(raw, data)
    for ov in overrides:
        raw = _merge(raw, parse_override(ov))
    return SweepConfig(validate(raw), None if path is None else str(path))
