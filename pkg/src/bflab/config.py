"""Experiment configuration: JSON schema, validation, and typed access.

The on-disk format is a single JSON object; `CONFIG_SCHEMA` documents every
field and is what `bflab validate` checks against.  Pass/fail thresholds
always live in the config (under "thresholds"), never in code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

EXPERIMENT_KINDS = (
    "hh-baseline",
    "semiclassical-sweep",
    "meanfield-smallN",
    "stability-perturb",
    "commutator-monitor",
    "transform-roundtrip",
)

# documented schema: field -> (type, required, description)
CONFIG_SCHEMA: dict[str, Any] = {
    "experiment": ("str, one of " + ", ".join(EXPERIMENT_KINDS), True,
                   "which runner to dispatch to"),
    "seed": ("int", False, "PRNG seed for randomized recipes (default 0)"),
    "output_dir": ("str", True, "directory for report.json and CSV series"),
    "grid": ({"d": "int 1..3", "n": "even int >= 4", "L": "float > 0"}, True,
             "position grid"),
    "potential": ({"kind": "zero|gaussian|cosine|tabulated", "...": "kind params"},
                  True, "interaction potential V"),
    "regime": ({"kind": "microscopic|macroscopic|custom", "M": "int", "...":
                "custom fields lam/hbar/m_F/m_B/N"}, False,
               "scaling regime (experiments that evolve coupled states)"),
    "time": ({"T": "float >= 0", "dt": "float > 0",
              "checkpoints": "[floats], optional"}, False, "integration window"),
    "initial": ({"orbitals": "recipe dict", "phi": "recipe dict",
                 "f": "recipe dict + n_p + p_max"}, False, "initial data recipes"),
    "sweep": ({"hbars": "[floats], >= 3 entries"}, False,
              "semiclassical-sweep family"),
    "perturbations": ({"epsilons": "[floats]", "target": "phi"}, False,
                      "stability-perturb sizes"),
    "xi_values": ("[floats]", False, "commutator-monitor xi samples"),
    "count": ("int", False, "transform-roundtrip: number of random kernels"),
    "hbar": ("float", False, "transform-roundtrip: transform scale"),
    "thresholds": ("dict rule-name -> float", False,
                   "named acceptance thresholds used for pass/fail flags"),
    "emit_dat": ("bool", False, "additionally write gnuplot-style .dat files"),
}


@dataclass
class ExperimentConfig:
    """Validated experiment configuration."""

    experiment: str
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _validate(data)
        return cls(
            experiment=data["experiment"],
            output_dir=data["output_dir"],
            raw=data,
            seed=int(data.get("seed", 0)),
        )

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)

    def __getitem__(self, key: str):
        return self.raw[key]

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def thresholds(self) -> dict:
        return dict(self.raw.get("thresholds", {}))


def _require(data: dict, key: str, kind, where: str):
    if key not in data:
        raise ConfigError(f"{where}: missing required field {key!r}")
    if kind is not None and not isinstance(data[key], kind):
        raise ConfigError(
            f"{where}: field {key!r} must be {kind}, got {type(data[key]).__name__}"
        )
    return data[key]


def _validate(data: dict):
    exp = _require(data, "experiment", str, "config")
    if exp not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"config: unknown experiment {exp!r}; expected one of {EXPERIMENT_KINDS}"
        )
    _require(data, "output_dir", str, "config")
    grid = _require(data, "grid", dict, "config")
    for key in ("d", "n", "L"):
        _require(grid, key, (int, float), "config.grid")
    if int(grid["d"]) not in (1, 2, 3):
        raise ConfigError("config.grid: d must be 1, 2 or 3")
    if int(grid["n"]) % 2 != 0 or int(grid["n"]) < 4:
        raise ConfigError("config.grid: n must be even and >= 4")
    if not grid["L"] > 0:
        raise ConfigError("config.grid: L must be positive")
    pot = _require(data, "potential", dict, "config")
    _require(pot, "kind", str, "config.potential")
    if pot["kind"] not in ("zero", "gaussian", "cosine", "tabulated"):
        raise ConfigError(f"config.potential: unknown kind {pot['kind']!r}")

    if "time" in data:
        t = data["time"]
        if not isinstance(t, dict):
            raise ConfigError("config.time must be an object")
        if "T" in t and "dt" in t:
            if t["dt"] <= 0:
                raise ConfigError("config.time: dt must be positive")
            if t["T"] < 0:
                raise ConfigError("config.time: T must be nonnegative")
            steps = t["T"] / t["dt"]
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise ConfigError("config.time: T must be an integer multiple of dt")
        for cp in t.get("checkpoints", []):
            if cp < 0 or ("T" in t and cp > t["T"] + 1e-12):
                raise ConfigError(f"config.time: checkpoint {cp} outside [0, T]")

    if exp == "semiclassical-sweep":
        sweep = _require(data, "sweep", dict, "config")
        hbars = _require(sweep, "hbars", list, "config.sweep")
        if len(hbars) < 3:
            raise ConfigError("config.sweep: need at least 3 hbar points")
        if any(h <= 0 for h in hbars):
            raise ConfigError("config.sweep: hbar values must be positive")
    if exp == "stability-perturb":
        pert = _require(data, "perturbations", dict, "config")
        eps = _require(pert, "epsilons", list, "config.perturbations")
        if not eps:
            raise ConfigError("config.perturbations: empty epsilon list")
    if exp == "meanfield-smallN":
        if "boson_counts" not in data or not data["boson_counts"]:
            raise ConfigError("config: meanfield-smallN needs boson_counts")
    if exp in ("hh-baseline", "stability-perturb", "commutator-monitor",
               "meanfield-smallN"):
        if "time" not in data:
            raise ConfigError(f"config: {exp} needs a time block")

    if "regime" in data:
        reg = data["regime"]
        kind = reg.get("kind", "custom")
        if kind not in ("microscopic", "macroscopic", "custom"):
            raise ConfigError(f"config.regime: unknown kind {kind!r}")
        if kind in ("microscopic", "macroscopic") and "M" not in reg:
            raise ConfigError("config.regime: named regimes need M")
        if kind == "custom":
            for key in ("lam", "hbar", "m_F", "m_B", "N", "M"):
                if key not in reg:
                    raise ConfigError(f"config.regime: custom regime needs {key!r}")
