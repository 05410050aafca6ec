"""Scenario configuration: a JSON document describing one experiment.

Unknown keys are rejected so that typos do not silently fall back to
defaults.  :func:`config_hash` is the SHA-256 of the canonical JSON form
(sorted keys, no whitespace) and ties result files to the scenario that
produced them.  Thread count is a run-time option and deliberately not part
of the configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .basis import BasisId
from .filter import FilterModel, Representation
from .lie import GroupTag, quat_exp_batch, quat_multiply, random_quaternions, wrap_phase

SCHEMA_VERSION = 1


# -- observation and drift registries ----------------------------------------

OBSERVATIONS_SO2 = {
    "sin": np.sin,
    "cos": np.cos,
    "zero": np.zeros_like,
}

OBSERVATIONS_SO3 = {
    "trace": lambda r: r[:, 0, 0] + r[:, 1, 1] + r[:, 2, 2],
    "e1_R_e1": lambda r: r[:, 0, 0],
    "e2_R_e1": lambda r: r[:, 1, 0],
    "e3_R_e3": lambda r: r[:, 2, 2],
    # (R_ij - R_ji) / 2 equals 2 q0 q_k for the Hamilton quaternion
    "q0q1x2": lambda r: 0.5 * (r[:, 2, 1] - r[:, 1, 2]),
    "q0q2x2": lambda r: 0.5 * (r[:, 0, 2] - r[:, 2, 0]),
    "q0q3x2": lambda r: 0.5 * (r[:, 1, 0] - r[:, 0, 1]),
    "zero": lambda r: np.zeros(r.shape[0]),
}


def observation_names(group: str) -> list[str]:
    return sorted(OBSERVATIONS_SO2 if group == "SO2" else OBSERVATIONS_SO3)


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    group: str = "SO2"
    representation: str = "phase"
    n_particles: int = 5000
    dt: float = 1e-3
    t_final: float = 2.0
    seed: int = 0
    drift: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.5})
    diffusion: list = field(default_factory=lambda: [0.3])
    observation: str = "sin"
    prior: dict = field(default_factory=lambda: {"kind": "uniform"})
    basis: str | None = None
    ridge: float = 0.0
    reorthonormalize_every: int = 100
    grid_oracle: bool = True
    grid_size: int = 512
    sir_oracle: bool = False
    sir_particles: int = 20000
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.group not in ("SO2", "SO3"):
            raise ConfigError(f"group must be SO2 or SO3, got {self.group!r}")
        reps = ("phase",) if self.group == "SO2" else ("matrix", "quaternion")
        if self.representation not in reps:
            raise ConfigError(f"representation for {self.group} must be one of {reps}")
        if int(self.n_particles) < 2:
            raise ConfigError("n_particles must be at least 2")
        if not self.dt > 0 or not self.t_final > 0:
            raise ConfigError("dt and t_final must be positive")
        if self.n_steps < 1:
            raise ConfigError("t_final must cover at least one step")
        if abs(self.n_steps * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ConfigError("t_final must be a whole number of steps")
        dim = 1 if self.group == "SO2" else 3
        if len(self.diffusion) != dim or any(v < 0 for v in self.diffusion):
            raise ConfigError(f"diffusion needs {dim} non-negative coordinates")
        self._check_drift(dim)
        names = OBSERVATIONS_SO2 if self.group == "SO2" else OBSERVATIONS_SO3
        if self.observation not in names:
            raise ConfigError(f"unknown observation {self.observation!r}; choose from {sorted(names)}")
        self._check_prior()
        if self.basis is not None:
            try:
                b = BasisId(self.basis)
            except ValueError:
                raise ConfigError(f"unknown basis {self.basis!r}") from None
            if b.representation != self.representation:
                raise ConfigError(f"basis {self.basis} does not suit {self.representation} particles")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if self.grid_oracle and self.group == "SO2" and self.grid_size < 16:
            raise ConfigError("grid_size must be at least 16")
        if self.sir_oracle and self.sir_particles < 2:
            raise ConfigError("sir_particles must be at least 2")

    def _check_drift(self, dim):
        kind = self.drift.get("kind")
        if kind == "constant":
            v = self.drift.get("value")
            ok = isinstance(v, (int, float)) if dim == 1 else (isinstance(v, list) and len(v) == 3)
            if not ok:
                raise ConfigError(f"constant drift needs {'a number' if dim == 1 else 'three numbers'}")
        elif kind == "harmonic" and dim == 1:
            if not {"value", "amplitude"} <= set(self.drift):
                raise ConfigError("harmonic drift needs value and amplitude")
        else:
            raise ConfigError(f"unsupported drift {self.drift!r}")

    def _check_prior(self):
        kind = self.prior.get("kind")
        allowed = {
            "SO2": {"uniform": set(), "von_mises": {"mean", "concentration"}, "point": {"mean"}},
            "SO3": {"uniform": set(), "point": {"mean"}, "gaussian": {"mean", "std"}},
        }[self.group]
        if kind not in allowed:
            raise ConfigError(f"prior kind for {self.group} must be one of {sorted(allowed)}")
        missing = allowed[kind] - set(self.prior)
        if missing:
            raise ConfigError(f"{kind} prior is missing {sorted(missing)}")
        if self.group == "SO3" and "mean" in self.prior:
            q = np.asarray(self.prior["mean"], dtype=float)
            if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
                raise ConfigError("SO3 prior mean must be a unit quaternion (q0, q1, q2, q3)")

    # -- derived ------------------------------------------------------------

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def tag(self) -> GroupTag:
        return GroupTag(self.group)

    @property
    def rep(self) -> Representation:
        return Representation(self.representation)

    @property
    def basis_id(self) -> BasisId:
        return BasisId(self.basis) if self.basis else self.rep.default_basis

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys {sorted(extra)}")
        return cls(**d)

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        d.update(changes)
        return ScenarioConfig.from_dict(d)


def canonical_json(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(canonical_json(cfg.to_dict()).encode()).hexdigest()


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ScenarioConfig.from_dict(d)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def default_config_path(name: str = "default") -> Path:
    return Path(__file__).with_name("scenarios") / f"{name}.json"


# -- model construction ------------------------------------------------------


def build_model(cfg: ScenarioConfig) -> FilterModel:
    if cfg.group == "SO2":
        obs = OBSERVATIONS_SO2[cfg.observation]
        if cfg.drift["kind"] == "harmonic":
            w0, a = float(cfg.drift["value"]), float(cfg.drift["amplitude"])
            drift = lambda theta: w0 + a * np.cos(theta)  # noqa: E731
        else:
            drift = float(cfg.drift["value"])
    else:
        obs = OBSERVATIONS_SO3[cfg.observation]
        drift = [float(v) for v in cfg.drift["value"]]
    return FilterModel(cfg.tag, drift, [float(v) for v in cfg.diffusion], obs)


def sample_prior(cfg: ScenarioConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` draws from the prior: phases for SO(2), Hamilton quaternions for SO(3)."""
    p = cfg.prior
    kind = p["kind"]
    if cfg.group == "SO2":
        if kind == "uniform":
            return rng.uniform(0.0, 2 * np.pi, n)
        if kind == "von_mises":
            return wrap_phase(rng.vonmises(float(p["mean"]), float(p["concentration"]), n))
        return np.full(n, float(wrap_phase(float(p["mean"]))))
    if kind == "uniform":
        return random_quaternions(rng, n)
    mean = np.asarray(p["mean"], dtype=float)
    if kind == "point":
        return np.tile(mean, (n, 1))
    v = float(p["std"]) * rng.standard_normal((n, 3))
    return quat_multiply(mean, quat_exp_batch(v))
