"""Run configuration shared by the command-line tools."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .bem import MaterialParams
from .errors import InputError, ParseError
from .wrench import FrictionModel, WrenchMetric, metric_sqrt


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a run, with defaults for unit-free experiments.

    Stress and stiffness are in units of sigma_max and E, so both default
    to 1. Lengths are in normalized mesh units (bounding-box diagonal 1).
    """

    nu: float = 0.33
    sigma_max: float = 1.0
    E: float = 1.0
    theta: float = 0.5
    eps: float = 1e-3
    W_diag: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    D_init: int = 12
    S_count: int = 16
    K_seed_size: int = 64
    seed: int = 0
    N: int = 100
    C: int = 3
    budget: int = 5000
    max_expansions: int = 1000
    bound_method: str = "alg2"
    contact_radius: float = 0.04

    def __post_init__(self):
        # coerce so that equal settings serialize (and hash) identically
        try:
            object.__setattr__(self, "W_diag", tuple(float(x) for x in self.W_diag))
            for f in fields(self):
                v = getattr(self, f.name)
                if f.type == "float":
                    object.__setattr__(self, f.name, float(v))
                elif f.type == "int":
                    if isinstance(v, bool) or int(v) != v:
                        raise ValueError(f"{f.name} must be an integer")
                    object.__setattr__(self, f.name, int(v))
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad config value: {exc}") from exc
        try:
            self.material()
            FrictionModel(self.theta)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        if len(self.W_diag) != 6 or min(self.W_diag) <= 0:
            raise InputError("W_diag must hold 6 positive weights")
        if not 0 < self.eps < 1:
            raise InputError("eps must lie in (0, 1)")
        if self.D_init < 12:
            raise InputError("D_init must be at least 12 (the +-axes)")
        if self.S_count < 1 or self.K_seed_size < 0 or self.N < 1 or self.C < 1 or self.budget < 1:
            raise InputError("counts must be positive")
        if self.contact_radius < 0:
            raise InputError("contact_radius must be >= 0")
        if self.bound_method not in ("alg1", "alg2"):
            raise InputError(f"unknown bound method {self.bound_method!r}")

    # -- derived objects ------------------------------------------------------
    def material(self) -> MaterialParams:
        return MaterialParams.from_engineering(self.nu, self.E, self.sigma_max)

    def friction(self) -> FrictionModel:
        return FrictionModel(self.theta)

    def metric(self) -> WrenchMetric:
        return metric_sqrt(np.diag(self.W_diag))

    # -- serialization ----------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["W_diag"] = list(self.W_diag)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InputError(f"bad config value: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ParseError("config JSON must be an object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        try:
            return cls.from_json(text)
        except InputError as exc:
            raise type(exc)(f"{path}: {exc}") from exc

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig.from_dict(d)

    # -- hashes -------------------------------------------------------------
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def map_hash(self) -> str:
        """Hash of the settings the stress maps depend on."""
        key = json.dumps({"nu": self.nu, "E": self.E, "contact_radius": self.contact_radius}, sort_keys=True)
        return hashlib.sha256(key.encode()).hexdigest()


DEFAULT = RunConfig()
