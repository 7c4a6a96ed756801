"""Declarative pipeline configuration.

Every knob that the method leaves open (scope window, proximity radius,
penalty weights, thresholds) surfaces here so experiments are reproducible
from a single YAML file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .corpus import DEFAULT_LABEL_SUBSET
from .crf import (
    CONSTRAINT_ATTR_EXISTS,
    CONSTRAINT_TYPE_EXISTS,
    CONSTRAINT_TYPE_SAME_SENTENCE,
    CodlConfig,
    Constraint,
    ConstraintSet,
    CrfHyperparams,
)


@dataclass
class PipelineConfig:
    labels: tuple[str, ...] = DEFAULT_LABEL_SUBSET
    sigma2: float = 10.0
    crf_max_iter: int = 500
    crf_tol: float = 1e-5
    use_type_constraint: bool = True
    use_attr_constraint: bool = True
    use_same_sentence_constraint: bool = True
    rho_attr: float | None = None  # None: estimate from data
    rho_same: float | None = None
    gamma: float = 0.9
    codl_iters: int = 10
    window: int = 4
    lexicon_path: str | None = None
    vectors_path: str | None = None
    expansion_threshold: float = 0.7
    near_radius_km: float = 100.0
    k: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.window < 0:
            raise ValueError("window must be non-negative")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.near_radius_km <= 0:
            raise ValueError("near_radius_km must be positive")

    @staticmethod
    def from_yaml(path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        known = {f for f in PipelineConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "labels" in data:
            data["labels"] = tuple(data["labels"])
        return PipelineConfig(**data)

    def hyperparams(self) -> CrfHyperparams:
        return CrfHyperparams(
            labels=tuple(self.labels),
            sigma2=self.sigma2,
            max_iter=self.crf_max_iter,
            tol=self.crf_tol,
        )

    def codl(self) -> CodlConfig:
        return CodlConfig(gamma=self.gamma, max_iter=self.codl_iters)

    def constraints(self, rhos: dict[str, float] | None = None) -> ConstraintSet:
        """Constraint set honoring the toggles; explicit rho overrides beat
        estimated values."""
        rhos = rhos or {}
        out = []
        if self.use_type_constraint:
            out.append(Constraint(CONSTRAINT_TYPE_EXISTS, hard=True))
        if self.use_attr_constraint:
            rho = self.rho_attr if self.rho_attr is not None else rhos.get(
                CONSTRAINT_ATTR_EXISTS, 1.0
            )
            out.append(Constraint(CONSTRAINT_ATTR_EXISTS, hard=False, rho=rho))
        if self.use_same_sentence_constraint:
            rho = self.rho_same if self.rho_same is not None else rhos.get(
                CONSTRAINT_TYPE_SAME_SENTENCE, 1.0
            )
            out.append(Constraint(CONSTRAINT_TYPE_SAME_SENTENCE, hard=False, rho=rho))
        return ConstraintSet(constraints=tuple(out))
