"""TOML run configuration, validated fail-fast before any compute.

A run takes its data from exactly one of two sources: a ``[simulation]``
section (synthetic cohort) or a ``[data]`` section (external files).  The
``[scoring]`` section decides how the polygenic score columns are
produced, ``[[models]]`` lists the regressions to fit, and an optional
``[ri]`` section requests a randomization test for one model term.
"""

from __future__ import annotations

import sys

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .modelspecs import ModelSpec
from .ri import SCHEMES

SCORING_MODES = ("full", "split", "inject", "precomputed")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PanelConfig(_Strict):
    n_snps: int = Field(ge=1)
    maf_range: tuple[float, float] = (0.05, 0.5)
    effect_sd: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_range(self):
        lo, hi = self.maf_range
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError("maf_range must satisfy 0 < lo <= hi < 1")
        return self


class FamilySizeConfig(_Strict):
    mean: float = 3.0
    max_size: int = Field(default=10, ge=1)
    probs: list[float] | None = None  # explicit dist over sizes 1..len(probs)


class StructuralConfig(_Strict):
    gamma_invest: float = 1.0
    gamma_complement: float = 0.0
    periods: int = Field(default=5, ge=1)
    investment_budget: float = 1.0


class DgpConfig(_Strict):
    mode: str = "reduced_form"
    alpha: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 0.0)
    covariate_effects: list[float] = Field(default_factory=list, max_length=3)
    family_sd: float = Field(default=0.0, ge=0)
    noise_sd: float = Field(default=0.0, ge=0)
    nurture_coef: float = 0.0
    reliability: float = Field(default=1.0, gt=0, le=1)
    structural: StructuralConfig | None = None

    @model_validator(mode="after")
    def _check_mode(self):
        if self.mode not in ("reduced_form", "structural"):
            raise ValueError(f"unknown DGP mode {self.mode!r}")
        return self


class SimulationConfig(_Strict):
    n_families: int = Field(ge=1)
    birth_year_range: tuple[int, int] = (1950, 1969)
    n_pcs: int = Field(default=0, ge=0)
    panel: PanelConfig
    family_size: FamilySizeConfig = FamilySizeConfig()
    dgp: DgpConfig = DgpConfig()


class DataConfig(_Strict):
    cohort: str
    genotypes: str | None = None
    weights: str | None = None


class ScoringConfig(_Strict):
    mode: str = "full"
    discovery_n_families: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def _check_mode(self):
        if self.mode not in SCORING_MODES:
            raise ValueError(
                f"unknown scoring mode {self.mode!r}; expected one of "
                f"{SCORING_MODES}")
        return self


class ModelConfig(_Strict):
    name: str
    outcome: str = "educ_years"
    scope: str = "within_family"
    pgs_form: str = "linear"
    birth_order_form: str = "firstborn_dummy"
    interaction: bool = False
    lastborn_control: bool = False
    keller_full_interactions: bool = False
    estimator: str = "ols"
    controls: list[str] = Field(default_factory=list)

    def to_spec(self) -> ModelSpec:
        return ModelSpec(name=self.name, outcome=self.outcome,
                         scope=self.scope, pgs_form=self.pgs_form,
                         birth_order_form=self.birth_order_form,
                         interaction=self.interaction,
                         lastborn_control=self.lastborn_control,
                         keller_full_interactions=self.keller_full_interactions,
                         estimator=self.estimator,
                         controls=tuple(self.controls))


class RiSection(_Strict):
    model: str
    target_term: str
    n_permutations: int = Field(default=1000, ge=1)
    scheme: str = "permute_birth_order_within_family"

    @model_validator(mode="after")
    def _check_scheme(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown permutation scheme {self.scheme!r}")
        return self


class RunConfig(_Strict):
    seed: int = 0
    n_workers: int = Field(default=1, ge=1)
    simulation: SimulationConfig | None = None
    data: DataConfig | None = None
    scoring: ScoringConfig = ScoringConfig()
    models: list[ModelConfig] = Field(default_factory=list)
    ri: RiSection | None = None

    @model_validator(mode="after")
    def _cross_checks(self):
        if (self.simulation is None) == (self.data is None):
            raise ValueError(
                "exactly one of [simulation] and [data] must be present")
        names = [m.name for m in self.models]
        if len(names) != len(set(names)):
            raise ValueError("model names must be unique")
        for m in self.models:
            m.to_spec()  # surfaces spec-level validation errors here
            if m.estimator == "oriv" and self.scoring.mode not in (
                    "split", "inject", "precomputed"):
                raise ValueError(
                    f"model {m.name!r} uses the stacked-IV estimator, which "
                    "needs two scores; set scoring mode to split, inject or "
                    "precomputed")
        if self.scoring.mode == "inject" and self.simulation is None:
            raise ValueError(
                "scoring mode 'inject' requires a [simulation] section")
        if self.scoring.mode in ("full", "split") and self.data is not None \
                and self.data.genotypes is None:
            raise ValueError(
                "scoring from external data requires a genotypes file")
        if self.ri is not None and self.ri.model not in names:
            raise ValueError(
                f"[ri] refers to unknown model {self.ri.model!r}")
        return self


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration in {path}:\n{exc}") from None
