"""Declarative regression specifications.

A :class:`ModelSpec` describes one regression column: outcome, score form,
birth-order form, interaction, controls, estimator, and scope.  The
builder turns a cohort table (mapping of column name to array, including
a pandas DataFrame) into a :class:`~sibgxe.linreg.DesignMatrix`; the
emitted column set is a pure function of the ModelSpec and the table schema.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BinningError, DomainError, MappingError, SchemaError
from .linreg import DesignMatrix, FitResult, ols, oriv

PGS_FORMS = ("none", "linear", "binary_above_mean", "quartiles",
             "linear_plus_squared")
BIRTH_ORDER_FORMS = ("none", "firstborn_dummy", "rank_dummies")
SCOPES = ("between_family", "within_family")
ESTIMATORS = ("ols", "oriv")
CONTROL_SETS = ("sex", "birth_year_dummies", "birth_month_dummies", "pcs")

RANK_DUMMY_NAMES = ("secondborn", "thirdborn", "fourthborn", "fifthborn_plus")


@dataclass
class ModelSpec:
    name: str = "model"
    outcome: str = "educ_years"
    scope: str = "within_family"
    pgs_form: str = "linear"
    birth_order_form: str = "firstborn_dummy"
    interaction: bool = False
    lastborn_control: bool = False
    keller_full_interactions: bool = False
    estimator: str = "ols"
    controls: tuple = ()
    score_column: str = "pgs"

    def __post_init__(self):
        self.controls = tuple(self.controls)
        if self.scope not in SCOPES:
            raise DomainError(f"unknown scope {self.scope!r}")
        if self.pgs_form not in PGS_FORMS:
            raise DomainError(f"unknown pgs_form {self.pgs_form!r}")
        if self.birth_order_form not in BIRTH_ORDER_FORMS:
            raise DomainError(f"unknown birth_order_form {self.birth_order_form!r}")
        if self.estimator not in ESTIMATORS:
            raise DomainError(f"unknown estimator {self.estimator!r}")
        unknown = set(self.controls) - set(CONTROL_SETS)
        if unknown:
            raise DomainError(f"unknown controls: {sorted(unknown)}")
        if self.interaction and (self.pgs_form == "none"
                                 or self.birth_order_form == "none"):
            raise DomainError(
                "interaction requires both a score form and a birth-order form")
        if self.estimator == "oriv":
            if self.pgs_form != "linear":
                raise DomainError("the stacked-IV estimator requires a linear "
                                  "score form")
            if self.birth_order_form == "rank_dummies":
                raise DomainError("the stacked-IV estimator supports the "
                                  "firstborn dummy only")
        if self.keller_full_interactions and (
                self.pgs_form != "linear"
                or self.birth_order_form != "firstborn_dummy"):
            raise DomainError(
                "full control interactions require the linear score and the "
                "firstborn dummy")


# ---------------------------------------------------------------------------
# table access helpers
# ---------------------------------------------------------------------------

def _columns_of(data):
    if hasattr(data, "columns"):
        return list(data.columns)
    return list(data.keys())


def _col(data, name, dtype=float):
    try:
        col = data[name]
    except KeyError:
        raise SchemaError(f"required column {name!r} is missing") from None
    return np.asarray(col, dtype=dtype)


def _pc_columns(data):
    cols = []
    for c in _columns_of(data):
        if c.startswith("pc") and c[2:].isdigit():
            cols.append((int(c[2:]), c))
    return [c for _, c in sorted(cols)]


# ---------------------------------------------------------------------------
# column blocks
# ---------------------------------------------------------------------------

def _quartile_dummies(score):
    if np.unique(score).size < 4:
        raise BinningError("quartile form requires at least four distinct "
                           "score values")
    cuts = np.quantile(score, [0.25, 0.5, 0.75])
    # boundary values fall into the lower quartile
    bins = np.digitize(score, cuts, right=True)
    cols, names = [], []
    for q in (1, 2, 3):
        dummy = (bins == q).astype(float)
        if dummy.sum() == 0:
            raise BinningError(f"quartile bin {q + 1} is empty")
        cols.append(dummy)
        names.append(f"pgs_q{q + 1}")
    if np.sum(bins == 0) == 0:
        raise BinningError("reference quartile bin is empty")
    return cols, names


def _score_block(data, spec):
    if spec.pgs_form == "none":
        return [], []
    score = _col(data, spec.score_column)
    if spec.pgs_form == "linear":
        return [score], [spec.score_column]
    if spec.pgs_form == "binary_above_mean":
        return [(score > score.mean()).astype(float)], ["pgs_above_mean"]
    if spec.pgs_form == "quartiles":
        return _quartile_dummies(score)
    # linear_plus_squared
    return [score, score**2], [spec.score_column, "pgs_sq"]


def _birth_order_block(data, spec):
    if spec.birth_order_form == "none":
        return [], []
    if spec.birth_order_form == "firstborn_dummy":
        return [_col(data, "firstborn")], ["firstborn"]
    order = np.minimum(_col(data, "birth_order", dtype=int), 5)
    cols = [(order == r).astype(float) for r in (2, 3, 4, 5)]
    return cols, list(RANK_DUMMY_NAMES)


def _control_block(data, spec):
    cols, names = [], []
    for control in spec.controls:
        if control == "sex":
            cols.append(_col(data, "sex"))
            names.append("sex")
        elif control == "birth_year_dummies":
            years = _col(data, "birth_year", dtype=int)
            for yr in np.unique(years)[1:]:
                cols.append((years == yr).astype(float))
                names.append(f"year_{yr}")
        elif control == "birth_month_dummies":
            months = _col(data, "birth_month", dtype=int)
            for mo in np.unique(months)[1:]:
                cols.append((months == mo).astype(float))
                names.append(f"month_{mo}")
        elif control == "pcs":
            for pc in _pc_columns(data):
                cols.append(_col(data, pc))
                names.append(pc)
    return cols, names


def build_design(data, spec: ModelSpec) -> DesignMatrix:
    """Construct the design matrix (with outcome attached) for one spec.

    For the stacked-IV estimator, the returned design carries only the
    exogenous controls; the score and interaction columns are assembled by
    the estimator itself from the two split scores.
    """
    cols, names = [], []

    bo_cols, bo_names = _birth_order_block(data, spec)
    if spec.estimator == "ols":
        cols += bo_cols
        names += bo_names
        sc_cols, sc_names = _score_block(data, spec)
        cols += sc_cols
        names += sc_names
        if spec.interaction:
            for bc, bn in zip(bo_cols, bo_names):
                for scv, scn in zip(sc_cols, sc_names):
                    cols.append(bc * scv)
                    names.append(f"{bn}_x_{scn}")

    if spec.lastborn_control:
        cols.append(_col(data, "lastborn"))
        names.append("lastborn")

    ctrl_cols, ctrl_names = _control_block(data, spec)
    cols += ctrl_cols
    names += ctrl_names

    if spec.keller_full_interactions and spec.estimator == "ols":
        firstborn = _col(data, "firstborn")
        score = _col(data, spec.score_column)
        for cv, cn in zip(ctrl_cols, ctrl_names):
            cols.append(firstborn * cv)
            names.append(f"firstborn_x_{cn}")
            cols.append(score * cv)
            names.append(f"{spec.score_column}_x_{cn}")

    if spec.scope == "between_family":
        cols.append(_col(data, "family_size"))
        names.append("family_size")
        cols.append(np.ones(len(cols[0]) if cols else
                            len(_col(data, "family_id", dtype=object))))
        names.append("const")
        fe_groups = []
        cluster_ids = []
    else:
        fe_groups = [np.asarray(data["family_id"])]
        cluster_ids = [np.asarray(data["family_id"])]

    outcome = _col(data, spec.outcome)
    if not cols:
        if spec.estimator == "ols":
            raise SchemaError("spec produces an empty design")
        # the stacked estimator supplies its own score and interaction columns
        values = np.empty((outcome.size, 0))
    else:
        values = np.column_stack(cols)
    return DesignMatrix(column_names=names, values=values,
                        cluster_ids=cluster_ids, fe_groups=fe_groups,
                        outcome=outcome)


def fit_spec(data, spec: ModelSpec, *, on_collinear="drop"):
    """Fit one model spec: OLS or the stacked two-score IV estimator."""
    design = build_design(data, spec)
    if spec.estimator == "ols":
        return ols(design, on_collinear=on_collinear)

    score_a = _col(data, "pgs_a")
    score_b = _col(data, "pgs_b")
    moderator = (_col(data, "firstborn")
                 if spec.birth_order_form == "firstborn_dummy" else None)
    family_ids = np.asarray(data["family_id"])
    individual_ids = np.asarray(data["individual_id"])
    # stack intercepts play the constant's role in the stacked estimator
    ctrl_idx = [j for j, c in enumerate(design.column_names) if c != "const"]
    ctrl_names = [design.column_names[j] for j in ctrl_idx]
    return oriv(
        design.outcome, score_a, score_b, moderator=moderator,
        controls=design.values[:, ctrl_idx] if ctrl_idx else None,
        family_ids=family_ids, individual_ids=individual_ids,
        within=(spec.scope == "within_family"),
        control_names=ctrl_names,
        score_name=spec.score_column, moderator_name="firstborn",
        include_interaction=spec.interaction, on_collinear=on_collinear)


def orthogonality_check(data, scope, *, controls=(),
                        score_column="pgs") -> FitResult:
    """Regress the score on the firstborn dummy; the randomization diagnostic.

    Within families the firstborn coefficient should be statistically
    indistinguishable from zero when transmission is Mendelian.
    """
    spec = ModelSpec(name="orthogonality", outcome=score_column, scope=scope,
                     pgs_form="none", birth_order_form="firstborn_dummy",
                     controls=tuple(controls), score_column=score_column)
    return fit_spec(data, spec)


# ---------------------------------------------------------------------------
# qualification-to-years mapping
# ---------------------------------------------------------------------------

ISCED_YEARS = (
    ("college_or_university", 20),
    ("nvq_hnd_hnc", 19),
    ("other_professional", 15),
    ("a_levels", 13),
    ("o_levels_gcse", 10),
    ("none_of_the_above", 7),
)

_ISCED_LOOKUP = dict(ISCED_YEARS)


def isced_years(qualification: str) -> int:
    """Years of education equivalent to a qualification category."""
    try:
        return _ISCED_LOOKUP[qualification]
    except KeyError:
        raise MappingError(
            f"unknown qualification {qualification!r}; expected one of "
            f"{sorted(_ISCED_LOOKUP)}") from None
