"""Estimation engine: fixed-effect absorption, cluster-robust OLS, 2SLS,
the stacked two-score instrumental-variables estimator, and instrument
diagnostics.

All fitting is pure with respect to its inputs; reductions are fixed-order
so results are bit-reproducible regardless of caller parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.stats

from .errors import (
    ClusteringError,
    CollinearityError,
    ConvergenceError,
    DiagnosticError,
    DimensionError,
    EmptySampleError,
    IdentificationError,
    NestingError,
    SampleSizeError,
    StandardizationError,
)

RANK_TOL = 1e-10
ABSORB_TOL = 1e-8
ABSORB_MAX_SWEEPS = 10_000


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DesignMatrix:
    """Dense regression design with optional cluster and fixed-effect labels."""

    column_names: list
    values: np.ndarray
    cluster_ids: list = field(default_factory=list)   # up to two dimensions
    fe_groups: list = field(default_factory=list)     # zero or more dimensions
    outcome: np.ndarray | None = None
    # bookkeeping filled in by absorb()
    outcome_original: np.ndarray | None = None
    absorbed: bool = False
    n_dropped_singletons: int = 0
    fe_dof: int = 0
    collinear_with_fe: tuple = ()

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != len(self.column_names):
            raise DimensionError("column_names must match the value columns")
        if not np.all(np.isfinite(self.values)):
            raise DimensionError("design values must be finite")
        n = self.values.shape[0]
        self.cluster_ids = [np.asarray(c) for c in self.cluster_ids]
        self.fe_groups = [np.asarray(g) for g in self.fe_groups]
        if len(self.cluster_ids) > 2:
            raise DimensionError("at most two clustering dimensions supported")
        for c in self.cluster_ids:
            if c.shape[0] != n:
                raise DimensionError("cluster labels must have one entry per row")
        for g in self.fe_groups:
            if g.shape[0] != n:
                raise DimensionError("fixed-effect labels must have one entry per row")
        if self.outcome is not None:
            self.outcome = np.asarray(self.outcome, dtype=float)
            if self.outcome.shape[0] != n:
                raise DimensionError("outcome length must match the design rows")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(eq=False)
class FitResult:
    """Coefficients plus cluster-robust covariance for one fitted model."""

    terms: tuple
    coefficients: np.ndarray
    vcov: np.ndarray
    n_obs: int
    n_dropped_singletons: int
    r2: float
    within_r2: float | None
    residual_dof: int
    dropped_terms: tuple = ()
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.terms = tuple(self.terms)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.vcov = np.asarray(self.vcov, dtype=float)
        k = len(self.terms)
        if self.coefficients.size != k or self.vcov.shape != (k, k):
            raise DimensionError("coefficient and vcov dimensions must agree")
        if k:
            scale = max(np.abs(self.vcov).max(), 1e-300)
            if np.abs(self.vcov - self.vcov.T).max() > 1e-8 * scale:
                raise DimensionError("vcov must be symmetric")
            eig = np.linalg.eigvalsh(0.5 * (self.vcov + self.vcov.T))
            if eig.min() < -1e-10 * max(eig.max(), 1e-300):
                raise DimensionError("vcov must be positive semidefinite")

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    @property
    def t_stats(self) -> np.ndarray:
        se = self.std_errors
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.coefficients / se, np.nan)

    @property
    def p_values(self) -> np.ndarray:
        t = np.abs(self.t_stats)
        return 2.0 * scipy.stats.t.sf(t, df=max(self.residual_dof, 1))

    def _idx(self, term):
        try:
            return self.terms.index(term)
        except ValueError:
            raise KeyError(f"term {term!r} not in fit: {self.terms}") from None

    def coef(self, term) -> float:
        return float(self.coefficients[self._idx(term)])

    def se(self, term) -> float:
        return float(self.std_errors[self._idx(term)])

    def t_stat(self, term) -> float:
        return float(self.t_stats[self._idx(term)])

    def p_value(self, term) -> float:
        return float(self.p_values[self._idx(term)])


@dataclass(eq=False)
class IvFitResult(FitResult):
    first_stage_F: float = np.nan
    n_endogenous: int = 0
    n_instruments: int = 0

    def __post_init__(self):
        super().__post_init__()
        if self.n_instruments < self.n_endogenous:
            raise IdentificationError(
                "instrument count must be at least the endogenous count")


# ---------------------------------------------------------------------------
# fixed-effect absorption
# ---------------------------------------------------------------------------

def _encode(labels) -> np.ndarray:
    return np.unique(np.asarray(labels), return_inverse=True)[1]


def _singleton_mask(codes_list, n) -> np.ndarray:
    """True for rows in a group of size one in any dimension, iterated."""
    keep = np.ones(n, dtype=bool)
    changed = True
    while changed:
        changed = False
        for codes in codes_list:
            counts = np.bincount(codes[keep], minlength=int(codes.max()) + 1)
            drop = keep & (counts[codes] == 1)
            if drop.any():
                keep &= ~drop
                changed = True
    return ~keep


def _group_demean(codes, n_groups, mat) -> np.ndarray:
    sums = np.zeros((n_groups, mat.shape[1]))
    np.add.at(sums, codes, mat)
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    return mat - sums[codes] / counts[codes, None]


def _connected_components(codes_a, codes_b, na, nb) -> int:
    parent = np.arange(na + nb)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for a, b in zip(codes_a, codes_b + na):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra
    return len({find(i) for i in range(na + nb)})


def _fe_degrees(codes_list) -> int:
    sizes = [int(c.max()) + 1 for c in codes_list]
    if len(codes_list) == 1:
        return sizes[0]
    if len(codes_list) == 2:
        comps = _connected_components(codes_list[0], codes_list[1],
                                      sizes[0], sizes[1])
        return sizes[0] + sizes[1] - comps
    # beyond two dimensions: standard pairwise upper bound
    return sizes[0] + sum(s - 1 for s in sizes[1:])


def absorb(design: DesignMatrix, *, tol=ABSORB_TOL,
           max_sweeps=ABSORB_MAX_SWEEPS) -> DesignMatrix:
    """Demean all columns (and the outcome) within fixed-effect groups.

    One dimension is an exact single pass; several dimensions alternate
    projections until the maximum relative column change falls below
    ``tol``.  Singleton groups are dropped with their count recorded.
    """
    if not design.fe_groups:
        raise DimensionError("absorb requires at least one fixed-effect dimension")
    n = design.n_rows
    codes_list = [_encode(g) for g in design.fe_groups]
    singleton = _singleton_mask(codes_list, n)
    keep = ~singleton
    if not keep.any():
        raise EmptySampleError("every row is a fixed-effect singleton")
    codes_list = [_encode(c[keep]) for c in codes_list]

    cols = design.values[keep]
    y = design.outcome[keep] if design.outcome is not None else None
    mat = cols if y is None else np.column_stack([cols, y])
    scale = np.abs(mat).max(axis=0)
    scale = np.where(scale > 0, scale, 1.0)

    n_groups = [int(c.max()) + 1 for c in codes_list]
    if len(codes_list) == 1:
        mat = _group_demean(codes_list[0], n_groups[0], mat)
    else:
        for sweep in range(max_sweeps):
            prev = mat
            for codes, g in zip(codes_list, n_groups):
                mat = _group_demean(codes, g, mat)
            delta = float((np.abs(mat - prev).max(axis=0) / scale).max())
            if delta < tol:
                break
        else:
            raise ConvergenceError(
                f"fixed-effect absorption did not converge in {max_sweeps} "
                f"sweeps (residual {delta:.3e})", residual=delta)

    if y is None:
        new_cols, new_y = mat, None
    else:
        new_cols, new_y = mat[:, :-1], mat[:, -1]

    zeroed = tuple(
        name for j, name in enumerate(design.column_names)
        if np.abs(new_cols[:, j]).max() <= 1e-10 * max(scale[j], 1.0))

    return DesignMatrix(
        column_names=list(design.column_names),
        values=new_cols,
        cluster_ids=[c[keep] for c in design.cluster_ids],
        fe_groups=[c for c in codes_list],
        outcome=new_y,
        outcome_original=(design.outcome[keep]
                          if design.outcome is not None else None),
        absorbed=True,
        n_dropped_singletons=int(singleton.sum()),
        fe_dof=_fe_degrees(codes_list),
        collinear_with_fe=zeroed,
    )


# ---------------------------------------------------------------------------
# rank detection and the sandwich
# ---------------------------------------------------------------------------

def _rank_retain(X, names, on_collinear, notes):
    """Pivoted-QR rank detection; returns retained column indices."""
    if X.shape[1] == 0:
        return np.array([], dtype=int)
    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    ref = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > RANK_TOL * ref))
    if rank == X.shape[1]:
        return np.arange(X.shape[1])
    dropped = sorted(piv[rank:])
    dropped_names = [names[j] for j in dropped]
    if on_collinear == "raise":
        raise CollinearityError(
            f"design is rank deficient; offending columns: {dropped_names}",
            columns=dropped_names)
    notes.append(f"dropped collinear columns: {dropped_names}")
    return np.array(sorted(set(range(X.shape[1])) - set(dropped)), dtype=int)


def _cluster_meat(X, u, codes):
    scores = X * u[:, None]
    n_groups = int(codes.max()) + 1
    sums = np.zeros((n_groups, X.shape[1]))
    np.add.at(sums, codes, scores)
    return sums.T @ sums, n_groups


def _sandwich_vcov(X, u, bread, cluster_codes, n, k_total, notes):
    """HC1 when unclustered; CRV1 one-way; inclusion-exclusion two-way."""
    if not cluster_codes:
        meat = (X * (u**2)[:, None]).T @ X
        return bread @ meat @ bread * (n / max(n - k_total, 1))

    def one_way(codes):
        meat, g = _cluster_meat(X, u, codes)
        if g < 2:
            raise ClusteringError("clustered covariance requires >= 2 clusters")
        factor = (g / (g - 1)) * ((n - 1) / max(n - k_total, 1))
        return factor * (bread @ meat @ bread)

    if len(cluster_codes) == 1:
        return one_way(cluster_codes[0])

    inter = _encode(cluster_codes[0].astype(np.int64) * (2**32)
                    + cluster_codes[1].astype(np.int64))
    v = one_way(cluster_codes[0]) + one_way(cluster_codes[1]) - one_way(inter)
    v = 0.5 * (v + v.T)
    eig = np.linalg.eigvalsh(v)
    if eig.min() < -1e-10 * max(eig.max(), 1e-300):
        notes.append("two-way covariance not PSD; fell back to one-way "
                     "clustering on the first dimension")
        return one_way(cluster_codes[0])
    # truncate roundoff-negative eigenvalues at zero
    if eig.min() < 0:
        w, q = np.linalg.eigh(v)
        v = (q * np.clip(w, 0.0, None)) @ q.T
    return v


def _select_clusters(design, cluster_dim):
    if cluster_dim == "none":
        return []
    codes = [_encode(c) for c in design.cluster_ids]
    if cluster_dim is None:
        return codes
    return [codes[int(cluster_dim)]]


def _r2_pair(rss, y_abs, y_orig, absorbed, has_const):
    if absorbed:
        tss = float(np.sum((y_orig - y_orig.mean()) ** 2))
        wss = float(np.sum((y_abs - y_abs.mean()) ** 2))
        r2 = 1.0 - rss / tss if tss > 0 else np.nan
        within = 1.0 - rss / wss if wss > 0 else np.nan
        return r2, within
    center = y_abs.mean() if has_const else 0.0
    tss = float(np.sum((y_abs - center) ** 2))
    return (1.0 - rss / tss if tss > 0 else np.nan), None


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------

def ols(design: DesignMatrix, y=None, cluster_dim=None, *,
        on_collinear="raise") -> FitResult:
    """Least squares with HC1 or cluster-robust (CRV1) covariance.

    Fixed-effect dimensions on the design are absorbed first; ``r2`` is on
    the original outcome scale and ``within_r2`` on the absorbed scale.
    """
    if y is not None:
        design = DesignMatrix(
            column_names=design.column_names, values=design.values,
            cluster_ids=design.cluster_ids, fe_groups=design.fe_groups,
            outcome=np.asarray(y, dtype=float))
    if design.outcome is None:
        raise DimensionError("ols requires an outcome vector")

    notes = []
    if design.fe_groups and not design.absorbed:
        design = absorb(design)
    if design.collinear_with_fe:
        notes.append("columns constant within fixed-effect groups dropped: "
                     f"{list(design.collinear_with_fe)}")

    names = [c for c in design.column_names
             if c not in design.collinear_with_fe]
    keep_cols = [j for j, c in enumerate(design.column_names)
                 if c not in design.collinear_with_fe]
    X = design.values[:, keep_cols]
    yv = design.outcome
    n = X.shape[0]

    retained = _rank_retain(X, names, on_collinear, notes)
    dropped_terms = tuple(names[j] for j in range(len(names))
                          if j not in set(retained.tolist()))
    dropped_terms += design.collinear_with_fe
    Xr = X[:, retained]
    terms = tuple(names[j] for j in retained)

    k_total = Xr.shape[1] + design.fe_dof
    if n - k_total < 1:
        raise SampleSizeError(
            f"insufficient residual degrees of freedom: n={n}, k={k_total}")

    beta, *_ = np.linalg.lstsq(Xr, yv, rcond=None)
    u = yv - Xr @ beta
    rss = float(u @ u)

    xtx = Xr.T @ Xr
    bread = np.linalg.inv(xtx)
    clusters = _select_clusters(design, cluster_dim)
    vcov = _sandwich_vcov(Xr, u, bread, clusters, n, k_total, notes)

    has_const = any(t == "const" for t in terms) or bool(design.absorbed)
    y_orig = design.outcome_original if design.absorbed else yv
    r2, within_r2 = _r2_pair(rss, yv, y_orig, design.absorbed, has_const)

    return FitResult(
        terms=terms, coefficients=beta, vcov=vcov, n_obs=n,
        n_dropped_singletons=design.n_dropped_singletons,
        r2=r2, within_r2=within_r2, residual_dof=n - k_total,
        dropped_terms=dropped_terms, notes=notes)


# ---------------------------------------------------------------------------
# 2SLS and diagnostics
# ---------------------------------------------------------------------------

def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def cragg_donald(endogenous, exogenous, instruments, *, fe_dof=0) -> float:
    """Minimum-eigenvalue first-stage strength statistic.

    Endogenous regressors and instruments are partialled on the exogenous
    block; the statistic is the smallest eigenvalue of the concentration
    matrix divided by the instrument count.  Equals the first-stage F in
    the one-endogenous / one-instrument case.
    """
    X = _as_2d(endogenous)
    Z = _as_2d(instruments)
    W = _as_2d(exogenous) if exogenous is not None else np.empty((X.shape[0], 0))
    n = X.shape[0]
    if W.shape[1]:
        wq, _ = np.linalg.qr(W)
        X = X - wq @ (wq.T @ X)
        Z = Z - wq @ (wq.T @ Z)
    zq, zr = np.linalg.qr(Z)
    if np.abs(np.diag(zr)).min() <= RANK_TOL * max(np.abs(np.diag(zr)).max(), 1e-300):
        raise DiagnosticError("instrument block is rank deficient after partialling")
    Xhat = zq @ (zq.T @ X)
    resid = X - Xhat
    dof = n - W.shape[1] - Z.shape[1] - fe_dof
    if dof < 1:
        raise DiagnosticError("no residual degrees of freedom for the first stage")
    s1 = X.T @ Xhat
    s0 = resid.T @ resid / dof
    try:
        eigvals = scipy.linalg.eigh(s1, s0, eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise DiagnosticError(
            "singular first-stage residual covariance") from exc
    return float(eigvals.min()) / Z.shape[1]


def tsls(y, endogenous, exogenous, instruments, *, cluster_ids=(),
         fe_groups=(), endog_names=None, exog_names=None,
         cluster_dim=None, on_collinear="raise") -> IvFitResult:
    """Two-stage least squares with cluster-robust covariance.

    Second-stage residuals use the original (not fitted) endogenous
    columns; fixed effects are absorbed from every block jointly.
    """
    y = np.asarray(y, dtype=float)
    endog = _as_2d(endogenous)
    exog = _as_2d(exogenous) if exogenous is not None else np.empty((y.size, 0))
    inst = _as_2d(instruments)
    if inst.shape[1] < endog.shape[1]:
        raise IdentificationError(
            f"order condition violated: {inst.shape[1]} instruments for "
            f"{endog.shape[1]} endogenous regressors")
    endog_names = list(endog_names or
                       [f"endog{j}" for j in range(endog.shape[1])])
    exog_names = list(exog_names or [f"exog{j}" for j in range(exog.shape[1])])
    inst_names = [f"__inst{j}" for j in range(inst.shape[1])]

    design = DesignMatrix(
        column_names=endog_names + exog_names + inst_names,
        values=np.column_stack([endog, exog, inst]),
        cluster_ids=list(cluster_ids), fe_groups=list(fe_groups), outcome=y)
    notes = []
    if design.fe_groups:
        design = absorb(design)
    ke, kx = endog.shape[1], exog.shape[1]
    endog_a = design.values[:, :ke]
    exog_a = design.values[:, ke:ke + kx]
    inst_a = design.values[:, ke + kx:]
    y_a = design.outcome
    n = design.n_rows

    fs_names = exog_names + inst_names
    Zfull = np.column_stack([exog_a, inst_a])
    fs_retained = _rank_retain(Zfull, fs_names, "raise_fs", notes)
    if len(fs_retained) < Zfull.shape[1]:
        raise CollinearityError(
            "first-stage design is rank deficient (weak or degenerate "
            "instruments)")

    pi, *_ = np.linalg.lstsq(Zfull, endog_a, rcond=None)
    endog_hat = Zfull @ pi

    names2 = endog_names + exog_names
    X2 = np.column_stack([endog_hat, exog_a])
    retained = _rank_retain(X2, names2, on_collinear, notes)
    X2r = X2[:, retained]
    terms = tuple(names2[j] for j in retained)
    dropped_terms = tuple(names2[j] for j in range(len(names2))
                          if j not in set(retained.tolist()))

    k_total = X2r.shape[1] + design.fe_dof
    if n - k_total < 1:
        raise SampleSizeError("insufficient residual degrees of freedom")

    beta, *_ = np.linalg.lstsq(X2r, y_a, rcond=None)
    Xorig = np.column_stack([endog_a, exog_a])[:, retained]
    u = y_a - Xorig @ beta
    rss = float(u @ u)

    bread = np.linalg.inv(X2r.T @ X2r)
    clusters = _select_clusters(design, cluster_dim)
    vcov = _sandwich_vcov(X2r, u, bread, clusters, n, k_total, notes)

    has_const = "const" in terms or bool(design.absorbed)
    y_orig = design.outcome_original if design.absorbed else y_a
    r2, within_r2 = _r2_pair(rss, y_a, y_orig, design.absorbed, has_const)

    try:
        first_stage = cragg_donald(endog_a, exog_a if kx else None, inst_a,
                                   fe_dof=design.fe_dof)
    except DiagnosticError:
        first_stage = np.nan

    return IvFitResult(
        terms=terms, coefficients=beta, vcov=vcov, n_obs=n,
        n_dropped_singletons=design.n_dropped_singletons,
        r2=r2, within_r2=within_r2, residual_dof=n - k_total,
        dropped_terms=dropped_terms, notes=notes,
        first_stage_F=first_stage, n_endogenous=ke,
        n_instruments=inst.shape[1])


# ---------------------------------------------------------------------------
# stacked two-score IV (measurement-error correction)
# ---------------------------------------------------------------------------

def oriv(y, score_a, score_b, moderator=None, controls=None, family_ids=None,
         *, individual_ids=None, within=True, control_names=(),
         score_name="score", moderator_name="moderator",
         include_interaction=True, on_collinear="drop") -> IvFitResult:
    """Stacked IV where two noisy scores instrument each other.

    The dataset is duplicated: the first stack regresses on ``score_a``
    instrumented by ``score_b`` (block-diagonally), the second the reverse.
    The score-by-moderator interaction is instrumented by the other score
    times the moderator, symmetrically across stacks.  Within mode absorbs
    family-by-stack fixed effects; between mode includes stack intercepts.
    Covariance is clustered two-way on family and individual.
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(score_a, dtype=float)
    b = np.asarray(score_b, dtype=float)
    n = y.size
    if not (a.size == b.size == n):
        raise DimensionError("scores and outcome must have equal length")
    if abs(a.mean() - b.mean()) > 1e-6:
        raise StandardizationError(
            "score means differ by more than 1e-6; standardize both scores "
            "against the same reference before stacking")
    if family_ids is None:
        raise DimensionError("family_ids are required")
    family_ids = np.asarray(family_ids)

    zeros = np.zeros(n)
    y2 = np.concatenate([y, y])
    x_score = np.concatenate([a, b])
    z_main = [np.concatenate([b, zeros]), np.concatenate([zeros, a])]

    endog_cols = [x_score]
    endog_names = [score_name]
    inst_cols = list(z_main)
    notes = []

    exog_cols, exog_names = [], []
    if moderator is not None:
        m = np.asarray(moderator, dtype=float)
        if m.size != n:
            raise DimensionError("moderator length must match the outcome")
        if np.ptp(m) == 0.0:
            notes.append(f"{moderator_name} has no variation; interaction "
                         "column dropped")
        else:
            m2 = np.concatenate([m, m])
            if include_interaction:
                endog_cols.append(x_score * m2)
                endog_names.append(f"{moderator_name}_x_{score_name}")
                inst_cols.append(np.concatenate([b * m, zeros]))
                inst_cols.append(np.concatenate([zeros, a * m]))
            exog_cols.append(m2)
            exog_names.append(moderator_name)

    if controls is not None:
        C = _as_2d(controls)
        if C.shape[0] != n:
            raise DimensionError("control rows must match the outcome")
        names = list(control_names or
                     [f"control{j}" for j in range(C.shape[1])])
        for j in range(C.shape[1]):
            exog_cols.append(np.concatenate([C[:, j], C[:, j]]))
            exog_names.append(names[j])

    fe_groups = []
    if within:
        stack = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
        fam2 = np.concatenate([family_ids, family_ids])
        fam_codes = _encode(fam2)
        fe_groups = [fam_codes * 2 + stack]
    else:
        exog_cols.append(np.concatenate([np.ones(n), np.zeros(n)]))
        exog_names.append("stack1")
        exog_cols.append(np.concatenate([np.zeros(n), np.ones(n)]))
        exog_names.append("stack2")

    if individual_ids is None:
        individual_ids = np.arange(n)
    individual_ids = np.asarray(individual_ids)
    cluster_ids = [np.concatenate([family_ids, family_ids]),
                   np.concatenate([individual_ids, individual_ids])]

    exog = (np.column_stack(exog_cols) if exog_cols
            else np.empty((2 * n, 0)))
    result = tsls(
        y2, np.column_stack(endog_cols), exog, np.column_stack(inst_cols),
        cluster_ids=cluster_ids, fe_groups=fe_groups,
        endog_names=endog_names, exog_names=exog_names,
        on_collinear=on_collinear)
    result.notes = notes + result.notes
    return result


# ---------------------------------------------------------------------------
# nested-fit comparison
# ---------------------------------------------------------------------------

def incremental_r2(fit_without: FitResult, fit_with: FitResult) -> float:
    """Gain in explained variance from the added regressor block.

    Uses the within-group variant when both fits absorbed fixed effects.
    """
    if fit_without.n_obs != fit_with.n_obs:
        raise NestingError("fits use different samples")
    if not set(fit_without.terms) <= set(fit_with.terms):
        raise NestingError("regressor sets are not nested")
    if fit_without.within_r2 is not None and fit_with.within_r2 is not None:
        return float(fit_with.within_r2 - fit_without.within_r2)
    if (fit_without.within_r2 is None) != (fit_with.within_r2 is None):
        raise NestingError("one fit absorbed fixed effects and the other did not")
    return float(fit_with.r2 - fit_without.r2)
