"""Discovery scans, polygenic scores, principal components, relatedness.

The discovery scan is per-SNP OLS on a residualized phenotype (the panel
is simulated without linkage disequilibrium and the discovery individuals
are unrelated, where per-SNP OLS is the correct special case of a mixed
model).  Split-sample scans produce two weight sets whose score errors are
uncorrelated, which is the premise behind instrumenting one score with
the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    AlignmentError,
    CollinearityError,
    ConvergenceError,
    DegenerateScoreError,
    DimensionError,
    DomainError,
    SampleSizeError,
)
from .streams import substream

MAF_FILTER = 0.001  # applied when ingesting external genotype files


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class WeightSet:
    """Per-SNP association weights from one discovery scan."""

    snp_ids: tuple
    weights: np.ndarray
    standard_errors: np.ndarray
    source: str = "full"  # full | split_a | split_b | external
    notes: list = field(default_factory=list)
    sample_index: np.ndarray | None = None  # audit trail for split scans

    def __post_init__(self):
        self.snp_ids = tuple(self.snp_ids)
        self.weights = np.asarray(self.weights, dtype=float)
        self.standard_errors = np.asarray(self.standard_errors, dtype=float)
        if not (len(self.snp_ids) == self.weights.size
                == self.standard_errors.size):
            raise DimensionError("weight-set fields must have equal length")
        if not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite")
        if self.source not in ("full", "split_a", "split_b", "external"):
            raise DomainError(f"unknown weight source {self.source!r}")


@dataclass(frozen=True)
class MeasurementModel:
    """Latent-score decomposition: measured = latent + error."""

    reliability: float
    score_variance: float
    error_variance: float
    latent_variance: float

    def __post_init__(self):
        if not 0.0 < self.reliability <= 1.0:
            raise DomainError("reliability must lie in (0, 1]")
        if abs(self.score_variance
               - (self.latent_variance + self.error_variance)) > 1e-8 * max(
                   1.0, self.score_variance):
            raise DomainError("score variance must equal latent + error variance")
        if abs(self.reliability - self.latent_variance / self.score_variance) \
                > 1e-8:
            raise DomainError("reliability must equal latent/score variance")

    @classmethod
    def from_reliability(cls, reliability, score_variance=1.0):
        latent = reliability * score_variance
        return cls(reliability=reliability, score_variance=score_variance,
                   error_variance=score_variance - latent,
                   latent_variance=latent)


RELATEDNESS_CLASSES = ("duplicate_or_mz", "parent_child", "full_sibling",
                       "second_or_third_degree", "unrelated")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def residualize(y, covariates, column_names=None) -> np.ndarray:
    """Residuals of ``y`` on a constant plus the covariate columns."""
    y = np.asarray(y, dtype=float)
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    if covariates.shape[0] != y.size and covariates.shape[1] == y.size:
        covariates = covariates.T
    if covariates.shape[0] != y.size:
        raise DimensionError("covariate rows must match the outcome length")
    design = np.column_stack([np.ones(y.size), covariates])
    names = ["const"] + list(column_names or
                             [f"x{j}" for j in range(covariates.shape[1])])
    q, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = 1e-10 * (diag[0] if diag.size else 1.0)
    rank = int(np.sum(diag > tol))
    if rank < design.shape[1]:
        bad = [names[j] for j in sorted(piv[rank:])]
        raise CollinearityError(
            f"covariate matrix is rank deficient; offending columns: {bad}",
            columns=bad)
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ beta


def run_scan(genotypes, y_resid, snp_ids=None, source="full",
             sample_index=None) -> WeightSet:
    """Per-SNP simple regression of the residualized phenotype on genotype.

    Monomorphic SNP columns receive weight 0 with a note instead of an error.
    """
    genotypes = np.asarray(genotypes, dtype=float)
    y = np.asarray(y_resid, dtype=float)
    if genotypes.shape[0] != y.size:
        raise DimensionError("genotype rows must match the phenotype length")
    n, n_snps = genotypes.shape
    if n < 3:
        raise SampleSizeError("scan requires at least three individuals")
    if snp_ids is None:
        snp_ids = tuple(f"snp{j}" for j in range(n_snps))

    xc = genotypes - genotypes.mean(axis=0)
    yc = y - y.mean()
    sxx = np.einsum("ij,ij->j", xc, xc)
    mono = sxx <= 1e-12 * max(1.0, n)
    sxx_safe = np.where(mono, 1.0, sxx)
    beta = (xc.T @ yc) / sxx_safe
    rss = np.maximum(yc @ yc - beta**2 * sxx_safe, 0.0)
    se = np.sqrt(rss / max(n - 2, 1) / sxx_safe)
    beta[mono] = 0.0
    se[mono] = 0.0
    notes = [f"monomorphic SNP {snp_ids[j]}: weight set to 0"
             for j in np.flatnonzero(mono)]
    return WeightSet(snp_ids=snp_ids, weights=beta, standard_errors=se,
                     source=source, notes=notes, sample_index=sample_index)


def split_scan(genotypes, y_resid, seed, snp_ids=None):
    """Partition individuals into two random halves and scan each.

    Returns ``(weights_a, weights_b)`` with the partition recorded on each
    weight set for audit.
    """
    genotypes = np.asarray(genotypes, dtype=float)
    y = np.asarray(y_resid, dtype=float)
    n = genotypes.shape[0]
    if n < 4:
        raise SampleSizeError("split scan requires at least four individuals")
    perm = substream(seed, "split_scan").permutation(n)
    half = (n + 1) // 2
    idx_a, idx_b = np.sort(perm[:half]), np.sort(perm[half:])
    ws_a = run_scan(genotypes[idx_a], y[idx_a], snp_ids=snp_ids,
                    source="split_a", sample_index=idx_a)
    ws_b = run_scan(genotypes[idx_b], y[idx_b], snp_ids=snp_ids,
                    source="split_b", sample_index=idx_b)
    return ws_a, ws_b


def score(genotypes, weights: WeightSet, genotype_snp_ids=None) -> np.ndarray:
    """Weighted allele-count sum per individual, in fixed summation order."""
    genotypes = np.asarray(genotypes, dtype=float)
    w = weights.weights
    if genotype_snp_ids is not None:
        geno_ids = tuple(genotype_snp_ids)
        if set(geno_ids) != set(weights.snp_ids):
            missing = sorted(set(geno_ids) ^ set(weights.snp_ids))
            raise AlignmentError(
                f"SNP id mismatch between genotypes and weights: {missing}")
        order = {s: j for j, s in enumerate(weights.snp_ids)}
        w = w[[order[s] for s in geno_ids]]
    if genotypes.shape[1] != w.size:
        raise DimensionError("genotype columns must match the weight count")
    # Row-wise product-then-sum keeps a fixed, platform-independent
    # reduction order (numpy pairwise summation), unlike threaded BLAS.
    return (genotypes * w).sum(axis=1)


def standardize(scores, reference=None) -> np.ndarray:
    """Center and scale by the reference subset's mean and sd (ddof=1)."""
    scores = np.asarray(scores, dtype=float)
    ref = scores if reference is None else scores[np.asarray(reference)]
    if ref.size < 2:
        raise SampleSizeError("standardization reference needs >= 2 members")
    sd = ref.std(ddof=1)
    if not np.isfinite(sd) or sd <= 0.0:
        raise DegenerateScoreError("score variance is zero in the reference set")
    return (scores - ref.mean()) / sd


# Kinship / IBS_0 decision table; intervals are open below, closed above.
_KIN_DUP = 0.3540
_KIN_FIRST = 0.1770
_KIN_DISTANT = 0.0442
_IBS0_PARENT = 0.0012


def classify_relatedness(kinship: float, ibs0: float) -> str:
    """Classify a pair of individuals from kinship and IBS_0 statistics."""
    if not (np.isfinite(kinship) and np.isfinite(ibs0)):
        raise DomainError("kinship and ibs0 must be finite")
    if kinship < 0 or ibs0 < 0:
        raise DomainError("kinship and ibs0 must be nonnegative")
    if kinship > _KIN_DUP:
        return "duplicate_or_mz"
    if kinship > _KIN_FIRST:
        return "parent_child" if ibs0 < _IBS0_PARENT else "full_sibling"
    if kinship > _KIN_DISTANT:
        return "second_or_third_degree"
    return "unrelated"


@dataclass
class PcaResult:
    scores: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray


def compute_pcs(genotypes, k: int, *, tol=1e-9, max_iter=10_000) -> PcaResult:
    """Top-k principal component scores of the standardized genotype matrix.

    Uses an iterative truncated (Lanczos) eigendecomposition of the
    standardized genotype covariance; falls back to the dense solver only
    when k is too close to the matrix dimension for the iterative routine.
    """
    genotypes = np.asarray(genotypes, dtype=float)
    n, p = genotypes.shape
    if k < 1 or k > min(n, p):
        raise DimensionError(f"k must lie in [1, min(n, p)] = [1, {min(n, p)}]")
    sd = genotypes.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    x = (genotypes - genotypes.mean(axis=0)) / sd
    cov = (x.T @ x) / max(n - 1, 1)
    if k <= p - 2:
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(
                cov, k=k, which="LA", tol=tol, maxiter=max_iter)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"PC extraction did not converge within {max_iter} iterations",
                residual=getattr(exc, "eigenvalues", None)) from exc
    else:
        vals, vecs = np.linalg.eigh(cov)
        vals, vecs = vals[-k:], vecs[:, -k:]
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # sign convention: the largest-magnitude loading is positive
    for j in range(k):
        top = np.argmax(np.abs(vecs[:, j]))
        if vecs[top, j] < 0:
            vecs[:, j] = -vecs[:, j]
    total_var = np.trace(cov)
    return PcaResult(scores=x @ vecs, loadings=vecs, eigenvalues=vals,
                     explained_variance_ratio=vals / total_var)


def inject_noisy_scores(latent_score, reliability, seed, n_copies=3, *,
                        family_ids=None, noise_family_corr=0.5):
    """Measured scores ``latent + noise`` with the configured reliability.

    The latent score is expected to carry variance ``reliability`` (as
    produced by the cohort generator), so each measured copy has unit
    variance and reliability exactly as configured.  Returns ``n_copies``
    vectors; by convention the first is the headline score and the next two
    are the split-half analogs used for instrumenting.

    When ``family_ids`` are given, the noise is equicorrelated within
    family at ``noise_family_corr`` (default 1/2).  Score-estimation error
    in a real discovery design is itself a genotype-weighted sum, so it
    inherits the sibling correlation of any additive score; matching it
    makes the within-family attenuation factor equal the reliability, the
    same as the cross-sectional factor.  Errors remain independent across
    copies, which is what the cross-instrumenting estimator needs.
    """
    latent = np.asarray(latent_score, dtype=float)
    if not 0.0 < reliability <= 1.0:
        raise DomainError("reliability must lie in (0, 1]")
    if not 0.0 <= noise_family_corr < 1.0:
        raise DomainError("noise_family_corr must lie in [0, 1)")
    noise_sd = np.sqrt(1.0 - reliability)
    if family_ids is not None:
        codes = np.unique(np.asarray(family_ids), return_inverse=True)[1]
        n_fam = int(codes.max()) + 1
    out = []
    for c in range(n_copies):
        rng = substream(seed, "inject", c)
        if family_ids is None:
            noise = rng.standard_normal(latent.size)
        else:
            shared = rng.standard_normal(n_fam)[codes]
            own = rng.standard_normal(latent.size)
            noise = (np.sqrt(noise_family_corr) * shared
                     + np.sqrt(1.0 - noise_family_corr) * own)
        out.append(latent + noise_sd * noise)
    return tuple(out)
