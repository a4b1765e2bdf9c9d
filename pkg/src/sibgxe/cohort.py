"""Synthetic multi-sibling cohorts.

Families are built from Hardy-Weinberg parental genotypes and Mendelian
transmission to children.  Outcomes come from one of two data-generating
processes:

* ``reduced_form`` -- a linear interaction equation in the latent score,
  the firstborn indicator, their product, covariates, a genetic-nurture
  term, a family random effect, and idiosyncratic noise.
* ``structural`` -- a bilinear skill production recursion in which each
  period's parental investment is shared among the children alive at that
  period, so firstborns receive larger early investments.

Each family draws from its own substream keyed by ``(seed, "family", i)``,
so generation is an order-independent parallel map.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDgpError, DimensionError, DomainError, InputError
from .streams import substream

BIRTH_ORDER_CAP = 5


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SnpPanel:
    """Simulated SNP panel: ids, effect-allele frequencies, true effects."""

    snp_ids: tuple
    allele_freqs: np.ndarray
    true_effects: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        object.__setattr__(self, "allele_freqs",
                           np.asarray(self.allele_freqs, dtype=float))
        object.__setattr__(self, "true_effects",
                           np.asarray(self.true_effects, dtype=float))
        if len(self.snp_ids) < 1:
            raise DomainError("SNP panel must contain at least one SNP")
        if not (len(self.snp_ids) == self.allele_freqs.size
                == self.true_effects.size):
            raise DimensionError(
                "snp_ids, allele_freqs and true_effects must have equal length")
        if np.any(self.allele_freqs <= 0.0) or np.any(self.allele_freqs >= 1.0):
            raise DomainError("allele frequencies must lie strictly in (0, 1)")
        if not np.all(np.isfinite(self.true_effects)):
            raise DomainError("true effects must be finite")

    @property
    def n_snps(self) -> int:
        return len(self.snp_ids)


@dataclass
class Individual:
    individual_id: str
    family_id: str
    genotype: np.ndarray
    birth_order: int
    firstborn: bool
    lastborn: bool
    sex: int
    birth_year: int
    birth_month: int
    latent_skill: float = math.nan
    educ_years: float = math.nan
    pcs: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Family:
    family_id: str
    mother_genotype: np.ndarray
    father_genotype: np.ndarray
    family_effect: float
    children: list

    def __post_init__(self):
        if len(self.children) < 1:
            raise DomainError("a family must have at least one child")


@dataclass
class StructuralParams:
    """Bilinear skill-production recursion parameters."""

    gamma_invest: float = 1.0
    gamma_complement: float = 0.0
    periods: int = 5
    investment_budget: float = 1.0

    def __post_init__(self):
        if self.periods < 1:
            raise DomainError("structural mode requires at least one period")


@dataclass
class DgpParams:
    mode: str = "reduced_form"  # or "structural"
    alpha: tuple = (0.0, 1.0, 0.0, 0.0)
    covariate_effects: tuple = ()
    family_sd: float = 0.0
    noise_sd: float = 0.0
    nurture_coef: float = 0.0
    reliability: float = 1.0
    structural: StructuralParams | None = None

    def __post_init__(self):
        if self.mode not in ("reduced_form", "structural"):
            raise DomainError(f"unknown DGP mode {self.mode!r}")
        if len(self.alpha) != 4:
            raise DimensionError("alpha must have exactly four entries")
        if self.family_sd < 0 or self.noise_sd < 0:
            raise DomainError("family_sd and noise_sd must be nonnegative")
        if not 0.0 < self.reliability <= 1.0:
            raise DomainError("reliability must lie in (0, 1]")
        if len(self.covariate_effects) > 3:
            raise DimensionError(
                "covariate_effects applies to (sex, birth_year, birth_month); "
                "at most three entries")
        if self.mode == "structural" and self.structural is None:
            self.structural = StructuralParams()


@dataclass
class Cohort:
    families: list
    panel: SnpPanel
    dgp: DgpParams
    seed: int

    def individuals(self):
        for fam in self.families:
            yield from fam.children

    @property
    def n_individuals(self) -> int:
        return sum(len(f.children) for f in self.families)


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def sample_parent_genotype(panel: SnpPanel,
                           stream: np.random.Generator) -> np.ndarray:
    """Draw a parental genotype under Hardy-Weinberg equilibrium.

    Each SNP's allele count is the sum of two independent Bernoulli trials
    with the panel frequency, giving counts in {0, 1, 2}.
    """
    return stream.binomial(2, panel.allele_freqs).astype(np.int8)


def transmit(mother: np.ndarray, father: np.ndarray,
             stream: np.random.Generator) -> np.ndarray:
    """Mendelian transmission: one allele from each parent per SNP.

    A heterozygous parent contributes the effect allele with probability
    one half; homozygous parents contribute deterministically.
    """
    mother = np.asarray(mother)
    father = np.asarray(father)
    if mother.shape != father.shape:
        raise DimensionError("parental genotype vectors must have equal length")
    from_mother = np.where(mother == 1,
                           stream.integers(0, 2, size=mother.shape), mother // 2)
    from_father = np.where(father == 1,
                           stream.integers(0, 2, size=father.shape), father // 2)
    return (from_mother + from_father).astype(np.int8)


def assign_reporting_birth_order(order: int) -> int:
    """Censor birth order at the reporting cap (five or later)."""
    if order < 1:
        raise DomainError(f"birth order must be >= 1, got {order}")
    return min(int(order), BIRTH_ORDER_CAP)


# ---------------------------------------------------------------------------
# family-size distributions
# ---------------------------------------------------------------------------

def truncated_geometric_sizes(mean: float = 3.0, max_size: int = 10) -> np.ndarray:
    """Probabilities over family sizes 1..max_size with the requested mean.

    Geometric on {1, 2, ...} truncated at ``max_size`` and renormalized;
    the success probability is solved by bisection so the truncated mean
    matches ``mean``.
    """
    if not 1.0 < mean < max_size:
        raise DomainError("mean must lie strictly between 1 and max_size")
    sizes = np.arange(1, max_size + 1)

    def truncated_mean(p):
        probs = p * (1 - p) ** (sizes - 1)
        probs /= probs.sum()
        return float(probs @ sizes)

    lo, hi = 1e-9, 1 - 1e-9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if truncated_mean(mid) > mean:
            lo = mid
        else:
            hi = mid
    p = 0.5 * (lo + hi)
    probs = p * (1 - p) ** (sizes - 1)
    return probs / probs.sum()


def _normalize_size_dist(family_size_dist) -> tuple[np.ndarray, np.ndarray]:
    """Accepts a dict {size: prob} or a sequence of probs for sizes 1..K."""
    if family_size_dist is None:
        probs = truncated_geometric_sizes()
        sizes = np.arange(1, probs.size + 1)
    elif isinstance(family_size_dist, dict):
        sizes = np.array(sorted(family_size_dist), dtype=int)
        probs = np.array([family_size_dist[s] for s in sizes], dtype=float)
    else:
        probs = np.asarray(family_size_dist, dtype=float)
        sizes = np.arange(1, probs.size + 1)
    if np.any(sizes < 1):
        raise DomainError("family sizes must be >= 1")
    if np.any(probs < 0) or probs.sum() <= 0:
        raise DomainError("family-size distribution must be proper")
    return sizes, probs / probs.sum()


# ---------------------------------------------------------------------------
# cohort generation
# ---------------------------------------------------------------------------

def _build_family(index, panel, dgp, sizes, probs, seed,
                  birth_year_range, n_pcs):
    """Draw one family (genotypes, covariates, raw noise) from its substream."""
    rng = substream(seed, "family", index)
    cum = np.cumsum(probs)
    size = int(sizes[min(np.searchsorted(cum, rng.random(), side="right"),
                         len(sizes) - 1)])
    p = panel.n_snps
    # Hardy-Weinberg parents, then one vectorized Mendelian draw per parent
    # covering all children; heterozygous sites contribute a fair coin.
    parents = rng.binomial(2, panel.allele_freqs, size=(2, p)).astype(np.int8)
    mother, father = parents[0], parents[1]
    coins = rng.integers(0, 2, size=(2, size, p), dtype=np.int8)
    from_mother = np.where(mother == 1, coins[0], mother // 2)
    from_father = np.where(father == 1, coins[1], father // 2)
    genotypes = (from_mother + from_father).astype(np.int8)

    family_effect = float(rng.normal(0.0, dgp.family_sd)) if dgp.family_sd else 0.0
    fid = f"F{index:07d}"
    y0, y1 = birth_year_range
    sexes = rng.integers(0, 2, size=size)
    years = rng.integers(y0, y1 + 1, size=size)
    months = rng.integers(1, 13, size=size)
    pcs = rng.standard_normal((size, n_pcs)) if n_pcs else np.zeros((size, 0))
    noises = (rng.normal(0.0, dgp.noise_sd, size=size) if dgp.noise_sd
              else np.zeros(size))
    children = [
        Individual(
            individual_id=f"{fid}_{k + 1}", family_id=fid,
            genotype=genotypes[k], birth_order=k + 1, firstborn=(k == 0),
            lastborn=(k == size - 1), sex=int(sexes[k]),
            birth_year=int(years[k]), birth_month=int(months[k]),
            pcs=pcs[k])
        for k in range(size)]
    noises = list(noises)
    fam = Family(family_id=fid, mother_genotype=mother, father_genotype=father,
                 family_effect=family_effect, children=children)
    return fam, noises


def _structural_skills(family: Family, theta0: np.ndarray,
                       params: StructuralParams) -> np.ndarray:
    """Iterate the bilinear production recursion for one family.

    Child with birth order k enters at period k-1; per-period investment is
    the budget split equally among the children already born.
    """
    n = len(family.children)
    theta = theta0.copy()
    h = family.family_effect
    for t in range(params.periods):
        alive = min(t + 1, n)
        invest = params.investment_budget / alive
        for c in range(alive):
            theta[c] = (theta[c] + params.gamma_invest * invest
                        + params.gamma_complement * theta[c] * invest + h)
    return theta


def generate_cohort(n_families: int, family_size_dist=None, panel: SnpPanel = None,
                    dgp: DgpParams = None, seed: int = 0, *,
                    n_pcs: int = 0, birth_year_range=(1950, 1969),
                    n_workers: int = 1) -> Cohort:
    """Generate a full cohort deterministically from (panel, dgp, seed).

    Family construction is a parallel map over family indices with keyed
    substreams; outcome assembly is a fixed-order reduction, so the result
    is byte-identical for any ``n_workers``.
    """
    if n_families < 1:
        raise DomainError("n_families must be >= 1")
    if panel is None or dgp is None:
        raise InputError("panel and dgp are required")
    sizes, probs = _normalize_size_dist(family_size_dist)

    def build(i):
        return _build_family(i, panel, dgp, sizes, probs, seed,
                             birth_year_range, n_pcs)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            built = list(pool.map(build, range(n_families)))
    else:
        built = [build(i) for i in range(n_families)]

    families = [fam for fam, _ in built]
    noises = np.array([x for _, ns in built for x in ns])

    effects = panel.true_effects
    genotypes = np.vstack([c.genotype for f in families for c in f.children])
    raw = genotypes.astype(float) @ effects
    sd = raw.std(ddof=1) if raw.size > 1 else 0.0
    if not np.isfinite(sd) or sd <= 0.0:
        raise DegenerateDgpError(
            "true-score variance is zero; cannot standardize the latent score")
    mean = raw.mean()
    g_std = (raw - mean) / sd
    # The latent score entering the outcome carries variance `reliability`,
    # so measured scores (latent + noise) have unit variance and empirical
    # standardization leaves the measurement-error identities intact.
    latent = math.sqrt(dgp.reliability) * g_std

    firstborn = np.array([c.firstborn for f in families for c in f.children],
                         dtype=float)
    fam_effect = np.array([f.family_effect for f in families
                           for _ in f.children])

    if dgp.nurture_coef:
        parent_mean = np.array([
            0.5 * ((float(f.mother_genotype @ effects) - mean) / sd
                   + (float(f.father_genotype @ effects) - mean) / sd)
            for f in families for _ in f.children])
        nurture = dgp.nurture_coef * parent_mean
    else:
        nurture = 0.0

    cov_term = np.zeros(len(g_std))
    if dgp.covariate_effects:
        y0, y1 = birth_year_range
        sex = np.array([c.sex for f in families for c in f.children], dtype=float)
        byear = np.array([c.birth_year for f in families for c in f.children],
                         dtype=float) - 0.5 * (y0 + y1)
        bmonth = np.array([c.birth_month for f in families for c in f.children],
                          dtype=float) - 6.5
        covs = [sex, byear, bmonth]
        for coef, col in zip(dgp.covariate_effects, covs):
            cov_term += coef * col

    if dgp.mode == "reduced_form":
        a1, a2, a3, a4 = dgp.alpha
        systematic = (a1 + a2 * latent + a3 * firstborn
                      + a4 * latent * firstborn + cov_term + nurture + fam_effect)
        skill = systematic
        y = systematic + noises
    else:
        skill = np.empty(len(latent))
        pos = 0
        for fam in families:
            n = len(fam.children)
            theta0 = latent[pos:pos + n]
            skill[pos:pos + n] = _structural_skills(fam, theta0, dgp.structural)
            pos += n
        # Adult education is taken as the identity map of end-of-childhood skill.
        y = skill + cov_term + nurture + noises

    pos = 0
    for fam in families:
        for child in fam.children:
            child.latent_skill = float(skill[pos])
            child.educ_years = float(y[pos])
            pos += 1

    return Cohort(families=families, panel=panel, dgp=dgp, seed=seed)


# ---------------------------------------------------------------------------
# tabular views
# ---------------------------------------------------------------------------

def cohort_table(cohort: Cohort) -> dict:
    """Column arrays for the cohort, keyed by the cohort CSV column names.

    Includes the extra in-memory column ``latent_score`` (the reliability-
    scaled standardized true score) which the CSV writer excludes.
    """
    effects = cohort.panel.true_effects
    children = [c for f in cohort.families for c in f.children]
    genotypes = np.vstack([c.genotype for c in children]).astype(float)
    raw = genotypes @ effects
    g_std = (raw - raw.mean()) / raw.std(ddof=1)
    latent = math.sqrt(cohort.dgp.reliability) * g_std
    n_pcs = children[0].pcs.size if children else 0
    table = {
        "individual_id": np.array([c.individual_id for c in children]),
        "family_id": np.array([c.family_id for c in children]),
        "birth_order": np.array([assign_reporting_birth_order(c.birth_order)
                                 for c in children], dtype=int),
        "firstborn": np.array([int(c.firstborn) for c in children], dtype=int),
        "lastborn": np.array([int(c.lastborn) for c in children], dtype=int),
        "sex": np.array([c.sex for c in children], dtype=int),
        "birth_year": np.array([c.birth_year for c in children], dtype=int),
        "birth_month": np.array([c.birth_month for c in children], dtype=int),
        "educ_years": np.array([c.educ_years for c in children], dtype=float),
    }
    for k in range(n_pcs):
        table[f"pc{k + 1}"] = np.array([c.pcs[k] for c in children], dtype=float)
    table["theta_true"] = np.array([c.latent_skill for c in children], dtype=float)
    table["latent_score"] = latent
    table["family_size"] = np.concatenate(
        [np.full(len(f.children), len(f.children), dtype=int)
         for f in cohort.families])
    return table


def genotype_matrix(cohort: Cohort) -> tuple[np.ndarray, list, tuple]:
    """(matrix, individual_ids, snp_ids) for the whole cohort."""
    children = [c for f in cohort.families for c in f.children]
    matrix = np.vstack([c.genotype for c in children])
    ids = [c.individual_id for c in children]
    return matrix, ids, cohort.panel.snp_ids
