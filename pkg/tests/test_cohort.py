import numpy as np
import pytest

from sibgxe.cohort import (
    DgpParams,
    SnpPanel,
    StructuralParams,
    assign_reporting_birth_order,
    cohort_table,
    generate_cohort,
    genotype_matrix,
    transmit,
    truncated_geometric_sizes,
)
from sibgxe.errors import DomainError
from sibgxe.streams import substream


def make_panel(n_snps=10, freq=0.5, effect=1.0, seed=None):
    if seed is not None:
        rng = np.random.default_rng(seed)
        freqs = rng.uniform(0.1, 0.9, n_snps)
        effects = rng.normal(0, 1, n_snps)
    else:
        freqs = np.full(n_snps, freq)
        effects = np.full(n_snps, effect)
    return SnpPanel(snp_ids=[f"snp{j}" for j in range(n_snps)],
                    allele_freqs=freqs, true_effects=effects)


# ---------------------------------------------------------------------------
# transmission
# ---------------------------------------------------------------------------

def test_transmit_homozygous_deterministic():
    stream = substream(0, "t")
    mother = np.array([0, 0, 2, 2])
    father = np.array([0, 2, 0, 2])
    child = transmit(mother, father, stream)
    np.testing.assert_array_equal(child, [0, 1, 1, 2])


def test_transmit_child_within_parental_bounds():
    stream = substream(1, "t")
    for _ in range(200):
        mother = stream.integers(0, 3, size=8)
        father = stream.integers(0, 3, size=8)
        child = transmit(mother, father, stream)
        # each parent contributes 0 or 1 allele copies
        assert np.all(child >= mother // 2 + father // 2)
        assert np.all(child <= (mother + 1) // 2 + (father + 1) // 2)


def test_transmit_het_het_distribution():
    """Two heterozygous parents: child counts follow (1/4, 1/2, 1/4)."""
    stream = substream(2, "t")
    n = 40_000
    mother = np.ones(n, dtype=int)
    father = np.ones(n, dtype=int)
    child = transmit(mother, father, stream)
    freqs = np.bincount(child, minlength=3) / n
    np.testing.assert_allclose(freqs, [0.25, 0.5, 0.25], atol=0.01)


# ---------------------------------------------------------------------------
# Hardy-Weinberg population structure
# ---------------------------------------------------------------------------

def test_child_genotype_means_hardy_weinberg():
    panel = make_panel(n_snps=2, freq=0.5)
    panel = SnpPanel(snp_ids=("a", "b"), allele_freqs=np.array([0.5, 0.1]),
                     true_effects=np.array([1.0, 1.0]))
    cohort = generate_cohort(4000, {2: 1.0}, panel=panel,
                             dgp=DgpParams(), seed=11)
    geno, _, _ = genotype_matrix(cohort)
    # mean allele count is 2p
    assert abs(geno[:, 0].mean() - 1.0) < 0.02
    assert abs(geno[:, 1].mean() - 0.2) < 0.02
    # P(count == 2) = p^2 at the rare SNP
    assert abs(np.mean(geno[:, 1] == 2) - 0.01) < 0.004


def test_allele_frequency_preserved_across_generations():
    panel = make_panel(n_snps=5, seed=3)
    cohort = generate_cohort(3000, {3: 1.0}, panel=panel,
                             dgp=DgpParams(), seed=12)
    geno, _, _ = genotype_matrix(cohort)
    np.testing.assert_allclose(geno.mean(axis=0) / 2, panel.allele_freqs,
                               atol=0.02)


# ---------------------------------------------------------------------------
# birth order and family sizes
# ---------------------------------------------------------------------------

def test_reporting_birth_order_censored():
    assert assign_reporting_birth_order(1) == 1
    assert assign_reporting_birth_order(5) == 5
    assert assign_reporting_birth_order(9) == 5
    with pytest.raises(DomainError):
        assign_reporting_birth_order(0)


def test_truncated_geometric_mean():
    probs = truncated_geometric_sizes(mean=3.0, max_size=10)
    sizes = np.arange(1, 11)
    assert abs(float(probs @ sizes) - 3.0) < 1e-6
    assert abs(probs.sum() - 1.0) < 1e-12


def test_family_size_distribution_respected():
    panel = make_panel(n_snps=3)
    cohort = generate_cohort(2000, {2: 0.5, 4: 0.5}, panel=panel,
                             dgp=DgpParams(), seed=13)
    sizes = np.array([len(f.children) for f in cohort.families])
    assert set(sizes) == {2, 4}
    assert abs(np.mean(sizes == 2) - 0.5) < 0.05


# ---------------------------------------------------------------------------
# reduced-form outcome equation
# ---------------------------------------------------------------------------

def test_reduced_form_exact_reconstruction():
    """With no noise, the outcome equals the DGP equation exactly."""
    panel = make_panel(n_snps=8, seed=4)
    alpha = (14.0, 0.574, 0.368, 0.162)
    dgp = DgpParams(alpha=alpha, family_sd=0.0, noise_sd=0.0)
    cohort = generate_cohort(500, {2: 1.0}, panel=panel, dgp=dgp, seed=14)
    table = cohort_table(cohort)
    g = table["latent_score"]
    fb = table["firstborn"].astype(float)
    expected = alpha[0] + alpha[1] * g + alpha[2] * fb + alpha[3] * g * fb
    np.testing.assert_allclose(table["educ_years"], expected, atol=1e-10)


def test_reduced_form_latent_variance_matches_reliability():
    panel = make_panel(n_snps=8, seed=4)
    dgp = DgpParams(reliability=0.7)
    cohort = generate_cohort(800, {2: 1.0}, panel=panel, dgp=dgp, seed=15)
    table = cohort_table(cohort)
    assert abs(table["latent_score"].var(ddof=1) - 0.7) < 1e-10


def test_covariate_effects_enter_outcome():
    panel = make_panel(n_snps=8, seed=4)
    base = DgpParams(alpha=(0.0, 0.0, 0.0, 0.0))
    with_cov = DgpParams(alpha=(0.0, 0.0, 0.0, 0.0),
                         covariate_effects=(2.0,))
    c0 = cohort_table(generate_cohort(100, {2: 1.0}, panel=panel,
                                      dgp=base, seed=16))
    c1 = cohort_table(generate_cohort(100, {2: 1.0}, panel=panel,
                                      dgp=with_cov, seed=16))
    np.testing.assert_allclose(c1["educ_years"] - c0["educ_years"],
                               2.0 * c0["sex"], atol=1e-10)


def test_nurture_term_shared_within_family():
    panel = make_panel(n_snps=8, seed=4)
    base = DgpParams(alpha=(0.0, 0.0, 0.0, 0.0))
    nurt = DgpParams(alpha=(0.0, 0.0, 0.0, 0.0), nurture_coef=0.5)
    c0 = cohort_table(generate_cohort(200, {2: 1.0}, panel=panel,
                                      dgp=base, seed=17))
    c1 = cohort_table(generate_cohort(200, {2: 1.0}, panel=panel,
                                      dgp=nurt, seed=17))
    delta = c1["educ_years"] - c0["educ_years"]
    # the parental-score shift is identical for both siblings
    np.testing.assert_allclose(delta[::2], delta[1::2], atol=1e-10)
    assert delta.std() > 0


# ---------------------------------------------------------------------------
# structural mode
# ---------------------------------------------------------------------------

def test_structural_linear_case_is_affine_in_initial_skill():
    """With no complementarity the recursion is affine in theta_0."""
    panel = make_panel(n_snps=8, seed=4)
    dgp = DgpParams(mode="structural", noise_sd=0.0,
                    structural=StructuralParams(gamma_invest=1.0,
                                                gamma_complement=0.0,
                                                periods=4))
    cohort = generate_cohort(300, {2: 1.0}, panel=panel, dgp=dgp, seed=18)
    table = cohort_table(cohort)
    g = table["latent_score"]
    fb = table["firstborn"].astype(bool)
    # affine in theta0 separately for firstborns and secondborns
    for mask in (fb, ~fb):
        coef = np.polyfit(g[mask], table["educ_years"][mask], 1)
        resid = table["educ_years"][mask] - np.polyval(coef, g[mask])
        assert np.abs(resid).max() < 1e-8
        assert abs(coef[0] - 1.0) < 1e-8  # identity in theta_0


def test_structural_firstborn_receives_more_investment():
    panel = make_panel(n_snps=8, seed=4)
    dgp = DgpParams(mode="structural", noise_sd=0.0,
                    structural=StructuralParams(periods=5))
    cohort = generate_cohort(500, {2: 1.0}, panel=panel, dgp=dgp, seed=19)
    table = cohort_table(cohort)
    fb = table["firstborn"].astype(bool)
    # demeaned by latent score, firstborns end with strictly higher skill
    adj = table["educ_years"] - table["latent_score"]
    assert adj[fb].mean() > adj[~fb].mean()
    # the gap is exactly the solo period-0 investment (the full budget)
    assert abs((adj[fb].mean() - adj[~fb].mean()) - 1.0) < 1e-8


def test_structural_complementarity_amplifies_high_skill():
    panel = make_panel(n_snps=8, seed=4)
    flat = DgpParams(mode="structural", noise_sd=0.0,
                     structural=StructuralParams(gamma_complement=0.0))
    comp = DgpParams(mode="structural", noise_sd=0.0,
                     structural=StructuralParams(gamma_complement=0.4))
    t0 = cohort_table(generate_cohort(400, {2: 1.0}, panel=panel,
                                      dgp=flat, seed=20))
    t1 = cohort_table(generate_cohort(400, {2: 1.0}, panel=panel,
                                      dgp=comp, seed=20))
    gain = t1["educ_years"] - t0["educ_years"]
    g = t0["latent_score"]
    assert np.corrcoef(g, gain)[0, 1] > 0.9


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def test_generation_deterministic_and_worker_independent():
    panel = make_panel(n_snps=6, seed=5)
    dgp = DgpParams(alpha=(1.0, 0.5, 0.2, 0.1), family_sd=1.0, noise_sd=1.0)
    t1 = cohort_table(generate_cohort(200, None, panel=panel, dgp=dgp,
                                      seed=21, n_workers=1))
    t2 = cohort_table(generate_cohort(200, None, panel=panel, dgp=dgp,
                                      seed=21, n_workers=8))
    for col in t1:
        np.testing.assert_array_equal(t1[col], t2[col])


def test_table_shapes_and_ids():
    panel = make_panel(n_snps=4)
    cohort = generate_cohort(50, {1: 0.3, 3: 0.7}, panel=panel,
                             dgp=DgpParams(), seed=22, n_pcs=2)
    table = cohort_table(cohort)
    n = cohort.n_individuals
    assert len(table["individual_id"]) == n
    assert len(set(table["individual_id"])) == n
    assert "pc1" in table and "pc2" in table
    assert np.all(table["family_size"] >= 1)
    # firstborn iff birth_order == 1
    np.testing.assert_array_equal(table["firstborn"],
                                  (table["birth_order"] == 1).astype(int))
