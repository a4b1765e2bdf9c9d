import numpy as np
import pytest

from sibgxe.errors import DomainError, SchemaError
from sibgxe.modelspecs import ModelSpec
from sibgxe.ri import (
    RiConfig,
    RiResult,
    permute_within_family,
    randomization_test,
)
from sibgxe.streams import substream


def toy_table(seed=0, n_fam=60, beta_fb=0.0):
    rng = np.random.default_rng(seed)
    fam, order, first, last = [], [], [], []
    for i in range(n_fam):
        size = int(rng.integers(1, 4))
        for k in range(1, size + 1):
            fam.append(f"F{i:04d}")
            order.append(k)
            first.append(int(k == 1))
            last.append(int(k == size))
    n = len(fam)
    pgs = rng.standard_normal(n)
    first = np.array(first)
    y = 0.5 * pgs + beta_fb * first + rng.standard_normal(n)
    return {
        "individual_id": np.array([f"i{j}" for j in range(n)]),
        "family_id": np.array(fam),
        "birth_order": np.array(order),
        "firstborn": first,
        "lastborn": np.array(last),
        "pgs": pgs,
        "educ_years": y,
    }


# ---------------------------------------------------------------------------
# permutation mechanics
# ---------------------------------------------------------------------------

def test_singleton_families_unchanged():
    table = toy_table(seed=1)
    stream = substream(0, "ri", 0)
    perm = permute_within_family(table, "permute_birth_order_within_family",
                                 stream)
    fam = table["family_id"]
    _, counts = np.unique(fam, return_counts=True)
    singles = np.isin(fam, np.unique(fam)[counts == 1])
    np.testing.assert_array_equal(perm["birth_order"][singles],
                                  table["birth_order"][singles])


def test_within_family_multiset_invariance():
    table = toy_table(seed=2)
    stream = substream(1, "ri", 5)
    perm = permute_within_family(table, "permute_birth_order_within_family",
                                 stream)
    for fid in np.unique(table["family_id"]):
        mask = table["family_id"] == fid
        assert (sorted(perm["birth_order"][mask])
                == sorted(table["birth_order"][mask]))
        assert sorted(perm["firstborn"][mask]) == sorted(
            table["firstborn"][mask])
    # untouched columns are identical
    np.testing.assert_array_equal(perm["pgs"], table["pgs"])
    np.testing.assert_array_equal(perm["educ_years"], table["educ_years"])


def test_birth_order_block_moves_together():
    """birth_order, firstborn, lastborn move with one shared permutation."""
    table = toy_table(seed=3)
    stream = substream(2, "ri", 9)
    perm = permute_within_family(table, "permute_birth_order_within_family",
                                 stream)
    np.testing.assert_array_equal(perm["firstborn"],
                                  (perm["birth_order"] == 1).astype(int))


def test_score_scheme_moves_scores_only():
    table = toy_table(seed=4)
    stream = substream(3, "ri", 0)
    perm = permute_within_family(table, "permute_score_within_family", stream)
    np.testing.assert_array_equal(perm["birth_order"], table["birth_order"])
    for fid in np.unique(table["family_id"]):
        mask = table["family_id"] == fid
        np.testing.assert_allclose(sorted(perm["pgs"][mask]),
                                   sorted(table["pgs"][mask]))


def test_two_child_families_half_swapped():
    """In families of two a uniform permutation swaps with probability 1/2."""
    rng_table = {
        "family_id": np.repeat([f"F{i}" for i in range(2000)], 2),
        "birth_order": np.tile([1, 2], 2000),
        "firstborn": np.tile([1, 0], 2000),
        "lastborn": np.tile([0, 1], 2000),
    }
    swaps = []
    for r in range(40):
        stream = substream(7, "ri", r)
        perm = permute_within_family(
            rng_table, "permute_birth_order_within_family", stream)
        swapped = perm["birth_order"][::2] == 2
        swaps.append(swapped.mean())
    rate = float(np.mean(swaps))
    # binomial(80000, 1/2) mean: 4-sigma band
    assert abs(rate - 0.5) < 4 * 0.5 / np.sqrt(80_000)


def test_permutation_deterministic():
    table = toy_table(seed=5)
    p1 = permute_within_family(table, "permute_both_jointly",
                               substream(9, "ri", 3))
    p2 = permute_within_family(table, "permute_both_jointly",
                               substream(9, "ri", 3))
    for col in p1:
        np.testing.assert_array_equal(p1[col], p2[col])


def test_missing_family_column_raises():
    with pytest.raises(SchemaError):
        permute_within_family({"birth_order": np.array([1, 2])},
                              "permute_birth_order_within_family",
                              substream(0, "ri", 0))


# ---------------------------------------------------------------------------
# the exact p-value
# ---------------------------------------------------------------------------

def test_plus_one_formula():
    res = RiResult(t_observed=99.0, t_permuted=np.zeros(10_000), exact_p=0.0)
    # formula check: no exceedances among 10000 draws
    assert (1 + 0) / (10_000 + 1) == pytest.approx(1.0 / 10_001)
    assert res.histogram(5).shape == (5, 3)


def test_randomization_test_null_p_not_extreme():
    table = toy_table(seed=6, n_fam=80, beta_fb=0.0)
    cfg = RiConfig(target_term="firstborn", n_permutations=199, seed=11)
    res = randomization_test(table, ModelSpec(pgs_form="none"), cfg)
    assert res.exact_p >= 1.0 / 200.0
    assert res.n_failed_fits == 0
    assert res.t_permuted.size == 199


def test_randomization_test_detects_planted_effect():
    table = toy_table(seed=7, n_fam=400, beta_fb=1.5)
    cfg = RiConfig(target_term="firstborn", n_permutations=199, seed=12)
    res = randomization_test(table, ModelSpec(pgs_form="none"), cfg)
    assert res.exact_p < 0.05


def test_exact_p_monotone_in_observed_t():
    """A larger observed |t| can never yield a larger exact p."""
    table = toy_table(seed=8, n_fam=150, beta_fb=0.4)
    cfg = RiConfig(target_term="firstborn", n_permutations=99, seed=13)
    res = randomization_test(table, ModelSpec(pgs_form="none"), cfg)
    t_abs = np.abs(res.t_permuted)
    for scale in (0.5, 1.0, 2.0):
        t_hi = abs(res.t_observed) * scale
        p_hi = (1 + np.sum(t_abs >= t_hi)) / (cfg.n_permutations + 1)
        t_lo = abs(res.t_observed) * scale * 0.5
        p_lo = (1 + np.sum(t_abs >= t_lo)) / (cfg.n_permutations + 1)
        assert p_hi <= p_lo


def test_randomization_test_deterministic():
    table = toy_table(seed=9, n_fam=100)
    cfg = RiConfig(target_term="firstborn", n_permutations=49, seed=14)
    r1 = randomization_test(table, ModelSpec(pgs_form="none"), cfg)
    r2 = randomization_test(table, ModelSpec(pgs_form="none"), cfg)
    assert r1.exact_p == r2.exact_p
    np.testing.assert_array_equal(r1.t_permuted, r2.t_permuted)


def test_unknown_target_term():
    table = toy_table(seed=10)
    cfg = RiConfig(target_term="nope", n_permutations=9, seed=0)
    with pytest.raises(SchemaError):
        randomization_test(table, ModelSpec(pgs_form="none"), cfg)


def test_config_validation():
    with pytest.raises(DomainError):
        RiConfig(target_term="x", n_permutations=0)
    with pytest.raises(DomainError):
        RiConfig(target_term="x", scheme="shuffle_everything")
