import numpy as np
import pytest

from sibgxe.errors import IngestionError, SchemaError
from sibgxe.genoscore import WeightSet
from sibgxe.io import (
    binned_scatter,
    birth_order_means,
    ingest_table,
    ri_histogram,
    write_cohort_csv,
    write_genotypes_csv,
    write_scores_csv,
    write_weights_tsv,
)


def small_cohort_table(n=6):
    rng = np.random.default_rng(0)
    return {
        "individual_id": np.array([f"F{i // 2}_{i % 2 + 1}" for i in range(n)]),
        "family_id": np.array([f"F{i // 2}" for i in range(n)]),
        "birth_order": np.array([i % 2 + 1 for i in range(n)]),
        "firstborn": np.array([(i + 1) % 2 for i in range(n)]),
        "lastborn": np.array([i % 2 for i in range(n)]),
        "sex": rng.integers(0, 2, n),
        "birth_year": rng.integers(1950, 1970, n),
        "birth_month": rng.integers(1, 13, n),
        "educ_years": rng.normal(14, 2, n),
        "pgs": rng.standard_normal(n),
        "theta_true": rng.standard_normal(n),
        "latent_score": rng.standard_normal(n),
        "family_size": np.full(n, 2),
    }


# ---------------------------------------------------------------------------
# round trips
# ---------------------------------------------------------------------------

def test_cohort_round_trip_exact(tmp_path):
    table = small_cohort_table()
    path = tmp_path / "cohort.csv"
    cols = write_cohort_csv(path, table)
    # private columns never written
    assert "latent_score" not in cols and "family_size" not in cols
    back = ingest_table(path, "cohort")
    for col in cols:
        np.testing.assert_array_equal(back[col], np.asarray(table[col]))
    # family_size is rederived from family_id
    np.testing.assert_array_equal(back["family_size"], table["family_size"])


def test_cohort_header_order_canonical(tmp_path):
    table = small_cohort_table()
    table["pc2"] = np.zeros(6)
    table["pc1"] = np.ones(6)
    path = tmp_path / "cohort.csv"
    write_cohort_csv(path, table)
    header = path.read_text().splitlines()[0]
    assert header == ("individual_id,family_id,birth_order,firstborn,lastborn,"
                      "sex,birth_year,birth_month,educ_years,pgs,pc1,pc2,"
                      "theta_true")


def test_weights_round_trip_exact(tmp_path):
    ws = WeightSet(snp_ids=("a", "b"), weights=np.array([0.1, -1 / 3]),
                   standard_errors=np.array([0.01, 0.02]))
    path = tmp_path / "w.tsv"
    write_weights_tsv(path, ws)
    back = ingest_table(path, "weights")
    assert back.snp_ids == ("a", "b")
    np.testing.assert_array_equal(back.weights, ws.weights)  # bit-exact
    assert back.source == "external"


def test_scores_round_trip(tmp_path):
    path = tmp_path / "s.csv"
    write_scores_csv(path, ["i1", "i2"], [0.123456789012345, -2.0])
    back = ingest_table(path, "scores")
    np.testing.assert_array_equal(back["score"],
                                  [0.123456789012345, -2.0])


def test_genotypes_round_trip(tmp_path):
    geno = np.array([[0, 1, 2], [2, 2, 0]])
    path = tmp_path / "g.csv"
    write_genotypes_csv(path, geno, ["i1", "i2"], ("s1", "s2", "s3"))
    back = ingest_table(path, "genotypes")
    np.testing.assert_array_equal(back["genotypes"], geno)
    assert back["snp_ids"] == ("s1", "s2", "s3")


# ---------------------------------------------------------------------------
# validation failures with line numbers
# ---------------------------------------------------------------------------

def test_ragged_row_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("individual_id,family_id,educ_years\n"
                    "i1,F1,14.0\n"
                    "i2,F1\n")
    with pytest.raises(IngestionError, match=r":3:"):
        ingest_table(path, "cohort")


def test_non_numeric_value_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("individual_id,family_id,educ_years\n"
                    "i1,F1,fourteen\n")
    with pytest.raises(IngestionError, match=r":2:.*educ_years"):
        ingest_table(path, "cohort")


def test_genotype_out_of_range_rejected(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("individual_id,s1\ni1,3\n")
    with pytest.raises(IngestionError, match=r":2:.*0, 1 or 2"):
        ingest_table(path, "genotypes")


def test_genotype_maf_filter_drops_rare_snp(tmp_path):
    # 2000 individuals, one SNP with a single minor allele: MAF 0.00025
    n = 2000
    geno = np.zeros((n, 2), dtype=int)
    geno[0, 0] = 1
    geno[:, 1] = np.tile([0, 1], n // 2)
    path = tmp_path / "g.csv"
    write_genotypes_csv(path, geno, [f"i{j}" for j in range(n)],
                        ("rare", "common"))
    back = ingest_table(path, "genotypes")
    assert back["snp_ids"] == ("common",)
    assert back["dropped_snp_ids"] == ("rare",)
    assert back["genotypes"].shape == (n, 1)


def test_unknown_schema(tmp_path):
    with pytest.raises(SchemaError):
        ingest_table(tmp_path / "x.csv", "phenome")


def test_bad_weights_header(tmp_path):
    path = tmp_path / "w.tsv"
    path.write_text("snp\tweight\tse\n")
    with pytest.raises(IngestionError, match=":1:"):
        ingest_table(path, "weights")


# ---------------------------------------------------------------------------
# plot-data exports
# ---------------------------------------------------------------------------

def test_binned_scatter_equal_count_bins():
    x = np.arange(1000, dtype=float)
    y = 2.0 * x
    bx, by, notice = binned_scatter(x, y, n_bins=200)
    assert notice is None
    assert bx.size == 200
    np.testing.assert_allclose(by, 2.0 * bx, atol=1e-10)
    assert np.all(np.diff(bx) > 0)


def test_binned_scatter_reduces_bin_count_with_notice():
    x = np.arange(50, dtype=float)
    bx, by, notice = binned_scatter(x, x, n_bins=200)
    assert bx.size == 50
    assert notice is not None and "reduced" in notice


def test_birth_order_means_oracle():
    order = np.array([1, 1, 2, 2, 2])
    y = np.array([10.0, 12.0, 7.0, 8.0, 9.0])
    out = birth_order_means(order, y)
    assert out.shape == (2, 4)
    assert out[0, 1] == pytest.approx(11.0)
    assert out[0, 2] == pytest.approx(np.std([10, 12], ddof=1) / np.sqrt(2))
    assert out[1, 1] == pytest.approx(8.0)
    assert out[1, 3] == 3


def test_ri_histogram_counts_sum():
    t = np.random.default_rng(1).standard_normal(500)
    hist = ri_histogram(t, n_bins=20)
    assert hist.shape == (20, 3)
    assert hist[:, 2].sum() == 500
    assert np.all(hist[:, 1] > hist[:, 0])
