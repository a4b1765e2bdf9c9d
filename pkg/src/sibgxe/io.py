"""Tabular file formats: cohort tables, genotypes, weights, scores, fits.

All floats are written with ``repr`` so round-trips are exact, and all
readers validate row-by-row with line numbers in error messages.  The
cohort CSV uses a fixed canonical column order; in-memory-only columns
(``latent_score``, ``family_size``) are never written.
"""

from __future__ import annotations

import csv
import re

import numpy as np

from .errors import IngestionError, SchemaError
from .genoscore import MAF_FILTER, WeightSet

# Canonical cohort column order; pc columns slot in before theta_true.
COHORT_LEAD = ("individual_id", "family_id", "birth_order", "firstborn",
               "lastborn", "sex", "birth_year", "birth_month", "educ_years",
               "pgs", "pgs_a", "pgs_b")
COHORT_TAIL = ("theta_true",)
_PRIVATE_COLUMNS = ("latent_score", "family_size")

_INT_COLUMNS = {"birth_order", "firstborn", "lastborn", "sex",
                "birth_year", "birth_month"}
_STR_COLUMNS = {"individual_id", "family_id"}

_PC_RE = re.compile(r"pc(\d+)$")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _cohort_columns(table) -> list:
    present = set(table)
    cols = [c for c in COHORT_LEAD if c in present]
    pcs = sorted((int(m.group(1)), c) for c in present
                 if (m := _PC_RE.match(c)))
    cols += [c for _, c in pcs]
    cols += [c for c in COHORT_TAIL if c in present]
    return cols


def write_cohort_csv(path, table) -> list:
    """Write the cohort table in canonical column order; returns the columns."""
    cols = _cohort_columns(table)
    if "individual_id" not in cols or "family_id" not in cols:
        raise SchemaError("cohort table requires individual_id and family_id")
    n = len(np.asarray(table[cols[0]]))
    arrays = [np.asarray(table[c]) for c in cols]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(n):
            writer.writerow([_fmt(a[i]) for a in arrays])
    return cols


def write_genotypes_csv(path, genotypes, individual_ids, snp_ids):
    genotypes = np.asarray(genotypes)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["individual_id", *snp_ids])
        for i, iid in enumerate(individual_ids):
            writer.writerow([iid, *(str(int(g)) for g in genotypes[i])])


def write_weights_tsv(path, weights: WeightSet):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(["snp_id", "weight", "std_error"])
        for sid, w, se in zip(weights.snp_ids, weights.weights,
                              weights.standard_errors):
            writer.writerow([sid, repr(float(w)), repr(float(se))])


def write_scores_csv(path, individual_ids, scores):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["individual_id", "score"])
        for iid, s in zip(individual_ids, np.asarray(scores, dtype=float)):
            writer.writerow([iid, repr(float(s))])


def write_fit_csv(path, result, *, extra_metadata=()):
    """One row per term plus ``__``-prefixed metadata rows at the bottom."""
    meta = [("__n_obs", result.n_obs), ("__r2", result.r2),
            ("__within_r2", "" if result.within_r2 is None
             else result.within_r2)]
    if hasattr(result, "first_stage_F"):
        meta.append(("__cragg_donald", result.first_stage_F))
    meta.extend(extra_metadata)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "estimate", "std_error", "t_stat", "p_value"])
        for j, term in enumerate(result.terms):
            writer.writerow([term,
                             repr(float(result.coefficients[j])),
                             repr(float(result.std_errors[j])),
                             repr(float(result.t_stats[j])),
                             repr(float(result.p_values[j]))])
        for key, value in meta:
            writer.writerow([key, _fmt(value), "", "", ""])


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _parse(value, kind, path, line, column):
    try:
        if kind is int:
            return int(value)
        return float(value)
    except ValueError:
        raise IngestionError(
            f"{path}:{line}: column {column!r} has non-numeric value "
            f"{value!r}") from None


def _read_rows(path, delimiter=","):
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = list(reader)
    if not rows:
        raise IngestionError(f"{path}: file is empty")
    return rows


def _ingest_cohort(path):
    rows = _read_rows(path)
    header = rows[0]
    if "individual_id" not in header or "family_id" not in header:
        raise IngestionError(
            f"{path}:1: cohort header must include individual_id and family_id")
    n_cols = len(header)
    columns = {c: [] for c in header}
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise IngestionError(
                f"{path}:{line}: expected {n_cols} fields, got {len(row)}")
        for c, v in zip(header, row):
            if c in _STR_COLUMNS:
                columns[c].append(v)
            elif c in _INT_COLUMNS:
                columns[c].append(_parse(v, int, path, line, c))
            else:
                columns[c].append(_parse(v, float, path, line, c))
    out = {}
    for c, vals in columns.items():
        if c in _STR_COLUMNS:
            out[c] = np.array(vals)
        elif c in _INT_COLUMNS:
            out[c] = np.array(vals, dtype=int)
        else:
            out[c] = np.array(vals, dtype=float)
    # derived column: number of rows sharing each family id
    fam = out["family_id"]
    _, inv, counts = np.unique(fam, return_inverse=True, return_counts=True)
    out["family_size"] = counts[inv]
    return out


def _ingest_weights(path):
    rows = _read_rows(path, delimiter="\t")
    if rows[0][:3] != ["snp_id", "weight", "std_error"]:
        raise IngestionError(
            f"{path}:1: weights header must be snp_id\\tweight\\tstd_error")
    ids, w, se = [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise IngestionError(
                f"{path}:{line}: expected 3 fields, got {len(row)}")
        ids.append(row[0])
        w.append(_parse(row[1], float, path, line, "weight"))
        se.append(_parse(row[2], float, path, line, "std_error"))
    return WeightSet(snp_ids=ids, weights=np.array(w),
                     standard_errors=np.array(se), source="external")


def _ingest_scores(path):
    rows = _read_rows(path)
    if rows[0] != ["individual_id", "score"]:
        raise IngestionError(
            f"{path}:1: scores header must be individual_id,score")
    ids, vals = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise IngestionError(
                f"{path}:{line}: expected 2 fields, got {len(row)}")
        ids.append(row[0])
        vals.append(_parse(row[1], float, path, line, "score"))
    return {"individual_id": np.array(ids),
            "score": np.array(vals, dtype=float)}


def _ingest_genotypes(path):
    rows = _read_rows(path)
    header = rows[0]
    if not header or header[0] != "individual_id":
        raise IngestionError(
            f"{path}:1: genotype header must start with individual_id")
    snp_ids = header[1:]
    n_cols = len(header)
    ids, mat = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise IngestionError(
                f"{path}:{line}: expected {n_cols} fields, got {len(row)}")
        ids.append(row[0])
        counts = []
        for sid, v in zip(snp_ids, row[1:]):
            g = _parse(v, int, path, line, sid)
            if g not in (0, 1, 2):
                raise IngestionError(
                    f"{path}:{line}: allele count for {sid!r} must be 0, 1 "
                    f"or 2, got {g}")
            counts.append(g)
        mat.append(counts)
    genotypes = np.array(mat, dtype=np.int8)
    if genotypes.size == 0:
        raise IngestionError(f"{path}: no genotype rows")
    # minor-allele-frequency filter on ingested panels
    freq = genotypes.mean(axis=0) / 2.0
    maf = np.minimum(freq, 1.0 - freq)
    keep = maf >= MAF_FILTER
    dropped = [sid for sid, k in zip(snp_ids, keep) if not k]
    return {"individual_id": np.array(ids),
            "genotypes": genotypes[:, keep],
            "snp_ids": tuple(sid for sid, k in zip(snp_ids, keep) if k),
            "dropped_snp_ids": tuple(dropped)}


_SCHEMAS = {"cohort": _ingest_cohort, "weights": _ingest_weights,
            "scores": _ingest_scores, "genotypes": _ingest_genotypes}


def ingest_table(path, schema: str):
    """Read and validate an external file against a named schema."""
    try:
        reader = _SCHEMAS[schema]
    except KeyError:
        raise SchemaError(
            f"unknown schema {schema!r}; expected one of "
            f"{sorted(_SCHEMAS)}") from None
    return reader(path)


# ---------------------------------------------------------------------------
# plot-data exports
# ---------------------------------------------------------------------------

def binned_scatter(x, y, n_bins: int = 200):
    """Equal-count bins of ``x`` with the mean of ``x`` and ``y`` per bin.

    Returns ``(bin_x, bin_y, notice)``; ``notice`` is non-None when the bin
    count was reduced because the data cannot fill the requested bins.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise SchemaError("x and y must have equal length")
    notice = None
    n_bins = int(n_bins)
    if n_bins > x.size:
        notice = (f"requested {n_bins} bins for {x.size} points; "
                  f"reduced to {x.size}")
        n_bins = x.size
    order = np.argsort(x, kind="stable")
    splits = np.array_split(order, n_bins)
    bin_x = np.array([x[s].mean() for s in splits])
    bin_y = np.array([y[s].mean() for s in splits])
    return bin_x, bin_y, notice


def birth_order_means(birth_order, y):
    """Mean and standard error of ``y`` by censored birth order.

    Returns an array with columns (birth_order, mean, std_error, count).
    """
    order = np.asarray(birth_order, dtype=int)
    y = np.asarray(y, dtype=float)
    rows = []
    for r in np.unique(order):
        vals = y[order == r]
        se = vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else np.nan
        rows.append((r, vals.mean(), se, vals.size))
    return np.array(rows, dtype=float)


def ri_histogram(t_permuted, n_bins: int = 50):
    """(bin_left, bin_right, count) rows over permuted statistics."""
    t = np.asarray(t_permuted, dtype=float)
    t = t[np.isfinite(t)]
    counts, edges = np.histogram(t, bins=n_bins)
    return np.column_stack([edges[:-1], edges[1:], counts])


def write_plot_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(np.asarray(rows)):
            writer.writerow([_fmt(v) for v in row])
