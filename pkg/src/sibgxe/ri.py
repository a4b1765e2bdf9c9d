"""Randomization inference by within-family permutation.

Permutations shuffle the designated column block (birth-order labels, the
polygenic scores, or both jointly) across the members of each family,
never across families.  Each replicate re-estimates the model spec; the
exact p-value is the plus-one-corrected share of permuted t-statistics at
least as extreme as the observed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, SchemaError, SibgxeError
from .modelspecs import ModelSpec, _columns_of, fit_spec
from .streams import substream

SCHEMES = ("permute_birth_order_within_family",
           "permute_score_within_family",
           "permute_both_jointly")

_ORDER_COLUMNS = ("birth_order", "firstborn", "lastborn")
_SCORE_COLUMNS = ("pgs", "pgs_a", "pgs_b")


@dataclass
class RiConfig:
    target_term: str
    n_permutations: int = 10_000
    scheme: str = "permute_birth_order_within_family"
    seed: int = 0
    max_failure_share: float = 0.01

    def __post_init__(self):
        if self.n_permutations < 1:
            raise DomainError("n_permutations must be >= 1")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown permutation scheme {self.scheme!r}")


@dataclass
class RiResult:
    t_observed: float
    t_permuted: np.ndarray
    exact_p: float
    n_failed_fits: int = 0
    notes: list = field(default_factory=list)

    def histogram(self, n_bins=50):
        """(bin_left, bin_right, count) triples over the permuted t values."""
        counts, edges = np.histogram(self.t_permuted, bins=n_bins)
        return np.column_stack([edges[:-1], edges[1:], counts])


def _scheme_blocks(scheme, available):
    blocks = []
    if scheme in ("permute_birth_order_within_family", "permute_both_jointly"):
        blocks.append([c for c in _ORDER_COLUMNS if c in available])
    if scheme in ("permute_score_within_family", "permute_both_jointly"):
        blocks.append([c for c in _SCORE_COLUMNS if c in available])
    blocks = [b for b in blocks if b]
    if not blocks:
        raise SchemaError("no permutable columns present for the scheme")
    return blocks


def permute_within_family(data, scheme, stream) -> dict:
    """Shuffle the scheme's column block(s) across members of each family.

    Returns a shallow copy of the table with the permuted columns
    replaced; all other columns are shared, untouched references.  The
    per-family multiset of permuted values is preserved exactly.  Under
    the joint scheme one common permutation moves both blocks together.
    """
    available = set(_columns_of(data))
    if "family_id" not in available:
        raise SchemaError("family_id column is required for permutation")
    blocks = _scheme_blocks(scheme, available)

    fam = np.unique(np.asarray(data["family_id"]), return_inverse=True)[1]
    n = fam.size
    base = np.lexsort((np.arange(n), fam))
    out = {c: np.asarray(data[c]) for c in _columns_of(data)}
    for block in blocks:
        shuffled = np.lexsort((stream.random(n), fam))
        idx = np.empty(n, dtype=np.intp)
        idx[base] = shuffled
        for col in block:
            out[col] = np.asarray(data[col])[idx]
        if scheme == "permute_both_jointly":
            # same draw for both blocks: reuse idx on the next block too
            continue
    return out


def _joint_permutation_index(data, stream):
    fam = np.unique(np.asarray(data["family_id"]), return_inverse=True)[1]
    n = fam.size
    base = np.lexsort((np.arange(n), fam))
    shuffled = np.lexsort((stream.random(n), fam))
    idx = np.empty(n, dtype=np.intp)
    idx[base] = shuffled
    return idx


def randomization_test(data, spec: ModelSpec, config: RiConfig,
                       *, keep_permuted=True) -> RiResult:
    """Exact test of one coefficient by within-family permutation.

    Replicate ``r`` draws from substream ``(seed, "ri", r)``, so the set
    of permutations is independent of any parallel execution schedule.
    """
    observed = fit_spec(data, spec)
    try:
        t_obs = observed.t_stat(config.target_term)
    except KeyError:
        raise SchemaError(
            f"target term {config.target_term!r} is not in the fitted model "
            f"(terms: {observed.terms})") from None

    t_perm = np.full(config.n_permutations, np.nan)
    failures = 0
    notes = []
    for r in range(config.n_permutations):
        stream = substream(config.seed, "ri", r)
        permuted = permute_within_family(data, config.scheme, stream)
        try:
            fit = fit_spec(permuted, spec)
            t_perm[r] = fit.t_stat(config.target_term)
        except (SibgxeError, KeyError, np.linalg.LinAlgError):
            failures += 1

    if failures:
        share = failures / config.n_permutations
        if share >= config.max_failure_share:
            raise NumericalError(
                f"{failures} of {config.n_permutations} permutation fits "
                "failed; randomization distribution is unreliable")
        notes.append(f"{failures} permutation fits failed and were treated "
                     "as non-exceedances")

    exceed = int(np.sum(np.abs(t_perm[np.isfinite(t_perm)]) >= abs(t_obs)))
    exact_p = (1 + exceed) / (config.n_permutations + 1)
    return RiResult(t_observed=float(t_obs),
                    t_permuted=t_perm if keep_permuted else np.empty(0),
                    exact_p=float(exact_p), n_failed_fits=failures,
                    notes=notes)
