"""End-to-end run orchestration: simulate, scan, score, fit, ri, report.

Every stage is a deterministic function of the validated configuration and
the seed, so re-running any prefix of the pipeline reproduces the same
bytes regardless of worker count.  A run writes its outputs plus a
manifest (config hash, library versions, per-stage timings and row counts,
output file hashes) into the output directory; a ``.partial`` marker is
left behind when a stage fails.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import io as sio
from .cohort import DgpParams, SnpPanel, StructuralParams, cohort_table, \
    generate_cohort, genotype_matrix
from .config import RunConfig
from .errors import ConfigError, SchemaError
from .genoscore import (
    inject_noisy_scores,
    residualize,
    run_scan,
    score,
    split_scan,
    standardize,
)
from .modelspecs import fit_spec
from .ri import RiConfig, randomization_test
from .streams import substream

STAGES = ("simulate", "scan", "score", "fit", "ri", "report")


def _derive_seed(seed, tag) -> int:
    return int(substream(seed, tag).integers(0, 2**63))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(config: RunConfig) -> str:
    blob = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


class RunManifest:
    def __init__(self, config: RunConfig, seed: int, out_dir: Path):
        import importlib.metadata
        import scipy
        self.out_dir = out_dir
        try:
            version = importlib.metadata.version("sibgxe")
        except importlib.metadata.PackageNotFoundError:
            version = "unknown"
        self.payload = {
            "config_hash": _config_hash(config),
            "seed": seed,
            "n_workers": config.n_workers,
            "versions": {"sibgxe": version, "numpy": np.__version__,
                         "scipy": scipy.__version__},
            "stages": {},
            "outputs": {},
        }

    def record_stage(self, name, seconds, **counts):
        self.payload["stages"][name] = {
            "seconds": round(seconds, 6), **counts}

    def record_outputs(self, paths):
        for p in paths:
            self.payload["outputs"][Path(p).name] = _sha256(p)

    def write(self):
        path = self.out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _build_panel(cfg, seed) -> SnpPanel:
    rng = substream(seed, "panel")
    lo, hi = cfg.maf_range
    freqs = rng.uniform(lo, hi, cfg.n_snps)
    effects = rng.normal(0.0, cfg.effect_sd, cfg.n_snps)
    ids = tuple(f"snp{j}" for j in range(cfg.n_snps))
    return SnpPanel(snp_ids=ids, allele_freqs=freqs, true_effects=effects)


def _build_dgp(cfg) -> DgpParams:
    structural = None
    if cfg.structural is not None:
        structural = StructuralParams(**cfg.structural.model_dump())
    return DgpParams(mode=cfg.mode, alpha=tuple(cfg.alpha),
                     covariate_effects=tuple(cfg.covariate_effects),
                     family_sd=cfg.family_sd, noise_sd=cfg.noise_sd,
                     nurture_coef=cfg.nurture_coef,
                     reliability=cfg.reliability, structural=structural)


def _family_size_dist(cfg):
    from .cohort import truncated_geometric_sizes
    if cfg.probs is not None:
        return list(cfg.probs)
    return truncated_geometric_sizes(mean=cfg.mean, max_size=cfg.max_size)


def _residual_covariates(table):
    cols, names = [], []
    for c in ("sex", "birth_year", "birth_month"):
        if c in table:
            cols.append(np.asarray(table[c], dtype=float))
            names.append(c)
    if not cols:
        return None, []
    return np.column_stack(cols), names


class PipelineState:
    """Mutable carrier of the artifacts produced so far."""

    def __init__(self):
        self.table = None          # dict of column arrays
        self.genotypes = None
        self.individual_ids = None
        self.snp_ids = None
        self.panel = None
        self.dgp = None
        self.weights = None        # WeightSet or (WeightSet, WeightSet)
        self.fits = {}             # model name -> FitResult
        self.ri_result = None


def _stage_simulate(config, seed, state, out_dir, manifest):
    if config.simulation is not None:
        sim = config.simulation
        state.panel = _build_panel(sim.panel, seed)
        state.dgp = _build_dgp(sim.dgp)
        cohort = generate_cohort(
            sim.n_families, _family_size_dist(sim.family_size),
            panel=state.panel, dgp=state.dgp, seed=seed,
            n_pcs=sim.n_pcs, birth_year_range=tuple(sim.birth_year_range),
            n_workers=config.n_workers)
        state.table = cohort_table(cohort)
        geno, ids, snp_ids = genotype_matrix(cohort)
        state.genotypes = geno.astype(float)
        state.individual_ids = ids
        state.snp_ids = snp_ids
        sio.write_genotypes_csv(out_dir / "genotypes.csv", geno, ids, snp_ids)
    else:
        data = config.data
        state.table = sio.ingest_table(data.cohort, "cohort")
        if data.genotypes is not None:
            g = sio.ingest_table(data.genotypes, "genotypes")
            order = {iid: j for j, iid in enumerate(g["individual_id"])}
            try:
                idx = [order[iid] for iid in state.table["individual_id"]]
            except KeyError as exc:
                raise SchemaError(
                    f"genotype file is missing individual {exc.args[0]!r}"
                ) from None
            state.genotypes = g["genotypes"][idx].astype(float)
            state.individual_ids = list(state.table["individual_id"])
            state.snp_ids = g["snp_ids"]
        if data.weights is not None:
            state.weights = sio.ingest_table(data.weights, "weights")
    sio.write_cohort_csv(out_dir / "cohort.csv", state.table)
    manifest.record_stage("simulate", 0.0,
                          n_individuals=len(state.table["individual_id"]))


def _discovery_scan(config, seed, state, mode):
    """Scan a separate simulated discovery cohort of unrelated individuals."""
    sim = config.simulation
    disc_seed = _derive_seed(seed, "discovery")
    cohort = generate_cohort(
        config.scoring.discovery_n_families, {1: 1.0},
        panel=state.panel, dgp=state.dgp, seed=disc_seed,
        birth_year_range=tuple(sim.birth_year_range),
        n_workers=config.n_workers)
    table = cohort_table(cohort)
    geno, _, snp_ids = genotype_matrix(cohort)
    covs, names = _residual_covariates(table)
    y = np.asarray(table["educ_years"], dtype=float)
    y_resid = residualize(y, covs, names) if covs is not None else y - y.mean()
    if mode == "split":
        return split_scan(geno.astype(float), y_resid,
                          _derive_seed(seed, "split"), snp_ids=snp_ids)
    return run_scan(geno.astype(float), y_resid, snp_ids=snp_ids)


def _stage_scan(config, seed, state, out_dir, manifest):
    mode = config.scoring.mode
    if mode in ("inject", "precomputed"):
        manifest.record_stage("scan", 0.0, skipped=True)
        return
    if state.weights is not None:  # external weight file short-circuits
        sio.write_weights_tsv(out_dir / "weights.tsv", state.weights)
        manifest.record_stage("scan", 0.0, source="external")
        return
    if config.simulation is not None:
        result = _discovery_scan(config, seed, state, mode)
    else:
        if state.genotypes is None:
            raise ConfigError("scan requires genotypes")
        covs, names = _residual_covariates(state.table)
        y = np.asarray(state.table["educ_years"], dtype=float)
        y_resid = (residualize(y, covs, names) if covs is not None
                   else y - y.mean())
        if mode == "split":
            result = split_scan(state.genotypes, y_resid,
                                _derive_seed(seed, "split"),
                                snp_ids=state.snp_ids)
        else:
            result = run_scan(state.genotypes, y_resid, snp_ids=state.snp_ids)
    state.weights = result
    if mode == "split":
        sio.write_weights_tsv(out_dir / "weights_a.tsv", result[0])
        sio.write_weights_tsv(out_dir / "weights_b.tsv", result[1])
    else:
        sio.write_weights_tsv(out_dir / "weights.tsv", result)
    manifest.record_stage("scan", 0.0, mode=mode)


def _stage_score(config, seed, state, out_dir, manifest):
    mode = config.scoring.mode
    table = state.table
    if mode == "precomputed":
        if "pgs" not in table:
            raise ConfigError("scoring mode 'precomputed' requires a pgs "
                              "column in the cohort data")
        manifest.record_stage("score", 0.0, mode=mode)
        return
    if mode == "inject":
        latent = np.asarray(table["latent_score"], dtype=float)
        reliability = state.dgp.reliability
        pgs, pgs_a, pgs_b = inject_noisy_scores(
            latent, reliability, _derive_seed(seed, "inject"),
            family_ids=table["family_id"])
        table["pgs"] = standardize(pgs)
        # standardized separately, so both split analogs have mean exactly 0
        table["pgs_a"] = standardize(pgs_a)
        table["pgs_b"] = standardize(pgs_b)
    elif mode == "split":
        if state.genotypes is None:
            raise ConfigError("split scoring requires genotypes")
        ws_a, ws_b = state.weights
        raw_a = score(state.genotypes, ws_a, state.snp_ids)
        raw_b = score(state.genotypes, ws_b, state.snp_ids)
        table["pgs_a"] = standardize(raw_a)
        table["pgs_b"] = standardize(raw_b)
        table["pgs"] = standardize(0.5 * (raw_a + raw_b))
    else:  # full
        if state.genotypes is None:
            raise ConfigError("full scoring requires genotypes")
        table["pgs"] = standardize(score(state.genotypes, state.weights,
                                         state.snp_ids))
    sio.write_cohort_csv(out_dir / "cohort.csv", table)
    sio.write_scores_csv(out_dir / "scores.csv", table["individual_id"],
                         table["pgs"])
    manifest.record_stage("score", 0.0, mode=mode)


def _stage_fit(config, seed, state, out_dir, manifest):
    for model in config.models:
        spec = model.to_spec()
        result = fit_spec(state.table, spec)
        state.fits[model.name] = result
        sio.write_fit_csv(out_dir / f"fit_{model.name}.csv", result)
    manifest.record_stage("fit", 0.0, n_models=len(config.models))


def _stage_ri(config, seed, state, out_dir, manifest):
    if config.ri is None:
        manifest.record_stage("ri", 0.0, skipped=True)
        return
    ri_cfg = RiConfig(target_term=config.ri.target_term,
                      n_permutations=config.ri.n_permutations,
                      scheme=config.ri.scheme,
                      seed=_derive_seed(seed, "ri_stage"))
    model = next(m for m in config.models if m.name == config.ri.model)
    result = randomization_test(state.table, model.to_spec(), ri_cfg)
    state.ri_result = result
    sio.write_plot_csv(out_dir / "ri_histogram.csv",
                       ["bin_left", "bin_right", "count"],
                       sio.ri_histogram(result.t_permuted))
    with open(out_dir / "ri.json", "w") as fh:
        json.dump({"model": config.ri.model,
                   "target_term": config.ri.target_term,
                   "scheme": config.ri.scheme,
                   "n_permutations": config.ri.n_permutations,
                   "t_observed": result.t_observed,
                   "exact_p": result.exact_p,
                   "n_failed_fits": result.n_failed_fits,
                   "notes": result.notes}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.record_stage("ri", 0.0, n_permutations=config.ri.n_permutations)


def _stage_report(config, seed, state, out_dir, manifest):
    table = state.table
    if "pgs" in table and "educ_years" in table:
        bx, by, _ = sio.binned_scatter(table["pgs"], table["educ_years"])
        sio.write_plot_csv(out_dir / "binned_scatter.csv",
                           ["pgs_bin_mean", "outcome_bin_mean"],
                           np.column_stack([bx, by]))
    if "birth_order" in table and "educ_years" in table:
        sio.write_plot_csv(out_dir / "birth_order_means.csv",
                           ["birth_order", "mean", "std_error", "count"],
                           sio.birth_order_means(table["birth_order"],
                                                 table["educ_years"]))
    summary = {"models": {}}
    for name, fit in state.fits.items():
        summary["models"][name] = {
            "terms": list(fit.terms),
            "coefficients": [float(c) for c in fit.coefficients],
            "std_errors": [float(s) for s in fit.std_errors],
            "n_obs": fit.n_obs,
            "r2": None if not np.isfinite(fit.r2) else fit.r2,
            "within_r2": fit.within_r2,
        }
        if hasattr(fit, "first_stage_F"):
            f = fit.first_stage_F
            summary["models"][name]["cragg_donald"] = (
                None if not np.isfinite(f) else float(f))
    if state.ri_result is not None:
        summary["ri"] = {"exact_p": state.ri_result.exact_p,
                         "t_observed": state.ri_result.t_observed}
    with open(out_dir / "report.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.record_stage("report", 0.0)


_STAGE_FUNCS = {"simulate": _stage_simulate, "scan": _stage_scan,
                "score": _stage_score, "fit": _stage_fit,
                "ri": _stage_ri, "report": _stage_report}


def run_pipeline(config: RunConfig, out_dir, *, through_stage="report",
                 seed=None) -> PipelineState:
    """Run the pipeline deterministically through ``through_stage``.

    ``seed`` overrides the configured seed when given.  Returns the
    in-memory state; file outputs and the manifest land in ``out_dir``.
    """
    if through_stage not in STAGES:
        raise ConfigError(f"unknown stage {through_stage!r}; expected one of "
                          f"{STAGES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_seed = config.seed if seed is None else int(seed)
    manifest = RunManifest(config, run_seed, out_dir)
    state = PipelineState()
    partial = out_dir / ".partial"
    if partial.exists():
        partial.unlink()

    last = STAGES.index(through_stage)
    for stage in STAGES[:last + 1]:
        start = time.perf_counter()
        try:
            _STAGE_FUNCS[stage](config, run_seed, state, out_dir, manifest)
        except BaseException:
            partial.write_text(stage + "\n")
            raise
        entry = manifest.payload["stages"].setdefault(stage, {})
        entry["seconds"] = round(time.perf_counter() - start, 6)

    outputs = sorted(p for p in out_dir.iterdir()
                     if p.is_file() and p.name != "manifest.json")
    manifest.record_outputs(outputs)
    manifest.write()
    return state
