"""Stage orchestration: synth -> cohort -> featurize -> select -> train -> evaluate -> report.

Every stage reads the artifacts of earlier stages from the output
directory, writes its own subdirectory and a ``manifest.json`` recording
the config hash and a SHA-256 per file. A stage refuses to read upstream
artifacts produced under a different config.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import fields
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

from .claims import ClaimsData, StudyWindow, load_claims_dir, outcome_code_set, write_rejects
from .cohort import CohortConfig, StudyWindows, build_cohort, read_cohort, write_cohort
from .features import FeatureConfig, FeatureMatrix, build_matrix
from .metrics import MetricsReport, compare_models, evaluate_scores, stratified_split
from .models import KINDS, ModelSpec, load_model, odds_ratios, save_model, train
from .selection import SelectionReport, rfe, run_filters
from .smote import SmoteConfig, smote
from .synth import GeneratorConfig, generate, write_synthetic

log = logging.getLogger("oudpipe")

COMMANDS = ("synth", "cohort", "featurize", "select", "train", "evaluate", "report", "run-all")
STAGES = ("chi2", "rfe")


class PipelineError(Exception):
    """User-facing failure (bad config, missing upstream artifact)."""


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "output_dir": "oudpipe_out",
    "seed": 0,
    "data": {"claims_dir": None, "generator": {}},
    "cohort": {
        "lookback": 365, "usage_window": 183, "follow_up": [183, 365],
        "index_rule": "first", "prior_outcome": "feature", "exclude_usage_outcomes": True,
        "study_start": None, "study_end": None,
    },
    "features": {"ablate_dependency_history": False},
    "split": {"test_fraction": 0.30},
    "selection": {
        "variance_threshold": 0.03, "alpha": 0.05, "prune_fraction": 0.10, "folds": 5,
        "rfe_models": list(KINDS), "rfe_params": {},
    },
    "smote": {"k_neighbors": 5, "target_ratio": 1.0, "standardize": False},
    "models": [{"kind": k, "params": {}} for k in KINDS],
    "threshold": 0.5,
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise PipelineError(f"config: unknown field {where}")
        if isinstance(base[k], dict) and k not in ("generator", "rfe_params"):
            if not isinstance(v, dict):
                raise PipelineError(f"config: {where} must be an object")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check(cond, where, msg):
    if not cond:
        raise PipelineError(f"config: {where}: {msg}")


def resolve_config(raw: dict, seed=None, ablate=None) -> dict:
    """Fill defaults, apply CLI overrides and validate. Errors name the field path."""
    if not isinstance(raw, dict):
        raise PipelineError("config: top level must be a JSON object")
    cfg = _merge(DEFAULT_CONFIG, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    if ablate:
        cfg["features"]["ablate_dependency_history"] = True
    _check(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed", "must be a non-negative integer")
    c = cfg["cohort"]
    _check(c["lookback"] > 0, "cohort.lookback", "must be positive")
    _check(len(c["follow_up"]) == 2 and c["follow_up"][0] <= c["follow_up"][1],
           "cohort.follow_up", "must be [start, end] with start <= end")
    s = cfg["selection"]
    _check(0 <= s["variance_threshold"], "selection.variance_threshold", "must be >= 0")
    _check(0 < s["alpha"] < 1, "selection.alpha", "must be in (0, 1)")
    _check(0 < s["prune_fraction"] < 1, "selection.prune_fraction", "must be in (0, 1)")
    _check(isinstance(s["folds"], int) and s["folds"] >= 2, "selection.folds", "must be an integer >= 2")
    for k in s["rfe_models"]:
        _check(k in KINDS, "selection.rfe_models", f"unknown kind {k!r}")
    _check(0 < cfg["split"]["test_fraction"] < 1, "split.test_fraction", "must be in (0, 1)")
    _check(0 < cfg["smote"]["target_ratio"] <= 1, "smote.target_ratio", "must be in (0, 1]")
    _check(cfg["smote"]["k_neighbors"] >= 1, "smote.k_neighbors", "must be >= 1")
    _check(0 < cfg["threshold"] < 1, "threshold", "must be in (0, 1)")
    _check(len(cfg["models"]) >= 1, "models", "list at least one model")
    kinds = [m.get("kind") for m in cfg["models"]]
    _check(len(set(kinds)) == len(kinds), "models", "each kind may appear once")
    for i, m in enumerate(cfg["models"]):
        try:
            ModelSpec(m.get("kind"), dict(m.get("params", {})), cfg["seed"])
        except ValueError as e:
            raise PipelineError(f"config: models[{i}]: {e}") from None
    for k, p in s["rfe_params"].items():
        try:
            ModelSpec(k, dict(p), cfg["seed"])
        except ValueError as e:
            raise PipelineError(f"config: selection.rfe_params.{k}: {e}") from None
    if cfg["data"]["claims_dir"] is None:
        try:
            generator_config(cfg)
        except (TypeError, ValueError) as e:
            raise PipelineError(f"config: data.generator: {e}") from None
    return cfg


def load_config(path, seed=None, ablate=None) -> dict:
    p = Path(path)
    if not p.exists():
        raise PipelineError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise PipelineError(f"config: invalid JSON ({e})") from None
    cfg = resolve_config(raw, seed, ablate)
    out = Path(cfg["output_dir"])
    if not out.is_absolute():
        cfg["output_dir"] = str((p.parent / out).resolve())
    if cfg["data"]["claims_dir"] is not None and not Path(cfg["data"]["claims_dir"]).is_absolute():
        cfg["data"]["claims_dir"] = str((p.parent / cfg["data"]["claims_dir"]).resolve())
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of everything that affects results (the output location does not)."""
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def generator_config(cfg: dict) -> GeneratorConfig:
    gen = dict(cfg["data"]["generator"])
    known = {f.name for f in fields(GeneratorConfig)}
    unknown = set(gen) - known
    if unknown:
        raise ValueError(f"unknown field(s) {sorted(unknown)}")
    gen.setdefault("seed", cfg["seed"])
    return GeneratorConfig.from_dict(gen)


def _study_window(cfg) -> StudyWindow:
    c = cfg["cohort"]
    if c["study_start"] and c["study_end"]:
        return StudyWindow(pd.Timestamp(c["study_start"]).date(), pd.Timestamp(c["study_end"]).date())
    if cfg["data"]["claims_dir"] is None:
        return generator_config(cfg).calendar
    return None


def cohort_config(cfg) -> CohortConfig:
    c = cfg["cohort"]
    windows = StudyWindows(c["lookback"], c["usage_window"], tuple(c["follow_up"]))
    return CohortConfig(windows, c["index_rule"], c["prior_outcome"], c["exclude_usage_outcomes"],
                        _study_window(cfg))


def smote_config(cfg) -> SmoteConfig:
    s = cfg["smote"]
    return SmoteConfig(s["k_neighbors"], s["target_ratio"], cfg["seed"], s["standardize"])


def model_specs(cfg) -> List[ModelSpec]:
    return [ModelSpec(m["kind"], dict(m.get("params", {})), cfg["seed"]) for m in cfg["models"]]


# ---------------------------------------------------------------------------
# artifact bookkeeping
# ---------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _stage_dir(cfg, stage) -> Path:
    d = Path(cfg["output_dir"]) / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(cfg, stage, directory: Path):
    files = sorted(p.name for p in directory.iterdir() if p.is_file() and p.name != "manifest.json")
    doc = {"stage": stage, "config_hash": config_hash(cfg),
           "files": {f: _sha(directory / f) for f in files}}
    (directory / "manifest.json").write_text(_dump(doc))


def _require(cfg, stage, command) -> Path:
    d = Path(cfg["output_dir"]) / stage
    m = d / "manifest.json"
    if not m.exists():
        raise PipelineError(f"missing {stage} artifacts in {d}: run {command} first")
    doc = json.loads(m.read_text())
    if doc.get("config_hash") != config_hash(cfg):
        raise PipelineError(f"{stage} artifacts were produced with a different config: run {command} first")
    return d


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _load_claims(cfg) -> ClaimsData:
    src = cfg["data"]["claims_dir"]
    if src is None:
        src = _require(cfg, "synth", "synth")
    elif not Path(src).is_dir():
        raise PipelineError(f"config: data.claims_dir: not a directory: {src}")
    return load_claims_dir(src, window=_study_window(cfg))


def run_synth(cfg):
    if cfg["data"]["claims_dir"] is not None:
        raise PipelineError("synth needs data.generator; this config reads data.claims_dir")
    gcfg = generator_config(cfg)
    log.info("generating %d patients", gcfg.n_patients)
    claims, truth = generate(gcfg)
    d = _stage_dir(cfg, "synth")
    write_synthetic(claims, truth, d)
    _write_manifest(cfg, "synth", d)


def run_cohort(cfg):
    claims = _load_claims(cfg)
    cohort = build_cohort(claims, cohort_config(cfg))
    if len(cohort) == 0:
        raise PipelineError("cohort is empty")
    d = _stage_dir(cfg, "cohort")
    write_cohort(cohort, d / "cohort.csv")
    oud = int(cohort.is_oud.sum())
    (d / "exclusions.json").write_text(_dump({
        "config_hash": config_hash(cfg), "exclusions": cohort.exclusions,
        "members": len(cohort), "oud": oud, "noud": len(cohort) - oud,
    }))
    write_rejects(claims.rejects, d / "rejects.csv")
    log.info("cohort: %d members (%d OUD)", len(cohort), oud)
    _write_manifest(cfg, "cohort", d)


def run_featurize(cfg):
    claims = _load_claims(cfg)
    cdir = _require(cfg, "cohort", "cohort")
    cohort = read_cohort(cdir / "cohort.csv", cdir / "exclusions.json")
    y = cohort.is_oud.astype(int)
    train_rows, test_rows = stratified_split(y, cfg["split"]["test_fraction"], cfg["seed"])
    c = cohort_config(cfg)
    fm = build_matrix(cohort, claims, FeatureConfig(c.windows),
                      ablate_dependency_history=cfg["features"]["ablate_dependency_history"],
                      impute_rows=train_rows, outcome_codes=outcome_code_set())
    d = _stage_dir(cfg, "features")
    fm.write(d)
    part = np.full(len(y), "train", dtype=object)
    part[test_rows] = "test"
    pd.DataFrame({"patient_id": fm.patient_ids, "partition": part}).to_csv(
        d / "split.csv", index=False, lineterminator="\n")
    log.info("features: %d x %d", *fm.shape)
    _write_manifest(cfg, "featurize", d)


def _load_features(cfg):
    d = _require(cfg, "features", "featurize")
    fm = FeatureMatrix.read(d).design()
    part = pd.read_csv(d / "split.csv", dtype=str)["partition"].to_numpy()
    return fm, np.flatnonzero(part == "train"), np.flatnonzero(part == "test")


def run_select(cfg):
    fm, tr, _ = _load_features(cfg)
    s = cfg["selection"]
    train_fm = fm.select_rows(tr)
    report = run_filters(train_fm.values, train_fm.y, train_fm.names,
                         s["variance_threshold"], s["alpha"])
    log.info("selection: %d -> %d (variance) -> %d (chi2)", len(fm.names),
             len(report.variance_retained), len(report.chi2_retained))
    if report.chi2_retained:
        X = train_fm.dense(report.chi2_retained)
        for kind in s["rfe_models"]:
            spec = next((m for m in model_specs(cfg) if m.kind == kind), ModelSpec(kind, seed=cfg["seed"]))
            if kind in s["rfe_params"]:
                spec = ModelSpec(kind, {**spec.params, **s["rfe_params"][kind]}, cfg["seed"])
            log.info("rfe %s on %d features", kind, X.shape[1])
            report.rfe[kind] = rfe(spec, X, train_fm.y, report.chi2_retained, s["prune_fraction"],
                                   s["folds"], smote_config(cfg), cfg["seed"])
    d = _stage_dir(cfg, "select")
    report.write(d)
    doc = json.loads((d / "selection_report.json").read_text())
    doc["config_hash"] = config_hash(cfg)
    (d / "selection_report.json").write_text(_dump(doc))
    (d / "retained_features.txt").write_text("".join(f + "\n" for f in report.chi2_retained))
    _write_manifest(cfg, "select", d)


def _stage_features(report: SelectionReport, kind: str, stage: str):
    if stage == "chi2":
        return list(report.chi2_retained)
    if kind in report.rfe:
        return list(report.rfe[kind].best_features)
    return None


def run_train(cfg):
    fm, tr, _ = _load_features(cfg)
    report = SelectionReport.read(_require(cfg, "select", "select"))
    if not report.chi2_retained:
        raise PipelineError("no features survived selection; nothing to train")
    d = _stage_dir(cfg, "train")
    train_fm = fm.select_rows(tr)
    for spec in model_specs(cfg):
        for stage in STAGES:
            feats = _stage_features(report, spec.kind, stage)
            if feats is None:
                continue
            X, y = smote(train_fm.dense(feats), train_fm.y, smote_config(cfg))
            log.info("train %s (%s, %d features)", spec.kind, stage, len(feats))
            model = train(spec, X, y, feats)
            model.meta["config_hash"] = config_hash(cfg)
            save_model(model, d / f"model_{spec.kind}_{stage}.json")
    _write_manifest(cfg, "train", d)


def _evaluate_all(cfg):
    tdir = _require(cfg, "train", "train")
    fm, _, te = _load_features(cfg)
    test_fm = fm.select_rows(te)
    reports: Dict[tuple, MetricsReport] = {}
    n_feat = {}
    for spec in model_specs(cfg):
        for stage in STAGES:
            path = tdir / f"model_{spec.kind}_{stage}.json"
            if not path.exists():
                continue
            model = load_model(path)
            scores = model.predict_proba(test_fm.dense(model.features), model.features)
            reports[(spec.kind, stage)] = evaluate_scores(test_fm.y, scores, cfg["threshold"])
            n_feat[(spec.kind, stage)] = len(model.features)
    if not reports:
        raise PipelineError("no trained models found: run train first")
    return reports, n_feat


def run_evaluate(cfg):
    reports, n_feat = _evaluate_all(cfg)
    d = _stage_dir(cfg, "evaluate")
    for (kind, stage), r in reports.items():
        (d / f"metrics_{kind}_{stage}.json").write_text(_dump(
            {"config_hash": config_hash(cfg), "model": kind, "stage": stage,
             "n_features": n_feat[(kind, stage)], **r.to_dict()}))
        r.roc_frame().to_csv(d / f"roc_points_{kind}_{stage}.csv", index=False,
                             lineterminator="\n", float_format="%.17g")
    table = compare_models(reports, n_feat)
    table.to_csv(d / "comparison.csv", index=False, lineterminator="\n", float_format="%.17g")
    _write_manifest(cfg, "evaluate", d)


def run_report(cfg):
    edir = _require(cfg, "evaluate", "evaluate")
    tdir = _require(cfg, "train", "train")
    sdir = _require(cfg, "select", "select")
    cdir = _require(cfg, "cohort", "cohort")
    table = pd.read_csv(edir / "comparison.csv")
    sel = json.loads((sdir / "selection_report.json").read_text())
    excl = json.loads((cdir / "exclusions.json").read_text())
    d = _stage_dir(cfg, "report")
    lines = [f"# oudpipe run {config_hash(cfg)}", "",
             f"Cohort: {excl['members']} patients, {excl['oud']} OUD, {excl['noud']} NOUD.", ""]
    lines += ["Exclusions:", ""] + [f"- {k}: {v}" for k, v in excl["exclusions"].items()] + [""]
    lines += [f"Features after variance threshold: {len(sel['stages']['variance'])}",
              f"Features after chi-squared filter: {len(sel['stages']['chi2'])}", ""]
    for kind, r in sel["rfe"].items():
        lines.append(f"RFE {kind}: best {len(r['best_features'])} features, "
                     f"CV AUC {r['best_auc']:.4f}, mean p-value {r['mean_p_value']:.3g}")
    lines += ["", "Test-set comparison:", "", "| model | stage | features | recall OUD | F1 OUD | AUC | best |",
              "|---|---|---|---|---|---|---|"]
    for row in table.itertuples(index=False):
        lines.append(f"| {row.model} | {row.stage} | {row.n_features} | {row.recall_oud:.4f} | "
                     f"{row.f1_oud:.4f} | {row.auc:.4f} | {'*' if row.best else ''} |")
    for stage in STAGES:
        path = tdir / f"model_LOGISTIC_{stage}.json"
        if path.exists():
            odds = odds_ratios(load_model(path))
            odds.to_csv(d / f"odds_ratios_{stage}.csv", index=False, lineterminator="\n",
                        float_format="%.17g")
    (d / "report.md").write_text("\n".join(lines) + "\n")
    _write_manifest(cfg, "report", d)


RUNNERS = {
    "synth": run_synth, "cohort": run_cohort, "featurize": run_featurize, "select": run_select,
    "train": run_train, "evaluate": run_evaluate, "report": run_report,
}


def run(command: str, cfg: dict) -> None:
    if command not in COMMANDS:
        raise PipelineError(f"unknown command {command!r}")
    if command != "run-all":
        RUNNERS[command](cfg)
        return
    for name in COMMANDS[:-1]:
        if name == "synth" and cfg["data"]["claims_dir"] is not None:
            continue
        log.info("== %s", name)
        RUNNERS[name](cfg)
