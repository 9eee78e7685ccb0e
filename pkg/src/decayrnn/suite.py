"""Reproducible multi-setting benchmark runner.

One suite generates synthetic datasets that share base signals but differ in
how strongly missingness correlates with the label, cross-validates every
requested cell kind on each setting at a matched parameter budget, and runs
online (prefix) evaluation for one chosen cell.  Artifacts are JSON/CSV files
written atomically with embedded provenance and a checksum manifest; a suite
whose manifest already matches on disk is a no-op.
"""

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import cells
from .data import Dataset, SyntheticConfig, generate_synthetic
from .errors import ConfigError
from .evaluation import cross_validate, online_eval
from .training import TrainConfig

RESULTS_NAME = "results.json"
TABLE_NAME = "comparison_table.csv"
ONLINE_NAME = "online_auc.csv"
MANIFEST_NAME = "manifest.json"


@dataclass
class SuiteConfig:
    seed: int = 0
    samples: int = 378
    variables: int = 18
    classes: int = 5
    rate: float = 0.5
    correlations: tuple = (0.0, 0.3, 0.6, 0.9)
    kinds: tuple = ("gru-mean", "gru-forward", "gru-simple", "gru-d")
    folds: int = 5
    reference_kind: str = "gru-mean"
    reference_hidden: int = 32
    min_steps: int = 12
    max_steps: int = 20
    class_separation: float = 0.35
    online_kind: str = "gru-d"
    online_correlation: float = 0.9
    online_fractions: tuple = (0.25, 0.5, 0.75, 1.0)
    train: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        known = {}
        for key, value in payload.items():
            if key not in cls.__dataclass_fields__:
                raise ConfigError(f"unknown suite config key {key!r}")
            known[key] = tuple(value) if isinstance(value, list) else value
        return cls(**known)

    def train_config(self, seed) -> TrainConfig:
        merged = {"batch_size": 32, "max_epochs": 40, "patience": 5,
                  "recurrent_dropout": 0.0}
        merged.update(self.train)
        merged["seed"] = seed
        return TrainConfig(**merged)

    def resolved(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out


def _cell_seed(cfg: SuiteConfig, corr_idx: int, kind_idx: int) -> int:
    return cfg.seed * 1009 + corr_idx * 101 + kind_idx * 11


def _dataset_for(cfg: SuiteConfig, correlation: float) -> Dataset:
    return generate_synthetic(SyntheticConfig(
        n_samples=cfg.samples, n_variables=cfg.variables,
        n_classes=cfg.classes, target_missing_rate=cfg.rate,
        correlation_strength=correlation, seed=cfg.seed,
        min_steps=cfg.min_steps, max_steps=cfg.max_steps,
        class_separation=cfg.class_separation))


def _budget(cfg: SuiteConfig) -> int:
    return cells.count_params(cfg.reference_kind, cfg.variables,
                              cfg.reference_hidden, cfg.classes)


def run_cell(cfg_dict, corr_idx, kind_idx):
    """One (setting, kind) cell; self-contained so it can run in a worker."""
    cfg = SuiteConfig(**{k: tuple(v) if isinstance(v, list) else v
                         for k, v in cfg_dict.items()})
    correlation = cfg.correlations[corr_idx]
    kind = cells.parse_kind(cfg.kinds[kind_idx])
    dataset = _dataset_for(cfg, correlation)
    budget = _budget(cfg)
    hidden = cells.size_for_budget(kind, cfg.variables, cfg.classes, budget)
    train_cfg = cfg.train_config(_cell_seed(cfg, corr_idx, kind_idx))
    wants_online = (kind is cells.parse_kind(cfg.online_kind)
                    and correlation == cfg.online_correlation)
    cv = cross_validate(kind, dataset, train_cfg, k=cfg.folds,
                        hidden=hidden, keep_models=wants_online)
    record = {
        "correlation": correlation,
        "kind": kind.value,
        "hidden": hidden,
        "seed": train_cfg.seed,
        "mean_auc": cv.mean_auc,
        "std_auc": cv.std_auc,
        "fold_aucs": [f.test_auc for f in cv.folds],
        "per_task_mean": cv.per_task_mean,
        "best_epochs": [f.best_epoch for f in cv.folds],
        "dataset": {
            "achieved_correlation": dataset.metadata["achieved_correlation"],
            "achieved_missing_rate": dataset.metadata["achieved_missing_rate"],
        },
    }
    if wants_online:
        horizon = max(float(s.timestamps.max()) for s in dataset.samples)
        cutoffs = [f * horizon for f in cfg.online_fractions]
        per_cutoff = {c: [] for c in cutoffs}
        for model, prepared, split in cv.models:
            results, skipped = online_eval(model, prepared, split.test, cutoffs)
            for c in cutoffs:
                per_cutoff[c].append(results.get(c))
        record["online"] = {
            "cutoffs": cutoffs,
            "per_cutoff": [{"cutoff": c,
                            "fold_aucs": per_cutoff[c],
                            "mean_auc": float(np.mean(per_cutoff[c]))}
                           for c in cutoffs],
        }
    return record


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def csv_text(header, rows, provenance) -> str:
    lines = ["# provenance: " + json.dumps(provenance, sort_keys=True)]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def _manifest_matches(out_dir) -> bool:
    path = os.path.join(out_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        return False
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        for name, digest in manifest.get("files", {}).items():
            if _sha256(os.path.join(out_dir, name)) != digest:
                return False
    except (OSError, ValueError):
        return False
    return True


def worker_count() -> int:
    value = os.environ.get("DECAYRNN_THREADS", "1")
    try:
        count = int(value)
    except ValueError:
        raise ConfigError(f"DECAYRNN_THREADS must be an integer, got {value!r}")
    return max(1, count)


def run_suite(cfg: SuiteConfig, out_dir, workers=None) -> dict:
    """Run every (setting, kind) cell and write the artifact bundle."""
    os.makedirs(out_dir, exist_ok=True)
    provenance = {"suite_config": cfg.resolved(), "seed": cfg.seed}
    if _manifest_matches(out_dir):
        with open(os.path.join(out_dir, RESULTS_NAME)) as fh:
            return {"skipped": True, "results": json.load(fh)}

    jobs = [(ci, ki) for ci in range(len(cfg.correlations))
            for ki in range(len(cfg.kinds))]
    cfg_dict = cfg.resolved()
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, cfg_dict, ci, ki)
                       for ci, ki in jobs]
            records = [f.result() for f in futures]
    else:
        records = [run_cell(cfg_dict, ci, ki) for ci, ki in jobs]

    online = None
    for record in records:
        if "online" in record:
            online = {"kind": record["kind"],
                      "correlation": record["correlation"],
                      **record.pop("online")}

    results = {
        "_provenance": provenance,
        "budget": _budget(cfg),
        "cells": records,
        "online": online,
    }
    write_atomic(os.path.join(out_dir, RESULTS_NAME), json_text(results))

    table_rows = [(r["correlation"], r["kind"], r["mean_auc"], r["std_auc"])
                  for r in records]
    write_atomic(os.path.join(out_dir, TABLE_NAME),
                 csv_text(["correlation", "kind", "auc_mean", "auc_std"],
                          table_rows, provenance))

    files = [RESULTS_NAME, TABLE_NAME]
    if online is not None:
        online_rows = [(entry["cutoff"], entry["mean_auc"])
                       for entry in online["per_cutoff"]]
        write_atomic(os.path.join(out_dir, ONLINE_NAME),
                     csv_text(["cutoff_hours", "auc"], online_rows, provenance))
        files.append(ONLINE_NAME)

    manifest = {"_provenance": provenance,
                "files": {name: _sha256(os.path.join(out_dir, name))
                          for name in files}}
    write_atomic(os.path.join(out_dir, MANIFEST_NAME), json_text(manifest))
    return {"skipped": False, "results": results}


def experiment_suite(config_path, out_dir, workers=None) -> dict:
    return run_suite(SuiteConfig.from_json(config_path), out_dir, workers)
