"""Command-line entry point wiring data, training, and evaluation together.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical abort.  Artifacts are written atomically and embed the resolved
flags and seed, so identical invocations produce byte-identical files.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from . import cells, data, evaluation, suite as suite_mod, training
from .errors import ConfigError, DataError, NumericalError
from .numeric import Rng


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(x) -> str:
    return format(float(x), ".6g")


def _write_json(path, payload):
    suite_mod.write_atomic(path, suite_mod.json_text(payload))


def _write_csv(path, header, rows, provenance):
    suite_mod.write_atomic(path, suite_mod.csv_text(header, rows, provenance))


def _provenance(command, args) -> dict:
    skip = {"func"}
    resolved = {k: v for k, v in vars(args).items() if k not in skip}
    return {"command": command, "args": resolved,
            "seed": resolved.get("seed")}


def _load_dataset(args):
    return data.load_csv(args.data, args.labels,
                         bin_hours=getattr(args, "bin_hours", None),
                         n_classes=getattr(args, "classes", None))


def _holdout_split(dataset, seed, val_fraction=0.2):
    splits = data.kfold_split(dataset, k=max(2, int(round(1 / val_fraction))),
                              seed=seed, stratify=True)
    # fold 0's test part becomes the validation carve; everything else trains
    first = splits[0]
    train_idx = np.concatenate([first.train, first.validation])
    return data.FoldSplit(train=np.array(sorted(train_idx.tolist()), dtype=int),
                          validation=first.test,
                          test=np.array([], dtype=int))


def _train_config(args) -> training.TrainConfig:
    if getattr(args, "config", None):
        cfg = training.TrainConfig.from_json(args.config)
        cfg.seed = args.seed
        return cfg
    return training.TrainConfig(seed=args.seed)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_generate(args):
    cfg = data.SyntheticConfig(
        n_samples=args.samples, n_variables=args.vars, n_classes=args.classes,
        target_missing_rate=args.rate, correlation_strength=args.correlation,
        seed=args.seed)
    dataset = data.generate_synthetic(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    data_path = os.path.join(args.out_dir, "data.csv")
    labels_path = os.path.join(args.out_dir, "labels.csv")
    data.save_csv(dataset, data_path + ".tmp", labels_path + ".tmp")
    os.replace(data_path + ".tmp", data_path)
    os.replace(labels_path + ".tmp", labels_path)
    meta = {"_provenance": _provenance("generate", args), **dataset.metadata}
    _write_json(os.path.join(args.out_dir, "meta.json"), meta)
    print(f"wrote {dataset.n_samples} series to {data_path}")
    print(f"achieved missing rate {_fmt(dataset.metadata['achieved_missing_rate'])}, "
          f"correlation {_fmt(dataset.metadata['achieved_correlation'])}")


def _cmd_ingest(args):
    dataset = data.load_csv(args.data, args.labels, bin_hours=args.bin_hours,
                            n_classes=args.classes)
    os.makedirs(args.out_dir, exist_ok=True)
    data_path = os.path.join(args.out_dir, "data.csv")
    labels_path = os.path.join(args.out_dir, "labels.csv")
    data.save_csv(dataset, data_path + ".tmp", labels_path + ".tmp")
    os.replace(data_path + ".tmp", data_path)
    os.replace(labels_path + ".tmp", labels_path)
    stats = data.dataset_statistics(dataset)
    _write_json(os.path.join(args.out_dir, "stats.json"),
                {"_provenance": _provenance("ingest", args), **stats})
    print(f"ingested {stats['n_samples']} series "
          f"({stats['n_variables']} variables, "
          f"mean missing rate {_fmt(stats['mean_variable_missing_rate'])})")


def _cmd_stats(args):
    dataset = _load_dataset(args)
    stats = data.dataset_statistics(dataset)
    for key, value in stats.items():
        print(f"{key}: {_fmt(value) if isinstance(value, float) else value}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_json(os.path.join(args.out_dir, "stats.json"),
                    {"_provenance": _provenance("stats", args), **stats})


def _cmd_correlate(args):
    dataset = _load_dataset(args)
    r, flagged = data.missingness_label_correlation(dataset)
    rows = []
    for d in range(r.shape[0]):
        for k in range(r.shape[1]):
            rows.append((dataset.variable_names[d], f"task{k}", float(r[d, k])))
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(os.path.join(args.out_dir, "correlation.csv"),
                   ["variable", "task", "pearson_r"], rows,
                   _provenance("correlate", args))
    for variable, task, value in rows:
        note = ""
        if flagged[dataset.variable_names.index(variable),
                   int(task.removeprefix("task"))]:
            note = " (zero-variance, forced 0)"
        print(f"{variable} {task}: {_fmt(value)}{note}")


def _cmd_param_count(args):
    print(cells.count_params(args.kind, args.vars, args.hidden, args.outputs))


def _cmd_grad_check(args):
    report = training.gradient_check(args.kind,
                                     dims=(args.vars, args.hidden, args.steps),
                                     seed=args.seed)
    for name in sorted(report["blocks"]):
        print(f"{name}: {_fmt(report['blocks'][name])}")
    print(f"max relative error: {_fmt(report['max_rel_err'])}")


def _cmd_train(args):
    dataset = _load_dataset(args)
    split = _holdout_split(dataset, args.seed)
    prepared = evaluation.prepare_fold(dataset, split)
    cfg = _train_config(args)
    model, history = training.train(args.kind, prepared, split, cfg,
                                    hidden=args.hidden,
                                    param_budget=args.param_budget)
    os.makedirs(args.out_dir, exist_ok=True)
    model_path = os.path.join(args.out_dir, "model.json")
    training.save_model(model, model_path + ".tmp")
    os.replace(model_path + ".tmp", model_path)
    lines = "\n".join(json.dumps(rec, sort_keys=True)
                      for rec in history["epochs"])
    suite_mod.write_atomic(os.path.join(args.out_dir, "history.jsonl"),
                           lines + "\n")
    meta = history["meta"]
    if meta["aborted"]:
        print(f"training aborted: {meta['aborted']}; "
              f"kept checkpoint of epoch {meta['best_epoch']}")
        raise NumericalError(meta["aborted"])
    print(f"best epoch {meta['best_epoch']} "
          f"(validation AUC {_fmt(meta['best_val_auc'])}); "
          f"model saved to {model_path}")


def _cmd_evaluate(args):
    model = training.load_model(args.model)
    dataset = _load_dataset(args)
    prepared = training.apply_model_normalization(model, dataset)
    scores, labels = evaluation.score_dataset(model, prepared)
    per_task = evaluation.per_task_auc(scores, labels, model.task_mode,
                                       prepared.n_classes)
    avg = evaluation.average_auc(scores, labels, model.task_mode,
                                 prepared.n_classes)
    for c, value in enumerate(per_task):
        print(f"task{c} AUC: {_fmt(value)}")
    print(f"average AUC: {_fmt(avg)}")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_json(os.path.join(args.out_dir, "eval.json"),
                    {"_provenance": _provenance("evaluate", args),
                     "per_task_auc": [float(v) for v in per_task],
                     "average_auc": float(avg)})


def _cmd_cv(args):
    dataset = _load_dataset(args)
    cfg = _train_config(args)
    result = evaluation.cross_validate(args.kind, dataset, cfg, k=args.folds,
                                       hidden=args.hidden,
                                       param_budget=args.param_budget)
    print(f"{result.kind}: AUC {_fmt(result.mean_auc)} "
          f"+- {_fmt(result.std_auc)} over {args.folds} folds")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        payload = {
            "_provenance": _provenance("cv", args),
            "kind": result.kind,
            "mean_auc": result.mean_auc,
            "std_auc": result.std_auc,
            "per_task_mean": result.per_task_mean,
            "folds": [asdict(f) for f in result.folds],
        }
        _write_json(os.path.join(args.out_dir, "cv.json"), payload)


def _cmd_online_eval(args):
    model = training.load_model(args.model)
    dataset = _load_dataset(args)
    prepared = training.apply_model_normalization(model, dataset)
    cutoffs = [float(v) for v in args.cutoffs.split(",")]
    results, skipped = evaluation.online_eval(model, prepared,
                                              range(prepared.n_samples),
                                              cutoffs)
    rows = [(c, results[c]) for c in cutoffs if c in results]
    for cutoff, value in rows:
        print(f"{_fmt(cutoff)}h: AUC {_fmt(value)}")
    for cutoff in skipped:
        print(f"{_fmt(cutoff)}h: skipped (empty prefixes)")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(os.path.join(args.out_dir, "online_auc.csv"),
                   ["cutoff_hours", "auc"], rows,
                   _provenance("online-eval", args))


def _cmd_scaling(args):
    dataset = _load_dataset(args)
    cfg = _train_config(args)
    sizes = [int(v) for v in args.sizes.split(",")]
    kinds = [k.strip() for k in args.kind.split(",")]
    results = evaluation.scaling_experiment(kinds, dataset, sizes, cfg,
                                            k=args.folds, hidden=args.hidden,
                                            param_budget=args.param_budget)
    rows = []
    for (kind, size), cv in sorted(results.items()):
        print(f"{kind} @ {size}: AUC {_fmt(cv.mean_auc)} +- {_fmt(cv.std_auc)}")
        rows.append((kind, size, cv.mean_auc, cv.std_auc))
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(os.path.join(args.out_dir, "scaling.csv"),
                   ["kind", "size", "auc_mean", "auc_std"], rows,
                   _provenance("scaling", args))


def _cmd_decay_report(args):
    model = training.load_model(args.model)
    report = evaluation.decay_report(model)
    os.makedirs(args.out_dir, exist_ok=True)
    prov = _provenance("decay-report", args)
    written = []
    if report.input_curves is not None:
        rows = []
        for d, name in enumerate(report.variables):
            for s, delta in enumerate(report.sweep):
                rows.append((name, float(delta), float(report.input_curves[d, s])))
        _write_csv(os.path.join(args.out_dir, "decay_curves.csv"),
                   ["variable", "delta", "gamma"], rows, prov)
        written.append("decay_curves.csv")
    if report.hidden_hist is not None:
        rows = []
        for d, name in enumerate(report.variables):
            for lo, hi, count in report.hidden_hist[d]:
                rows.append((name, lo, hi, count))
        _write_csv(os.path.join(args.out_dir, "hidden_decay_hist.csv"),
                   ["variable", "bin_lo", "bin_hi", "count"], rows, prov)
        written.append("hidden_decay_hist.csv")
    print(f"wrote {', '.join(written)} to {args.out_dir}")


def _cmd_suite(args):
    outcome = suite_mod.experiment_suite(args.config, args.out_dir,
                                         workers=args.workers)
    if outcome["skipped"]:
        print("suite artifacts already present and checksummed; nothing to do")
        return
    for cell in outcome["results"]["cells"]:
        print(f"corr {_fmt(cell['correlation'])} {cell['kind']}: "
              f"AUC {_fmt(cell['mean_auc'])} +- {_fmt(cell['std_auc'])}")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(prog="decayrnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("generate", _cmd_generate,
            help="write a synthetic dataset with controlled missingness")
    p.add_argument("--samples", type=int, default=378)
    p.add_argument("--vars", type=int, default=18)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--correlation", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = add("ingest", _cmd_ingest, help="re-bin a raw CSV pair onto a grid")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--bin-hours", type=float, required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--out-dir", required=True)

    p = add("stats", _cmd_stats, help="dataset statistics report")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--out-dir")

    p = add("correlate", _cmd_correlate,
            help="missing-rate / label Pearson correlations")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--out-dir")

    p = add("param-count", _cmd_param_count, help="parameter-count oracle")
    p.add_argument("--kind", required=True)
    p.add_argument("--vars", type=int, required=True)
    p.add_argument("--hidden", type=int, required=True)
    p.add_argument("--outputs", type=int, required=True)

    p = add("grad-check", _cmd_grad_check,
            help="compare backprop against finite differences")
    p.add_argument("--kind", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vars", type=int, default=3)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--steps", type=int, default=5)

    p = add("train", _cmd_train, help="train one model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--hidden", type=int)
    p.add_argument("--param-budget", type=int)
    p.add_argument("--config")
    p.add_argument("--classes", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = add("evaluate", _cmd_evaluate, help="score a dataset with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--out-dir")

    p = add("cv", _cmd_cv, help="k-fold cross validation")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--hidden", type=int)
    p.add_argument("--param-budget", type=int)
    p.add_argument("--config")
    p.add_argument("--classes", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")

    p = add("online-eval", _cmd_online_eval,
            help="AUC from truncated prefixes at each cutoff")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--cutoffs", required=True,
                   help="comma-separated hours, e.g. 12,24,36,48")
    p.add_argument("--out-dir")

    p = add("scaling", _cmd_scaling,
            help="cross-validate on stratified subsamples of growing size")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--kind", required=True,
                   help="comma-separated cell kinds")
    p.add_argument("--sizes", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--hidden", type=int)
    p.add_argument("--param-budget", type=int)
    p.add_argument("--config")
    p.add_argument("--classes", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")

    p = add("decay-report", _cmd_decay_report,
            help="decay curves and hidden-decay histograms of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)

    p = add("suite", _cmd_suite, help="run the multi-setting benchmark suite")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int,
                   help="cell workers; defaults to DECAYRNN_THREADS or 1")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # argparse -h/--help
        return int(exc.code or 0)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
