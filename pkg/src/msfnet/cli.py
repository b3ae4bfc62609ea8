"""``msfnet`` command line: simulate, steer, generate, tabulate, train, evaluate, predict.

Exit codes: 0 success (including a gated rejection), 1 I/O failure,
2 validation error, 3 numerical failure during training.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .core import (AngularGrid, ConfigParseError, PhysicalParams, SeededRng, ValidationError,
                   load_config, save_config)

log = logging.getLogger("msfnet")

EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 1, 2, 3
OUT_ENV = "MSFNET_OUT"


EPILOG = ("Default tags: [reference setting] = value of the published reference configuration; "
          "[toolkit default] = chosen by this toolkit where the reference is silent.")


class UsageError(ValidationError):
    pass


def _default_out(name):
    return str(Path(os.environ.get(OUT_ENV, ".")) / name)


def _write_run_log(path: Path, args: argparse.Namespace, extra=None):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {"msfnet_version": __version__, "command": args.command, "args": resolved}
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _params(args) -> PhysicalParams:
    return PhysicalParams(args.wavelength, args.pitch, args.amplitude)


def _grid(args) -> AngularGrid:
    return AngularGrid(args.grid_res, args.grid_res)


def _criteria(args):
    from .datagen import FilterCriteria
    return FilterCriteria(args.min_directivity, args.min_pslr)


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args):
    from .farfield import compute_pattern_fast, export_pattern_csv
    from .measures import hpbw_detail, measures_from_pattern

    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pattern = compute_pattern_fast(config, _params(args), _grid(args))
    m = measures_from_pattern(pattern)
    bw = hpbw_detail(pattern, (m.theta_max_deg, m.phi_max_deg))
    (out / "measures.json").write_text(json.dumps(m.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.export_pattern:
        export_pattern_csv(pattern, out / "pattern.csv")
    _write_run_log(out / "run.json", args, {"hpbw_clamped": bw.clamped})
    print(f"{'directivity':<14}{m.directivity_db:10.3f} dB")
    print(f"{'pslr':<14}{m.pslr_db:10.3f} dB")
    print(f"{'theta_max':<14}{m.theta_max_deg:10.3f} deg")
    print(f"{'phi_max':<14}{m.phi_max_deg:10.3f} deg")
    print(f"{'hpbw':<14}{m.hpbw_deg:10.3f} deg" + ("  (clamped at cut boundary)" if bw.clamped else ""))
    return 0


def cmd_steer(args):
    from .datagen import generate_steering_config, inject_entropy

    cfg = generate_steering_config(args.theta, args.phi, args.rows, args.cols, args.states, _params(args))
    if args.entropy:
        cfg = inject_entropy(cfg, args.entropy, SeededRng(args.seed))
    save_config(cfg, args.out)
    print(args.out)
    return 0


def cmd_generate(args):
    from .datagen import SampleRecord, finalize_dataset, generate_records, save_dataset

    if args.count <= 0:
        raise UsageError("--count must be a positive integer")
    mode = {"tag": "tag_only", "reject": "reject"}[args.filter_mode]
    params, grid, criteria = _params(args), _grid(args), _criteria(args)
    out = Path(args.out)
    partial = out.with_name(out.name + ".partial")
    records = []
    if args.resume and partial.exists():
        with open(partial, encoding="utf-8") as fh:
            for line in fh:
                if line.endswith("\n"):
                    records.append(SampleRecord.from_json(line, args.rows, args.cols, args.states))
        records = records[:args.count]
        log.info("resuming at seed_index %d", len(records))
    with open(partial, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")

        def progress(done, total):
            if not args.quiet:
                print(f"\rgenerated {done}/{total}", end="", file=sys.stderr, flush=True)

        for r in generate_records(args.count, args.seed, params, grid, criteria, mode, args.rows, args.cols,
                                  args.states, start=len(records), threads=args.threads, progress=progress):
            records.append(r)
            fh.write(r.to_json() + "\n")
            fh.flush()
    if not args.quiet:
        print(file=sys.stderr)
    ds = finalize_dataset(records, args.seed, params, grid, criteria, mode, args.rows, args.cols, args.states)
    save_dataset(ds, out)
    partial.unlink()
    _write_run_log(out.with_name(out.name + ".run.json"), args, {"counts": ds.counts()})
    c = ds.counts()
    print(f"{out}: {len(records)} records (train {c['train']}, validation {c['validation']}, test {c['test']}); "
          f"interpretable {ds.provenance['interpretable']}")
    return 0


def cmd_tabulate(args):
    from .datagen import incidence_stand_in, write_tabulated_patterns

    feats, pats = incidence_stand_in(args.rows, args.cols, params=_params(args))
    write_tabulated_patterns(args.out, feats, pats)
    print(f"{args.out}: {feats.shape[0]} rows, {feats.shape[1]} features, {pats.shape[1]} pattern samples")
    return 0


def _train_config(args, **over):
    from .neural import TrainConfig

    kw = dict(optimizer="sgd" if args.model == "cnn" else "scg",
              l2_lambda=args.l2 if args.l2 is not None else (0.0 if args.model == "cnn" else 0.8),
              l2_mode=args.l2_mode, learning_rate=args.lr, momentum=args.momentum, decay=args.decay,
              batch_size=args.batch_size, max_epochs=args.max_epochs, max_iterations=args.max_iterations,
              patience=args.patience, mse_goal=args.mse_goal, max_centers=args.max_centers,
              spread=args.spread, seed=args.seed)
    kw.update(over)
    return TrainConfig(**kw)


def _history_csv(path, history):
    keys = sorted({k for h in history for k in h}, key=lambda k: (k not in ("iteration", "epoch"), k))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(keys) + "\n")
        for h in history:
            fh.write(",".join(repr(h[k]) if k in h else "" for k in keys) + "\n")


def cmd_train(args):
    from .datagen import load_dataset
    from .evaluate import cross_validate_lambda
    from .neural import CnnModel, MlpModel, save_model, train_per_measure, train_rbf, train_scg, train_sgd

    out = Path(args.out)
    if not Path(args.dataset).exists():
        raise FileNotFoundError(args.dataset)
    if args.dataset.endswith(".csv"):
        return _train_tabulated(args, out)
    ds = load_dataset(args.dataset)
    norm = ds.normalization
    xtr, ytr = ds.arrays("train")
    xva, yva = ds.arrays("validation")
    if args.subset:
        xtr, ytr = xtr[:args.subset], ytr[:args.subset]
        xva, yva = xva[:max(args.subset // 4, 1)], yva[:max(args.subset // 4, 1)]
    xtr_n, xva_n = norm.normalize_inputs(xtr), norm.normalize_inputs(xva)
    ytr_s, yva_s = norm.standardize(ytr), norm.standardize(yva)
    extra = {}
    lam = None
    if args.cv_lambda:
        if args.model != "mlp":
            raise UsageError("--cv-lambda applies to the MLP only")
        cands = [float(v) for v in args.cv_lambda.split(",")]
        n = min(args.cv_subsample, xtr_n.shape[0])
        cv_cfg = _train_config(args, max_iterations=args.cv_max_iterations)
        cv = cross_validate_lambda(xtr_n[:n], ytr_s[:n], cands, cv_cfg, n_folds=args.cv_folds)
        print(f"{args.cv_folds}-fold CV on {n} training samples (lambda candidates: {args.cv_lambda})")
        print(cv.format())
        lam = cv.best_lambda
        extra["cv"] = {"table": {repr(k): v for k, v in cv.table.items()}, "best_lambda": lam, "subsample": n}
    cfg = _train_config(args, **({"l2_lambda": lam} if lam is not None else {}))
    n_out = ytr_s.shape[1]
    if args.model == "mlp":
        def make(n):
            return MlpModel((xtr_n[0].size, 100, 100, n), seed=args.seed, normalization=norm)

        def fit(m, a, b, c, d):
            return train_scg(m, a, b, c, d, cfg)
    elif args.model == "cnn":
        def make(n):
            return CnnModel(tuple(xtr_n.shape[1:3]), n_out=n, seed=args.seed, normalization=norm)

        def fit(m, a, b, c, d):
            return train_sgd(m, a, b, c, d, cfg)
    if args.model == "rbf":
        model = train_rbf(xtr_n.reshape(len(xtr_n), -1), ytr_s, cfg)
        model.normalization = norm
        history = [{"iteration": model.train_meta["n_centers"], "train_loss": model.train_meta["train_mse"]}]
    elif args.per_measure:
        model, history = train_per_measure(lambda k: make(1), fit, xtr_n, ytr_s, xva_n, yva_s, norm)
    else:
        model, history = fit(make(n_out), xtr_n, ytr_s, xva_n, yva_s)
    save_model(model, out)
    _history_csv(out.with_name(out.name + ".history.csv"), history)
    _write_run_log(out.with_name(out.name + ".run.json"), args, {"train_config": cfg.to_dict(), **extra})
    print(f"{out}: {args.model} trained, {json.dumps(model.train_meta, default=str)}")
    return 0


def _train_tabulated(args, out):
    from .datagen import ingest_tabulated_patterns
    from .evaluate import r_squared
    from .neural import save_model, train_rbf

    if args.model != "rbf":
        raise UsageError("tabulated pattern data is supported with --model rbf")
    data = ingest_tabulated_patterns(args.dataset, seed=args.seed)
    xtr, ytr = data.part("train")
    xte, yte = data.part("test")
    model = train_rbf(xtr, ytr, _train_config(args))
    r2 = r_squared(model.predict(xte), yte)
    model.train_meta["test_r2"] = r2
    save_model(model, out)
    _write_run_log(out.with_name(out.name + ".run.json"), args, {"test_r2": r2})
    print(f"{out}: rbf with {model.train_meta['n_centers']} centers on {xtr.shape[0]} rows; held-out R^2 = {r2:.6f}")
    return 0


def cmd_evaluate(args):
    from .datagen import load_dataset
    from .evaluate import ToleranceSpec, emit_curves, predict_measures, tolerance_accuracy
    from .neural import load_model

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(args.dataset)
    x, y = ds.arrays(args.split)
    if args.self_test:
        name, pred = "self-test", y.copy()
    else:
        model = load_model(args.model)
        name = model.arch["kind"]
        pred = predict_measures(model, x)
    rep = tolerance_accuracy(pred, y, ToleranceSpec(), name)
    text = rep.table(reference_column=1 if name == "cnn" else 0)
    print(text)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    (out / "report.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    if args.curves:
        emit_curves({name: (pred, y)}, out / "curves.csv")
    _write_run_log(out / "run.json", args)
    return 0


def cmd_predict(args):
    from .evaluate import predict_gated
    from .neural import load_model

    config = load_config(args.config)
    model = load_model(args.model)
    res = predict_gated(config, model, _criteria(args), _params(args), _grid(args), gate=not args.no_gate)
    print(json.dumps(res.to_dict(), indent=2))
    return 0


# --- parser ----------------------------------------------------------------------

def _add_physics(p):
    g = p.add_argument_group("physical model")
    g.add_argument("--wavelength", type=float, default=1.0, help="wavelength (default 1.0) [toolkit default]")
    g.add_argument("--pitch", type=float, default=0.5, help="cell pitch (default 0.5, half a wavelength) [toolkit default]")
    g.add_argument("--amplitude", type=float, default=1.0, help="reflection amplitude (default 1) [toolkit default]")
    g.add_argument("--grid-res", type=float, default=1.0, help="angular grid step in degrees (default 1) [reference setting]")


def _add_criteria(p):
    p.add_argument("--min-directivity", type=float, default=15.0,
                   help="interpretability threshold in dB (default 15) [toolkit default]")
    p.add_argument("--min-pslr", type=float, default=3.0,
                   help="interpretability threshold in dB (default 3) [toolkit default]")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msfnet", description=__doc__, epilog=EPILOG,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"msfnet {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: number of cores) [toolkit default]")
    sub = p.add_subparsers(dest="command", required=True)
    _sub = sub.add_parser
    sub.add_parser = lambda *a, **k: _sub(*a, parents=[common], **k)

    s = sub.add_parser("simulate", help="analytical pattern + measures of one config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=_default_out("simulate"))
    s.add_argument("--export-pattern", action="store_true")
    _add_physics(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("steer", help="write a quantized beam-steering config")
    s.add_argument("--theta", type=float, required=True)
    s.add_argument("--phi", type=float, default=0.0)
    s.add_argument("--rows", type=int, default=12, help="array rows (default 12) [reference setting]")
    s.add_argument("--cols", type=int, default=12, help="array columns (default 12) [reference setting]")
    s.add_argument("--states", type=int, default=8, help="phase states per cell (default 8) [reference setting]")
    s.add_argument("--entropy", type=float, default=0.0, help="fraction of cells to redraw (default 0)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    _add_physics(s)
    s.set_defaults(func=cmd_steer)

    s = sub.add_parser("generate", help="generate a training corpus (JSON Lines)")
    s.add_argument("--count", type=int, required=True, help="number of samples (reference corpus: 100000)")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", default=_default_out("dataset.jsonl"))
    s.add_argument("--filter-mode", choices=("tag", "reject"), default="tag")
    s.add_argument("--rows", type=int, default=12, help="array rows (default 12) [reference setting]")
    s.add_argument("--cols", type=int, default=12, help="array columns (default 12) [reference setting]")
    s.add_argument("--states", type=int, default=8, help="phase states per cell (default 8) [reference setting]")
    s.add_argument("--resume", action="store_true", help="continue from <out>.partial")
    s.add_argument("--quiet", action="store_true")
    _add_criteria(s)
    _add_physics(s)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("tabulate", help="write a synthetic tabulated-pattern CSV (solver-data stand-in)")
    s.add_argument("--rows", type=int, default=4)
    s.add_argument("--cols", type=int, default=4)
    s.add_argument("--out", required=True)
    _add_physics(s)
    s.set_defaults(func=cmd_tabulate)

    s = sub.add_parser("train", help="train a surrogate (mlp | cnn | rbf)")
    s.add_argument("--dataset", required=True, help="dataset .jsonl, or tabulated .csv for rbf/mlp")
    s.add_argument("--model", choices=("mlp", "cnn", "rbf"), required=True)
    s.add_argument("--out", default=_default_out("model.json"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lambda", dest="l2", type=float, default=None,
                   help="L2 weight (default 0.8 for mlp [reference setting], 0 for cnn [reference setting: dropout only])")
    s.add_argument("--l2-mode", choices=("sum", "mean"), default="sum",
                   help="penalty lambda*sum(w^2) or lambda*mean(w^2) (default sum) [toolkit default]")
    s.add_argument("--cv-lambda", default=None,
                   help="comma list of lambda candidates for 10-fold CV, e.g. 0.1,0.4,0.8,1.6 "
                        "[candidate set is a toolkit choice]")
    s.add_argument("--cv-folds", type=int, default=10, help="cross-validation folds (default 10) [reference setting]")
    s.add_argument("--cv-subsample", type=int, default=10000, help="(default 10000) [toolkit default]")
    s.add_argument("--cv-max-iterations", type=int, default=200, help="SCG iterations per fold (default 200) [toolkit default]")
    s.add_argument("--max-iterations", type=int, default=1000, help="SCG iterations (default 1000) [toolkit default]")
    s.add_argument("--max-epochs", type=int, default=500, help="SGD epochs (default 500) [toolkit default]")
    s.add_argument("--patience", type=int, default=20, help="validation checks (default 20) [toolkit default]")
    s.add_argument("--batch-size", type=int, default=32, help="(default 32) [toolkit default]")
    s.add_argument("--lr", type=float, default=1e-3, help="SGD learning rate (default 0.001) [reference setting]")
    s.add_argument("--momentum", type=float, default=0.9, help="(default 0.9) [reference setting]")
    s.add_argument("--decay", type=float, default=1e-4, help="lr decay (default 1e-4) [reference setting]")
    s.add_argument("--spread", type=float, default=1.0, help="RBF spread (default 1) [reference setting]")
    s.add_argument("--mse-goal", type=float, default=1e-11, help="RBF MSE goal (default 1e-11) [reference setting]")
    s.add_argument("--max-centers", type=int, default=1000, help="RBF center cap (default 1000) [toolkit default]")
    s.add_argument("--per-measure", action="store_true",
                   help="train one single-output network per measure instead of a joint 5-output model")
    s.add_argument("--subset", type=int, default=0, help="train on the first N training records (0 = all)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="tolerance-accuracy report on a dataset split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", default=None)
    s.add_argument("--out", default=_default_out("evaluate"))
    s.add_argument("--split", default="test", choices=("train", "validation", "test"))
    s.add_argument("--curves", action="store_true", help="also write accuracy-vs-tolerance curves.csv")
    s.add_argument("--self-test", action="store_true", help="score a perfect predictor (sanity mode)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="gated prediction for one config")
    s.add_argument("--config", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--no-gate", action="store_true")
    _add_criteria(s)
    _add_physics(s)
    s.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "evaluate" and not args.self_test and not args.model:
        parser.error("--model is required unless --self-test is given")
    from .neural import NumericalError, ModelFormatError

    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ConfigParseError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
