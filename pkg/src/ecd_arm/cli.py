"""Command-line entry point.

Exit codes: 0 success, 1 a check failed, 2 usage, configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from ._version import __version__
from .classifier import (DegenerateData, SchemaError, SignModel, choose_epsilon,
                         evaluate_model, train, Dataset)
from .config import ConfigError, load_config
from .pipeline import gamma_from_config, generate_dataset
from .variational import EXTREMUM_TOL, NoPositiveSamples, Q_STAR, verify_extremum

log = logging.getLogger("ecd_arm")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
MAX_EXHAUSTED_RATE = 0.01


class UsageError(Exception):
    pass


def _write_json(path, payload):
    if path is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", path)


def _require_file(path, what):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    data = generate_dataset(cfg, args.n, seed, workers=args.workers)
    out = Path(args.out)
    data.write_csv(out)
    m = data.metadata
    log.info("gen: %d positive, %d negative, %d degenerate, %d exhausted",
             m["count_positive"], m["count_negative"], m["count_degenerate"], m["count_exhausted"])
    if m["count_exhausted"] > MAX_EXHAUSTED_RATE * args.n:
        print(f"error: SamplingExhausted for {m['count_exhausted']} of {args.n} indices",
              file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _metrics_path(model_path):
    p = Path(model_path)
    return p.with_name(p.stem + ".metrics.json")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    data = Dataset.read_csv(_require_file(args.data, "dataset"))
    ridge = cfg.classifier.ridge if args.ridge is None else args.ridge
    train_set, test_set = data.split()
    try:
        model = train(train_set, ridge, loss=cfg.classifier.loss)
    except DegenerateData as exc:
        print(f"error: DegenerateData: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if cfg.classifier.epsilon is not None:
        model.epsilon = cfg.classifier.epsilon
    else:
        model.epsilon = choose_epsilon(model, train_set.X, cfg.classifier.target_abstention)
    model.metadata.update({
        "dataset": data.metadata,
        "n_test": len(test_set),
        "target_abstention": cfg.classifier.target_abstention,
        "config_hash": cfg.digest,
    })
    model.save(args.out)
    metrics = {
        "train_eps0": evaluate_model(model, train_set, 0.0),
        "test_eps0": evaluate_model(model, test_set, 0.0),
        "test_model_eps": evaluate_model(model, test_set),
        "config_hash": cfg.digest,
        "seed": data.metadata.get("seed"),
    }
    _write_json(_metrics_path(args.out), metrics)
    acc = metrics["test_eps0"]["accuracy_on_retained"]
    print(f"held-out accuracy (eps=0): {acc:.4f}  epsilon={model.epsilon:.4g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = SignModel.load(_require_file(args.model, "model"))
    data = Dataset.read_csv(_require_file(args.data, "dataset"))
    metrics = evaluate_model(model, data, args.epsilon)
    metrics["model_metadata"] = {k: model.metadata.get(k) for k in ("config_hash", "loss")}
    metrics["seed"] = data.metadata.get("seed")
    metrics["config_hash"] = data.metadata.get("config_hash")
    _write_json(args.out, metrics)
    plot_path = args.plot_data
    if plot_path is None and args.out is not None:
        out = Path(args.out)
        plot_path = out.with_name(out.stem + ".plot.csv")
    if plot_path is not None:
        f = model.decision_function(data.X) if len(data) else []
        with Path(plot_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "f", "label"])
            for i, (fi, lab) in enumerate(zip(f, data.label)):
                w.writerow([i, repr(float(fi)), int(lab)])
    return EXIT_OK


def cmd_verify_extremum(args) -> int:
    cfg = load_config(args.config)
    report = verify_extremum(cfg.arm, Q_STAR, t_max=args.t_max)
    payload = report.to_dict()
    payload.update({
        "arm": cfg.to_dict()["arm"],
        "tolerances": {"euler_residual": EXTREMUM_TOL, "det_zero": 1e-12},
        "config_hash": cfg.digest,
        "seed": cfg.seed,
        "passed": report.passed,
    })
    _write_json(args.out, payload)
    failed = []
    if not max(abs(r) for r in report.euler_residual) < EXTREMUM_TOL:
        failed.append("euler_residual")
    if not report.P_positive_definite:
        failed.append("P_positive_definite")
    if report.conjugate_point_found:
        failed.append("conjugate_point")
    if failed:
        print(f"check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_gamma(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    try:
        est = gamma_from_config(cfg, args.n, seed, workers=args.workers)
    except NoPositiveSamples as exc:
        print(f"error: NoPositiveSamples: {exc}", file=sys.stderr)
        return EXIT_CHECK
    payload = est.to_dict()
    payload.update({"seed": seed, "config_hash": cfg.digest, "n_grid": cfg.quadrature.n_grid})
    _write_json(args.out, payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecd-arm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--out", required=out_required, help="output path")

    p = sub.add_parser("gen", help="generate a labelled trajectory dataset")
    common(p, out_required=True)
    p.add_argument("--n", type=int, default=50_000, help="number of samples")
    p.add_argument("--seed", type=int, help="overrides [sampler] seed")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker processes; output does not depend on it")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit the quadratic sign model")
    common(p, out_required=True)
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--lambda", dest="ridge", type=float, help="ridge penalty, overrides [classifier]")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    common(p)
    p.add_argument("--model", required=True, help="model JSON from train")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--epsilon", type=float, help="abstention half-width; defaults to the model band")
    p.add_argument("--plot-data", help="CSV of (index, f, label); defaults next to --out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify-extremum", help="check the static extremum and Jacobi condition")
    common(p)
    p.add_argument("--t-max", type=float, default=50.0, help="end of the conjugate-point scan")
    p.set_defaults(func=cmd_verify_extremum)

    p = sub.add_parser("gamma", help="sampled estimate of gamma21")
    common(p)
    p.add_argument("--n", type=int, default=10_000, help="number of samples")
    p.add_argument("--seed", type=int, help="overrides [sampler] seed")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker processes; output does not depend on it")
    p.set_defaults(func=cmd_gamma)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    for flag in ("n", "workers"):
        if getattr(args, flag, 1) is not None and getattr(args, flag, 1) < 1:
            parser.error(f"--{flag} must be positive")
    try:
        return args.func(args)
    except (ConfigError, UsageError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
