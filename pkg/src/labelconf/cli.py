"""Command line interface: synthesis, corruption, estimation, benchmarks,
pipeline runs, and evaluation.

Exit codes: 0 success, 2 usage or config error, 3 data or format error,
4 numerical failure (non-convergence, degenerate graph). Every command is
deterministic given an explicit --seed; no ambient entropy is consumed.
"""

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import corpus, dataio, gmm, laplace, metrics, pca, trainer
from .core import FeatureMatrix, NoisyDataset
from .errors import (
    ConvergenceError,
    DegenerateFitError,
    DegenerateGraphError,
    FormatError,
    InputError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _fail_usage(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _truth_path(labels_path) -> Path:
    path = Path(labels_path)
    return path.with_name(path.stem + ".truth" + path.suffix)


def cmd_synth(args) -> int:
    dataset = corpus.make_gaussian_blobs(
        args.n, args.classes, args.dim, args.sep, args.spread, args.seed
    )
    dataio.write_embeddings(args.out_features, dataset.features)
    dataio.write_labels_csv(args.out_labels, dataset.noisy_labels)
    truth_path = _truth_path(args.out_labels)
    dataio.write_labels_csv(truth_path, dataset.true_labels_for_eval())
    print(
        json.dumps(
            {
                "features": str(args.out_features),
                "labels": str(args.out_labels),
                "truth": str(truth_path),
                "n": dataset.n,
                "d": dataset.features.d,
                "classes": dataset.num_classes,
            }
        )
    )
    return EXIT_OK


def cmd_corrupt(args) -> int:
    if args.noise == "asym" and not args.transition:
        return _fail_usage("asymmetric noise requires --transition")
    labels = dataio.read_labels_csv(args.labels)
    if args.noise == "sym":
        num_classes = args.classes if args.classes else int(labels.max()) + 1
        if labels.max() >= num_classes:
            raise InputError(f"label {labels.max()} out of range for --classes {num_classes}")
        corrupted = corpus.corrupt_labels_symmetric(labels, num_classes, args.rate, args.seed)
    else:
        transition = corpus.validate_transition(dataio.read_transition_csv(args.transition))
        corrupted = corpus.corrupt_labels_asymmetric(labels, transition, args.rate, args.seed)
    dataio.write_labels_csv(args.out, corrupted)
    changed = float(np.mean(corrupted != labels))
    print(json.dumps({"out": str(args.out), "n": int(labels.shape[0]), "changed_fraction": changed}))
    return EXIT_OK


def _load_features_maybe_reduced(features_path, pca_dim):
    """Load embeddings, optionally PCA-reduce, and time both stages."""
    features = dataio.read_embeddings(features_path)
    t0 = time.perf_counter()
    if pca_dim is not None:
        model = pca.pca_fit(features, pca_dim)
        features = pca.pca_transform(model, features)
    pca_seconds = time.perf_counter() - t0
    return features, pca_seconds


def cmd_estimate(args) -> int:
    if args.method == "gmm" and not args.probs:
        return _fail_usage("--method gmm requires --probs (predicted probabilities, .lcf)")
    labels = dataio.read_labels_csv(args.labels)
    stats = {"method": args.method, "classes": args.classes}
    if args.method == "laplace":
        features, pca_seconds = _load_features_maybe_reduced(args.features, args.pca_dim)
        if labels.shape[0] != features.n:
            raise InputError(
                f"{labels.shape[0]} labels for {features.n} feature rows"
            )
        confidence, est_stats = laplace.estimate(
            features,
            labels,
            args.classes,
            k=args.k,
            mu=args.mu,
            tol=args.tol,
            max_iter=args.max_iter,
            rhs_mode=args.rhs_mode,
            l2_normalize=args.l2_normalize,
            threads=args.threads,
            return_stats=True,
        )
        stats.update(est_stats)
        if args.pca_dim is not None:
            stats["pca_dim"] = args.pca_dim
            stats["pca_seconds"] = pca_seconds
    else:
        probs = dataio.read_embeddings(args.probs)
        if probs.n != labels.shape[0]:
            raise InputError(f"{labels.shape[0]} labels for {probs.n} probability rows")
        losses = gmm.per_sample_loss(probs.data, labels)
        t0 = time.perf_counter()
        try:
            model = gmm.fit_gmm2(losses)
            confidence = gmm.clean_posterior(model, losses)
            stats.update(
                {
                    "means": model.means.tolist(),
                    "variances": model.variances.tolist(),
                    "weights": model.weights.tolist(),
                }
            )
        except DegenerateFitError as exc:
            # Constant losses carry no signal; treat every sample as clean.
            confidence = np.ones(labels.shape[0])
            stats["degenerate_fit"] = str(exc)
        stats["fit_seconds"] = time.perf_counter() - t0
    dataio.write_confidence_csv(args.out, confidence)
    stats_path = Path(args.out).with_suffix(".stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({"confidence": str(args.out), "stats": str(stats_path)}))
    return EXIT_OK


def cmd_bench(args) -> int:
    features = dataio.read_embeddings(args.features)
    labels = dataio.read_labels_csv(args.labels)
    if labels.shape[0] != features.n:
        raise InputError(f"{labels.shape[0]} labels for {features.n} feature rows")
    truth = dataio.read_labels_csv(args.truth_labels) if args.truth_labels else None
    if truth is not None and truth.shape[0] != labels.shape[0]:
        raise InputError("truth labels length differs from noisy labels")

    def run_plain():
        return laplace.estimate(features, labels, args.classes, k=args.k, mu=args.mu,
                                threads=args.threads)

    def run_reduced():
        model = pca.pca_fit(features, args.pca_dim)
        reduced = pca.pca_transform(model, features)
        return laplace.estimate(reduced, labels, args.classes, k=args.k, mu=args.mu,
                                threads=args.threads)

    variants = {"plain": run_plain, "pca": run_reduced}
    report = {
        "config": {
            "n": features.n,
            "d": features.d,
            "classes": args.classes,
            "k": args.k,
            "mu": args.mu,
            "pca_dim": args.pca_dim,
            "repeats": args.repeats,
        }
    }
    for name, runner in variants.items():
        seconds = []
        confidence = None
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            confidence = runner()
            seconds.append(time.perf_counter() - t0)
        entry = {"seconds": seconds, "median_seconds": statistics.median(seconds)}
        if truth is not None:
            scores = metrics.noise_detection_scores(confidence, truth == labels)
            entry["noise_f1"] = scores.f1
        report[name] = entry
    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return EXIT_OK


_PIPELINE_SCHEMA = {
    "type": "object",
    "required": ["data", "trainer"],
    "additionalProperties": False,
    "properties": {
        "report_path": {"type": "string"},
        "data": {
            "type": "object",
            "required": ["n", "classes", "dim"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 2},
                "test_n": {"type": "integer", "minimum": 1},
                "classes": {"type": "integer", "minimum": 1},
                "dim": {"type": "integer", "minimum": 1},
                "separation": {"type": "number", "exclusiveMinimum": 0},
                "spread": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "noise": {
                    "type": "object",
                    "required": ["kind", "rate"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["symmetric", "asymmetric"]},
                        "rate": {"type": "number", "minimum": 0, "maximum": 1},
                        "seed": {"type": "integer", "minimum": 0},
                        "transition_csv": {"type": "string"},
                    },
                },
            },
        },
        "trainer": {
            "type": "object",
            "required": ["rounds", "warmup_rounds"],
            "additionalProperties": False,
            "properties": {
                "rounds": {"type": "integer", "minimum": 1},
                "warmup_rounds": {"type": "integer", "minimum": 0},
                "iters_per_round": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "lr_decay_round": {"type": ["integer", "null"], "minimum": 0},
                "decayed_learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "momentum": {"type": "number", "minimum": 0, "maximum": 1},
                "temperature": {"type": "number", "exclusiveMinimum": 0},
                "k": {"type": "integer", "minimum": 1},
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "uniform_prior_weight": {"type": "number", "minimum": 0},
                "negative_entropy_weight": {"type": "number", "minimum": 0},
                "jitter_sigma": {"type": ["number", "null"], "minimum": 0},
                "hidden": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}

_DATA_DEFAULTS = {"test_n": 500, "separation": 8.0, "spread": 1.0, "seed": 0}
_NOISE_DEFAULTS = {"seed": 0}


def _json_pointer(error) -> str:
    return "/" + "/".join(str(part) for part in error.absolute_path)


def load_pipeline_config(path) -> dict:
    """Parse and validate a pipeline config; errors carry a JSON pointer."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    try:
        jsonschema.validate(raw, _PIPELINE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputError(f"{path}: config error at {_json_pointer(exc)}: {exc.message}") from exc
    return raw


def cmd_pipeline(args) -> int:
    config = load_pipeline_config(args.config)
    data_cfg = {**_DATA_DEFAULTS, **config["data"]}
    noise_cfg = {**_NOISE_DEFAULTS, **data_cfg.get("noise", {})} if "noise" in config["data"] else None

    total = data_cfg["n"] + data_cfg["test_n"]
    blobs = corpus.make_gaussian_blobs(
        total, data_cfg["classes"], data_cfg["dim"],
        data_cfg["separation"], data_cfg["spread"], data_cfg["seed"],
    )
    train_set, test_set = corpus.split_dataset(blobs, data_cfg["n"], data_cfg["seed"] + 1)
    if noise_cfg is not None:
        if noise_cfg["kind"] == "asymmetric":
            if "transition_csv" not in noise_cfg:
                return _fail_usage("asymmetric noise requires data.noise.transition_csv")
            transition = corpus.validate_transition(
                dataio.read_transition_csv(noise_cfg["transition_csv"]), train_set.num_classes
            )
            spec = corpus.NoiseSpec("asymmetric", noise_cfg["rate"], noise_cfg["seed"], transition)
        else:
            spec = corpus.NoiseSpec("symmetric", noise_cfg["rate"], noise_cfg["seed"])
        train_set = corpus.apply_noise(train_set, spec)

    train_config = trainer.TrainConfig(**config["trainer"])
    result = trainer.run_pipeline(
        train_set, test_set.features, test_set.true_labels_for_eval(), train_config
    )
    report = {
        "config": config,
        "per_epoch": result.records,
        "final": result.final,
        "timings": result.timings,
    }
    report_path = config.get("report_path", "report.json")
    dataio.write_report(report_path, report)
    print(json.dumps({"report": str(report_path), "final": result.final}))
    return EXIT_OK


def cmd_eval(args) -> int:
    confidence = dataio.read_confidence_csv(args.confidence)
    truth = dataio.read_labels_csv(args.truth_labels)
    noisy = dataio.read_labels_csv(args.noisy_labels)
    if not (confidence.shape[0] == truth.shape[0] == noisy.shape[0]):
        raise InputError(
            f"length mismatch: {confidence.shape[0]} confidences, "
            f"{truth.shape[0]} truth labels, {noisy.shape[0]} noisy labels"
        )
    clean_mask = truth == noisy
    scores = metrics.noise_detection_scores(confidence, clean_mask, threshold=args.threshold)
    print(
        json.dumps(
            {
                "threshold": args.threshold,
                "precision": scores.precision,
                "recall": scores.recall,
                "f1": scores.f1,
                "no_positive_predictions": scores.no_positive_predictions,
                "clean_count": int(clean_mask.sum()),
                "noisy_count": int((~clean_mask).sum()),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelconf",
        description="Label confidence estimation for noisy datasets via graph "
        "Laplacian energy minimization, with a loss-based GMM baseline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate Gaussian blob embeddings with clean labels")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sep", type=float, default=8.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("corrupt", help="inject label noise into a labels CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--noise", choices=["sym", "asym"], required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--transition", help="C x C row-stochastic CSV (asym only)")
    p.add_argument("--classes", type=int, help="class count; default max label + 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_corrupt)

    p = sub.add_parser("estimate", help="estimate per-sample label confidence")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--method", choices=["laplace", "gmm"], default="laplace")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--pca-dim", type=int, default=None)
    p.add_argument("--probs", help="predicted probabilities .lcf (gmm only)")
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--rhs-mode", choices=["paper", "stationary"], default="paper")
    p.add_argument("--l2-normalize", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("bench", help="compare plain vs PCA-reduced estimation timings")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--pca-dim", type=int, required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--truth-labels", help="clean labels CSV; enables F1 reporting")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("pipeline", help="run the full robust-training pipeline from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("eval", help="score a confidence CSV against hidden truth")
    p.add_argument("--confidence", required=True)
    p.add_argument("--truth-labels", required=True)
    p.add_argument("--noisy-labels", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(handler=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateGraphError, ConvergenceError, DegenerateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
