"""Command-line entry point: ``trainbias <subcommand> ...`` (or ``python -m trainbias``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import core, harness, metrics, mlp, priors, simgen
from .classify import bayes_classify, stochastic_classify
from .core import DataError


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _prior(text: str, k: int) -> np.ndarray:
    """A prior from the command line; ``uniform`` expands to 1/K each."""
    if text.strip().lower() == "uniform":
        return np.full(k, 1.0 / k)
    p = core.parse_prior(text)
    if p.size != k:
        raise DataError(f"prior {text!r} has {p.size} entries, predictions have {k} classes")
    return p


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=1) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_simulate(args) -> None:
    ds = simgen.sample_dataset(simgen.default_spec(args.kind, args.n, args.seed))
    core.save_dataset(ds, args.out)


def cmd_train(args) -> None:
    schema = core.Schema(class_count=args.class_count,
                         weight="weight" if args.weights == "file" and not args.weights_file else None)
    ds = core.load_dataset(args.data, schema)
    if ds.labels is None:
        raise DataError(f"{args.data} has no label column")
    weights = None
    if args.weights == "balanced":
        weights = core.example_weights(ds, core.balancing_weights(core.prior_from_labels(ds)))
    elif args.weights == "file":
        if args.weights_file:
            weights = np.loadtxt(args.weights_file, delimiter=",", skiprows=1, ndmin=1)
        elif ds.weights is None:
            raise DataError("--weights file needs a 'weight' column or --weights-file")
    cfg = mlp.TrainConfig(hidden_sizes=args.hidden, learning_rate=args.lr,
                          weight_decay=args.weight_decay, max_iters=args.max_iters,
                          loss_tol=args.tol, restarts=args.restarts, seed=args.seed,
                          convention=args.convention, precision=args.precision)
    model = mlp.train(ds, cfg, weights=weights)
    mlp.save_model(model, args.out)
    prior = priors.weighted_prior(ds, weights)
    logging.info("final loss %.6g, effective training prior %s",
                 model.info["final_loss"], np.array2string(prior, precision=6))


def cmd_predict(args) -> None:
    model = mlp.load_model(args.model)
    ds = core.load_dataset(args.data, core.Schema(class_count=model.class_count))
    core.save_predictions(args.out, mlp.predict(model, ds), ds.labels)


def cmd_deweight(args) -> None:
    probs, labels = core.load_predictions(args.predictions)
    out = priors.deweight(probs, _prior(args.old_prior, probs.shape[1]),
                          _prior(args.new_prior, probs.shape[1]))
    core.save_predictions(args.out, out, labels)


def cmd_pcp(args) -> None:
    probs, _ = core.load_predictions(args.predictions)
    model_prior = _prior(args.model_prior, probs.shape[1])
    if args.init == "uniform":
        init = None
    elif args.init == "model":
        init = model_prior
    else:
        init = _prior(args.init, probs.shape[1])
    res = priors.pcp_solve(probs, model_prior, init=init, tol=args.tol,
                           max_iter=args.max_iter, newton=args.newton)
    active = model_prior > 0
    hess = priors.pcp_hessian(probs[:, active], model_prior[active], res.prior[active])
    _write_json(args.out, {
        "prior": res.prior.tolist(),
        "iterations": res.iterations,
        "converged": res.converged,
        "final_deviation": res.deviation,
        "newton_steps": res.newton_steps,
        "nll_trace": res.nll_trace,
        "hessian_eigenvalues": np.linalg.eigvalsh(hess).tolist(),
    })


def cmd_classify(args) -> None:
    probs, _ = core.load_predictions(args.predictions)
    if args.rule == "bayes":
        labels = bayes_classify(probs)
    else:
        labels = stochastic_classify(probs, args.seed)
    core.save_labels(args.out, labels)


def cmd_metrics(args) -> None:
    probs, pred_labels = core.load_predictions(args.predictions)
    assigned = core.load_labels(args.assigned)
    truth = core.load_labels(args.truth) if args.truth else pred_labels
    if truth is None:
        raise DataError("no true labels: pass --truth or a predictions file with a label column")
    report = metrics.overshoot(probs, assigned, truth, variance_form=args.variance_form)
    payload = report.to_dict()
    if args.true_probs:
        true_probs, _ = core.load_predictions(args.true_probs, probs.shape[1])
        payload["kl"] = metrics.mean_kl_by_class(true_probs, probs, truth).to_dict()
    _write_json(args.out, payload)


def cmd_sweep(args) -> None:
    cfg = harness.SweepConfig.from_json(args.config)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    result = harness.run_sweep(cfg)
    for skip in result.skipped:
        logging.warning("skipped %s", skip)
    tables = harness.summarize(result)
    for path in harness.emit_report(tables, args.out, formats, result=result):
        logging.info("wrote %s", path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trainbias", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample the three-class Gaussian simulation")
    s.add_argument("--kind", choices=("representative", "biased"), default="representative")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    d = mlp.TrainConfig()
    s = sub.add_parser("train", help="train the MLP classifier")
    s.add_argument("--data", required=True)
    s.add_argument("--class-count", type=int)
    s.add_argument("--hidden", type=_ints, default=d.hidden_sizes, help="e.g. 32 or 128,32")
    s.add_argument("--convention", choices=mlp.CONVENTIONS, default=d.convention)
    s.add_argument("--lr", type=float, default=d.learning_rate)
    s.add_argument("--weight-decay", type=float, default=d.weight_decay)
    s.add_argument("--max-iters", type=int, default=d.max_iters)
    s.add_argument("--tol", type=float, default=d.loss_tol)
    s.add_argument("--restarts", type=int, default=d.restarts)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--precision", choices=("float64", "float32"), default=d.precision)
    s.add_argument("--weights", choices=("none", "balanced", "file"), default="none",
                   help="'file' reads a 'weight' column from --data or --weights-file")
    s.add_argument("--weights-file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="write class probabilities for a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("deweight", help="replace the prior baked into predictions")
    s.add_argument("--predictions", required=True)
    s.add_argument("--old-prior", required=True)
    s.add_argument("--new-prior", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_deweight)

    s = sub.add_parser("pcp", help="solve for the prediction-consistent prior")
    s.add_argument("--predictions", required=True)
    s.add_argument("--model-prior", required=True,
                   help="prior the model was trained with (list or 'uniform'); "
                   "always stated explicitly")
    s.add_argument("--init", default="uniform", help="uniform, model, or a prior list")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=10_000)
    s.add_argument("--newton", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_pcp)

    s = sub.add_parser("classify", help="assign labels from probabilities")
    s.add_argument("--predictions", required=True)
    s.add_argument("--rule", choices=("bayes", "stochastic"), default="bayes")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("metrics", help="predicted vs observed metrics, overshoot and KL")
    s.add_argument("--predictions", required=True)
    s.add_argument("--assigned", required=True)
    s.add_argument("--truth")
    s.add_argument("--true-probs")
    s.add_argument("--variance-form", choices=("derived", "printed"), default="derived")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("sweep", help="run a training-set-size sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int)
    s.add_argument("--formats", default="csv,json,svg")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (DataError, ValueError, FileNotFoundError, harness.SweepError) as exc:
        print(f"trainbias {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
