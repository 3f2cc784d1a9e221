"""Command line front end.

Subcommands:

    simulate       generate a stream and dump it as per-batch CSV files
    fit-offline    federated offline fit, write a model snapshot
    fit-online     one-pass online fit, write the server state snapshot
    fit-online-dp  private online fit, write snapshot plus noise manifest
    evaluate       score a saved snapshot on a labeled CSV
    benchmark      replicate a design and compare methods

Configuration comes from a JSON file of flat dotted keys (for example
{"design.p": 50, "hyper.lambda": 0.01}) plus command line overrides; every
run writes a manifest with the config hash so it can be reproduced.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .core import Hyper, ModelState
from .datagen import SimDesign, dump_stream_csv, gen_stream
from .harness import (ExperimentReport, concat_stream, config_hash,
                      csv_experiment, evaluate, fit_pooled_retrained,
                      load_csv, run_experiment, save_report)
from .offline import FederatedDataset, fit_offline
from .online import run_stream, state_to_json
from .privacy import DpConfig, run_stream_private

# Known flat config keys with coercers and defaults.  None coercion means
# "leave as parsed from JSON" (used for values that may be scalar or list).
_KEYS = {
    "design.m_clients": (int, 10),
    "design.n_batches": (int, 100),
    "design.n_per_client": (int, 10),
    "design.p": (int, 50),
    "design.mu": (None, 0.2),
    "design.sigma": (None, 1.0),
    "design.ratio": (str, "1:1"),
    "hyper.lambda": (float, 0.01),
    "hyper.q": (float, 1.0),
    "hyper.eps_smooth": (float, 0.01),
    "hyper.max_iter": (int, 500),
    "hyper.tol": (float, 1e-8),
    "dp.mechanism": (str, "gaussian"),
    "dp.epsilon": (float, None),
    "dp.delta": (float, None),
    "dp.rho": (None, "auto"),
    "dp.c1": (float, None),
    "dp.c2": (float, None),
    "dp.c_prev": (float, 1.0),
    "data.path": (str, None),
    "data.label_column": (str, "y"),
    "data.positive_tag": (str, "1"),
    "data.negative_tag": (str, "-1"),
    "data.split_ratio": (str, "4:1"),
    "online.warm_start": (bool, True),
    "methods": (None, ["OnWP", "OffWP"]),
    "replicates": (int, 1),
    "seed": (int, 0),
    "out": (str, "runs"),
    "test_size": (int, 2000),
}


def parse_config(path=None, overrides=None):
    """Merge defaults, a JSON config file, and override pairs.

    Raises ValueError naming the field for unknown keys or values that do
    not coerce to the declared type.
    """
    cfg = {key: default for key, (_, default) in _KEYS.items()}
    layers = []
    if path is not None:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        layers.append(doc)
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for key, value in layer.items():
            if key not in _KEYS:
                raise ValueError(
                    f"unknown config key {key!r}; known keys: "
                    + ", ".join(sorted(_KEYS))
                )
            coerce, _ = _KEYS[key]
            if value is not None and coerce is not None:
                try:
                    value = coerce(value)
                except (TypeError, ValueError):
                    raise ValueError(
                        f"config key {key!r}: cannot interpret {value!r} "
                        f"as {coerce.__name__}"
                    ) from None
            cfg[key] = value
    return cfg


def build_design(cfg):
    return SimDesign(
        m_clients=cfg["design.m_clients"],
        n_batches=cfg["design.n_batches"],
        p=cfg["design.p"],
        n_per_client=cfg["design.n_per_client"],
        mu=cfg["design.mu"],
        sigma=cfg["design.sigma"],
        ratio=cfg["design.ratio"],
        seed=cfg["seed"],
    )


def build_hyper(cfg):
    return Hyper(
        lam=cfg["hyper.lambda"],
        q=cfg["hyper.q"],
        eps_smooth=cfg["hyper.eps_smooth"],
        max_iter=cfg["hyper.max_iter"],
        tol=cfg["hyper.tol"],
    )


def build_dp(cfg, required=False):
    if cfg["dp.epsilon"] is None:
        if required:
            raise ValueError(
                "dp.epsilon is required for private fits "
                "(set it in the config or pass --epsilon)"
            )
        return None
    return DpConfig(
        mechanism=cfg["dp.mechanism"],
        epsilon=cfg["dp.epsilon"],
        delta=cfg["dp.delta"],
        rho=cfg["dp.rho"],
        c1=cfg["dp.c1"],
        c2=cfg["dp.c2"],
        c_prev=cfg["dp.c_prev"],
    )


def _write_json(path, doc):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return path


def _write_manifest(cfg, out_dir, extra=None):
    doc = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "version": __version__,
        "backend": BACKEND,
    }
    if extra:
        doc.update(extra)
    return _write_json(
        os.path.join(out_dir, f"manifest_{doc['config_hash']}.json"), doc
    )


def _load_batch_dir(path, cfg):
    """Read dumped batch CSVs back as a single-client stream."""
    names = sorted(n for n in os.listdir(path)
                   if n.startswith("batch_") and n.endswith(".csv"))
    if not names:
        raise ValueError(f"{path}: no batch_*.csv files found")
    batches = []
    for name in names:
        shard, _ = load_csv(os.path.join(path, name),
                            cfg["data.label_column"],
                            cfg["data.positive_tag"],
                            cfg["data.negative_tag"])
        batches.append(FederatedDataset([shard]))
    return batches


def _stream_for_fit(args, cfg):
    if getattr(args, "batches", None):
        return _load_batch_dir(args.batches, cfg), None
    design = build_design(cfg)
    batches, test = gen_stream(design)
    return batches, test


def _cmd_simulate(args, cfg):
    design = build_design(cfg)
    batches, test = gen_stream(design, test_size=cfg["test_size"])
    out = args.out or cfg["out"]
    paths = dump_stream_csv(batches, out, test=test)
    _write_manifest(cfg, out)
    print(f"wrote {len(paths)} batch files and test.csv to {out}")
    return 0


def _cmd_fit_offline(args, cfg):
    hyper = build_hyper(cfg)
    batches, _ = _stream_for_fit(args, cfg)
    data = concat_stream(batches)
    report = fit_offline(data, hyper)
    out = args.out or cfg["out"]
    snap = {
        "theta": report.theta.tolist(),
        "iterations": report.iterations,
        "final_step_norm": report.final_step_norm,
        "final_loss": report.loss_trace[-1],
    }
    path = _write_json(os.path.join(out, "model_offline.json"), snap)
    _write_manifest(cfg, out)
    print(f"offline fit: {report.iterations} iterations, "
          f"final step norm {report.final_step_norm:.3g}; "
          f"snapshot {path}")
    return 0


def _cmd_fit_online(args, cfg):
    hyper = build_hyper(cfg)
    batches, _ = _stream_for_fit(args, cfg)
    state, _ = run_stream(batches, hyper,
                          warm_start=cfg["online.warm_start"])
    out = args.out or cfg["out"]
    path = os.path.join(out, "state_online.json")
    os.makedirs(out, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(state_to_json(state))
    _write_manifest(cfg, out)
    print(f"online fit: {state.batch_index} batches, "
          f"{state.n_acc} points; snapshot {path}")
    return 0


def _cmd_fit_online_dp(args, cfg):
    hyper = build_hyper(cfg)
    dp = build_dp(cfg, required=True)
    batches, _ = _stream_for_fit(args, cfg)
    if dp.c1 is None or dp.c2 is None:
        from .harness import resolve_dp_caps
        dp = resolve_dp_caps(dp, batches[0].pooled().clients[0])
    from .harness import _clip_stream
    clipped = _clip_stream(batches, dp.c1, dp.c2)
    state, _, _, noise_manifest = run_stream_private(
        clipped, hyper, dp, cfg["seed"]
    )
    out = args.out or cfg["out"]
    path = os.path.join(out, "state_online_dp.json")
    os.makedirs(out, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(state_to_json(state))
    _write_manifest(cfg, out, extra={"dp": noise_manifest})
    print(f"private online fit: {state.batch_index} batches, "
          f"mechanism {dp.mechanism}, epsilon {dp.epsilon}; snapshot {path}")
    return 0


def _cmd_evaluate(args, cfg):
    with open(args.model) as fh:
        snap = json.load(fh)
    theta = ModelState(np.asarray(snap["theta"]))
    data_path = args.data or cfg["data.path"]
    if data_path is None:
        raise ValueError("evaluate needs --data or data.path in the config")
    shard, _ = load_csv(data_path, cfg["data.label_column"],
                        cfg["data.positive_tag"], cfg["data.negative_tag"])
    metrics = evaluate(theta, shard)
    doc = {k: getattr(metrics, k) for k in
           ("accuracy", "precision", "recall", "f1", "specificity",
            "n_test")}
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_benchmark(args, cfg):
    design = build_design(cfg)
    hyper = build_hyper(cfg)
    methods = cfg["methods"]
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    dp = build_dp(cfg, required="OnWDP" in methods)
    report = run_experiment(design, hyper, methods=tuple(methods),
                            replicates=cfg["replicates"], seed=cfg["seed"],
                            dp=dp, test_size=cfg["test_size"])
    out = args.out or cfg["out"]
    paths = save_report(report, out)
    print(f"{'method':<10} {'accuracy':>9} {'sd':>7} {'fit_s':>8}")
    for method in methods:
        agg = report.aggregates[method]
        print(f"{method:<10} {agg['accuracy']['mean']:>9.4f} "
              f"{agg['accuracy']['sd']:>7.4f} "
              f"{agg['wall_time_s']['mean']:>8.4f}")
    if args.retrained_baseline:
        batches, _ = gen_stream(design)
        _, t_retrain = fit_pooled_retrained(batches, hyper)
        print(f"{'OffPooled*':<10} {'':>9} {'':>7} {t_retrain:>8.4f}  "
              f"(pooled refit after every batch)")
    print(f"report: {paths['report']}")
    return 0


def _add_common(sub):
    sub.add_argument("--config", help="JSON config of flat dotted keys")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--replicates", type=int)
    sub.add_argument("--epsilon", type=float)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--mechanism", choices=["laplace", "gaussian"])
    sub.add_argument("--lambda", dest="lam", type=float)
    sub.add_argument("--q", type=float)


def _overrides(args):
    pairs = {
        "seed": args.seed,
        "out": args.out,
        "replicates": args.replicates,
        "dp.epsilon": args.epsilon,
        "dp.delta": args.delta,
        "dp.mechanism": args.mechanism,
        "hyper.lambda": args.lam,
        "hyper.q": args.q,
    }
    return {k: v for k, v in pairs.items() if v is not None}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fedwd",
        description="Federated distance weighted discrimination benchmarks",
    )
    parser.add_argument("--version", action="version",
                        version=f"fedwd {__version__} ({BACKEND} backend)")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("simulate", _cmd_simulate),
                     ("fit-offline", _cmd_fit_offline),
                     ("fit-online", _cmd_fit_online),
                     ("fit-online-dp", _cmd_fit_online_dp),
                     ("evaluate", _cmd_evaluate),
                     ("benchmark", _cmd_benchmark)):
        sub = subs.add_parser(name)
        _add_common(sub)
        sub.set_defaults(fn=fn)
        if name.startswith("fit-"):
            sub.add_argument("--batches",
                             help="directory of dumped batch_*.csv files")
        if name == "evaluate":
            sub.add_argument("--model", required=True,
                             help="snapshot JSON with a theta entry")
            sub.add_argument("--data", help="labeled CSV to score")
        if name == "benchmark":
            sub.add_argument("--methods",
                             help="comma separated subset of "
                                  "OffPooled,OffWP,OnWP,OnWDP")
            sub.add_argument("--retrained-baseline", action="store_true",
                             help="also time the pooled refit per batch")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = _overrides(args)
        if getattr(args, "methods", None):
            overrides["methods"] = args.methods
        cfg = parse_config(args.config, overrides)
        return args.fn(args, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
