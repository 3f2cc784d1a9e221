"""Evaluation metrics, experiment orchestration, and CSV ingestion.

run_experiment drives the four estimators over replicated synthetic
streams and aggregates held-out metrics; csv_experiment does the same for
a single CSV file with a seeded train/test split.  Wall times wrap the fit
calls only, never data generation or evaluation.
"""

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import ClientData, Hyper, predict_batch
from .datagen import (SimDesign, gen_calibration_batch, gen_stream,
                      parse_ratio)
from .offline import FederatedDataset, fit_offline
from .online import run_stream
from .privacy import DpConfig, clip_features, run_stream_private

__all__ = [
    "METHODS",
    "Metrics",
    "LoadReport",
    "ExperimentReport",
    "evaluate",
    "load_csv",
    "split_train_test",
    "standardize",
    "concat_stream",
    "shard_rows",
    "resolve_dp_caps",
    "run_experiment",
    "csv_experiment",
    "fit_pooled_retrained",
    "sampling_distribution_check",
    "save_report",
    "config_hash",
]

# Method names accepted by run configs.  OffPooled is the offline solver on
# pooled data, OffWP the offline federated fit, OnWP the online federated
# estimator, OnWDP its differentially private variant.
METHODS = ("OffPooled", "OffWP", "OnWP", "OnWDP")

ZERO_DENOMINATOR_CONVENTION = (
    "precision, recall, and specificity are 1.0 when their denominator is "
    "0 (the condition is vacuously satisfied); f1 is 0.0 when precision "
    "and recall are both 0"
)


@dataclass(frozen=True)
class Metrics:
    """Held-out confusion metrics plus the fit wall time in seconds."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    wall_time_s: float
    n_test: int


def _rate(num, den):
    return num / den if den > 0 else 1.0


def evaluate(theta, test, wall_time_s=0.0):
    """Confusion metrics of sign predictions on a labeled test set.

    test may be a ClientData or an iterable of LabeledPoint; +1 is the
    positive class and a margin of exactly 0 predicts +1.
    """
    from .core import as_client_data

    test = as_client_data(test)
    if len(test) == 0:
        raise ValueError("test set is empty")
    preds = predict_batch(theta, test.x)
    actual_pos = test.y > 0
    pred_pos = preds > 0
    tp = int(np.sum(actual_pos & pred_pos))
    fp = int(np.sum(~actual_pos & pred_pos))
    fn = int(np.sum(actual_pos & ~pred_pos))
    tn = int(np.sum(~actual_pos & ~pred_pos))
    precision = _rate(tp, tp + fp)
    recall = _rate(tp, tp + fn)
    f1 = 2.0 * precision * recall / (precision + recall) \
        if precision + recall > 0 else 0.0
    return Metrics(
        accuracy=(tp + tn) / len(test),
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=_rate(tn, tn + fp),
        wall_time_s=wall_time_s,
        n_test=len(test),
    )


@dataclass(frozen=True)
class LoadReport:
    """What load_csv kept and dropped."""

    n_rows: int
    n_used: int
    n_dropped: int
    feature_names: tuple
    label_column: str


def load_csv(path, label_column="y", positive_tag="1", negative_tag="-1"):
    """Parse a labeled CSV into a ClientData shard.

    The label column is matched by name; rows whose label is neither tag
    are dropped and counted.  All other columns are features and must be
    numeric.  Parse problems are reported with 1-based line numbers
    (header is line 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(
                f"{path}: label column {label_column!r} not found in "
                f"header {header}"
            )
        label_idx = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header)
                              if i != label_idx)
        xs, ys = [], []
        n_rows = 0
        n_dropped = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            n_rows += 1
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {line_no} has {len(row)} fields, "
                    f"expected {len(header)}"
                )
            tag = row[label_idx].strip()
            if tag == positive_tag:
                y = 1.0
            elif tag == negative_tag:
                y = -1.0
            else:
                n_dropped += 1
                continue
            feats = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: line {line_no}: non-numeric value "
                        f"{cell!r} in column {header[i]!r}"
                    ) from None
            xs.append(feats)
            ys.append(y)
    if not xs:
        raise ValueError(
            f"{path}: no usable rows (parsed {n_rows}, dropped {n_dropped})"
        )
    data = ClientData(np.asarray(xs), np.asarray(ys))
    report = LoadReport(n_rows=n_rows, n_used=len(xs), n_dropped=n_dropped,
                        feature_names=feature_names,
                        label_column=label_column)
    return data, report


def split_train_test(data, ratio="4:1", seed=0):
    """Seeded shuffle then split; sizes match the ratio to within one row."""
    pos, neg = parse_ratio(ratio)
    n = len(data)
    if n < 2:
        raise ValueError(f"need at least 2 rows to split, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 4)))
    order = rng.permutation(n)
    n_train = int(math.floor(n * pos / (pos + neg) + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    tr, te = order[:n_train], order[n_train:]
    return (ClientData(data.x[tr], data.y[tr]),
            ClientData(data.x[te], data.y[te]))


def standardize(train, *others):
    """Center and scale features using training statistics only.

    Constant columns get scale 1 so they pass through unchanged.  Returns
    the standardized shards (train first) followed by (mean, scale).
    """
    mean = train.x.mean(axis=0)
    scale = train.x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    out = [ClientData((d.x - mean) / scale, d.y) for d in (train, *others)]
    return (*out, mean, scale)


def concat_stream(batches):
    """Concatenate a stream batch-wise into one offline FederatedDataset."""
    if not batches:
        raise ValueError("empty stream")
    m = batches[0].m_clients
    clients = []
    for j in range(m):
        x = np.concatenate([b.clients[j].x for b in batches])
        y = np.concatenate([b.clients[j].y for b in batches])
        clients.append(ClientData(x, y))
    return FederatedDataset(clients)


def shard_rows(data, m_clients, n_batches):
    """Cut a row block into a stream of federated batches, in row order."""
    n = len(data)
    if n < m_clients * n_batches:
        raise ValueError(
            f"{n} rows cannot fill {n_batches} batches x {m_clients} clients"
        )
    batch_chunks = np.array_split(np.arange(n), n_batches)
    stream = []
    for chunk in batch_chunks:
        client_chunks = np.array_split(chunk, m_clients)
        shards = [ClientData(data.x[c], data.y[c]) for c in client_chunks]
        stream.append(FederatedDataset(shards))
    return stream


def _clip_stream(batches, c1, c2):
    out = []
    for batch in batches:
        shards = [ClientData(clip_features(c.x, c1, c2), c.y)
                  for c in batch.clients]
        out.append(FederatedDataset(shards))
    return out


def resolve_dp_caps(dp, calibration):
    """Fill unset norm caps from a held-out calibration shard.

    The default cap is 1 + the largest observed feature norm, so the
    augmented vector of a typical point fits without clipping.
    """
    if dp.c1 is not None and dp.c2 is not None:
        return dp
    x = calibration.x
    c1 = dp.c1 if dp.c1 is not None else 1.0 + float(np.abs(x).sum(axis=1).max())
    c2 = dp.c2 if dp.c2 is not None else 1.0 + float(
        np.sqrt((x * x).sum(axis=1)).max())
    return replace(dp, c1=c1, c2=c2)


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregated replicate metrics for one configuration."""

    config: dict
    replicate_metrics: list
    aggregates: dict
    conventions: str = ZERO_DENOMINATOR_CONVENTION

    def to_dict(self):
        return asdict(self)


def _replicate_seed(seed, r):
    return int(np.random.SeedSequence((seed, 5, r)).generate_state(
        1, np.uint64)[0])


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _fit_methods(batches, test, hyper, methods, dp, seed):
    """Fit each requested method on one replicate's stream.

    Returns {method: (theta, wall_time_s, test_for_method)}.
    """
    out = {}
    need_offline = [m for m in methods if m in ("OffPooled", "OffWP")]
    if need_offline:
        offline_data = concat_stream(batches)
        if "OffWP" in methods:
            report, dt = _timed(fit_offline, offline_data, hyper)
            out["OffWP"] = (report.theta, dt, test)
        if "OffPooled" in methods:
            pooled = offline_data.pooled()
            report, dt = _timed(fit_offline, pooled, hyper)
            out["OffPooled"] = (report.theta, dt, test)
    if "OnWP" in methods:
        (state, _), dt = _timed(run_stream, batches, hyper, warm_start=True)
        out["OnWP"] = (state.theta, dt, test)
    if "OnWDP" in methods:
        if dp is None:
            raise ValueError("OnWDP requested but no dp config given")
        if dp.c1 is None or dp.c2 is None:
            raise ValueError("dp caps must be resolved before fitting")
        clipped = _clip_stream(batches, dp.c1, dp.c2)
        clipped_test = ClientData(clip_features(test.x, dp.c1, dp.c2),
                                  test.y) if test is not None else None
        (state, _, _, _), dt = _timed(run_stream_private, clipped, hyper,
                                      dp, seed)
        out["OnWDP"] = (state.theta, dt, clipped_test)
    return out


def _aggregate(rows, methods):
    metric_names = ("accuracy", "precision", "recall", "f1", "specificity",
                    "wall_time_s")
    agg = {}
    for method in methods:
        vals = {name: [r[name] for r in rows if r["method"] == method]
                for name in metric_names}
        agg[method] = {
            name: {
                "mean": float(np.mean(v)),
                "sd": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0,
            }
            for name, v in vals.items()
        }
    return agg


def run_experiment(design, hyper, methods=("OnWP", "OffWP"), replicates=1,
                   seed=None, dp=None, test_size=2000):
    """Replicate a design, fit the requested methods, aggregate metrics.

    Each replicate regenerates the stream from a seed derived from
    (seed, replicate), fits every method on the same data, and scores on
    the replicate's held-out balanced test set.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}, expected one of "
                             f"{METHODS}")
    if seed is None:
        seed = design.seed
    if dp is not None and "OnWDP" in methods:
        calib = gen_calibration_batch(design).pooled().clients[0]
        dp = resolve_dp_caps(dp, calib)
    rows = []
    for r in range(replicates):
        rep_seed = _replicate_seed(seed, r)
        rep_design = replace(design, seed=rep_seed)
        batches, test = gen_stream(rep_design, test_size=test_size)
        fits = _fit_methods(batches, test, hyper, methods, dp, rep_seed)
        for method in methods:
            theta, dt, test_m = fits[method]
            metrics = evaluate(theta, test_m, wall_time_s=dt)
            row = {"replicate": r, "method": method}
            row.update(asdict(metrics))
            rows.append(row)
    config = {
        "design": asdict(design),
        "hyper": asdict(hyper),
        "dp": asdict(dp) if dp is not None else None,
        "methods": list(methods),
        "replicates": replicates,
        "seed": seed,
        "test_size": test_size,
    }
    return ExperimentReport(config=config, replicate_metrics=rows,
                            aggregates=_aggregate(rows, methods))


def csv_experiment(path, hyper, methods=("OnWP", "OffWP"),
                   label_column="y", positive_tag="1", negative_tag="-1",
                   split_ratio="4:1", seed=0, dp=None, m_clients=1,
                   n_batches=10, scale_features=True):
    """Fit and score the requested methods on one labeled CSV file.

    The file is split with a seeded shuffle, standardized with training
    statistics, cut into a stream in row order, and every method is fit on
    the same stream.  Returns an ExperimentReport with a single replicate.
    """
    data, load_report = load_csv(path, label_column, positive_tag,
                                 negative_tag)
    train, test = split_train_test(data, split_ratio, seed)
    if scale_features:
        train, test, _, _ = standardize(train, test)
    batches = shard_rows(train, m_clients, n_batches)
    if dp is not None and "OnWDP" in methods:
        calib = batches[0].pooled().clients[0]
        dp = resolve_dp_caps(dp, calib)
    fits = _fit_methods(batches, test, hyper, methods, dp, seed)
    rows = []
    for method in methods:
        theta, dt, test_m = fits[method]
        metrics = evaluate(theta, test_m, wall_time_s=dt)
        row = {"replicate": 0, "method": method}
        row.update(asdict(metrics))
        rows.append(row)
    config = {
        "data": {
            "path": os.path.abspath(path),
            "label_column": label_column,
            "positive_tag": positive_tag,
            "negative_tag": negative_tag,
            "split_ratio": str(split_ratio),
            "n_rows": load_report.n_rows,
            "n_dropped": load_report.n_dropped,
            "standardized": scale_features,
        },
        "hyper": asdict(hyper),
        "dp": asdict(dp) if dp is not None else None,
        "methods": list(methods),
        "m_clients": m_clients,
        "n_batches": n_batches,
        "replicates": 1,
        "seed": seed,
    }
    return ExperimentReport(config=config, replicate_metrics=rows,
                            aggregates=_aggregate(rows, methods))


def fit_pooled_retrained(batches, hyper):
    """Refit the pooled offline solver after every batch arrival.

    Models the non-renewable baseline that keeps all raw data: at batch b
    it fits on the union of batches 1..b.  Refits are warm started from
    the previous solution, which only makes this baseline faster; timing
    covers the fit calls alone.
    """
    xs, ys = [], []
    theta = None
    total = 0.0
    for batch in batches:
        pooled = batch.pooled().clients[0]
        xs.append(pooled.x)
        ys.append(pooled.y)
        data = FederatedDataset(
            [ClientData(np.concatenate(xs), np.concatenate(ys))]
        )
        report, dt = _timed(fit_offline, data, hyper, theta0=theta)
        theta = report.theta
        total += dt
    return theta, total


def sampling_distribution_check(design, hyper, replicates=200, factor=4,
                                coords=4, window=(1.6, 2.5)):
    """Check the 1/sqrt(N) spread contraction of the online estimator.

    Runs the online fit over factor * n_batches batches per replicate,
    snapshotting the estimate at n_batches.  For each of the first
    `coords` coordinates, reports the ratio of the across-replicate SDs at
    the two stream lengths (expected sqrt(factor)) and a skewness/kurtosis
    normality statistic at the long length.
    """
    coords = min(coords, design.p + 1)
    short_b = design.n_batches
    thin = []
    full = []
    for r in range(replicates):
        rep_seed = _replicate_seed(design.seed, r)
        rep_design = replace(design, seed=rep_seed,
                             n_batches=short_b * factor)
        batches, _ = gen_stream(rep_design, with_test=False)
        _, trace = run_stream(batches, hyper, warm_start=True)
        thin.append(trace[short_b - 1])
        full.append(trace[-1])
    thin = np.asarray(thin)
    full = np.asarray(full)
    sd_short = thin.std(axis=0, ddof=1)
    sd_long = full.std(axis=0, ddof=1)
    ratios = sd_short[:coords] / sd_long[:coords]
    in_window = [bool(window[0] <= r <= window[1]) for r in ratios]
    # Jarque-Bera style statistic; under normality roughly chi squared
    # with 2 degrees of freedom.
    z = (full[:, :coords] - full[:, :coords].mean(axis=0)) / sd_long[:coords]
    g1 = (z ** 3).mean(axis=0)
    g2 = (z ** 4).mean(axis=0) - 3.0
    jb = replicates * (g1 ** 2 / 6.0 + g2 ** 2 / 24.0)
    return {
        "replicates": replicates,
        "factor": factor,
        "sd_short": sd_short[:coords].tolist(),
        "sd_long": sd_long[:coords].tolist(),
        "ratios": ratios.tolist(),
        "in_window": in_window,
        "n_in_window": int(sum(in_window)),
        "jarque_bera": jb.tolist(),
        "normality_ok": bool(np.all(jb < 13.82)),
    }


def config_hash(config):
    """Short stable hash of a JSON-serializable configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def save_report(report, out_dir):
    """Write report JSON, per-replicate metrics CSV, and the manifest.

    File names embed the config hash; returns {kind: path}.
    """
    os.makedirs(out_dir, exist_ok=True)
    h = config_hash(report.config)
    paths = {
        "report": os.path.join(out_dir, f"report_{h}.json"),
        "metrics": os.path.join(out_dir, f"metrics_{h}.csv"),
        "manifest": os.path.join(out_dir, f"manifest_{h}.json"),
    }
    with open(paths["report"], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    rows = report.replicate_metrics
    with open(paths["metrics"], "w", newline="") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    from . import __version__
    manifest = {
        "config_hash": h,
        "config": report.config,
        "version": __version__,
        "backend": _backend_name(),
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2)
    return paths


def _backend_name():
    from ._kernels import BACKEND
    return BACKEND
