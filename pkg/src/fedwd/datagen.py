"""Synthetic two-class streams for the simulation harness.

Positives are drawn from N(mu * 1, sigma^2 I) and negatives from its
mirror N(-mu * 1, sigma^2 I), so the optimal rule is a hyperplane through
the origin with accuracy Phi(mu * sqrt(p) / sigma).  Designs can be
homogeneous (one (mu, sigma) everywhere) or heterogeneous, where each
client draws its own (mu_m, sigma_m) once from uniform ranges and keeps
them for the whole stream.

Every shard is generated from a seed derived from (master seed, namespace,
batch index, client index), so streams replay bit for bit and extending a
stream never changes the batches already generated.
"""

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import ClientData
from .offline import FederatedDataset

__all__ = [
    "SimDesign",
    "parse_ratio",
    "client_params",
    "gen_batch",
    "gen_stream",
    "gen_test_set",
    "gen_calibration_batch",
    "bayes_accuracy",
    "dump_stream_csv",
]

# Seed namespaces keep the stream, the test set, the per-client parameter
# draws, and the calibration batch on disjoint generator paths.
_NS_STREAM = 0
_NS_TEST = 1
_NS_PARAMS = 2
_NS_CALIB = 3


def parse_ratio(ratio):
    """Accept (pos, neg) or a 'pos:neg' string; both must be positive."""
    if isinstance(ratio, str):
        parts = ratio.split(":")
        if len(parts) != 2:
            raise ValueError(f"ratio must look like '4:1', got {ratio!r}")
        ratio = (float(parts[0]), float(parts[1]))
    pos, neg = ratio
    if pos <= 0 or neg <= 0:
        raise ValueError(f"ratio parts must be positive, got {ratio}")
    return float(pos), float(neg)


def _as_range(value, name):
    if np.isscalar(value):
        v = float(value)
        return v, v
    lo, hi = (float(value[0]), float(value[1]))
    if hi < lo:
        raise ValueError(f"{name} range must have lo <= hi, got {value}")
    return lo, hi


@dataclass(frozen=True)
class SimDesign:
    """Stream layout and class geometry for one simulation.

    mu and sigma may be scalars or (lo, hi) ranges; a range makes the
    design heterogeneous across clients.  ratio is the positive:negative
    mix per shard, e.g. (1, 1) or "4:1".
    """

    m_clients: int
    n_batches: int
    p: int
    n_per_client: int = 10
    mu: object = 0.2
    sigma: object = 1.0
    ratio: object = (1, 1)
    seed: int = 0

    def __post_init__(self):
        if self.m_clients < 1:
            raise ValueError(f"m_clients must be >= 1, got {self.m_clients}")
        if self.n_batches < 1:
            raise ValueError(f"n_batches must be >= 1, got {self.n_batches}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.n_per_client < 1:
            raise ValueError(
                f"n_per_client must be >= 1, got {self.n_per_client}"
            )
        parse_ratio(self.ratio)
        mu_lo, _ = _as_range(self.mu, "mu")
        if mu_lo < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        sig_lo, _ = _as_range(self.sigma, "sigma")
        if sig_lo <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def heterogeneous(self):
        mu_lo, mu_hi = _as_range(self.mu, "mu")
        sig_lo, sig_hi = _as_range(self.sigma, "sigma")
        return mu_lo != mu_hi or sig_lo != sig_hi


def _rng(design, namespace, batch_index=0, client=0):
    key = (design.seed, namespace, batch_index, client)
    return np.random.default_rng(np.random.SeedSequence(key))


def client_params(design):
    """Per-client (mu_m, sigma_m), drawn once and reused across batches."""
    mu_lo, mu_hi = _as_range(design.mu, "mu")
    sig_lo, sig_hi = _as_range(design.sigma, "sigma")
    params = []
    for m in range(design.m_clients):
        if design.heterogeneous:
            rng = _rng(design, _NS_PARAMS, client=m)
            mu_m = rng.uniform(mu_lo, mu_hi)
            sigma_m = rng.uniform(sig_lo, sig_hi)
        else:
            mu_m, sigma_m = mu_lo, sig_lo
        params.append((float(mu_m), float(sigma_m)))
    return params


def _shard_counts(n, ratio):
    pos, neg = parse_ratio(ratio)
    n_pos = int(math.floor(n * pos / (pos + neg) + 0.5))
    return n_pos, n - n_pos


def _sample_shard(rng, n_pos, n_neg, mu, sigma, p):
    x_pos = rng.normal(loc=mu, scale=sigma, size=(n_pos, p))
    x_neg = rng.normal(loc=-mu, scale=sigma, size=(n_neg, p))
    x = np.concatenate([x_pos, x_neg])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    return ClientData(x, y)


def gen_batch(design, batch_index, params=None, namespace=_NS_STREAM):
    """Generate the shards all clients contribute at one batch index."""
    if params is None:
        params = client_params(design)
    n_pos, n_neg = _shard_counts(design.n_per_client, design.ratio)
    shards = []
    for m in range(design.m_clients):
        rng = _rng(design, namespace, batch_index, m)
        mu_m, sigma_m = params[m]
        shards.append(_sample_shard(rng, n_pos, n_neg, mu_m, sigma_m,
                                    design.p))
    return FederatedDataset(shards)


def gen_stream(design, with_test=True, test_size=2000):
    """Generate the full stream and a balanced held-out test set.

    Returns (batches, test) where batches is a list of FederatedDataset
    and test a ClientData of test_size points (None if with_test=False).
    """
    params = client_params(design)
    batches = [gen_batch(design, b, params) for b in range(design.n_batches)]
    test = gen_test_set(design, params, test_size) if with_test else None
    return batches, test


def gen_test_set(design, params=None, size=2000):
    """Balanced test draw from the same mixture as the stream.

    In heterogeneous designs each test point first picks a client uniformly
    and then samples from that client's component.
    """
    if size < 2:
        raise ValueError(f"test size must be >= 2, got {size}")
    if params is None:
        params = client_params(design)
    rng = _rng(design, _NS_TEST)
    n_pos = size // 2
    n_neg = size - n_pos
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    if design.heterogeneous:
        members = rng.integers(0, design.m_clients, size=size)
        mus = np.array([params[m][0] for m in members])
        sigmas = np.array([params[m][1] for m in members])
    else:
        mus = np.full(size, params[0][0])
        sigmas = np.full(size, params[0][1])
    centers = y[:, None] * mus[:, None]
    x = centers + sigmas[:, None] * rng.standard_normal((size, design.p))
    return ClientData(x, y)


def gen_calibration_batch(design, params=None):
    """One extra batch on a reserved seed path, never part of the stream."""
    if params is None:
        params = client_params(design)
    return gen_batch(design, 0, params, namespace=_NS_CALIB)


def bayes_accuracy(mu, sigma, p):
    """Accuracy of the optimal rule: Phi(mu * sqrt(p) / sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    z = mu * math.sqrt(p) / sigma
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _write_csv(path, data):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{j + 1}" for j in range(data.p)])
        for i in range(len(data)):
            row = [int(data.y[i])] + [repr(float(v)) for v in data.x[i]]
            writer.writerow(row)


def dump_stream_csv(batches, out_dir, test=None):
    """Write one CSV per batch (clients concatenated) plus the test set.

    Columns are y, x1, ..., xp; floats are written with full precision so
    a load reproduces the stream exactly.  Returns the list of batch file
    paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for b, batch in enumerate(batches):
        pooled = batch.pooled().clients[0]
        path = os.path.join(out_dir, f"batch_{b:04d}.csv")
        _write_csv(path, pooled)
        paths.append(path)
    if test is not None:
        _write_csv(os.path.join(out_dir, "test.csv"), test)
    return paths
