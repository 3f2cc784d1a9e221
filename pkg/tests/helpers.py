"""Shared builders for the test suite."""

import numpy as np

from fedwd.core import ClientData, Hyper
from fedwd.offline import FederatedDataset


def two_point_dataset():
    """One client holding {(x=1, y=+1), (x=-1, y=-1)}."""
    return FederatedDataset([ClientData([[1.0], [-1.0]], [1.0, -1.0])])


def tiny_hyper(lam=0.1, q=1.0, eps=0.01, **kw):
    return Hyper(lam=lam, q=q, eps_smooth=eps, **kw)


def random_client(rng, n, p, scale=1.0):
    x = scale * rng.standard_normal((n, p))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    # Guarantee both labels when n allows it so fits stay well posed.
    if n >= 2:
        y[0], y[1] = 1.0, -1.0
    return ClientData(x, y)


def random_dataset(rng, m_clients, n_per_client, p, scale=1.0):
    return FederatedDataset(
        [random_client(rng, n_per_client, p, scale) for _ in range(m_clients)]
    )


def random_theta(rng, p, scale=1.0):
    return scale * rng.standard_normal(p + 1)


def split_points(rng, data, m_new):
    """Re-partition the pooled points of `data` into m_new client shards."""
    pooled = data.pooled().clients[0]
    n = len(pooled)
    order = rng.permutation(n)
    chunks = np.array_split(order, m_new)
    shards = [ClientData(pooled.x[c], pooled.y[c]) for c in chunks
              if len(c) > 0]
    return FederatedDataset(shards)
