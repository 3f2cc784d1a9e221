"""Online federated updates that never revisit a consumed batch.

The server keeps the running sum of curvature matrices J_1 + ... + J_b and
the current estimate.  When batch b arrives, every client computes its
gradient at the previous estimate and its curvature at the same point; the
server solves one SPD system against the accumulated curvature and moves
on.  Memory is O(p^2) regardless of how many batches have streamed by.
"""

import json
from dataclasses import dataclass

import numpy as np

from .core import theta_vector
from .linalg import SymMatrix, solve_spd
from .offline import FederatedDataset, aggregate, fit_offline

__all__ = ["OnlineState", "init_state", "update", "warm_start_state",
           "run_stream", "state_to_json", "state_from_json"]


@dataclass(frozen=True)
class OnlineState:
    """Server state after batch_index consumed batches.

    theta is the current estimate, j_acc the accumulated curvature (each
    batch evaluated at the estimate it saw on arrival), n_acc the total
    number of points consumed.  States are single writer: update() builds
    a fresh state instead of mutating.
    """

    theta: np.ndarray
    j_acc: SymMatrix
    n_acc: int
    batch_index: int

    @property
    def p(self):
        return self.theta.shape[0] - 1


def init_state(p, theta0=None):
    """Fresh state before any batch: zero estimate, zero curvature."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if theta0 is None:
        th = np.zeros(p + 1)
    else:
        th = theta_vector(theta0).copy()
        if th.shape[0] != p + 1:
            raise ValueError(
                f"theta0 has length {th.shape[0]}, expected {p + 1}"
            )
    return OnlineState(theta=th, j_acc=SymMatrix.zeros(p + 1),
                       n_acc=0, batch_index=0)


def batch_terms(state, batch, hyper):
    """Per-batch gradient and curvature at the current estimate.

    Both carry the batch-level ridge: the gradient adds n_b * lam * W theta
    and the curvature adds n_b * lam * I, with n_b the batch point count.
    """
    if not isinstance(batch, FederatedDataset):
        batch = FederatedDataset(batch)
    if batch.p != state.p:
        raise ValueError(
            f"batch has p={batch.p}, state expects p={state.p}"
        )
    _, grad, curv = aggregate(batch, state.theta, hyper)
    return grad, curv, batch.n_total


def update(state, batch, hyper):
    """Consume one batch and return the next state.

    The new estimate solves (j_acc + J_b) step = g_b for the correction to
    the previous estimate, then J_b joins the accumulator.
    """
    grad, curv, n_b = batch_terms(state, batch, hyper)
    h = state.j_acc.a + curv
    new_theta = state.theta - solve_spd(h, grad)
    j_new = state.j_acc.copy().add_sym(curv)
    return OnlineState(theta=new_theta, j_acc=j_new,
                       n_acc=state.n_acc + n_b,
                       batch_index=state.batch_index + 1)


def warm_start_state(batch, hyper, theta0=None):
    """Fit one batch to convergence and seed the stream state with it.

    A zero initial estimate gives the first correction ridge-only curvature
    (every margin sits at u = 0 where the smoothed bend vanishes), so with a
    small penalty the opening step can land far from any sensible iterate and
    the frozen accumulator never pulls it back.  Fitting the opening batch in
    full costs a few passes over that batch alone; its curvature taken at the
    fitted point then joins the accumulator and the stream proceeds as usual.
    """
    if not isinstance(batch, FederatedDataset):
        batch = FederatedDataset(batch)
    report = fit_offline(batch, hyper, theta0=theta0)
    _, _, curv = aggregate(batch, report.theta, hyper)
    return OnlineState(theta=report.theta,
                       j_acc=SymMatrix.zeros(batch.p + 1).add_sym(curv),
                       n_acc=batch.n_total, batch_index=1)


def run_stream(batches, hyper, theta0=None, p=None, warm_start=False):
    """Fold update() over an iterable of batches.

    Returns the final state and the list of estimates after each batch.
    p may be omitted when `batches` is a non-empty sequence.  warm_start
    fits the first batch outright instead of correcting from theta0; the
    two options are mutually exclusive.
    """
    batches = list(batches) if not isinstance(batches, list) else batches
    if warm_start and theta0 is not None:
        raise ValueError("warm_start and theta0 are mutually exclusive")
    if p is None:
        if not batches:
            raise ValueError("cannot infer p from an empty stream")
        first = batches[0]
        p = first.p if isinstance(first, FederatedDataset) else \
            FederatedDataset(first).p
    trace = []
    if warm_start and batches:
        state = warm_start_state(batches[0], hyper)
        trace.append(state.theta.copy())
        rest = batches[1:]
    else:
        state = init_state(p, theta0)
        rest = batches
    for batch in rest:
        state = update(state, batch, hyper)
        trace.append(state.theta.copy())
    return state, trace


def state_to_json(state):
    """Serialize a state to a flat JSON document (exact float round trip)."""
    doc = {
        "p": state.p,
        "theta": state.theta.tolist(),
        "j_acc_lower": state.j_acc.to_lower(),
        "n_acc": state.n_acc,
        "batch_index": state.batch_index,
    }
    return json.dumps(doc)


def state_from_json(text):
    doc = json.loads(text)
    p = int(doc["p"])
    theta = np.asarray(doc["theta"], dtype=np.float64)
    if theta.shape != (p + 1,):
        raise ValueError(
            f"theta length {theta.shape[0]} does not match p={p}"
        )
    j_acc = SymMatrix.from_lower(doc["j_acc_lower"], p + 1)
    return OnlineState(theta=theta, j_acc=j_acc,
                       n_acc=int(doc["n_acc"]),
                       batch_index=int(doc["batch_index"]))
