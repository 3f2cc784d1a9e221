"""Differentially private online updates via objective perturbation.

Per update the server solves

    (J_acc + J_b + rho I) theta_new = (J_acc + J_b) theta_prev - g_b - xi

where xi is Laplace or Gaussian noise calibrated to the per-update budget.
Privacy accounting is per update: epsilon (and delta for Gaussian) is the
budget of a single batch update, not of the whole stream.

Calibration constants assume every augmented feature vector xbar = (1, x)
satisfies the norm caps ||xbar||_1 <= c1 and ||xbar||_2 <= c2; data must be
clipped at ingestion (see clip_features) and every private update verifies
the caps before touching the batch.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import solve_spd
from .offline import FederatedDataset
from .online import OnlineState, batch_terms, init_state, warm_start_state

__all__ = [
    "AUTO_RHO",
    "DpConfig",
    "NoiseDraw",
    "PrivateStepRecord",
    "PrivacyBudgetError",
    "ConditionViolationError",
    "clip_features",
    "check_condition1",
    "calib_t1_t2",
    "gaussian_sensitivity",
    "laplace_scale",
    "gaussian_sigma",
    "min_rho",
    "sample_noise",
    "update_private",
    "run_stream_private",
]

AUTO_RHO = "auto"

_MECHANISMS = ("laplace", "gaussian")


class PrivacyBudgetError(ValueError):
    """epsilon is not large enough to pay the T2 part of the budget."""

    def __init__(self, epsilon, t2):
        self.epsilon = epsilon
        self.t2 = t2
        super().__init__(
            f"privacy budget too small: epsilon={epsilon} must exceed "
            f"T2={t2}"
        )


class ConditionViolationError(ValueError):
    """A precondition of the privacy guarantee does not hold."""


@dataclass(frozen=True)
class DpConfig:
    """Mechanism choice and calibration constants for private updates.

    rho may be the string "auto", which resolves to the smallest ridge
    satisfying the eigenvalue condition at each batch, or a number; a
    number below the bound is an error for Laplace and a warning for
    Gaussian.  c1 and c2 are the norm caps used both for clipping and for
    sensitivity; leave them None to have the harness calibrate them from a
    held-out batch.  c_prev bounds sqrt(N) times the distance between
    consecutive estimates and defaults to 1.0.
    """

    mechanism: str
    epsilon: float
    delta: float = None
    rho: object = AUTO_RHO
    c1: float = None
    c2: float = None
    c_prev: float = 1.0

    def __post_init__(self):
        if self.mechanism not in _MECHANISMS:
            raise ValueError(
                f"mechanism must be one of {_MECHANISMS}, "
                f"got {self.mechanism!r}"
            )
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.mechanism == "gaussian":
            if self.delta is None or not (0.0 < self.delta < 1.0):
                raise ValueError(
                    f"gaussian mechanism needs delta in (0, 1), "
                    f"got {self.delta}"
                )
        if self.rho != AUTO_RHO:
            if not (math.isfinite(self.rho) and self.rho >= 0):
                raise ValueError(
                    f"rho must be 'auto' or a number >= 0, got {self.rho}"
                )
        for name, val in (("c1", self.c1), ("c2", self.c2)):
            if val is not None and val < 1.0:
                raise ValueError(
                    f"{name} must be >= 1 to admit the intercept "
                    f"coordinate, got {val}"
                )
        if not (math.isfinite(self.c_prev) and self.c_prev > 0):
            raise ValueError(f"c_prev must be positive, got {self.c_prev}")


@dataclass(frozen=True)
class NoiseDraw:
    """One perturbation vector plus what is needed to replay it."""

    xi: np.ndarray
    scale: float
    seed_path: tuple = ()


@dataclass(frozen=True)
class PrivateStepRecord:
    """Audit record of one private update."""

    batch_index: int
    n_batch: int
    warm_start: bool
    rho: float
    noise: NoiseDraw


def clip_features(x, c1, c2):
    """Scale feature vectors so the augmented (1, x) meets both norm caps.

    Each row is multiplied by s = min(1, (c1 - 1)/||x||_1,
    sqrt(c2^2 - 1)/||x||_2), which gives ||(1, x)||_1 <= c1 and
    ||(1, x)||_2 <= c2 exactly.  Requires c1 > 1 and c2 > 1; the intercept
    coordinate alone uses up one unit of each cap.
    """
    if not c1 > 1.0:
        raise ValueError(f"c1 must be > 1, got {c1}")
    if not c2 > 1.0:
        raise ValueError(f"c2 must be > 1, got {c2}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    l1 = np.abs(rows).sum(axis=1)
    l2 = np.sqrt((rows * rows).sum(axis=1))
    cap2 = math.sqrt(c2 * c2 - 1.0)
    # clamping the denominators makes both ratios <= 1, so rows already
    # inside the caps are left untouched
    s1 = (c1 - 1.0) / np.maximum(l1, c1 - 1.0)
    s2 = cap2 / np.maximum(l2, cap2)
    s = np.minimum(s1, s2)
    out = rows * s[:, None]
    return out[0] if single else out


def check_condition1(x, c1, c2, rtol=1e-9):
    """Verify every augmented row satisfies the norm caps.

    Raises ConditionViolationError naming the worst offender otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    rows = x[None, :] if x.ndim == 1 else x
    l1 = 1.0 + np.abs(rows).sum(axis=1)
    l2 = np.sqrt(1.0 + (rows * rows).sum(axis=1))
    worst1 = float(l1.max()) if l1.size else 1.0
    worst2 = float(l2.max()) if l2.size else 1.0
    if worst1 > c1 * (1.0 + rtol) or worst2 > c2 * (1.0 + rtol):
        raise ConditionViolationError(
            "unclipped features: max ||xbar||_1 = "
            f"{worst1:.6g} (cap {c1}), max ||xbar||_2 = {worst2:.6g} "
            f"(cap {c2}); clip at ingestion before private updates"
        )


def calib_t1_t2(q, c1, c2, c_prev, n_prev, n_b, lam, rho):
    """Sensitivity T1 and log-ratio correction T2 for the Laplace budget.

    n_prev is the cumulative count before this batch (must be >= 1, so the
    first private batch needs a warm start), n_b the cumulative count
    including this batch.
    """
    if n_prev < 1:
        raise ValueError(
            f"n_prev must be >= 1 (warm start the first batch), "
            f"got {n_prev}"
        )
    if n_b <= n_prev:
        raise ValueError(f"n_b={n_b} must exceed n_prev={n_prev}")
    qq = (q + 1.0) ** 2 / q
    t1 = 2.0 * c1 + 2.0 * qq * c1 * c2 * c_prev / math.sqrt(n_prev)
    t2 = 2.0 * math.log1p(qq * c2 * c2 / (n_b * lam + rho))
    return t1, t2


def gaussian_sensitivity(q, c2, c_prev, n_prev):
    """L2 sensitivity Delta1 of the per-batch score vector."""
    if n_prev < 1:
        raise ValueError(
            f"n_prev must be >= 1 (warm start the first batch), "
            f"got {n_prev}"
        )
    qq = (q + 1.0) ** 2 / q
    return 2.0 * c2 + 2.0 * qq * c2 * c2 * c_prev / math.sqrt(n_prev)


def laplace_scale(epsilon, t1, t2):
    """Per-coordinate Laplace scale eta = T1 / (epsilon - T2)."""
    if epsilon <= t2:
        raise PrivacyBudgetError(epsilon, t2)
    return t1 / (epsilon - t2)


def gaussian_sigma(epsilon, delta, sensitivity):
    """Gaussian noise level tau for an (epsilon, delta) update."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    root = 2.0 * math.log(1.0 / delta)
    return sensitivity * (math.sqrt(root) + math.sqrt(root + epsilon)) \
        / epsilon


def min_rho(epsilon, q, c2, n_b, lam):
    """Smallest ridge satisfying the eigenvalue condition, clamped at 0."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    bound = (q + 1.0) ** 2 * c2 * c2 / ((math.exp(epsilon / 4.0) - 1.0) * q)
    return max(0.0, bound - n_b * lam)


def sample_noise(mechanism, scale, dim, rng, seed_path=()):
    """Draw a perturbation vector; scale 0 returns the zero vector.

    Laplace uses the inverse CDF of uniform draws, Gaussian a standard
    normal transform; both consume the supplied generator so a fixed seed
    path replays exactly.
    """
    if mechanism not in _MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale}")
    if scale == 0.0:
        return NoiseDraw(xi=np.zeros(dim), scale=0.0, seed_path=seed_path)
    if mechanism == "laplace":
        u = rng.random(dim) - 0.5
        mag = np.minimum(np.abs(u), 0.5 * (1.0 - 1e-16))
        xi = -scale * np.sign(u) * np.log1p(-2.0 * mag)
    else:
        xi = scale * rng.standard_normal(dim)
    return NoiseDraw(xi=xi, scale=float(scale), seed_path=seed_path)


def _resolve_rho(dp, n_cum, hyper):
    bound = min_rho(dp.epsilon, hyper.q, dp.c2, n_cum, hyper.lam)
    if dp.rho == AUTO_RHO:
        return bound
    rho = float(dp.rho)
    if rho < bound:
        msg = (f"rho={rho} is below the eigenvalue bound {bound:.6g} "
               f"at cumulative count {n_cum}")
        if dp.mechanism == "laplace":
            raise ConditionViolationError(msg)
        warnings.warn(msg)
    return rho


def update_private(state, batch, hyper, dp, rng=None, noise=None,
                   seed_path=()):
    """Consume one batch privately and return (state, record).

    A state with n_acc == 0 has no calibrated sensitivity (the bounds
    divide by sqrt of the previous count), so the first batch is fit in
    full as a non-private warm start and recorded as such.  Pass a
    pre-drawn NoiseDraw to replay a run; otherwise rng must be a numpy
    Generator.
    """
    if dp.c1 is None or dp.c2 is None:
        raise ValueError("dp.c1 and dp.c2 must be set for private updates")

    if state.n_acc == 0:
        if not isinstance(batch, FederatedDataset):
            batch = FederatedDataset(batch)
        for c in batch.clients:
            check_condition1(c.x, dp.c1, dp.c2)
        new_state = warm_start_state(batch, hyper, theta0=state.theta)
        record = PrivateStepRecord(
            batch_index=new_state.batch_index,
            n_batch=new_state.n_acc,
            warm_start=True,
            rho=0.0,
            noise=NoiseDraw(xi=np.zeros(state.p + 1), scale=0.0,
                            seed_path=seed_path),
        )
        return new_state, record

    if not isinstance(batch, FederatedDataset):
        batch = FederatedDataset(batch)
    for c in batch.clients:
        check_condition1(c.x, dp.c1, dp.c2)
    grad, curv, n_b = batch_terms(state, batch, hyper)

    n_cum = state.n_acc + n_b
    rho = _resolve_rho(dp, n_cum, hyper)

    if noise is None:
        if dp.mechanism == "laplace":
            t1, t2 = calib_t1_t2(hyper.q, dp.c1, dp.c2, dp.c_prev,
                                 state.n_acc, n_cum, hyper.lam, rho)
            scale = laplace_scale(dp.epsilon, t1, t2)
        else:
            d1 = gaussian_sensitivity(hyper.q, dp.c2, dp.c_prev, state.n_acc)
            scale = gaussian_sigma(dp.epsilon, dp.delta, d1)
        if rng is None:
            raise ValueError("rng is required when noise is not supplied")
        noise = sample_noise(dp.mechanism, scale, state.p + 1, rng,
                             seed_path=seed_path)

    h = state.j_acc.a + curv
    lhs = h.copy()
    idx = np.arange(lhs.shape[0])
    lhs[idx, idx] += rho
    rhs = h @ state.theta - grad - noise.xi
    new_theta = solve_spd(lhs, rhs)
    j_new = state.j_acc.copy().add_sym(curv)
    new_state = OnlineState(theta=new_theta, j_acc=j_new,
                            n_acc=n_cum,
                            batch_index=state.batch_index + 1)
    record = PrivateStepRecord(
        batch_index=new_state.batch_index,
        n_batch=n_b,
        warm_start=False,
        rho=rho,
        noise=noise,
    )
    return new_state, record


def run_stream_private(batches, hyper, dp, seed, theta0=None, p=None):
    """Fold update_private over a stream with per-batch counter seeds.

    Returns (state, trace, records, manifest).  Batch b draws its noise
    from a Philox generator keyed by (seed, b) so any single update can be
    replayed without re-running the stream.
    """
    batches = list(batches) if not isinstance(batches, list) else batches
    if p is None:
        if not batches:
            raise ValueError("cannot infer p from an empty stream")
        first = batches[0]
        p = first.p if hasattr(first, "p") else FederatedDataset(first).p
    state = init_state(p, theta0)
    trace = []
    records = []
    for batch in batches:
        path = (seed, state.batch_index + 1)
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(path))
        )
        state, record = update_private(state, batch, hyper, dp, rng=rng,
                                       seed_path=path)
        trace.append(state.theta.copy())
        records.append(record)
    manifest = {
        "mechanism": dp.mechanism,
        "epsilon": dp.epsilon,
        "delta": dp.delta,
        "rho": [r.rho for r in records],
        "noise_scale": [r.noise.scale for r in records],
        "seed": seed,
        "seed_paths": [list(r.noise.seed_path) for r in records],
        "warm_start": [r.warm_start for r in records],
        "c1": dp.c1,
        "c2": dp.c2,
        "c_prev": dp.c_prev,
    }
    return state, trace, records, manifest
