"""Margin loss family, model containers, and per-client summaries.

The classifier scores a point through the augmented vector xbar = (1, x)
and an intercept-first coefficient vector theta = (b0, beta).  On a labeled
point the loss is vq(u) at the functional margin u = y * xbar . theta:

    vq(u) = 1 - u                        for u <= u0 = q / (q + 1)
          = (u0 / u)^q / (q + 1)         for u >  u0

vq is convex and continuously differentiable; its second derivative jumps
at u0, so curvature summaries use a quadratically smoothed version whose
band has half width eps.  Gradients always use the exact derivative.

The ridge penalty never touches the intercept: a client with n points
contributes n * lam / 2 * ||beta||^2 to its loss.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import BACKEND, batch_summary

__all__ = [
    "BACKEND",
    "LabeledPoint",
    "ClientData",
    "ModelState",
    "Hyper",
    "ClientSummary",
    "Regularizer",
    "vq",
    "vq_prime",
    "smoothing_coeffs",
    "vq_prime_smoothed",
    "vq_second_smoothed",
    "loss",
    "client_gradient",
    "client_curvature",
    "client_summary",
    "predict",
    "predict_batch",
]


def _check_q(q):
    if not (math.isfinite(q) and q > 0):
        raise ValueError(f"q must be finite and positive, got {q}")


def _check_eps(q, eps):
    u0 = q / (q + 1.0)
    if not (math.isfinite(eps) and 0.0 < eps < u0):
        raise ValueError(
            f"eps must lie in (0, q/(q+1)) = (0, {u0:.6g}), got {eps}"
        )


@dataclass(frozen=True)
class LabeledPoint:
    """One observation: feature vector x and label y in {-1, +1}."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"x must be 1-d, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite entries")
        if self.y not in (-1, 1):
            raise ValueError(f"y must be -1 or +1, got {self.y}")
        object.__setattr__(self, "x", x)


class ClientData:
    """Columnar shard of labeled points belonging to one client.

    Stores features as an (n, p) float64 block and labels as an (n,) float64
    vector of -1/+1 values.  Validation happens once at construction so the
    solvers can hand the arrays straight to the kernels.
    """

    __slots__ = ("x", "y")

    def __init__(self, x, y):
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-d, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(
                f"y must have shape ({x.shape[0]},), got {y.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite entries")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be -1 or +1")
        self.x = x
        self.y = y

    @classmethod
    def from_points(cls, points, p=None):
        points = list(points)
        if not points:
            if p is None:
                raise ValueError("cannot infer dimension from an empty shard")
            return cls(np.empty((0, p)), np.empty(0))
        x = np.stack([np.asarray(pt.x, dtype=np.float64) for pt in points])
        y = np.array([pt.y for pt in points], dtype=np.float64)
        return cls(x, y)

    def to_points(self):
        return [LabeledPoint(self.x[i], int(self.y[i]))
                for i in range(len(self))]

    @property
    def p(self):
        return self.x.shape[1]

    def __len__(self):
        return self.x.shape[0]


def as_client_data(data, p=None):
    """Coerce a ClientData or an iterable of LabeledPoint to ClientData."""
    if isinstance(data, ClientData):
        return data
    return ClientData.from_points(data, p=p)


@dataclass(frozen=True)
class ModelState:
    """Intercept-first coefficient vector (b0, beta)."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1 or theta.shape[0] < 2:
            raise ValueError(
                f"theta must be 1-d of length p + 1 >= 2, got {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        object.__setattr__(self, "theta", theta)

    @property
    def p(self):
        return self.theta.shape[0] - 1

    @property
    def intercept(self):
        return float(self.theta[0])

    @property
    def slopes(self):
        return self.theta[1:]


def theta_vector(theta):
    """Accept a ModelState or raw array and return the (p+1,) vector."""
    if isinstance(theta, ModelState):
        return theta.theta
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1:
        raise ValueError(f"theta must be 1-d, got shape {theta.shape}")
    return theta


@dataclass(frozen=True)
class Hyper:
    """Solver hyperparameters shared by all regimes.

    lam is the ridge weight on the slopes, q the loss exponent, eps_smooth
    the smoothing half width (must satisfy 0 < eps_smooth < q/(q+1)),
    max_iter and tol the offline stopping rule.
    """

    lam: float = 0.01
    q: float = 1.0
    eps_smooth: float = 0.01
    max_iter: int = 500
    tol: float = 1e-8

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive, got {self.lam}")
        _check_q(self.q)
        _check_eps(self.q, self.eps_smooth)
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise ValueError(f"tol must be positive, got {self.tol}")


class Regularizer(enum.Enum):
    """Ridge matrix used in curvature summaries.

    FULL_IDENTITY adds lam * n * I (every coordinate, intercept included),
    which is what the solvers use.  INTERCEPT_FREE adds lam * n * W with a
    zeroed intercept entry and exists so curvature can be checked against
    finite differences of the gradient.
    """

    FULL_IDENTITY = "full_identity"
    INTERCEPT_FREE = "intercept_free"


@dataclass(frozen=True)
class ClientSummary:
    """What one client ships to the server for one update."""

    count: int
    gradient: np.ndarray
    curvature: np.ndarray


def _scalar_or_array(u, fn):
    u_arr = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u_arr)):
        raise ValueError("margin must be finite")
    out = fn(u_arr)
    if u_arr.ndim == 0:
        return float(out)
    return out


def vq(u, q):
    """Margin loss value; accepts a scalar or an array of margins."""
    _check_q(q)
    u0 = q / (q + 1.0)

    def f(ua):
        right = ua > u0
        ratio = u0 / np.where(right, ua, 1.0)
        return np.where(right, ratio ** q / (q + 1.0), 1.0 - ua)

    return _scalar_or_array(u, f)


def vq_prime(u, q):
    """Exact derivative of vq: -1 left of u0, then -(u0/u)^(q+1)."""
    _check_q(q)
    u0 = q / (q + 1.0)

    def f(ua):
        right = ua > u0
        ratio = u0 / np.where(right, ua, 1.0)
        return np.where(right, -(ratio ** (q + 1.0)), -1.0)

    return _scalar_or_array(u, f)


def smoothing_coeffs(q, eps):
    """Quadratic bridge coefficients (a, b, c) for the smoothed derivative.

    On (u0 - eps, u0 + eps) the smoothed derivative is
    a (u - u0)^2 + b (u - u0) + c.  With d the exact second derivative at
    the right knot, a = d / (4 eps), b = d / 2 and c = -1 + eps * d / 4,
    which makes the smoothed derivative continuous at the left knot and its
    slope continuous at both knots.
    """
    _check_q(q)
    _check_eps(q, eps)
    u0 = q / (q + 1.0)
    d = (q + 1.0) / (u0 + eps) * (u0 / (u0 + eps)) ** (q + 1.0)
    a = d / (4.0 * eps)
    b = d / 2.0
    c = -1.0 + eps * d / 4.0
    return a, b, c


def vq_prime_smoothed(u, q, eps):
    """Smoothed derivative: quadratic bridge across the kink at u0."""
    _check_q(q)
    _check_eps(q, eps)
    u0 = q / (q + 1.0)
    a, b, c = smoothing_coeffs(q, eps)

    def f(ua):
        right = ua >= u0 + eps
        ratio = u0 / np.where(right, ua, 1.0)
        mid = a * (ua - u0) ** 2 + b * (ua - u0) + c
        return np.where(
            ua <= u0 - eps,
            -1.0,
            np.where(right, -(ratio ** (q + 1.0)), mid),
        )

    return _scalar_or_array(u, f)


def vq_second_smoothed(u, q, eps):
    """Derivative of the smoothed vq_prime; bounded by (q+1)^2 / q."""
    _check_q(q)
    _check_eps(q, eps)
    u0 = q / (q + 1.0)
    a, b, _ = smoothing_coeffs(q, eps)

    def f(ua):
        right = ua >= u0 + eps
        safe = np.where(right, ua, 1.0)
        return np.where(
            ua <= u0 - eps,
            0.0,
            np.where(
                right,
                (q + 1.0) / safe * (u0 / safe) ** (q + 1.0),
                2.0 * a * (ua - u0) + b,
            ),
        )

    return _scalar_or_array(u, f)


def _prepare(data, theta, hyper):
    th = theta_vector(theta)
    cd = as_client_data(data, p=th.shape[0] - 1)
    if cd.p != th.shape[0] - 1 and len(cd) > 0:
        raise ValueError(
            f"dimension mismatch: data has p={cd.p} features but theta "
            f"has length {th.shape[0]} (expected p + 1 = {cd.p + 1})"
        )
    return cd, th


def loss(data, theta, hyper):
    """Regularized loss of one client: sum of vq terms plus the ridge.

    Empty data gives 0.  The ridge term is len(data) * lam / 2 * ||beta||^2.
    """
    cd, th = _prepare(data, theta, hyper)
    val, _, _ = batch_summary(cd.x, cd.y, th, hyper.q, hyper.eps_smooth,
                              True, False, False)
    n = len(cd)
    return val + 0.5 * n * hyper.lam * float(th[1:] @ th[1:])


def client_gradient(data, theta, hyper):
    """Gradient of the client loss at theta, exact vq derivative."""
    cd, th = _prepare(data, theta, hyper)
    _, g, _ = batch_summary(cd.x, cd.y, th, hyper.q, hyper.eps_smooth,
                            False, True, False)
    n = len(cd)
    g[1:] += n * hyper.lam * th[1:]
    return g


def client_curvature(data, theta, hyper,
                     regularizer=Regularizer.FULL_IDENTITY):
    """Curvature summary at theta using the smoothed second derivative."""
    cd, th = _prepare(data, theta, hyper)
    _, _, h = batch_summary(cd.x, cd.y, th, hyper.q, hyper.eps_smooth,
                            False, False, True)
    n = len(cd)
    ridge = n * hyper.lam
    idx = np.arange(1, h.shape[0])
    h[idx, idx] += ridge
    if regularizer is Regularizer.FULL_IDENTITY:
        h[0, 0] += ridge
    return h


def client_summary(data, theta, hyper,
                   regularizer=Regularizer.FULL_IDENTITY,
                   want_loss=False):
    """Fused loss/gradient/curvature pass over one client shard."""
    cd, th = _prepare(data, theta, hyper)
    val, g, h = batch_summary(cd.x, cd.y, th, hyper.q, hyper.eps_smooth,
                              want_loss, True, True)
    n = len(cd)
    ridge = n * hyper.lam
    g[1:] += ridge * th[1:]
    idx = np.arange(1, h.shape[0])
    h[idx, idx] += ridge
    if regularizer is Regularizer.FULL_IDENTITY:
        h[0, 0] += ridge
    if want_loss:
        val = val + 0.5 * ridge * float(th[1:] @ th[1:])
    summary = ClientSummary(count=n, gradient=g, curvature=h)
    return (summary, val) if want_loss else summary


def predict(theta, x):
    """Label a single feature vector; ties at margin 0 go to +1."""
    th = theta_vector(theta)
    x = np.asarray(x, dtype=np.float64)
    margin = th[0] + x @ th[1:]
    return 1 if margin >= 0.0 else -1


def predict_batch(theta, x):
    """Label the rows of an (n, p) feature block."""
    th = theta_vector(theta)
    x = np.asarray(x, dtype=np.float64)
    margins = th[0] + x @ th[1:]
    return np.where(margins >= 0.0, 1.0, -1.0)
