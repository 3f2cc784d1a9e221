"""Pure numpy implementation of the batch accumulation kernel.

This is the fallback used when the compiled extension is unavailable.  Both
implementations share one contract: given a feature block, labels, and a
coefficient vector, return the data parts of (loss, gradient, curvature).
Ridge terms are added by the caller.
"""

import numpy as np

BACKEND_NAME = "python"


def batch_summary(x, y, theta, q, eps, want_loss=True, want_grad=True,
                  want_curv=True):
    """Accumulate margin loss terms over one block of points.

    Parameters
    ----------
    x : (n, p) float64 array
        Feature rows, intercept not included.
    y : (n,) float64 array
        Labels, -1.0 or +1.0.
    theta : (p + 1,) float64 array
        Intercept-first coefficient vector.
    q : float
        Loss exponent, q > 0.
    eps : float
        Smoothing half width for the second derivative band.
    want_loss, want_grad, want_curv : bool
        Select which pieces to compute; unselected pieces return None.

    Returns
    -------
    loss : float or None
        sum_i V_q(u_i) with u_i = y_i * (theta_0 + x_i . theta_1:).
    grad : (p + 1,) array or None
        sum_i y_i V_q'(u_i) xbar_i, exact derivative.
    curv : (p + 1, p + 1) array or None
        sum_i Vtilde_q''(u_i) xbar_i xbar_i^T, smoothed second derivative.
    """
    n, p = x.shape
    u0 = q / (q + 1.0)
    if n == 0:
        loss = 0.0 if want_loss else None
        grad = np.zeros(p + 1) if want_grad else None
        curv = np.zeros((p + 1, p + 1)) if want_curv else None
        return loss, grad, curv

    u = y * (theta[0] + x @ theta[1:])
    right = u > u0
    # Guarded ratio keeps pow away from non-positive margins on the left branch.
    ratio = u0 / np.where(right, u, 1.0)

    loss = None
    if want_loss:
        vals = np.where(right, ratio ** q / (q + 1.0), 1.0 - u)
        loss = float(vals.sum())

    grad = None
    if want_grad:
        vp = np.where(right, -(ratio ** (q + 1.0)), -1.0)
        c = y * vp
        grad = np.empty(p + 1)
        grad[0] = c.sum()
        grad[1:] = x.T @ c

    curv = None
    if want_curv:
        lo = u0 - eps
        hi = u0 + eps
        d = (q + 1.0) / (u0 + eps) * (u0 / (u0 + eps)) ** (q + 1.0)
        a = d / (4.0 * eps)
        b = d / 2.0
        w = np.where(
            u <= lo,
            0.0,
            np.where(u < hi, 2.0 * a * (u - u0) + b,
                     (q + 1.0) / np.where(right, u, 1.0) * ratio ** (q + 1.0)),
        )
        curv = np.empty((p + 1, p + 1))
        curv[0, 0] = w.sum()
        cross = x.T @ w
        curv[0, 1:] = cross
        curv[1:, 0] = cross
        block = (x * w[:, None]).T @ x
        curv[1:, 1:] = 0.5 * (block + block.T)

    return loss, grad, curv
