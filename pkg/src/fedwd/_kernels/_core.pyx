# cython: boundscheck=False, wraparound=False, cdivision=True
"""BLAS backed batch accumulation kernel.

Same contract as fedwd._kernels._py.batch_summary; see that module for the
parameter documentation.  Margins, the gradient reduction, and the weighted
Gram block all go through BLAS, the piecewise coefficient pass is a single
C loop.
"""

import numpy as np

from libc.math cimport pow, sqrt
from scipy.linalg.cython_blas cimport dgemv, dsyrk

BACKEND_NAME = "compiled"


def batch_summary(double[:, ::1] x, double[::1] y, double[::1] theta,
                  double q, double eps, bint want_loss=True,
                  bint want_grad=True, bint want_curv=True):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = x.shape[1]
    cdef int pi = <int> p
    cdef int ni = <int> n
    cdef int inc = 1
    cdef double one = 1.0
    cdef double zero = 0.0

    cdef double u0 = q / (q + 1.0)
    cdef double lo = u0 - eps
    cdef double hi = u0 + eps
    cdef double d = (q + 1.0) / (u0 + eps) * pow(u0 / (u0 + eps), q + 1.0)
    cdef double a = d / (4.0 * eps)
    cdef double b = d / 2.0

    loss_out = None
    grad_out = None
    curv_out = None
    if n == 0:
        if want_loss:
            loss_out = 0.0
        if want_grad:
            grad_out = np.zeros(p + 1)
        if want_curv:
            curv_out = np.zeros((p + 1, p + 1))
        return loss_out, grad_out, curv_out

    u_arr = np.empty(n)
    cdef double[::1] u = u_arr
    # u <- x @ theta[1:], then fold in intercept and label.
    dgemv("T", &pi, &ni, &one, &x[0, 0], &pi, &theta[1], &inc, &zero,
          &u[0], &inc)

    cdef Py_ssize_t i, j, k
    cdef double ui, ratio, s
    cdef double lsum = 0.0

    cdef double[::1] c = None
    cdef double[::1] w = None
    if want_grad:
        c_arr = np.empty(n)
        c = c_arr
    if want_curv:
        w_arr = np.empty(n)
        w = w_arr

    for i in range(n):
        ui = y[i] * (theta[0] + u[i])
        u[i] = ui
        if ui > u0:
            ratio = u0 / ui
            if want_loss:
                lsum += pow(ratio, q) / (q + 1.0)
            if want_grad:
                c[i] = -pow(ratio, q + 1.0) * y[i]
        else:
            if want_loss:
                lsum += 1.0 - ui
            if want_grad:
                c[i] = -y[i]
        if want_curv:
            if ui <= lo:
                w[i] = 0.0
            elif ui < hi:
                w[i] = 2.0 * a * (ui - u0) + b
            else:
                w[i] = (q + 1.0) / ui * pow(u0 / ui, q + 1.0)

    if want_loss:
        loss_out = lsum

    cdef double[::1] g
    if want_grad:
        grad_arr = np.zeros(p + 1)
        g = grad_arr
        s = 0.0
        for i in range(n):
            s += c[i]
        g[0] = s
        dgemv("N", &pi, &ni, &one, &x[0, 0], &pi, &c[0], &inc, &zero,
              &g[1], &inc)
        grad_out = grad_arr

    cdef double[:, ::1] h
    cdef double[:, ::1] z
    cdef int ldh
    if want_curv:
        curv_arr = np.zeros((p + 1, p + 1))
        h = curv_arr
        s = 0.0
        for i in range(n):
            s += w[i]
        h[0, 0] = s
        dgemv("N", &pi, &ni, &one, &x[0, 0], &pi, &w[0], &inc, &zero,
              &h[0, 1], &inc)
        for j in range(1, p + 1):
            h[j, 0] = h[0, j]
        # Scale rows by sqrt(w) and form the Gram block with one dsyrk.
        z_arr = np.empty((n, p))
        z = z_arr
        for i in range(n):
            s = sqrt(w[i])
            for j in range(p):
                z[i, j] = s * x[i, j]
        ldh = pi + 1
        # C order block at h[1:, 1:] is the Fortran order transpose; with
        # uplo "L" dsyrk fills the C order upper triangle, mirrored below.
        dsyrk("L", "N", &pi, &ni, &one, &z[0, 0], &pi, &zero, &h[1, 1], &ldh)
        for j in range(1, p + 1):
            for k in range(j + 1, p + 1):
                h[k, j] = h[j, k]
        curv_out = curv_arr

    return loss_out, grad_out, curv_out
