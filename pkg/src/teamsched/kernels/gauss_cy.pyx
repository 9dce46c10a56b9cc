# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gaussian max upper-bound kernel (twin of gauss_py)."""

from libc.math cimport erfc, isfinite
from libc.stdlib cimport free, malloc, qsort

BACKEND_NAME = "compiled"

DEFAULT_WINDOW_POINTS = 12
DEEP_WINDOW_US = (
    -6.3, -6.15, -6.0, -5.85, -5.7, -5.5, -5.25, -5.0,
    -4.75, -4.5, -4.25, -4.0, -3.75, -3.5,
)
DEFAULT_GUARD_TS = (
    -7.0, -6.5, -6.0, -5.5, -5.0, -4.5, -4.0, -3.5, -3.0, -2.5, -2.0, -1.5,
    -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5,
    6.0, 6.25, 6.5, 6.75, 7.0,
)
DEFAULT_TOL = 1e-10
RELATIVE_SLACK = 1e-10
DEFAULT_MU_STEP_FRAC = 0.1
DEFAULT_SIGMA_STEP_FRAC = 0.1
DEFAULT_MU_STEPS_PER_ROUND = 100
MAX_TOTAL_STEPS = 20000

cdef double _INV_SQRT2 = 0.7071067811865476
cdef double _RSLACK = 1e-10


cdef inline double _norm_cdf(double x) noexcept nogil:
    return 0.5 * erfc(-x * _INV_SQRT2)


cdef double _product_cdf(double y, const double* means, const double* stds,
                         Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double p = 1.0
    for i in range(n):
        if stds[i] > 0.0:
            p *= _norm_cdf((y - means[i]) / stds[i])
            if p == 0.0:
                return 0.0
        elif y < means[i]:
            return 0.0
    return p


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*> a)[0]
    cdef double y = (<const double*> b)[0]
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


def norm_cdf(double x):
    return _norm_cdf(x)


def product_cdf(double y, means, stds):
    """CDF of the true max: product of the input CDFs at y."""
    cdef Py_ssize_t n = len(means)
    cdef double* m = <double*> malloc(n * sizeof(double))
    cdef double* s = <double*> malloc(n * sizeof(double))
    if m == NULL or s == NULL:
        free(m)
        free(s)
        raise MemoryError
    cdef Py_ssize_t i
    try:
        for i in range(n):
            m[i] = means[i]
            s[i] = stds[i]
        return _product_cdf(y, m, s, n)
    finally:
        free(m)
        free(s)


def max_upper_bound(
    means,
    stds,
    int window_points=DEFAULT_WINDOW_POINTS,
    double mu_step_frac=DEFAULT_MU_STEP_FRAC,
    double sigma_step_frac=DEFAULT_SIGMA_STEP_FRAC,
    int mu_steps_per_round=DEFAULT_MU_STEPS_PER_ROUND,
    double tol=DEFAULT_TOL,
    guard_ts=DEFAULT_GUARD_TS,
):
    """Gaussian (mu, sigma) whose CDF lies beneath the product of input CDFs.

    Same line search and checks as gauss_py.max_upper_bound; see there for
    the algorithm description. Returns (mu, sigma, steps).
    """
    cdef Py_ssize_t n = len(means)
    if n == 0:
        raise ValueError("max_upper_bound needs at least one input")
    if n == 1:
        return float(means[0]), float(stds[0]), 0
    if window_points < 2:
        raise ValueError("window_points must be >= 2")

    cdef Py_ssize_t n_ts = len(guard_ts)
    cdef Py_ssize_t n_deep_all = len(DEEP_WINDOW_US)
    cdef Py_ssize_t max_guards = n * n_ts + n
    cdef double* m = <double*> malloc(n * sizeof(double))
    cdef double* s = <double*> malloc(n * sizeof(double))
    cdef double* ts = <double*> malloc(n_ts * sizeof(double))
    cdef double* gy = <double*> malloc(max_guards * sizeof(double))
    cdef double* gp = <double*> malloc(max_guards * sizeof(double))
    cdef double* wu = <double*> malloc(window_points * sizeof(double))
    cdef double* wphi = <double*> malloc(window_points * sizeof(double))
    cdef double* du = <double*> malloc(n_deep_all * sizeof(double))
    cdef double* dphi = <double*> malloc(n_deep_all * sizeof(double))
    if (m == NULL or s == NULL or ts == NULL or gy == NULL or gp == NULL
            or wu == NULL or wphi == NULL or du == NULL or dphi == NULL):
        free(m); free(s); free(ts); free(gy); free(gp); free(wu); free(wphi)
        free(du); free(dphi)
        raise MemoryError

    cdef Py_ssize_t i, j, k, ng, nd
    cdef double mu, sigma, sigma_sum, det_max, span, y, u, phi, fg
    cdef bint has_det
    cdef int steps, in_round
    cdef bint ok
    try:
        for i in range(n):
            m[i] = means[i]
            s[i] = stds[i]
        for i in range(n_ts):
            ts[i] = guard_ts[i]

        sigma_sum = 0.0
        det_max = 0.0
        has_det = False
        mu = m[0]
        for i in range(n):
            if not (isfinite(m[i]) and isfinite(s[i])) or s[i] < 0.0:
                raise ValueError("inputs must be finite with sigma >= 0")
            if m[i] > mu:
                mu = m[i]
            sigma_sum += s[i]
            if s[i] == 0.0:
                if not has_det or m[i] > det_max:
                    det_max = m[i]
                has_det = True
        if sigma_sum == 0.0:
            return float(mu), 0.0, 0
        sigma = sigma_sum / n

        ng = 0
        for i in range(n):
            if s[i] > 0.0:
                for j in range(n_ts):
                    gy[ng] = m[i] + ts[j] * s[i]
                    ng += 1
            else:
                gy[ng] = m[i]
                ng += 1
        qsort(gy, ng, sizeof(double), _cmp_double)
        k = 0
        for i in range(ng):
            if i == 0 or gy[i] != gy[k - 1]:
                gy[k] = gy[i]
                k += 1
        ng = k
        for i in range(ng):
            gp[i] = _product_cdf(gy[i], m, s, n)

        span = 6.0 / (window_points - 1)
        for j in range(window_points):
            wu[j] = -3.0 + span * j
            wphi[j] = _norm_cdf(wu[j])

        nd = 0
        for j in range(n_deep_all):
            u = DEEP_WINDOW_US[j]
            phi = _norm_cdf(u)
            if phi > tol:
                du[nd] = u
                dphi[nd] = phi
                nd += 1

        steps = 0
        in_round = 0
        while True:
            ok = True
            if has_det and _norm_cdf((det_max - mu) / sigma) > tol:
                ok = False
            if ok:
                for j in range(nd):
                    y = mu + du[j] * sigma
                    if dphi[j] > _product_cdf(y, m, s, n) * (1.0 + _RSLACK):
                        ok = False
                        break
            if ok:
                for j in range(window_points):
                    y = mu + wu[j] * sigma
                    phi = wphi[j]
                    if phi > _product_cdf(y, m, s, n) * (1.0 + _RSLACK) and phi > tol:
                        ok = False
                        break
            if ok:
                for i in range(ng):
                    fg = _norm_cdf((gy[i] - mu) / sigma)
                    if fg > gp[i] * (1.0 + _RSLACK) and fg > tol:
                        ok = False
                        break
            if ok:
                return float(mu), float(sigma), steps
            if steps >= MAX_TOTAL_STEPS:
                raise RuntimeError("max_upper_bound line search did not converge")
            if in_round >= mu_steps_per_round:
                sigma += sigma * sigma_step_frac
                in_round = 0
            else:
                mu += sigma * mu_step_frac
                in_round += 1
            steps += 1
    finally:
        free(m); free(s); free(ts); free(gy); free(gp); free(wu); free(wphi)
        free(du); free(dphi)
