"""Pure-Python Gaussian max upper-bound kernel.

Reference implementation of the hot kernel; `gauss_cy` is the compiled twin
with identical semantics. Everything here is plain floats so the two stay
bit-comparable.
"""

from __future__ import annotations

import math

BACKEND_NAME = "python"

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

# Three families of check points.
# Window: the published check, 12 points uniform in [mu-3s, mu+3s] of the
# candidate bound. Deep window: candidate-anchored points below the window;
# a Gaussian can never dominate a product of n >= 2 Gaussian CDFs in the far
# left tail (the product decays like exp(-sum t_i^2/2)), so these force the
# inevitable crossing down to where the candidate's own CDF is ~1e-10 and the
# residual violation is negligible. Guards: fixed points anchored at each
# input (t in units of that input's sigma) so crossings at scales far from
# sigma_g are caught.
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
# Pass rule at a check point y: F_g(y) <= max(p(y) * (1 + RELATIVE_SLACK), tol).
# The relative slack absorbs float roundoff in the CDF products; the floor
# declares mass below tol "don't care", which caps any residual violation at
# tol wherever the point constraints cannot hold exactly.
DEFAULT_TOL = 1e-10
RELATIVE_SLACK = 1e-10
DEFAULT_MU_STEP_FRAC = 0.1
DEFAULT_SIGMA_STEP_FRAC = 0.1
DEFAULT_MU_STEPS_PER_ROUND = 100
MAX_TOTAL_STEPS = 20000


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x * _INV_SQRT2)


def product_cdf(y: float, means, stds) -> float:
    """CDF of the true max: product of the input CDFs at y.

    Deterministic inputs (sigma = 0) contribute a step factor.
    """
    p = 1.0
    for m, s in zip(means, stds):
        if s > 0.0:
            p *= norm_cdf((y - m) / s)
            if p == 0.0:
                return 0.0
        elif y < m:
            return 0.0
    return p


def _guard_points(means, stds, guard_ts):
    ys = set()
    for m, s in zip(means, stds):
        if s > 0.0:
            for t in guard_ts:
                ys.add(m + t * s)
        else:
            ys.add(m)
    return sorted(ys)


def max_upper_bound(
    means,
    stds,
    window_points: int = DEFAULT_WINDOW_POINTS,
    mu_step_frac: float = DEFAULT_MU_STEP_FRAC,
    sigma_step_frac: float = DEFAULT_SIGMA_STEP_FRAC,
    mu_steps_per_round: int = DEFAULT_MU_STEPS_PER_ROUND,
    tol: float = DEFAULT_TOL,
    guard_ts=DEFAULT_GUARD_TS,
):
    """Gaussian (mu, sigma) whose CDF lies beneath the product of input CDFs.

    Starts at mu = max(mu_i), sigma = mean(sigma_i) and walks mu upward in
    steps of sigma/10 until the dominance checks pass; after 100 failed mu
    steps in a row the sigma is widened by 10% and the march continues.

    Returns (mu, sigma, steps) where steps counts line-search increments.
    """
    n = len(means)
    if n == 0:
        raise ValueError("max_upper_bound needs at least one input")
    if n == 1:
        return float(means[0]), float(stds[0]), 0

    sigma_sum = 0.0
    det_max = None
    for m, s in zip(means, stds):
        if not (math.isfinite(m) and math.isfinite(s)) or s < 0.0:
            raise ValueError("inputs must be finite with sigma >= 0")
        sigma_sum += s
        if s == 0.0:
            det_max = m if det_max is None else max(det_max, m)

    mu = max(means)
    if sigma_sum == 0.0:
        return float(mu), 0.0, 0
    sigma = sigma_sum / n

    guard_y = _guard_points(means, stds, guard_ts)
    guard_p = [product_cdf(y, means, stds) for y in guard_y]

    if window_points < 2:
        raise ValueError("window_points must be >= 2")
    span = 6.0 / (window_points - 1)
    window_u = [-3.0 + span * j for j in range(window_points)]
    window_phi = [norm_cdf(u) for u in window_u]
    deep = [(u, norm_cdf(u)) for u in DEEP_WINDOW_US if norm_cdf(u) > tol]

    def passes(mu: float, sigma: float) -> bool:
        # A deterministic input forces the bound's left tail below tol just
        # under its point mass; closed form instead of an epsilon grid point.
        if det_max is not None and norm_cdf((det_max - mu) / sigma) > tol:
            return False
        for u, phi in deep:
            if phi > product_cdf(mu + u * sigma, means, stds) * (1.0 + RELATIVE_SLACK):
                return False
        for u, phi in zip(window_u, window_phi):
            p = product_cdf(mu + u * sigma, means, stds)
            if phi > p * (1.0 + RELATIVE_SLACK) and phi > tol:
                return False
        for y, p in zip(guard_y, guard_p):
            fg = norm_cdf((y - mu) / sigma)
            if fg > p * (1.0 + RELATIVE_SLACK) and fg > tol:
                return False
        return True

    steps = 0
    in_round = 0
    while not passes(mu, sigma):
        if steps >= MAX_TOTAL_STEPS:
            raise RuntimeError("max_upper_bound line search did not converge")
        if in_round >= mu_steps_per_round:
            sigma += sigma * sigma_step_frac
            in_round = 0
        else:
            mu += sigma * mu_step_frac
            in_round += 1
        steps += 1
    return float(mu), float(sigma), steps
