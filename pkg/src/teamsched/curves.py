"""Learning-curve estimation and adaptive filtering.

Task durations follow y = c + k * exp(-beta * i) with i counting an agent's
repetitions of the task from 1. A population prior is fitted from pooled
worker data; per-agent adaptation runs an extended Kalman filter whose noise
covariances track the innovation sequence with exponential forgetting.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .model import CurveParams, DurationObservation, GaussianDist, KalmanState

C_FLOOR = 0.1
K_FLOOR = 0.0
BETA_LO = 0.0
BETA_HI = 5.0

BOOTSTRAP_DEFAULT = 200
Q_SCALE_DEFAULT = 1e-4
R_SCALE_DEFAULT = 1.0
ALPHA_DEFAULT = 0.9


class DegenerateData(Exception):
    """Not enough structure in the samples to identify the curve."""


def curve_mean(params: CurveParams, i: int) -> float:
    """Expected duration of repetition i (1-based)."""
    if i < 1:
        raise ValueError("iteration index starts at 1")
    return params.c + params.k * math.exp(-params.beta * i)


def _model(i, c, k, beta):
    return c + k * np.exp(-beta * i)


def _jacobian(i, c, k, beta):
    e = np.exp(-beta * i)
    return np.stack([np.ones_like(e), e, -k * i * e], axis=1)


def _fit_params(i: np.ndarray, y: np.ndarray) -> np.ndarray:
    if len(np.unique(i)) < 3:
        raise DegenerateData("need at least 3 distinct iteration indices")
    first = float(np.mean(y[i == i.min()]))
    last = float(np.mean(y[i == i.max()]))
    p0 = [max(last, C_FLOOR), max(first - last, 1.0), 0.5]
    try:
        popt, _ = curve_fit(
            _model,
            i,
            y,
            p0=p0,
            bounds=([C_FLOOR, K_FLOOR, BETA_LO], [np.inf, np.inf, BETA_HI]),
            jac=_jacobian,
            maxfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        raise DegenerateData(f"curve fit failed: {exc}") from None
    return np.asarray(popt, dtype=float)


def fit_population_prior(
    samples: Mapping[str, Sequence[tuple[int, float]]],
    *,
    bootstrap: int = BOOTSTRAP_DEFAULT,
    q_scale: float = Q_SCALE_DEFAULT,
    r_scale: float = R_SCALE_DEFAULT,
    alpha: float = ALPHA_DEFAULT,
    seed: int = 0,
) -> KalmanState:
    """Fit one population-level KalmanState from multi-worker duration samples.

    The point estimate is a bounded nonlinear least-squares fit on the pooled
    (iteration, duration) pairs. P comes from bootstrap resampling of whole
    workers with replacement; Q and R are scaled from P so the filter's
    process and observation noise start proportional to prior uncertainty.
    """
    if len(samples) < 2:
        raise DegenerateData("population prior needs at least 2 workers")
    workers = sorted(samples)
    pooled_i: list[int] = []
    pooled_y: list[float] = []
    for w in workers:
        for i, y in samples[w]:
            if i < 1:
                raise ValueError("iteration indices start at 1")
            pooled_i.append(i)
            pooled_y.append(y)
    i_arr = np.asarray(pooled_i, dtype=float)
    y_arr = np.asarray(pooled_y, dtype=float)
    point = _fit_params(i_arr, y_arr)

    rng = np.random.default_rng(seed)
    fits: list[np.ndarray] = []
    for _ in range(bootstrap):
        pick = rng.choice(len(workers), size=len(workers), replace=True)
        bi: list[int] = []
        by: list[float] = []
        for idx in pick:
            for i, y in samples[workers[idx]]:
                bi.append(i)
                by.append(y)
        try:
            fits.append(_fit_params(np.asarray(bi, dtype=float), np.asarray(by, dtype=float)))
        except DegenerateData:
            continue
    if len(fits) < max(2, bootstrap // 4):
        raise DegenerateData("bootstrap refits mostly failed")
    stack = np.vstack(fits)
    P = np.cov(stack, rowvar=False)
    P = 0.5 * (P + P.T)

    R = r_scale * float(np.trace(P)) / 3.0
    return KalmanState(
        x=CurveParams(float(point[0]), float(point[1]), float(point[2])),
        P=P,
        Q=q_scale * P,
        R=R,
        alpha=alpha,
        residual_std=math.sqrt(R),
    )


def _h_and_H(x: np.ndarray, i: int) -> tuple[float, np.ndarray]:
    c, k, beta = x
    e = math.exp(-beta * i)
    return c + k * e, np.array([1.0, e, -k * i * e])


def _clamp(x: np.ndarray) -> np.ndarray:
    return np.array(
        [
            max(x[0], C_FLOOR),
            max(x[1], K_FLOOR),
            min(max(x[2], BETA_LO), BETA_HI),
        ]
    )


def kalman_update(state: KalmanState, obs: DurationObservation) -> KalmanState:
    """One adaptive EKF step; returns a new state, never mutates the input.

    Innovation-based adaptation with forgetting factor alpha:
      R <- alpha R + (1 - alpha)(d_post^2 + H P+ H^T)
      Q <- alpha Q + (1 - alpha)(K d)(K d)^T
    """
    i = obs.iteration_index
    x = np.array([state.x.c, state.x.k, state.x.beta], dtype=float)
    P = state.P.astype(float)

    h, H = _h_and_H(x, i)
    d = obs.observed_duration - h
    S = float(H @ P @ H) + state.R
    if S <= 0.0:
        # degenerate noiseless state (robots): nothing to adapt
        return KalmanState(
            x=state.x, P=P.copy(), Q=state.Q.copy(), R=state.R,
            alpha=state.alpha, residual_std=state.residual_std,
        )
    K = (P @ H) / S
    x_new = _clamp(x + K * d)
    P_new = (np.eye(3) - np.outer(K, H)) @ P + state.Q
    P_new = 0.5 * (P_new + P_new.T)
    w, V = np.linalg.eigh(P_new)
    if w[0] < 0.0:
        P_new = (V * np.clip(w, 0.0, None)) @ V.T
        P_new = 0.5 * (P_new + P_new.T)

    h_post, _ = _h_and_H(x_new, i)
    d_post = obs.observed_duration - h_post
    a = state.alpha
    R_new = a * state.R + (1.0 - a) * (d_post * d_post + float(H @ P_new @ H))
    Kd = K * d
    Q_new = a * state.Q + (1.0 - a) * np.outer(Kd, Kd)
    Q_new = 0.5 * (Q_new + Q_new.T)

    return KalmanState(
        x=CurveParams(float(x_new[0]), float(x_new[1]), float(x_new[2])),
        P=P_new,
        Q=Q_new,
        R=R_new,
        alpha=a,
        residual_std=math.sqrt(R_new),
    )


def project_duration(state: KalmanState, i: int) -> GaussianDist:
    """Predictive duration for repetition i: mean from the curve, variance
    H P H^T + R. Robots (zero P and R) project a point mass."""
    if i < 1:
        raise ValueError("iteration index starts at 1")
    x = np.array([state.x.c, state.x.k, state.x.beta], dtype=float)
    h, H = _h_and_H(x, i)
    var = float(H @ state.P @ H) + state.R
    if var < 0.0:
        var = 0.0
    return GaussianDist(h, math.sqrt(var))
