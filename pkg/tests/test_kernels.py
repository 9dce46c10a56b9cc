import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from teamsched import kernels
from teamsched.kernels import gauss_py

BACKENDS = [pytest.param(gauss_py, id="python")]
if kernels.BACKEND == "compiled":
    from teamsched.kernels import gauss_cy

    BACKENDS.append(pytest.param(gauss_cy, id="compiled"))


def grid_violation(means, stds, mu, sigma):
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    smax = stds.max()
    grid = np.linspace(means.min() - 6 * smax, means.max() + 6 * smax, 1000)
    fg = ndtr((grid - mu) / sigma) if sigma > 0 else (grid >= mu).astype(float)
    p = np.ones_like(grid)
    for m, s in zip(means, stds):
        p *= ndtr((grid - m) / s) if s > 0 else (grid >= m).astype(float)
    return float(np.max(fg - p))


@pytest.mark.parametrize("impl", BACKENDS)
def test_norm_cdf_matches_scipy(impl):
    for x in (-8.0, -3.0, -0.5, 0.0, 1.7, 6.0):
        assert impl.norm_cdf(x) == pytest.approx(float(ndtr(x)), abs=1e-15)


@pytest.mark.parametrize("impl", BACKENDS)
def test_product_cdf_step_semantics(impl):
    # deterministic input contributes a step factor
    assert impl.product_cdf(4.9, [5.0, 0.0], [0.0, 1.0]) == 0.0
    expect = float(ndtr(5.0))
    assert impl.product_cdf(5.0, [5.0, 0.0], [0.0, 1.0]) == pytest.approx(expect)


@pytest.mark.parametrize("impl", BACKENDS)
def test_single_input_returned_unchanged(impl):
    assert impl.max_upper_bound([5.0], [2.0]) == (5.0, 2.0, 0)


@pytest.mark.parametrize("impl", BACKENDS)
def test_far_apart_pair_converges_in_one_step(impl):
    mu, sigma, steps = impl.max_upper_bound([0.0, 10.0], [1.0, 1.0])
    assert steps <= 1
    assert sigma == pytest.approx(1.0)
    assert mu <= 10.0 + 1.0 * 0.1 + 1e-12


@pytest.mark.parametrize("impl", BACKENDS)
def test_all_deterministic_is_point_mass_at_max(impl):
    assert impl.max_upper_bound([4.0, 7.0, 1.0], [0.0, 0.0, 0.0]) == (7.0, 0.0, 0)


@pytest.mark.parametrize("impl", BACKENDS)
def test_iid_triple_dominates_cubed_cdf(impl):
    mu, sigma, _ = impl.max_upper_bound([5.0, 5.0, 5.0], [1.0, 1.0, 1.0])
    grid = np.linspace(5 - 8, 5 + 8, 1000)
    excess = np.max(ndtr((grid - mu) / sigma) - ndtr(grid - 5.0) ** 3)
    assert excess <= 1e-9
    assert mu > 5.0  # must shift right of the shared mean


@pytest.mark.parametrize("impl", BACKENDS)
def test_mixed_deterministic_and_stochastic(impl):
    mu, sigma, _ = impl.max_upper_bound([50.0, 30.0], [0.0, 5.0])
    v = grid_violation([50.0, 30.0], [0.0, 5.0], mu, sigma)
    assert v <= 1e-9
    assert sigma > 0


@pytest.mark.parametrize("impl", BACKENDS)
def test_errors(impl):
    with pytest.raises(ValueError):
        impl.max_upper_bound([], [])
    with pytest.raises(ValueError):
        impl.max_upper_bound([0.0, 1.0], [1.0, -1.0])
    with pytest.raises(ValueError):
        impl.max_upper_bound([0.0, float("nan")], [1.0, 1.0])
    with pytest.raises(ValueError):
        impl.max_upper_bound([0.0, 1.0], [1.0, 1.0], window_points=1)


@pytest.mark.parametrize("impl", BACKENDS)
def test_sigma_widening_round_structure(impl):
    # short mu rounds force the sigma-widening branch while still converging
    mu, sigma, steps = impl.max_upper_bound(
        [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], mu_steps_per_round=8
    )
    assert steps > 8
    assert sigma > 1.0  # widened at least once
    assert grid_violation([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], mu, sigma) <= 1e-9


@pytest.mark.parametrize("impl", BACKENDS)
def test_step_cap_guards_against_divergence(impl):
    # pathologically small rounds widen sigma faster than mu can advance;
    # the global step cap must turn that into an error, not a hang
    with pytest.raises(RuntimeError):
        impl.max_upper_bound([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], mu_steps_per_round=2)


@given(
    n=st.integers(min_value=1, max_value=10),
    data=st.data(),
)
@settings(max_examples=80, deadline=None)
def test_dominance_property(n, data):
    means = data.draw(
        st.lists(
            st.floats(0.0, 100.0, allow_nan=False), min_size=n, max_size=n
        )
    )
    stds = data.draw(
        st.lists(
            st.floats(0.1, 20.0, allow_nan=False), min_size=n, max_size=n
        )
    )
    mu, sigma, _ = kernels.max_upper_bound(means, stds)
    assert grid_violation(means, stds, mu, sigma) <= 1e-9


@given(
    n=st.integers(min_value=2, max_value=6),
    data=st.data(),
)
@settings(max_examples=40, deadline=None)
def test_dominance_with_deterministic_inputs(n, data):
    means = data.draw(st.lists(st.floats(0.0, 100.0), min_size=n, max_size=n))
    stds = data.draw(
        st.lists(
            st.one_of(st.just(0.0), st.floats(0.1, 20.0)), min_size=n, max_size=n
        )
    )
    if max(stds) == 0.0:
        stds[0] = 1.0
    mu, sigma, _ = kernels.max_upper_bound(means, stds)
    assert grid_violation(means, stds, mu, sigma) <= 1e-9


def test_backends_agree_exactly():
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled backend unavailable")
    rng = np.random.default_rng(20260819)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        means = rng.uniform(0, 200, n).tolist()
        stds = (rng.uniform(0, 25, n) * (rng.random(n) > 0.15)).tolist()
        res_c = gauss_cy.max_upper_bound(means, stds)
        res_p = gauss_py.max_upper_bound(means, stds)
        assert res_c == res_p


def test_backend_selection_env(tmp_path):
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from teamsched import kernels; print(kernels.BACKEND)"],
        env={"TEAMSCHED_PURE": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True,
        text=True,
        cwd="/",
    )
    assert out.stdout.strip() == "python"


def test_steps_counter_counts_mu_and_sigma_moves():
    mu0, s0, steps0 = gauss_py.max_upper_bound([5.0], [2.0])
    assert steps0 == 0
    _, _, steps = gauss_py.max_upper_bound([5.0, 5.0], [1.0, 1.0])
    assert steps > 0
