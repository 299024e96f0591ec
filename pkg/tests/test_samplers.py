import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebrl.models import DEBN
from ebrl.envs import binary_table
from ebrl.samplers import (
    GibbsActionSampler,
    GibbsStepper,
    MarkovChain,
    build_gibbs_chain,
    build_mh_chain,
    chain_diagnostics,
    diagnostics_report,
    empirical_tv,
    exact_sample,
    hamming_kernel,
    mcmc_sample,
    mixing_time_bounds,
    target_distribution,
    tv_curve,
)

energies = st.integers(1, 6).flatmap(
    lambda m: st.lists(st.floats(-3, 3), min_size=2**m, max_size=2**m)
)


@settings(max_examples=40, deadline=None)
@given(energies, st.floats(0.05, 3))
def test_gibbs_chain_stationary_and_reversible(f, beta):
    chain = build_gibbs_chain(f, beta)
    p = target_distribution(f, beta)
    assert np.abs(p @ chain.P - p).max() <= 1e-10
    flow = p[:, None] * chain.P
    assert np.abs(flow - flow.T).max() <= 1e-10
    d = chain_diagnostics(chain)
    assert d.reversible and d.ergodic
    assert np.abs(d.pi - p).max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5).flatmap(lambda m: st.lists(st.floats(-2, 2), min_size=2**m, max_size=2**m)),
       st.integers(1, 2))
def test_mh_chain_stationary(f, radius):
    m = int(np.log2(len(f)))
    chain = build_mh_chain(f, 1.3, hamming_kernel(m, radius))
    p = target_distribution(f, 1.3)
    assert np.abs(p @ chain.P - p).max() <= 1e-10


def test_mh_kernel_checks():
    with pytest.raises(ValueError):
        build_mh_chain(np.zeros(4), 1.0, np.eye(4))  # disconnected
    K = hamming_kernel(2)
    K[0, 0] = 0.0
    with pytest.raises(ValueError):
        build_mh_chain(np.zeros(4), 1.0, K)
    with pytest.raises(ValueError):
        build_gibbs_chain(np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        MarkovChain(np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_spectral_gap_hand_built():
    a, b = 0.3, 0.2
    two = MarkovChain(np.array([[1 - a, a], [b, 1 - b]]))
    assert chain_diagnostics(two).delta == pytest.approx(1 - abs(1 - a - b), abs=1e-12)
    # lazy walk on a triangle: eigenvalues 1, 1/4, 1/4
    P = 0.5 * np.eye(3) + 0.25 * (np.ones((3, 3)) - np.eye(3))
    d = chain_diagnostics(MarkovChain(P))
    assert d.delta == pytest.approx(0.75, abs=1e-12)
    np.testing.assert_allclose(d.pi, 1 / 3, atol=1e-12)
    flip = MarkovChain(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert not chain_diagnostics(flip).ergodic


def test_mixing_bounds():
    lo, hi = mixing_time_bounds(0.1, 0.01, 0.01)
    assert lo == 0
    assert hi == int(np.ceil(np.log(1 / (0.01 * 0.01)) / 0.1))
    with pytest.raises(ValueError):
        mixing_time_bounds(0.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        mixing_time_bounds(0.1, 0.1, 1.5)


@settings(max_examples=20, deadline=None)
@given(energies.filter(lambda f: len(f) >= 4), st.floats(0.2, 2))
def test_lazy_chain_tv_monotone(f, beta):
    chain = build_gibbs_chain(f, beta)
    lazy = MarkovChain(0.5 * (np.eye(chain.n) + chain.P), beta, chain.f)
    curve = tv_curve(lazy, 0, 60)
    assert (np.diff(curve) <= 1e-12).all()


def test_stepper_matches_chain_rows():
    rng = np.random.default_rng(0)
    f = rng.normal(size=8)
    chain = build_gibbs_chain(f, 1.0)
    stepper = GibbsStepper(f, 1.0)
    x = np.full(200000, 5)
    y = stepper.step(x, rng)
    freq = np.bincount(y, minlength=8) / len(y)
    np.testing.assert_allclose(freq, chain.P[5], atol=0.005)


def test_mcmc_sample_edges():
    rng = np.random.default_rng(0)
    stepper = GibbsStepper(np.zeros(8), 1.0)
    assert mcmc_sample(stepper, 3, 0, rng) == 3
    with pytest.raises(ValueError):
        mcmc_sample(stepper, 3, -1, rng)


def test_hot_chain_reaches_uniform():
    rng = np.random.default_rng(1)
    f = rng.normal(size=64)
    stepper = GibbsStepper(f, 1e-6)
    x = mcmc_sample(stepper, np.zeros(100000, dtype=np.int64), 60, rng)
    assert empirical_tv(x, np.full(64, 1 / 64)) <= 0.02


def test_action_sampler_never_leaves_valid_codes():
    rng = np.random.default_rng(3)
    # this instance mixes slowly (gap ~0.008), so the walk needs a few hundred steps
    merits = rng.normal(size=11)
    draws = [GibbsActionSampler(500)(merits, 1.0, rng) for _ in range(100)]
    assert max(draws) < 11
    f = np.full(16, -np.inf)
    f[:11] = merits
    walkers = mcmc_sample(GibbsStepper(f, 1.0), rng.integers(11, size=20000), 500, rng)
    assert walkers.max() < 11
    freq = np.bincount(walkers, minlength=11) / len(walkers)
    assert 0.5 * np.abs(freq - target_distribution(merits, 1.0)).sum() < 0.06


def test_forbidden_states_in_diagnostics():
    f = np.array([0.3, -0.2, 1.0, -np.inf])
    report = diagnostics_report(f, 1.0)
    assert report["ergodic"] is False or report["pi_min"] > 0
    assert report["stationarity_error"] <= 1e-10
    assert report["mixing_upper"] is not None


def test_exact_sample_uses_model_merits():
    rng = np.random.default_rng(0)
    net = DEBN(2, binary_table(4), [3], rng)
    net.b[2:] = [50.0, -50.0]  # action bits: first bit set dominates
    draws = {exact_sample(net, np.zeros(2), 1.0, rng) for _ in range(50)}
    assert draws == {2}
