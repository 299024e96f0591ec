import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebrl.agents import boltzmann_policy
from ebrl.envs import binary_table
from ebrl.models import (
    DEBN,
    DQN,
    Adam,
    TabularMerit,
    debn_backward,
    debn_forward,
    debn_parameter_count,
    dqn_parameter_count,
    load_snapshot,
    matched_pair,
    rbm_free_energy_bruteforce,
    rbm_free_energy_gradient,
    restore,
    save_snapshot,
    size_debn,
    size_dqn,
    softplus,
)


def random_debn(rng, widths, state_dim=3, n_actions=4, dtype=np.float64):
    net = DEBN(state_dim, binary_table(n_actions), widths, rng, dtype)
    for p in net.params:
        p[...] = rng.normal(0, 0.7, p.shape)
    return net


def fd_check(model, S, A, u, h=1e-6):
    """Max relative error between grad() and central differences of sum(u * merits)."""
    grads = model.grad(S, A, u)
    worst = 0.0
    for p, g in zip(model.params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            fp = float(u @ model.merits(S, A))
            flat[j] = old - h
            fm = float(u @ model.merits(S, A))
            flat[j] = old
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(gflat[j] - fd) / max(1.0, abs(fd)))
    return worst


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 12))
def test_debn_is_negative_rbm_free_energy(seed, hidden):
    rng = np.random.default_rng(seed)
    net = random_debn(rng, [hidden])
    s = rng.integers(0, 2, 3).astype(float)
    a = int(rng.integers(4))
    v = np.concatenate([s, net.action_codes[a]])
    W, c = net.layers[0]
    assert abs(debn_forward(net, s, a) + rbm_free_energy_bruteforce(W, net.b, c, v)) <= 1e-9


def test_rbm_gradient_closed_form():
    rng = np.random.default_rng(3)
    W, bv, bh = rng.normal(size=(4, 3)), rng.normal(size=4), rng.normal(size=3)
    v = rng.integers(0, 2, 4).astype(float)
    gW, gbv, gbh = rbm_free_energy_gradient(W, bv, bh, v)
    h = 1e-6
    E = np.zeros_like(W)
    E[1, 2] = h
    fd = (rbm_free_energy_bruteforce(W + E, bv, bh, v) - rbm_free_energy_bruteforce(W - E, bv, bh, v)) / (2 * h)
    assert abs(fd - gW[1, 2]) < 1e-8
    assert np.array_equal(gbv, -v)
    with pytest.raises(ValueError):
        rbm_free_energy_bruteforce(np.zeros((2, 21)), np.zeros(2), np.zeros(21), np.zeros(2))


@pytest.mark.parametrize("widths", [[5], [4, 3], [3, 3, 2]])
def test_debn_gradient(widths):
    rng = np.random.default_rng(len(widths))
    net = random_debn(rng, widths)
    S = rng.normal(size=(4, 3))
    A = rng.integers(4, size=4)
    assert fd_check(net, S, A, rng.normal(size=4)) < 1e-6
    single = debn_backward(net, S[0], int(A[0]))
    batch = net.grad(S[:1], A[:1], [1.0])
    assert all(np.allclose(x, y) for x, y in zip(single, batch))


@pytest.mark.parametrize("widths", [[5], [4, 3]])
def test_dqn_gradient(widths):
    rng = np.random.default_rng(7)
    net = DQN(3, 4, widths, rng)
    for p in net.params:
        p[...] = rng.normal(0, 0.7, p.shape)
    S = rng.normal(size=(5, 3))
    A = rng.integers(4, size=5)
    assert fd_check(net, S, A, rng.normal(size=5)) < 1e-6


def test_tabular_gradient_and_uniform_start():
    t = TabularMerit(3, 5)
    g = t.grad([0, 0, 2], [1, 1, 4], np.array([0.5, 0.25, -1.0]))[0]
    assert g[0, 1] == 0.75 and g[2, 4] == -1.0 and g.sum() == -0.25
    p = boltzmann_policy(t.all_merits([1])[0], 3.0)
    assert np.array_equal(p, np.full(5, 0.2))
    t.update(1, 2, 4.0)
    assert t.get(1, 2) == 4.0


def test_all_merits_consistent_with_merits():
    rng = np.random.default_rng(0)
    for net in (random_debn(rng, [6, 4]), DQN(3, 4, [6], rng)):
        S = rng.normal(size=(3, 3))
        rows = net.all_merits(S)
        for a in range(4):
            np.testing.assert_allclose(rows[:, a], net.merits(S, np.full(3, a)), atol=1e-12)


def test_softplus_stable():
    x = np.array([-1e4, -50.0, -1.0, 0.0, 1.0, 50.0, 1e4])
    y = softplus(x)
    assert np.isfinite(y).all()
    assert y[0] == 0.0 and y[-1] == 1e4
    assert abs(y[3] - np.log(2)) < 1e-15
    net = DEBN(1, np.eye(2), [3], np.random.default_rng(0))
    net.layers[0][0][...] = 1e4
    grads = net.grad(np.array([[1.0], [-1.0]]), [0, 1], [1.0, 1.0])
    assert all(np.isfinite(g).all() for g in grads)
    assert np.isfinite(net.merits(np.array([[1.0]]), [0])).all()


def test_parameter_counts():
    # CartPole nets with one-hot actions: 6 inputs
    counts = [debn_parameter_count(6, w) for w in ([73], [19, 19], [10] * 5)]
    assert counts == [517, 519, 516]
    net = DEBN(4, np.eye(2), [19, 19])
    assert net.n_parameters() == 519
    assert DQN(4, 2, [8]).n_parameters() == dqn_parameter_count(4, 2, [8]) == 4 * 8 + 8 + 8 * 2 + 2


def test_sizing():
    w = size_dqn(10440, 9, 512, 2)
    assert w[0] >= 10 and len(w) == 2
    with pytest.raises(ValueError):
        size_dqn(100, 9, 512, 2)
    debn_w, dqn_w = matched_pair(2460, 5, 8, 225, 2)
    d, q = debn_parameter_count(13, debn_w), dqn_parameter_count(5, 225, dqn_w)
    assert abs(d - q) <= 2 * debn_w[0] + 3
    assert size_debn(debn_parameter_count(10, [7, 7]), 10, 2) == [7, 7]


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    net = random_debn(rng, [4, 2])
    path = tmp_path / "snap.json"
    save_snapshot(net, path)
    other = random_debn(np.random.default_rng(2), [4, 2])
    load_snapshot(other, path)
    assert all(np.array_equal(a, b) for a, b in zip(net.params, other.params))
    snap = net.snapshot()
    snap["values"].append(0.0)
    with pytest.raises(ValueError):
        restore(snap)


def test_copy_is_independent():
    net = random_debn(np.random.default_rng(4), [3])
    clone = net.copy()
    clone.params[1][0, 0] += 1.0
    assert clone.layers[0][0][0, 0] == clone.params[1][0, 0]
    assert net.params[1][0, 0] != clone.params[1][0, 0]


def test_adam_minimises_quadratic():
    x = [np.array([3.0, -2.0])]
    opt = Adam(lr=0.1)
    for _ in range(500):
        opt.step(x, [2 * x[0]])
    assert np.abs(x[0]).max() < 1e-2
    with pytest.raises(ValueError):
        opt.step(x, [np.zeros(3)])


def test_float32_model():
    net = random_debn(np.random.default_rng(0), [4], dtype=np.float32)
    assert net.all_merits(np.zeros((2, 3))).dtype == np.float32


def test_worked_examples():
    net = DEBN(2, binary_table(4), [5])
    for p in net.params:
        p[...] = 0.0
    assert net.merits(np.ones((1, 2)), [3])[0] == pytest.approx(5 * np.log(2))
    assert rbm_free_energy_bruteforce(np.zeros((2, 3)), np.zeros(2), np.zeros(3), np.ones(2)) == pytest.approx(-3 * np.log(2))
    rng = np.random.default_rng(8)
    w, bv, bh, v = rng.normal(size=(3, 1)), rng.normal(size=3), rng.normal(size=1), np.array([1.0, 0.0, 1.0])
    closed = -(bv @ v) - softplus(v @ w[:, 0] + bh[0])
    assert rbm_free_energy_bruteforce(w, bv, bh, v) == pytest.approx(closed, abs=1e-12)
    dqn = DQN(3, 4, [5])
    for p in dqn.params:
        p[...] = 0.0
    assert np.array_equal(dqn.all_merits(np.ones((1, 3))), np.zeros((1, 4)))


def test_debn_gradient_closed_form_one_layer():
    rng = np.random.default_rng(9)
    net = random_debn(rng, [4])
    s, a = rng.normal(size=3), 2
    v = np.concatenate([s, net.action_codes[a]])
    W, c = net.layers[0]
    gW, gb, gc = rbm_free_energy_gradient(W, net.b, c, v)
    grads = debn_backward(net, s, a)
    # merit is minus the free energy
    np.testing.assert_allclose(grads[0], -gb, atol=1e-9)
    np.testing.assert_allclose(grads[1], -gW, atol=1e-9)
    np.testing.assert_allclose(grads[2], -gc, atol=1e-9)
    zero = debn_backward(net, np.zeros(3), 0)
    assert not zero[0].any() and not zero[1].any()


def test_adam_first_step():
    x = [np.array([1.0, -1.0])]
    Adam(lr=0.01).step(x, [np.array([3.0, -0.2])])
    np.testing.assert_allclose(x[0], [0.99, -0.99], atol=1e-6)
    y = [np.array([2.0])]
    Adam(lr=0.01).step(y, [np.zeros(1)])
    assert y[0][0] == 2.0
