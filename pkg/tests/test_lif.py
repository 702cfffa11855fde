import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snnxai.lif import (DimensionError, LifConfig, Network, NeuronState, NumericBlowupError,
                        forward, init_network, lif_step, predict)


def half_decay_config(**kw):
    # alpha = beta = 0.5
    tau = 0.001 / math.log(2)
    return LifConfig(dt=0.001, tau_syn=tau, tau_mem=tau, **kw)


def stepwise_forward(network, x):
    """Reference simulation through lif_step one step at a time."""
    cfg = network.config
    syn = [np.zeros(n) for n in network.layer_sizes[1:]]
    mem = [np.zeros(n) for n in network.layer_sizes[1:]]
    T = x.shape[1]
    hidden = [np.zeros((n, T)) for n in network.layer_sizes[1:-1]]
    U = np.zeros((network.n_classes, T))
    for n in range(T):
        s = x[:, n].astype(float)
        for l, w in enumerate(network.weights):
            last = l == len(network.weights) - 1
            syn[l], mem[l], spk = lif_step(syn[l], mem[l], s @ w, cfg, spiking=not last)
            if last:
                U[:, n] = mem[l]
            else:
                hidden[l][:, n] = spk
                s = spk
    return hidden, U


class TestLifStep:
    def test_rest_is_fixed_point(self):
        syn, mem, spk = lif_step(np.zeros(3), np.zeros(3), np.zeros(3), LifConfig())
        assert np.all(syn == 0) and np.all(mem == 0) and np.all(spk == 0)

    def test_membrane_decay_factor(self):
        cfg = LifConfig(dt=0.001, tau_mem=0.01, theta=1.5)
        assert cfg.beta == pytest.approx(0.904837, abs=1e-6)
        _, mem, spk = lif_step(np.zeros(1), np.ones(1), np.zeros(1), cfg)
        assert mem[0] == pytest.approx(0.904837, abs=1e-6)
        assert spk[0] == 0

    def test_threshold_crossing_resets(self):
        cfg = LifConfig()
        _, mem, spk = lif_step(np.array([1.2]), np.array([0.0]), np.zeros(1), cfg)
        assert spk[0] == 1 and mem[0] == 0.0

    def test_non_finite_current_raises(self):
        with pytest.raises(NumericBlowupError):
            lif_step(np.zeros(2), np.zeros(2), np.array([np.nan, 0.0]), LifConfig())

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            lif_step(np.zeros(2), np.zeros(2), np.zeros(3), LifConfig())

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.001, 5))
    def test_monotone_drive(self, syn0, mem0, extra):
        cfg = half_decay_config(theta=1e9)
        _, base, _ = lif_step(np.array([syn0]), np.array([mem0]), np.zeros(1), cfg)
        _, more, _ = lif_step(np.array([syn0 + extra]), np.array([mem0]), np.zeros(1), cfg)
        assert more[0] >= base[0]


@pytest.mark.parametrize("kw", [{"dt": 0}, {"tau_mem": -1}, {"u_reset": 2.0}])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        LifConfig(**kw)


class TestForward:
    def test_silent_input(self):
        net = init_network([3, 5, 4], seed=0)
        # without a bias row nothing can drive the network
        trace = forward(net, np.zeros((3, 50)))
        assert all(np.all(s == 0) for s in trace.spikes)
        assert np.all(trace.out_potentials == 0)

    def test_hand_unrolled_readout(self):
        net = Network([1, 1], [np.ones((1, 1))], half_decay_config())
        trace = forward(net, np.array([[1, 0, 0]]))
        # syn = 1, .5, .25 ; U[n] = .5 U[n-1] + syn[n-1]
        np.testing.assert_allclose(trace.out_potentials[0], [0.0, 1.0, 1.0])

    @pytest.mark.parametrize("sizes", [[2, 3], [3, 4, 2], [4, 5, 3, 2]])
    def test_matches_stepwise_reference(self, sizes):
        rng = np.random.default_rng(1)
        cfg = LifConfig(dt=0.001, tau_syn=0.005, tau_mem=0.003)
        net = init_network(sizes, cfg, seed=2)
        net.weights = [w * 3 for w in net.weights]
        x = rng.integers(0, 2, size=(sizes[0], 40))
        trace = forward(net, x)
        hidden, U = stepwise_forward(net, x)
        for got, ref in zip(trace.spikes[1:], hidden):
            np.testing.assert_array_equal(got, ref)
        np.testing.assert_allclose(trace.out_potentials, U, atol=1e-12)

    def test_decay_closed_form(self):
        rng = np.random.default_rng(5)
        cfg = LifConfig(dt=0.001, tau_syn=0.004, tau_mem=0.002, theta=1e9)
        net = Network([2, 3], [rng.normal(size=(2, 3))], cfg)
        syn0, mem0 = rng.normal(size=3), rng.normal(size=3)
        init = NeuronState([syn0], [mem0])
        T = 15
        U = forward(net, np.zeros((2, T)), init).out_potentials
        a, b = cfg.alpha, cfg.beta
        for n in range(T):
            syn_terms = sum(b ** (n - k) * a ** k for k in range(n + 1))
            expect = b ** (n + 1) * mem0 + syn_terms * syn0
            np.testing.assert_allclose(U[:, n], expect, atol=1e-9)

    def test_deterministic_and_binary(self):
        net = init_network([3, 6, 4], seed=3)
        x = np.random.default_rng(0).integers(0, 2, size=(3, 200))
        x[-1] = 1
        a, b = forward(net, x), forward(net, x)
        for s, t in zip(a.spikes, b.spikes):
            assert np.array_equal(s, t)
            assert set(np.unique(s)) <= {0.0, 1.0}
        assert np.array_equal(a.out_potentials, b.out_potentials)

    def test_batched_equals_single(self):
        net = init_network([3, 6, 4], seed=3)
        xs = np.random.default_rng(1).integers(0, 2, size=(4, 3, 60))
        batched = forward(net, xs).out_potentials
        for i in range(4):
            np.testing.assert_allclose(batched[i], forward(net, xs[i]).out_potentials,
                                       atol=1e-12)

    def test_state_carries_across_windows(self):
        net = init_network([3, 6, 4], seed=4)
        x = np.random.default_rng(2).integers(0, 2, size=(3, 80))
        whole = forward(net, x).out_potentials
        first = forward(net, x[:, :30])
        rest = forward(net, x[:, 30:], first.final_state).out_potentials
        np.testing.assert_allclose(np.hstack([first.out_potentials, rest]), whole, atol=1e-12)

    def test_wrong_input_dimension(self):
        with pytest.raises(DimensionError):
            forward(init_network([3, 4, 2], seed=0), np.zeros((2, 10)))

    def test_non_binary_input(self):
        with pytest.raises(ValueError):
            forward(init_network([2, 2], seed=0), np.full((2, 3), 0.5))


class TestPredict:
    @pytest.mark.parametrize("u, expect", [([0.2, 0.7, 0.1], 1), ([0.3, 0.3, 0.3], 0),
                                           ([-0.3, -0.1], 1)])
    def test_argmax(self, u, expect):
        net = init_network([1, len(u)], seed=0)
        trace = forward(net, np.zeros((1, 1)))
        trace.out_potentials = np.array(u, dtype=float)[:, None]
        assert predict(trace, 0) == expect


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_init_is_seeded(seed):
    a, b = init_network([3, 4, 2], seed=seed), init_network([3, 4, 2], seed=seed)
    assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))
