import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import component_bruteforce, tsa_straight_line
from snnxai.attribution import (AttributionMap, DecayParams, Variant, class_slice, explain,
                                sam, softmax, spike_component_ns, spike_component_s,
                                spike_components, tsa)
from snnxai.lif import DimensionError, LifConfig, Network, NeuronState, forward, init_network

CFG = LifConfig(dt=0.001, tau_syn=0.004, tau_mem=0.002)


def random_case(seed, sizes, T):
    rng = np.random.default_rng(seed)
    net = init_network(sizes, CFG, seed=seed)
    net.weights = [w * rng.uniform(1, 6) for w in net.weights]
    x = rng.integers(0, 2, size=(sizes[0], T))
    return net, x


class TestComponents:
    def test_no_spikes(self):
        assert spike_component_s(np.zeros(6), 5, 0.3) == 0.0

    def test_single_spike_now(self):
        assert spike_component_s(np.array([0, 0, 1]), 2, 0.7) == 1.0

    def test_two_recent_spikes(self):
        assert spike_component_s(np.array([0, 1, 1]), 2, 0.1) == pytest.approx(1.904837, abs=1e-6)

    def test_silent_window_penalty(self):
        value = spike_component_ns(np.zeros(3), 2, math.log(2), B=4)
        assert value == pytest.approx(-0.4375, abs=1e-12)

    def test_silent_terms_vanish_for_steep_kernel(self):
        train = np.array([0, 0, 0, 1])
        assert spike_component_ns(train, 3, 1e4, B=1) == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=20), st.floats(0.01, 3))
    def test_match_bruteforce(self, bits, gamma):
        train = np.array(bits)
        t = len(bits) - 1
        assert spike_component_s(train, t, gamma) == pytest.approx(
            component_bruteforce(bits, t, gamma), abs=1e-12)
        assert spike_component_ns(train, t, gamma, 3) == pytest.approx(
            component_bruteforce(bits, t, gamma, 3), abs=1e-12)

    def test_all_spiking_ns_equals_s(self):
        train = np.ones(9)
        assert spike_component_ns(train, 8, 0.4, 5) == spike_component_s(train, 8, 0.4)

    @pytest.mark.parametrize("variant", ["tsa-s", "tsa-ns"])
    def test_vectorised_matches_scalar(self, variant):
        trains = np.random.default_rng(0).integers(0, 2, size=(4, 30))
        got = spike_components(trains, DecayParams(0.3, cutoff=0), variant)
        for i in range(4):
            for t in range(30):
                B = None if variant == "tsa-s" else 4
                assert got[i, t] == pytest.approx(
                    component_bruteforce(trains[i], t, 0.3, B), abs=1e-12)

    def test_cutoff_changes_nothing_measurable(self):
        trains = np.random.default_rng(1).integers(0, 2, size=(3, 400))
        full = spike_components(trains, DecayParams(0.5, cutoff=0), Variant.TSA_NS)
        cut = spike_components(trains, DecayParams(0.5), Variant.TSA_NS)
        np.testing.assert_allclose(cut, full, rtol=1e-13, atol=1e-14)

    def test_decay_support(self):
        assert DecayParams(1.0).support(1000) == 36
        assert DecayParams(1.0, cutoff=0).support(1000) == 999

    @pytest.mark.parametrize("kw", [{"gamma": 0}, {"gamma": 1, "cutoff": 1.0}])
    def test_invalid_decay(self, kw):
        with pytest.raises(ValueError):
            DecayParams(**kw)


class TestSoftmax:
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    def test_normalised(self, u):
        p = softmax(np.array(u))
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p >= 0)


class TestTsa:
    def test_single_weight_single_class(self):
        net = Network([1, 1], [np.ones((1, 1))], CFG)
        x = np.array([[0, 0, 1]])
        amap = tsa(net, forward(net, x), x, 2, Variant.TSA_S)
        assert amap.values[0, 0, 2] == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["tsa-s", "tsa-ns", "sam"]),
           st.integers(1, 15))
    def test_matches_straight_line_chain(self, seed, variant, T):
        net, x = random_case(seed, [2, 4, 3], T)
        t = T - 1
        amap = tsa(net, forward(net, x), x, t, variant)
        expect = tsa_straight_line(net, x, t, CFG.dt / CFG.tau_mem, variant)
        np.testing.assert_allclose(amap.values, expect, rtol=1e-9, atol=1e-9)

    def test_silent_input_gives_zero_map_without_bias(self):
        net = init_network([3, 5, 2], CFG, seed=0)
        x = np.zeros((3, 25), dtype=int)
        for variant in ("tsa-s", "sam"):
            assert np.all(tsa(net, forward(net, x), x, 24, variant).values == 0)

    def test_fully_active_network_ns_equals_s(self):
        net = Network([2, 3, 2], [np.full((2, 3), 5.0), np.ones((3, 2))], CFG)
        x = np.ones((2, 12), dtype=int)
        init = NeuronState([np.full(3, 10.0), np.zeros(2)], [np.zeros(3), np.zeros(2)])
        trace = forward(net, x, init)
        assert np.all(trace.spikes[1] == 1)
        s = tsa(net, trace, x, 11, Variant.TSA_S).values
        ns = tsa(net, trace, x, 11, Variant.TSA_NS).values
        np.testing.assert_allclose(ns, s, rtol=0, atol=1e-12)

    def test_zero_on_silent_steps(self):
        # TSA-S is zero at every step where no input has spiked within the kernel support
        net, x = random_case(3, [3, 4, 2], 200)
        x[:, 50:] = 0
        amap = tsa(net, forward(net, x), x, 199, Variant.TSA_S)
        decay = DecayParams.from_network(net)
        dead = 50 + decay.support(200)
        assert np.all(amap.values[:, :, dead:] == 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_sam_non_negative(self, seed):
        net, x = random_case(seed, [3, 5, 3], 30)
        assert np.all(sam(net, forward(net, x), x, 29).values >= 0)

    def test_softmax_factor_is_diagonal(self):
        net, x = random_case(7, [3, 4, 3], 20)
        trace = forward(net, x)
        amap = tsa(net, trace, x, 19, Variant.TSA_NS)
        probs = softmax(trace.out_potentials, axis=0)
        bare = amap.values / probs[:, None, :]
        np.testing.assert_allclose(bare * probs[:, None, :], amap.values, rtol=1e-12)
        # the bare chain does not depend on the readout potentials
        trace.out_potentials = trace.out_potentials + np.random.default_rng(0).normal(size=(3, 20))
        probs2 = softmax(trace.out_potentials, axis=0)
        other = tsa(net, trace, x, 19, Variant.TSA_NS)
        np.testing.assert_allclose(other.values / probs2[:, None, :], bare, rtol=1e-10,
                                   atol=1e-12)

    def test_kernel_decay_monotone(self):
        net = Network([2, 1], [np.array([[0.8], [-0.3]])], CFG)
        x = np.zeros((2, 30), dtype=int)
        x[0, 4] = 1
        values = np.abs(tsa(net, forward(net, x), x, 29, Variant.TSA_S).values[0, 0, 4:])
        assert np.all(np.diff(values) <= 0)

    def test_mismatched_trace(self):
        net, x = random_case(0, [2, 4, 3], 10)
        other = init_network([2, 5, 3], CFG, seed=1)
        with pytest.raises(DimensionError):
            tsa(net, forward(other, x), x, 9)

    def test_t_outside_window(self):
        net, x = random_case(0, [2, 4, 3], 10)
        with pytest.raises(IndexError):
            tsa(net, forward(net, x), x, 10)

    def test_explain_uses_last_step(self):
        net, x = random_case(4, [2, 4, 3], 12)
        a = explain(net, x, "tsa-ns")
        b = tsa(net, forward(net, x), x, 11, "tsa-ns")
        assert a.t_explained == 11 and np.array_equal(a.values, b.values)


class TestClassSlice:
    def test_restack(self):
        net, x = random_case(5, [2, 4, 3], 10)
        amap = explain(net, x)
        stacked = np.stack([class_slice(amap, c) for c in range(amap.n_classes)])
        assert np.array_equal(stacked, amap.values)

    def test_zero_map(self):
        amap = AttributionMap(np.zeros((2, 3, 4)), 3, "sam")
        assert np.all(class_slice(amap, 1) == 0)

    def test_matches_oracle_column(self):
        net, x = random_case(6, [2, 4, 3], 8)
        amap = explain(net, x, "tsa-s")
        expect = tsa_straight_line(net, x, 7, CFG.dt / CFG.tau_mem, "tsa-s")
        np.testing.assert_allclose(class_slice(amap, 2), expect[2], rtol=1e-9, atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            class_slice(AttributionMap(np.zeros((2, 3, 4)), 3, "sam"), 2)
