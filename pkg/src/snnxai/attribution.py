"""Temporal spike attribution (TSA-S, TSA-NS) and the spike activation map baseline.

For every step ``t'`` of an explanation window each layer gets a spike-time
score ``N(t')``: an exponentially decaying sum of the layer's past spikes,
optionally minus ``1/B`` of the same kernel at silent steps. Scores and
weights are chained from the input layer to the readout::

    C(t') = diag(N_0(t')) W_0 diag(N_1(t')) W_1 ... W_{L-1}        (D x O)
    A(t') = C(t') diag(softmax(U(t')))

and the map stores ``A(t')`` transposed for every ``t'`` up to the explained
step. SAM uses the same chaining with spikes-only scores, all-ones weights and
no softmax factor.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .lif import DimensionError, Network, NeuronState, SimulationTrace, forward


class Variant(str, enum.Enum):
    TSA_S = "tsa-s"
    TSA_NS = "tsa-ns"
    SAM = "sam"


@dataclass(frozen=True)
class DecayParams:
    """Kernel ``exp(-gamma * lag)``; lags whose weight drops below ``cutoff`` are ignored.

    The default cutoff is double-precision epsilon, so a spike is dropped only
    once it can no longer change a unit-scale score. ``cutoff=0`` keeps the
    whole window.
    """
    gamma: float
    cutoff: float = float(np.finfo(np.float64).eps)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 <= self.cutoff < 1:
            raise ValueError("cutoff must lie in [0, 1)")

    def support(self, n_steps: int) -> int:
        """Largest lag that still contributes within a window of ``n_steps``."""
        if self.cutoff == 0:
            return n_steps - 1
        return int(min(n_steps - 1, np.floor(-np.log(self.cutoff) / self.gamma)))

    @classmethod
    def from_network(cls, network: Network) -> "DecayParams":
        """Kernel decaying at the membrane rate: ``exp(-gamma) == beta``."""
        cfg = network.config
        return cls(cfg.dt / cfg.tau_mem)


@dataclass
class AttributionMap:
    values: np.ndarray
    t_explained: int
    variant: Variant

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.values.ndim != 3:
            raise DimensionError("attribution values must be classes x dims x steps")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("attribution map contains non-finite values")

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]


def spike_component_s(spike_train, t: int, gamma: float) -> float:
    """Decayed count of spikes at or before ``t``."""
    train = np.asarray(spike_train)
    if not 0 <= t < train.size:
        raise IndexError(f"step {t} outside window of {train.size}")
    lags = t - np.flatnonzero(train[:t + 1])
    return float(np.exp(-gamma * lags).sum())


def spike_component_ns(spike_train, t: int, gamma: float, B: int) -> float:
    """Like :func:`spike_component_s`, with silent steps counting ``-1/B``."""
    if B < 1:
        raise ValueError("B must be at least 1")
    train = np.asarray(spike_train)
    if not 0 <= t < train.size:
        raise IndexError(f"step {t} outside window of {train.size}")
    kernel = np.exp(-gamma * (t - np.arange(t + 1)))
    weight = np.where(train[:t + 1] > 0, 1.0, -1.0 / B)
    return float((kernel * weight).sum())


def spike_components(trains: np.ndarray, decay: DecayParams, variant: Variant) -> np.ndarray:
    """Scores of every neuron at every step of the window.

    ``trains`` is ``(n, T)``; entry ``[i, t']`` equals the single-neuron
    component evaluated at ``t'``. ``B`` is the layer size ``n``.
    """
    trains = np.asarray(trains, dtype=np.float64)
    if Variant(variant) == Variant.TSA_NS:
        drive = np.where(trains > 0, 1.0, -1.0 / trains.shape[0])
    else:
        drive = trains
    kernel = np.exp(-decay.gamma * np.arange(decay.support(trains.shape[-1]) + 1))
    return lfilter(kernel, [1.0], drive, axis=-1)


def softmax(u: np.ndarray, axis: int = 0) -> np.ndarray:
    z = u - u.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _chain(layer_scores, weights, d_in: int) -> np.ndarray:
    """``C(t')`` for all ``t'`` at once: shape ``(T, D, O)``."""
    chain = None
    for l, (scores, w) in enumerate(zip(layer_scores, weights)):
        # scores: (n_l, T); w: (n_l, n_{l+1})
        scaled = scores.T[:, :, None] * w[None]
        chain = scaled if chain is None else chain @ scaled
        assert chain.shape[1:] == (d_in, w.shape[1]), chain.shape
    return chain


def _check(network: Network, trace: SimulationTrace, x: np.ndarray, t: int):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != network.n_inputs:
        raise DimensionError(f"input of shape {x.shape} does not fit the network")
    if len(trace.spikes) != len(network.weights) or trace.out_potentials.shape != (
            network.n_classes, x.shape[1]):
        raise DimensionError("trace was not produced by this network on this input")
    for s, n in zip(trace.spikes, network.layer_sizes):
        if s.shape != (n, x.shape[1]):
            raise DimensionError("trace was not produced by this network on this input")
    if not 0 <= t < x.shape[1]:
        raise IndexError(f"step {t} outside window of {x.shape[1]}")


def tsa(network: Network, trace: SimulationTrace, x: np.ndarray, t: int,
        variant: Variant = Variant.TSA_NS, decay: Optional[DecayParams] = None) -> AttributionMap:
    """Temporal spike attribution of every class for steps ``0..t`` of the window."""
    variant = Variant(variant)
    if variant == Variant.SAM:
        return sam(network, trace, x, t, decay)
    _check(network, trace, x, t)
    decay = decay or DecayParams.from_network(network)
    layers = [np.asarray(x, dtype=np.float64)] + [s for s in trace.spikes[1:]]
    scores = [spike_components(s[:, :t + 1], decay, variant) for s in layers]
    chain = _chain(scores, network.weights, network.n_inputs)
    probs = softmax(trace.out_potentials[:, :t + 1], axis=0)
    values = chain * probs.T[:, None, :]
    return AttributionMap(np.ascontiguousarray(values.transpose(2, 1, 0)), t, variant)


def sam(network: Network, trace: SimulationTrace, x: np.ndarray, t: int,
        decay: Optional[DecayParams] = None) -> AttributionMap:
    """Spike activation map: spikes-only scores chained through all-ones weights."""
    _check(network, trace, x, t)
    decay = decay or DecayParams.from_network(network)
    layers = [np.asarray(x, dtype=np.float64)] + [s for s in trace.spikes[1:]]
    scores = [spike_components(s[:, :t + 1], decay, Variant.TSA_S) for s in layers]
    ones = [np.ones_like(w) for w in network.weights]
    chain = _chain(scores, ones, network.n_inputs)
    return AttributionMap(np.ascontiguousarray(chain.transpose(2, 1, 0)), t, Variant.SAM)


def class_slice(amap: AttributionMap, cls: int) -> np.ndarray:
    if not 0 <= cls < amap.n_classes:
        raise IndexError(f"class {cls} outside 0..{amap.n_classes - 1}")
    return amap.values[cls]


def explain(network: Network, x: np.ndarray, method="tsa-ns",
            decay: Optional[DecayParams] = None,
            initial: Optional[NeuronState] = None) -> AttributionMap:
    """Simulate ``x`` and explain its last step."""
    trace = forward(network, x, initial)
    return tsa(network, trace, x, np.shape(x)[1] - 1, Variant(method), decay)


def make_explainer(method, decay: Optional[DecayParams] = None):
    """Callable ``(network, x) -> AttributionMap`` explaining the last step of ``x``."""
    method = Variant(method)

    def explainer(network, x):
        return explain(network, x, method, decay)

    explainer.method = method
    return explainer
