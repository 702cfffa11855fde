"""Clock-driven simulation of fully connected LIF networks.

Every non-input layer keeps a synaptic current and a membrane potential.
Per step ``n`` a layer receives ``I[n] = s_prev[n] @ W`` and updates::

    syn[n] = alpha * syn[n-1] + I[n]
    v[n]   = u_rest + beta * (mem[n-1] - u_rest) + syn[n-1]
    s[n]   = v[n] > theta                (hidden layers only)
    mem[n] = u_reset where s[n] else v[n]

The last layer is a non-spiking leaky readout whose potentials ``U`` decide
the predicted class.

Arrays are time-last at the public surface (``neurons x T``, optionally
with leading batch axes) and time-first internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.signal import lfilter


class NumericBlowupError(FloatingPointError):
    """Raised when non-finite values enter or leave the simulation."""


class DimensionError(ValueError):
    """Raised on shape mismatches between networks, traces and inputs."""


@dataclass(frozen=True)
class LifConfig:
    dt: float = 0.001
    tau_syn: float = 0.01
    tau_mem: float = 0.001
    theta: float = 1.0
    u_rest: float = 0.0
    u_reset: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and self.tau_syn > 0 and self.tau_mem > 0):
            raise ValueError("dt, tau_syn and tau_mem must be positive")
        if not self.theta > self.u_rest:
            raise ValueError("theta must exceed u_rest")
        if self.u_reset > self.u_rest:
            raise ValueError("u_reset must not exceed u_rest")

    @property
    def alpha(self) -> float:
        """Synaptic decay factor per step."""
        return float(np.exp(-self.dt / self.tau_syn))

    @property
    def beta(self) -> float:
        """Membrane decay factor per step."""
        return float(np.exp(-self.dt / self.tau_mem))


@dataclass
class Network:
    layer_sizes: List[int]
    weights: List[np.ndarray]
    config: LifConfig = field(default_factory=LifConfig)

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise DimensionError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise DimensionError(
                f"{len(self.layer_sizes)} layers need {len(self.layer_sizes) - 1} "
                f"weight matrices, got {len(self.weights)}"
            )
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        for l, w in enumerate(self.weights):
            expected = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != expected:
                raise DimensionError(f"weights[{l}] has shape {w.shape}, expected {expected}")
            if not np.all(np.isfinite(w)):
                raise NumericBlowupError(f"weights[{l}] contains non-finite entries")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "Network":
        return Network(list(self.layer_sizes), [w.copy() for w in self.weights], self.config)


def init_network(layer_sizes: Sequence[int], config: Optional[LifConfig] = None,
                 seed: int = 0) -> Network:
    """Gaussian weights with standard deviation ``1/sqrt(fan_in)``."""
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out))
               for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:])]
    return Network(list(layer_sizes), weights, config or LifConfig())


@dataclass
class NeuronState:
    """Synaptic currents and membrane potentials, one pair per non-input layer."""
    syn: List[np.ndarray]
    mem: List[np.ndarray]

    @classmethod
    def rest(cls, network: Network, batch_shape: tuple = ()) -> "NeuronState":
        cfg = network.config
        syn = [np.zeros(batch_shape + (n,)) for n in network.layer_sizes[1:]]
        mem = [np.full(batch_shape + (n,), cfg.u_rest) for n in network.layer_sizes[1:]]
        return cls(syn, mem)

    def copy(self) -> "NeuronState":
        return NeuronState([s.copy() for s in self.syn], [m.copy() for m in self.mem])


@dataclass
class SimulationTrace:
    """Spike trains of the input and hidden layers plus readout potentials.

    ``spikes[0]`` is the input itself. Shapes are ``(..., n, T)``.
    """
    spikes: List[np.ndarray]
    out_potentials: np.ndarray
    final_state: NeuronState

    @property
    def n_steps(self) -> int:
        return self.out_potentials.shape[-1]


def lif_step(syn: np.ndarray, mem: np.ndarray, input_current: np.ndarray,
             config: LifConfig, spiking: bool = True):
    """Advance one layer by one step.

    Returns ``(syn, mem, spikes)``; ``spikes`` is ``None`` for a readout layer.
    """
    input_current = np.asarray(input_current, dtype=np.float64)
    syn = np.asarray(syn, dtype=np.float64)
    mem = np.asarray(mem, dtype=np.float64)
    if syn.shape != mem.shape or input_current.shape != syn.shape:
        raise DimensionError(
            f"state {syn.shape}/{mem.shape} and current {input_current.shape} disagree")
    if not np.all(np.isfinite(input_current)):
        raise NumericBlowupError("non-finite input current")
    new_syn = config.alpha * syn + input_current
    new_mem = config.u_rest + config.beta * (mem - config.u_rest) + syn
    if not spiking:
        return new_syn, new_mem, None
    spikes = (new_mem > config.theta).astype(np.float64)
    new_mem = np.where(spikes > 0, config.u_reset, new_mem)
    return new_syn, new_mem, spikes


def synaptic_filter(currents: np.ndarray, syn0: np.ndarray, alpha: float) -> np.ndarray:
    """``syn[n] = alpha*syn[n-1] + currents[n]`` along axis 0, ``syn[-1] = syn0``."""
    return lfilter([1.0], [1.0, -alpha], currents, axis=0, zi=(alpha * syn0)[None])[0]


def shifted(seq: np.ndarray, first: np.ndarray) -> np.ndarray:
    """``out[0] = first``, ``out[n] = seq[n-1]``: the previous-step view of ``seq``."""
    return np.concatenate([first[None], seq[:-1]], axis=0)


def spiking_layer(currents: np.ndarray, syn0: np.ndarray, mem0: np.ndarray,
                  config: LifConfig):
    """Simulate one spiking layer over time (time-first arrays).

    Returns ``(syn, v, spikes, mem)`` where ``v`` is the pre-reset potential.
    """
    syn = synaptic_filter(currents, syn0, config.alpha)
    drive = shifted(syn, syn0)
    beta, u_rest, theta, u_reset = config.beta, config.u_rest, config.theta, config.u_reset
    v = np.empty_like(drive)
    spikes = np.empty_like(drive)
    mem = mem0
    for n in range(drive.shape[0]):
        vn = u_rest + beta * (mem - u_rest) + drive[n]
        sn = vn > theta
        v[n] = vn
        spikes[n] = sn
        mem = np.where(sn, u_reset, vn)
    return syn, v, spikes, mem


def readout_layer(currents: np.ndarray, syn0: np.ndarray, mem0: np.ndarray,
                  config: LifConfig):
    """Non-spiking leaky integrator; returns ``(syn, U)`` time-first."""
    syn = synaptic_filter(currents, syn0, config.alpha)
    drive = shifted(syn, syn0)
    beta, u_rest = config.beta, config.u_rest
    rel = lfilter([1.0], [1.0, -beta], drive, axis=0, zi=(beta * (mem0 - u_rest))[None])[0]
    return syn, rel + u_rest


def forward(network: Network, x: np.ndarray,
            initial: Optional[NeuronState] = None) -> SimulationTrace:
    """Run ``network`` on a binary input window of shape ``(..., D, T)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[-2] != network.n_inputs:
        raise DimensionError(
            f"input has shape {x.shape}, expected (..., {network.n_inputs}, T)")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("input must be binary")
    batch_shape = x.shape[:-2]
    if initial is None:
        initial = NeuronState.rest(network, batch_shape)
    _check_state(network, initial, batch_shape)

    cfg = network.config
    s = np.moveaxis(x, -1, 0)
    spikes = [x]
    syn_out, mem_out = [], []
    for l, w in enumerate(network.weights):
        currents = s @ w
        if l < len(network.weights) - 1:
            syn, _, s, mem = spiking_layer(currents, initial.syn[l], initial.mem[l], cfg)
            spikes.append(np.moveaxis(s, 0, -1))
            syn_out.append(syn[-1])
            mem_out.append(mem)
        else:
            syn, u = readout_layer(currents, initial.syn[l], initial.mem[l], cfg)
            syn_out.append(syn[-1])
            mem_out.append(u[-1])
    out = np.moveaxis(u, 0, -1)
    if not np.all(np.isfinite(out)):
        raise NumericBlowupError("readout potentials became non-finite")
    return SimulationTrace(spikes, out, NeuronState(syn_out, mem_out))


def _check_state(network: Network, state: NeuronState, batch_shape: tuple):
    if len(state.syn) != len(network.weights) or len(state.mem) != len(network.weights):
        raise DimensionError("state does not match the number of layers")
    for n, syn, mem in zip(network.layer_sizes[1:], state.syn, state.mem):
        if np.shape(syn) != batch_shape + (n,) or np.shape(mem) != batch_shape + (n,):
            raise DimensionError(
                f"state shapes {np.shape(syn)}/{np.shape(mem)}, expected {batch_shape + (n,)}")
        if not (np.all(np.isfinite(syn)) and np.all(np.isfinite(mem))):
            raise NumericBlowupError("non-finite neuron state")


def predict(trace: SimulationTrace, t: int):
    """Class with the largest readout potential at step ``t``; ties go to the lowest index."""
    T = trace.n_steps
    if not -T <= t < T:
        raise IndexError(f"step {t} outside trace of length {T}")
    return np.argmax(trace.out_potentials[..., t], axis=-1)


def predict_series(network: Network, x: np.ndarray,
                   initial: Optional[NeuronState] = None) -> np.ndarray:
    """Per-step predictions for a whole input, shape ``(..., T)``."""
    trace = forward(network, x, initial)
    return np.argmax(trace.out_potentials, axis=-2)
