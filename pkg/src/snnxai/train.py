"""Surrogate-gradient training and classification metrics.

Training runs truncated backpropagation through time over a single long
series. The series is cut into ``batch_size`` contiguous streams that are
simulated side by side; each stream is walked in windows of ``window_len``
steps, and the neuron state at the end of one window seeds the next one
(gradients stop at the window boundary). One optimizer step is taken per
window.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from .lif import Network, NeuronState, readout_layer, shifted, synaptic_filter

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Training diverged."""

    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 10
    surrogate_slope: float = 100.0
    seed: int = 0
    window_len: int = 1000
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("batch_size", "max_epochs", "patience", "window_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.surrogate_slope <= 0:
            raise ValueError("surrogate_slope must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    train_loss: List[float] = field(default_factory=list)
    train_ba: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_ba: List[float] = field(default_factory=list)
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "train_ba": self.train_ba,
            "val_loss": self.val_loss,
            "val_ba": self.val_ba,
            "best_epoch": self.best_epoch,
        }


def surrogate_spike_grad(v, slope: float):
    """Fast-sigmoid surrogate derivative ``1 / (1 + slope*|v|)**2``."""
    if slope <= 0:
        raise ValueError("slope must be positive")
    return 1.0 / (1.0 + slope * np.abs(v)) ** 2


def smooth_spike(v, slope: float):
    """Smooth relaxation of the step function, ``0.5 * (1 + slope*v / (1 + slope*|v|))``."""
    return 0.5 * (1.0 + slope * v / (1.0 + slope * np.abs(v)))


def smooth_spike_grad(v, slope: float):
    return 0.5 * slope / (1.0 + slope * np.abs(v)) ** 2


# ---------------------------------------------------------------------------
# differentiable simulation
# ---------------------------------------------------------------------------

def _reverse_filter(seq: np.ndarray, coef: float) -> np.ndarray:
    """``out[n] = coef*out[n+1] + seq[n+1]``, ``out[T-1] = 0``."""
    nxt = np.concatenate([seq[1:], np.zeros_like(seq[:1])], axis=0)
    return lfilter([1.0], [1.0, -coef], nxt[::-1], axis=0)[::-1]


def _forward_cached(network: Network, x: np.ndarray, state: NeuronState,
                    slope: float, smooth: bool):
    """Time-first forward pass keeping what the backward pass needs.

    ``x`` has shape ``(T, B, D)``.
    """
    cfg = network.config
    beta, u_rest, theta, u_reset = cfg.beta, cfg.u_rest, cfg.theta, cfg.u_reset
    acts = [x]
    cache = []
    syn_last, mem_last = [], []
    s = x
    n_layers = len(network.weights)
    for l, w in enumerate(network.weights):
        currents = s @ w
        if l == n_layers - 1:
            syn, u = readout_layer(currents, state.syn[l], state.mem[l], cfg)
            syn_last.append(syn[-1])
            mem_last.append(u[-1])
            break
        syn = synaptic_filter(currents, state.syn[l], cfg.alpha)
        drive = shifted(syn, state.syn[l])
        v = np.empty_like(drive)
        out = np.empty_like(drive)
        mem = state.mem[l]
        for n in range(drive.shape[0]):
            vn = u_rest + beta * (mem - u_rest) + drive[n]
            sn = smooth_spike(vn - theta, slope) if smooth else (vn > theta).astype(np.float64)
            v[n] = vn
            out[n] = sn
            mem = vn * (1.0 - sn) + u_reset * sn
        cache.append(v)
        acts.append(out)
        syn_last.append(syn[-1])
        mem_last.append(mem)
        s = out
    return acts, cache, u, NeuronState(syn_last, mem_last)


def _nll(u: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood of ``softmax(u)`` and its gradient w.r.t. ``u``."""
    z = u - u.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    count = labels.size
    loss = -picked.sum() / count
    grad = np.exp(logp)
    np.put_along_axis(grad, labels[..., None],
                      np.take_along_axis(grad, labels[..., None], axis=-1) - 1.0, axis=-1)
    return loss, grad / count


def _backward(network: Network, acts, cache, du: np.ndarray, slope: float,
              smooth: bool, detach_reset: bool) -> List[np.ndarray]:
    cfg = network.config
    alpha, beta, theta, u_reset = cfg.alpha, cfg.beta, cfg.theta, cfg.u_reset
    grads = [None] * len(network.weights)

    # readout: U[n] = beta*U[n-1] + syn[n-1]
    du_total = lfilter([1.0], [1.0, -beta], du[::-1], axis=0)[::-1]
    dcur = _reverse_filter(du_total, alpha)
    L = len(network.weights) - 1
    grads[L] = np.einsum("tbi,tbj->ij", acts[L], dcur)
    for l in range(L - 1, -1, -1):
        ds = dcur @ network.weights[l + 1].T
        v = cache[l]
        s = acts[l + 1]
        vt = v - theta
        g = smooth_spike_grad(vt, slope) if smooth else surrogate_spike_grad(vt, slope)
        coef = 1.0 - s
        if not detach_reset:
            coef = coef + (u_reset - v) * g
        coef = beta * coef
        b = ds * g
        dv = np.empty_like(v)
        carry = np.zeros_like(v[0])
        for n in range(v.shape[0] - 1, -1, -1):
            carry = coef[n] * carry + b[n]
            dv[n] = carry
        dcur = _reverse_filter(dv, alpha)
        grads[l] = np.einsum("tbi,tbj->ij", acts[l], dcur)
    return grads


def loss_and_grads(network: Network, x: np.ndarray, labels: np.ndarray,
                   state: Optional[NeuronState] = None, slope: float = 100.0,
                   smooth: bool = False, detach_reset: bool = True):
    """Window loss and weight gradients.

    ``x`` is ``(T, B, D)`` and ``labels`` ``(T, B)``. With ``smooth=True`` the
    step nonlinearity is replaced by :func:`smooth_spike` in both passes, which
    makes the returned gradient the exact derivative of the returned loss when
    ``detach_reset`` is off.

    Returns ``(loss, grads, u, final_state)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if state is None:
        state = NeuronState.rest(network, x.shape[1:-1])
    acts, cache, u, final = _forward_cached(network, x, state, slope, smooth)
    loss, du = _nll(u, labels)
    grads = _backward(network, acts, cache, du, slope, smooth, detach_reset)
    return loss, grads, u, final


# ---------------------------------------------------------------------------
# optimisers
# ---------------------------------------------------------------------------

class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class _Adam:
    def __init__(self, lr, shapes, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.k = 0

    def step(self, params, grads):
        self.k += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.k)
            vhat = v / (1 - self.b2 ** self.k)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _streams(data: np.ndarray, labels: np.ndarray, n_streams: int):
    """Cut a ``(D, T)`` series into ``(T // n, n, D)`` side-by-side streams."""
    T = data.shape[1]
    n = max(1, min(n_streams, T))
    length = T // n
    x = data[:, :n * length].reshape(data.shape[0], n, length).transpose(2, 1, 0)
    y = labels[:n * length].reshape(n, length).T
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


def evaluate_series(network: Network, series) -> Tuple[float, float, np.ndarray]:
    """Loss, balanced accuracy and predictions over a whole series from rest."""
    from .lif import forward
    trace = forward(network, series.data)
    u = trace.out_potentials.T
    loss, _ = _nll(u, np.asarray(series.labels))
    preds = np.argmax(u, axis=-1)
    ba = balanced_accuracy(preds, series.labels, network.n_classes)
    return float(loss), ba, preds


def train(network: Network, train_series, val_series=None,
          cfg: TrainConfig = TrainConfig()):
    """Fit ``network`` to per-step labels; returns ``(best_network, report)``."""
    if train_series.data.shape[0] != network.n_inputs:
        raise ValueError(
            f"series has {train_series.data.shape[0]} channels, network expects {network.n_inputs}")
    net = network.copy()
    x, y = _streams(np.asarray(train_series.data, dtype=np.float64),
                    np.asarray(train_series.labels), cfg.batch_size)
    if cfg.optimizer == "adam":
        opt = _Adam(cfg.learning_rate, [w.shape for w in net.weights])
    else:
        opt = _SGD(cfg.learning_rate)

    report = TrainReport()
    best, best_loss, stale = net.copy(), np.inf, 0
    n_classes = net.n_classes
    for epoch in range(cfg.max_epochs):
        state = NeuronState.rest(net, (x.shape[1],))
        total, count = 0.0, 0
        preds = np.empty_like(y)
        for start in range(0, x.shape[0], cfg.window_len):
            xw = x[start:start + cfg.window_len]
            yw = y[start:start + cfg.window_len]
            loss, grads, u, state = loss_and_grads(
                net, xw, yw, state, slope=cfg.surrogate_slope)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(epoch)
            opt.step(net.weights, grads)
            if not all(np.all(np.isfinite(w)) for w in net.weights):
                raise TrainingError(epoch, "weights became non-finite")
            total += loss * yw.size
            count += yw.size
            preds[start:start + cfg.window_len] = np.argmax(u, axis=-1)
        report.train_loss.append(total / count)
        report.train_ba.append(balanced_accuracy(preds.ravel(), y.ravel(), n_classes))

        if val_series is not None:
            val_loss, val_ba, _ = evaluate_series(net, val_series)
            if not np.isfinite(val_loss):
                raise TrainingError(epoch, "non-finite validation loss")
            report.val_loss.append(val_loss)
            report.val_ba.append(val_ba)
            monitored = val_loss
        else:
            monitored = report.train_loss[-1]
        log.info("epoch %d loss %.4f ba %.4f%s", epoch, report.train_loss[-1],
                 report.train_ba[-1],
                 f" val_loss {monitored:.4f}" if val_series is not None else "")

        if monitored < best_loss:
            best, best_loss, stale = net.copy(), monitored, 0
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, report


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def balanced_accuracy(pred, truth, n_classes: int) -> float:
    """Mean recall over the classes that occur in ``truth``."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.size == 0:
        raise ValueError("balanced accuracy of an empty sequence")
    if pred.shape != truth.shape:
        raise ValueError("pred and truth differ in length")
    if truth.max() >= n_classes or truth.min() < 0:
        raise ValueError("label out of range")
    hits = np.bincount(truth[pred == truth], minlength=n_classes)
    support = np.bincount(truth, minlength=n_classes)
    present = support > 0
    return float(np.mean(hits[present] / support[present]))


def confidence_interval(ba: float, n: int) -> float:
    """Half-width of the normal-approximation 95% interval of a balanced accuracy."""
    if n <= 0:
        raise ValueError("n must be positive")
    return float(1.96 * np.sqrt(max(ba * (1.0 - ba), 0.0) / n))


def majority_baseline(train_labels, truth, n_classes: int) -> float:
    """Balanced accuracy of always predicting the most frequent training class."""
    majority = int(np.argmax(np.bincount(np.asarray(train_labels), minlength=n_classes)))
    truth = np.asarray(truth)
    return balanced_accuracy(np.full_like(truth, majority), truth, n_classes)
