"""Quantitative explanation quality: selectivity, output-completeness,
max-sensitivity and compactness.

Every metric explains the model's prediction at the last step of a window
``[t - window + 1, t]`` that is simulated from the rest state. Explainers are
callables ``(model, x) -> AttributionMap`` (see
:func:`snnxai.attribution.make_explainer`). A model is either a
:class:`~snnxai.lif.Network` or any callable mapping a batch of windows
``(B, D, T)`` to the predicted class at their last step.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .lif import Network, forward
from .train import balanced_accuracy, confidence_interval

log = logging.getLogger(__name__)

METRICS = ("selectivity", "output_completeness", "max_sensitivity", "compactness")
_BATCH = 256


@dataclass(frozen=True)
class FeatureSegment:
    dim: int
    start: int
    end: int
    sign: int
    mean_attr: float


@dataclass(frozen=True)
class EvalConfig:
    window: int = 1000
    max_segment_seconds: float = 10.0
    dt_seconds: float = 1.0
    epsilon: float = 0.0
    continuity_radius_pct: float = 10.0
    n_perturbations: int = 5
    grid_points: int = 101
    seed: int = 0

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if not 0 < self.continuity_radius_pct <= 100:
            raise ValueError("continuity_radius_pct must lie in (0, 100]")
        if self.n_perturbations < 0:
            raise ValueError("n_perturbations must be non-negative")

    @property
    def max_segment_steps(self) -> int:
        return max(1, int(np.floor(self.max_segment_seconds / self.dt_seconds + 1e-9)))


# ---------------------------------------------------------------------------
# model plumbing
# ---------------------------------------------------------------------------

def predict_last(model, xs: np.ndarray) -> np.ndarray:
    """Prediction at the last step for a batch of windows ``(B, D, T)``."""
    xs = np.asarray(xs)
    if not isinstance(model, Network):
        return np.asarray(model(xs))
    out = np.empty(xs.shape[0], dtype=np.int64)
    for i in range(0, xs.shape[0], _BATCH):
        trace = forward(model, xs[i:i + _BATCH])
        out[i:i + _BATCH] = np.argmax(trace.out_potentials[..., -1], axis=-1)
    return out


def window_of(sample, window: int) -> np.ndarray:
    if sample.t < window:
        raise ValueError(f"sample at t={sample.t} has no full {window}-step window")
    return np.asarray(sample.series.data[:, sample.t - window + 1:sample.t + 1], dtype=np.int8)


def _protected(sample) -> tuple:
    bias = sample.series.bias_index
    return () if bias is None else (bias,)


@dataclass
class _Explained:
    x: np.ndarray
    pred: int
    attr: np.ndarray
    protected: tuple


def _explain_samples(model, explainer, samples, cfg: EvalConfig) -> List[_Explained]:
    if not samples:
        raise ValueError("no evaluation samples")
    xs = np.stack([window_of(s, cfg.window) for s in samples])
    preds = predict_last(model, xs)
    out = []
    for s, x, p in zip(samples, xs, preds):
        amap = explainer(model, x)
        out.append(_Explained(x, int(p), amap.values[int(p)], _protected(s)))
    return out


# ---------------------------------------------------------------------------
# segments and perturbations
# ---------------------------------------------------------------------------

def segment_map(attr: np.ndarray, cfg: EvalConfig = EvalConfig()) -> List[FeatureSegment]:
    """Tile each dimension into same-sign runs of at most ``max_segment_steps``."""
    attr = np.asarray(attr, dtype=np.float64)
    if not np.all(np.isfinite(attr)):
        raise ValueError("attribution contains non-finite values")
    limit = cfg.max_segment_steps
    signs = np.where(np.abs(attr) <= cfg.epsilon, 0, np.sign(attr)).astype(np.int64)
    segments = []
    for d in range(attr.shape[0]):
        row = signs[d]
        cuts = np.flatnonzero(np.diff(row)) + 1
        starts = np.concatenate([[0], cuts])
        ends = np.concatenate([cuts - 1, [row.size - 1]])
        for s, e in zip(starts, ends):
            for a in range(s, e + 1, limit):
                b = min(a + limit - 1, e)
                segments.append(FeatureSegment(d, int(a), int(b), int(row[s]),
                                               float(attr[d, a:b + 1].mean())))
    return segments


def invert_segment(x: np.ndarray, seg: FeatureSegment) -> np.ndarray:
    x = np.asarray(x)
    if not (0 <= seg.dim < x.shape[0] and 0 <= seg.start <= seg.end < x.shape[1]):
        raise IndexError(f"segment {seg} outside input of shape {x.shape}")
    out = x.copy()
    out[seg.dim, seg.start:seg.end + 1] = 1 - out[seg.dim, seg.start:seg.end + 1]
    return out


def perturb_durations(x: np.ndarray, pct: float, seed=None,
                      skip_rows: Sequence[int] = ()) -> np.ndarray:
    """Move the onset of every run of ones by up to ``floor(pct% * length)`` steps.

    The offset stays in place, so the state at the last step is preserved.
    Onsets are clamped to the window and keep at least one silent step after
    the preceding run; ``skip_rows`` (the bias channel) are left untouched.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x)
    out = x.copy()
    for d in range(x.shape[0]):
        if d in skip_rows:
            continue
        padded = np.concatenate([[0], x[d].astype(np.int8), [0]])
        diff = np.diff(padded)
        starts = np.flatnonzero(diff == 1)
        ends = np.flatnonzero(diff == -1) - 1
        prev_end = -2
        for s, e in zip(starts, ends):
            k = int(np.floor(pct / 100.0 * (e - s + 1) + 1e-9))
            if k > 0:
                delta = int(rng.integers(-k, k + 1))
                new_s = int(np.clip(s - delta, max(0, prev_end + 2), e))
                out[d, min(s, new_s):max(s, new_s)] = 1 if new_s < s else 0
            prev_end = e
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _rank_predictions(model, item: _Explained, cfg: EvalConfig) -> np.ndarray:
    """Predictions after inverting the top 0, 1, ..., R signed segments."""
    segs = [s for s in segment_map(item.attr, cfg)
            if s.sign != 0 and s.dim not in item.protected]
    order = sorted(range(len(segs)), key=lambda i: -segs[i].mean_attr)
    variants = np.empty((len(segs) + 1,) + item.x.shape, dtype=np.int8)
    current = item.x.copy()
    variants[0] = current
    for r, i in enumerate(order, start=1):
        current = invert_segment(current, segs[i])
        variants[r] = current
    return predict_last(model, variants)


def _on_grid(preds: np.ndarray, points: int) -> np.ndarray:
    """Hold each rank's prediction until the next rank's fraction is reached."""
    R = preds.size - 1
    grid = np.linspace(0.0, 1.0, points)
    idx = np.floor(grid * R + 1e-9).astype(int)
    return preds[np.clip(idx, 0, R)]


def selectivity_curve(model, explainer, samples, cfg: EvalConfig = EvalConfig(),
                      n_classes: Optional[int] = None):
    """``(fraction_inverted, balanced_accuracy)`` on a common grid."""
    items = _explain_samples(model, explainer, samples, cfg)
    curves = np.stack([_on_grid(_rank_predictions(model, it, cfg), cfg.grid_points)
                       for it in items])
    truth = np.array([s.true_label for s in samples])
    n_classes = n_classes or samples[0].series.n_classes
    ba = np.array([balanced_accuracy(curves[:, g], truth, n_classes)
                   for g in range(cfg.grid_points)])
    return np.linspace(0.0, 1.0, cfg.grid_points), ba


def selectivity(model, explainer, samples, cfg: EvalConfig = EvalConfig()) -> float:
    """Area under the accuracy curve as top-ranked segments are inverted (lower is better)."""
    grid, ba = selectivity_curve(model, explainer, samples, cfg)
    return float(np.trapezoid(ba, grid))


def _shuffle_unimportant(item: _Explained, cfg: EvalConfig, rng) -> np.ndarray:
    x = item.x.copy()
    mask = np.abs(item.attr) <= cfg.epsilon
    for d in range(x.shape[0]):
        idx = np.flatnonzero(mask[d])
        if idx.size > 1:
            x[d, idx] = rng.permutation(x[d, idx])
    return x


def output_completeness(model, explainer, samples, cfg: EvalConfig = EvalConfig(),
                        seed=None) -> float:
    """Agreement of predictions before and after shuffling zero-attribution steps."""
    items = _explain_samples(model, explainer, samples, cfg)
    return _completeness(model, items, cfg, cfg.seed if seed is None else seed,
                         samples[0].series.n_classes)


def _completeness(model, items, cfg, seed, n_classes) -> float:
    rng = np.random.default_rng(seed)
    perturbed = np.stack([_shuffle_unimportant(it, cfg, rng) for it in items])
    preds = predict_last(model, perturbed)
    original = np.array([it.pred for it in items])
    return balanced_accuracy(preds, original, max(n_classes, original.max() + 1))


def _sensitivity(model, explainer, item: _Explained, cfg: EvalConfig, seed) -> float:
    if cfg.n_perturbations == 0:
        warnings.warn("max-sensitivity with zero perturbations is degenerate; returning 0")
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cfg.n_perturbations):
        xp = perturb_durations(item.x, cfg.continuity_radius_pct, rng, item.protected)
        attr = explainer(model, xp).values[item.pred]
        worst = max(worst, float(np.linalg.norm(attr - item.attr)))
    return worst


def max_sensitivity(model, explainer, sample, cfg: EvalConfig = EvalConfig()) -> float:
    """Largest Frobenius change of the predicted-class map under duration jitter."""
    item = _explain_samples(model, explainer, [sample], cfg)[0]
    return _sensitivity(model, explainer, item, cfg, (cfg.seed, sample.t))


def compactness(maps: Sequence[np.ndarray]) -> float:
    """Mean total absolute attribution per explanation."""
    if len(maps) == 0:
        raise ValueError("compactness of an empty list")
    return float(np.mean([np.abs(m).sum() for m in maps]))


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------

@dataclass
class MetricResult:
    metric: str
    explainer: str
    value: float
    ci: Optional[float]
    n: int


def evaluate(model, explainers: dict, samples, metrics: Sequence[str] = METRICS,
             cfg: EvalConfig = EvalConfig()) -> List[MetricResult]:
    """Run ``metrics`` for each named explainer, sharing one explanation per sample."""
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    n_classes = samples[0].series.n_classes
    truth = np.array([s.true_label for s in samples])
    n = len(samples)
    results = []
    for name, explainer in explainers.items():
        items = _explain_samples(model, explainer, samples, cfg)
        for metric in metrics:
            if metric == "selectivity":
                curves = np.stack([_on_grid(_rank_predictions(model, it, cfg), cfg.grid_points)
                                   for it in items])
                ba = [balanced_accuracy(curves[:, g], truth, n_classes)
                      for g in range(cfg.grid_points)]
                value = float(np.trapezoid(ba, np.linspace(0, 1, cfg.grid_points)))
                ci = confidence_interval(value, n)
            elif metric == "output_completeness":
                value = _completeness(model, items, cfg, cfg.seed, n_classes)
                ci = confidence_interval(value, n)
            elif metric == "max_sensitivity":
                value = float(np.mean([_sensitivity(model, explainer, it, cfg, (cfg.seed, s.t))
                                       for it, s in zip(items, samples)]))
                ci = None
            else:
                sums = np.array([np.abs(it.attr).sum() for it in items])
                value = float(sums.mean())
                ci = float(1.96 * sums.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            log.info("%s %s = %.4f", metric, name, value)
            results.append(MetricResult(metric, name, value, ci, n))
    return results
