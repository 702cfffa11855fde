"""Spiking network simulation, training and temporal spike attribution."""
from .attribution import AttributionMap, DecayParams, Variant, explain, make_explainer, sam, tsa
from .datasets import LabeledSeries, generate_synthetic, ingest_adl
from .lif import LifConfig, Network, forward, init_network
from .train import TrainConfig, balanced_accuracy, train

__all__ = [
    "AttributionMap", "DecayParams", "Variant", "explain", "make_explainer", "sam", "tsa",
    "LabeledSeries", "generate_synthetic", "ingest_adl",
    "LifConfig", "Network", "forward", "init_network",
    "TrainConfig", "balanced_accuracy", "train",
]
__version__ = "0.1.0"
