"""FedCCRL federated domain generalization simulator.

Thin wrapper around the C++ core: cross-client statistics augmentation
(CCDT + DIFP), dual-stage alignment losses, weighted aggregation, and the
full leave-one-domain-out experiment driver.
"""

from ._core import (
    __version__,
    augmix,
    ccdt,
    channel_stats,
    classification_loss,
    cosine_lr,
    cross_entropy,
    fedavg_aggregate,
    feature_extension,
    generate_synthetic,
    js_alignment,
    representation_alignment,
    run_experiment,
    sup_contrastive,
)

__all__ = [
    "__version__",
    "augmix",
    "ccdt",
    "channel_stats",
    "classification_loss",
    "cosine_lr",
    "cross_entropy",
    "fedavg_aggregate",
    "feature_extension",
    "generate_synthetic",
    "js_alignment",
    "representation_alignment",
    "run_experiment",
    "sup_contrastive",
]
