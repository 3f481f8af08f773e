"""Temporal-coherence self-supervised pretraining for phase segmentation.

Pretrains a frame encoder on unlabeled frame sequences with coherence-based
losses (contrastive, ranking, first+second order contrastive), fine-tunes an
encoder+LSTM phase model, and evaluates pretrained vs. non-pretrained models
with per-video macro metrics.
"""

__version__ = "0.1.0"
