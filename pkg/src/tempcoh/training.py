"""Training loops: self-supervised pretraining, fine-tuning, evaluation.

Pretraining treats the sequences as unlabeled: it only reads frame features
and timestamps. Fine-tuning is stateful over each video (LSTM state carried
across chunks, gradients truncated at chunk boundaries) with gradient
accumulation over a fixed number of chunks per optimizer step.

Losses and their input gradients are computed in float64; gradients are cast
to the model dtype before backpropagation through parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_io import FrameSequence
from .errors import NonFiniteLossError
from .losses import LOSS_ARITY, LossConfig, batch_loss_and_gradients
from .metrics import AggregateReport, VideoMetrics, aggregate, video_metrics
from .models import (AdamState, EncoderModel, PhaseModel, adam_step,
                     softmax_cross_entropy_batch)
from .sampling import SamplerConfig, build_epoch_schedule


# Pretraining method -> (loss kind, tuple order). The second-order method
# trains on the combined objective (first-order contrastive plus weighted
# second-order term) over 4-frame tuples.
PRETRAIN_METHODS = {
    "contrastive": ("contrastive", "first"),
    "ranking": ("ranking", "first"),
    "contrastive2": ("combined", "second"),
}


@dataclass(frozen=True)
class PretrainConfig:
    """Self-supervised pretraining settings."""

    method: str = "contrastive"
    epochs: int = 25
    batch_size: int = 64
    lr: float = 1e-4
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        if self.method not in PRETRAIN_METHODS:
            raise ValueError(f"unknown pretraining method {self.method!r}; "
                             f"expected one of {sorted(PRETRAIN_METHODS)}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    @property
    def loss_kind(self) -> str:
        return PRETRAIN_METHODS[self.method][0]

    @property
    def tuple_order(self) -> str:
        return PRETRAIN_METHODS[self.method][1]


@dataclass
class PretrainResult:
    method: str
    epoch_losses: list[float]
    tuples_per_epoch: int


def pretrain(encoder: EncoderModel, videos: list[FrameSequence],
             cfg: PretrainConfig, rng, batch_observer=None) -> PretrainResult:
    """Train the encoder in place on temporal-coherence tuples.

    Labels on the videos, if any, are never read. `rng` is a
    numpy Generator or an integer seed. `batch_observer`, when given, is
    called as observer(epoch, batch_tuple_count) after each optimizer step.
    Returns the per-epoch mean tuple loss history.
    """
    if not videos:
        raise ValueError("need at least one video to pretrain on")
    by_id = {}
    for v in videos:
        if v.feature_dim != encoder.input_dim:
            raise ValueError(f"video {v.video_id!r} has feature dim "
                             f"{v.feature_dim}, encoder expects {encoder.input_dim}")
        by_id[v.video_id] = v.features
    lengths = [(v.video_id, v.num_frames) for v in videos]
    kind = cfg.loss_kind
    arity = LOSS_ARITY[kind]
    rng = np.random.default_rng(rng)
    adam = AdamState(lr=cfg.lr)
    history: list[float] = []
    tuples_per_epoch = cfg.sampler.tuples_per_video * len(videos)
    for epoch in range(cfg.epochs):
        schedule = build_epoch_schedule(lengths, cfg.sampler, rng,
                                        order=cfg.tuple_order)
        loss_sum = 0.0
        for start in range(0, len(schedule), cfg.batch_size):
            batch = schedule[start:start + cfg.batch_size]
            n = len(batch)
            frames = np.empty((n, arity, encoder.input_dim), dtype=np.float32)
            for row, (vid, tup) in enumerate(batch):
                frames[row] = by_id[vid][list(tup.indices)]
            embedded = []
            caches = []
            for pos in range(arity):
                emb, cache = encoder.forward_cached(frames[:, pos, :])
                embedded.append(emb.astype(np.float64))
                caches.append(cache)
            losses, grads = batch_loss_and_gradients(kind, embedded, cfg.loss)
            if not np.isfinite(losses).all():
                bad = int(np.flatnonzero(~np.isfinite(losses))[0])
                raise NonFiniteLossError(
                    f"non-finite {cfg.method} loss at epoch {epoch}, batch "
                    f"starting at tuple {start}, video {batch[bad][0]!r}, "
                    f"frames {batch[bad][1].indices}")
            loss_sum += float(losses.sum())
            total: dict[str, np.ndarray] = {}
            for pos in range(arity):
                upstream = (grads[pos] / n).astype(encoder.dtype)
                for name, g in encoder.backward(caches[pos], upstream).items():
                    if name in total:
                        total[name] += g
                    else:
                        total[name] = g
            adam_step(encoder.parameters(), total, adam)
            if batch_observer is not None:
                batch_observer(epoch, n)
        history.append(loss_sum / len(schedule))
    return PretrainResult(cfg.method, history, tuples_per_epoch)


@dataclass(frozen=True)
class FinetuneConfig:
    """Supervised phase-segmentation training settings.

    `stop_train_accuracy` is a fraction; training stops at the end of the
    first epoch whose training-set frame accuracy exceeds it."""

    batch_frames: int = 128
    accumulate_batches: int = 3
    stop_train_accuracy: float = 0.999
    max_epochs: int = 100
    lr: float = 1e-4

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.batch_frames < 1:
            raise ValueError("batch_frames must be >= 1")
        if self.accumulate_batches < 1:
            raise ValueError("accumulate_batches must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.stop_train_accuracy <= 1:
            raise ValueError("stop_train_accuracy must be in [0, 1]")


@dataclass
class FinetuneResult:
    epoch_accuracies: list[float]  # fractions, collected while training
    epochs_run: int
    stopped_early: bool


def finetune(model: PhaseModel, videos: list[FrameSequence],
             cfg: FinetuneConfig, rng, chunk_observer=None) -> FinetuneResult:
    """Train the phase model in place on labeled videos.

    Videos are visited in a fresh random order each epoch (`rng` is a numpy
    Generator or an integer seed); the LSTM state is zeroed per video and
    carried (detached) across that video's consecutive chunks. Chunk
    gradients of the mean cross entropy are summed over `accumulate_batches`
    chunks per Adam step; the accumulation counter runs across video and
    epoch boundaries, except that a partial accumulation is flushed at the
    end of each epoch.

    `chunk_observer`, when given, is called as
    observer(epoch, video_id, start_frame, end_frame) per chunk.
    """
    if not videos:
        raise ValueError("need at least one video to fine-tune on")
    for v in videos:
        if v.labels is None:
            raise ValueError(f"video {v.video_id!r} has no labels")
        if v.feature_dim != model.encoder.input_dim:
            raise ValueError(f"video {v.video_id!r} has feature dim "
                             f"{v.feature_dim}, encoder expects "
                             f"{model.encoder.input_dim}")
        if v.labels.max() >= model.num_phases:
            raise ValueError(f"video {v.video_id!r} labels exceed "
                             f"num_phases {model.num_phases}")
    rng = np.random.default_rng(rng)
    adam = AdamState(lr=cfg.lr)
    params = model.parameters()
    trainable = model.trainable_parameters()
    pending: dict[str, np.ndarray] = {}
    pending_count = 0

    def flush():
        nonlocal pending, pending_count
        if pending_count:
            adam_step(params, pending, adam)
            pending = {}
            pending_count = 0

    history: list[float] = []
    stopped = False
    epochs_run = 0
    for epoch in range(cfg.max_epochs):
        epochs_run = epoch + 1
        order = rng.permutation(len(videos))
        correct = 0
        total = 0
        for vi in order:
            seq = videos[int(vi)]
            state = model.zero_state()
            for start in range(0, seq.num_frames, cfg.batch_frames):
                end = min(start + cfg.batch_frames, seq.num_frames)
                frames = seq.features[start:end]
                labels = seq.labels[start:end]
                logits, state, cache = model.forward_chunk_cached(frames, state)
                losses, dlogits = softmax_cross_entropy_batch(logits, labels)
                if not np.isfinite(losses).all():
                    raise NonFiniteLossError(
                        f"non-finite cross entropy at epoch {epoch}, video "
                        f"{seq.video_id!r}, frames [{start}, {end})")
                dlogits /= end - start
                grads = model.backward_chunk(cache, dlogits.astype(model.dtype))
                grads = {name: g for name, g in grads.items() if name in trainable}
                for name, g in grads.items():
                    if name in pending:
                        pending[name] += g
                    else:
                        pending[name] = g
                pending_count += 1
                if pending_count == cfg.accumulate_batches:
                    flush()
                correct += int((np.argmax(logits, axis=1) == labels).sum())
                total += end - start
                if chunk_observer is not None:
                    chunk_observer(epoch, seq.video_id, start, end)
        flush()
        accuracy = correct / total
        history.append(accuracy)
        if accuracy > cfg.stop_train_accuracy:
            stopped = True
            break
    return FinetuneResult(history, epochs_run, stopped)


def predict_sequence(model: PhaseModel, seq: FrameSequence) -> np.ndarray:
    """Predicted phase per frame from one stateful left-to-right pass."""
    logits, _ = model.forward_chunk(seq.features, model.zero_state())
    return np.argmax(logits, axis=1).astype(np.int32)


@dataclass
class EvalResult:
    report: AggregateReport
    per_video: dict[str, VideoMetrics]
    predictions: dict[str, np.ndarray]


def evaluate(model: PhaseModel, videos: list[FrameSequence],
             num_phases: int | None = None) -> EvalResult:
    """Score the model on labeled videos without mutating anything."""
    if not videos:
        raise ValueError("need at least one video to evaluate on")
    k = model.num_phases if num_phases is None else num_phases
    per_video: dict[str, VideoMetrics] = {}
    predictions: dict[str, np.ndarray] = {}
    for seq in videos:
        if seq.labels is None:
            raise ValueError(f"video {seq.video_id!r} has no labels")
        pred = predict_sequence(model, seq)
        predictions[seq.video_id] = pred
        per_video[seq.video_id] = video_metrics(seq.labels, pred, k)
    report = aggregate([per_video[v.video_id] for v in videos])
    return EvalResult(report, per_video, predictions)
