"""Trainable models: frame encoder, encoder+LSTM phase model, Adam.

Everything is plain numpy with hand-written backward passes. Dense products
go through einsum rather than BLAS matmul because einsum reduces each output
row in a batch-size-independent order, which keeps batched forwards exactly
equal to stacked single-example forwards.

Parameters are stored as float32 by default (matching the checkpoint
format); gradient-check tests build float64 models instead. A parameter is
addressed by name ("encoder.0.weight", "lstm.w_hidden", ...) in the dicts
exchanged between backward passes, the optimizer, and checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


def _affine(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x @ weight.T + bias with batch-size-independent summation order."""
    if x.ndim == 1:
        return np.einsum("oi,i->o", weight, x) + bias
    return np.einsum("bi,oi->bo", x, weight) + bias


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _uniform_fan_in(rng, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class EncoderModel:
    """Stack of affine-then-rectifier layers mapping input features to embeddings."""

    def __init__(self, weights, biases, trainable=None):
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        self.weights = list(weights)
        self.biases = list(biases)
        self.trainable = list(trainable) if trainable is not None else [True] * len(weights)
        if len(self.trainable) != len(self.weights):
            raise ValueError("trainable mask length must match layer count")

    @classmethod
    def create(cls, input_dim, hidden_sizes, embedding_dim, dtype=DEFAULT_DTYPE):
        """Zero-initialized encoder with sizes input -> hidden... -> embedding."""
        sizes = [int(input_dim), *(int(h) for h in hidden_sizes), int(embedding_dim)]
        if any(s < 1 for s in sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {sizes}")
        weights = [np.zeros((sizes[i + 1], sizes[i]), dtype=dtype) for i in range(len(sizes) - 1)]
        biases = [np.zeros(sizes[i + 1], dtype=dtype) for i in range(len(sizes) - 1)]
        return cls(weights, biases)

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def embedding_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def init_uniform_fan(self, rng) -> "EncoderModel":
        """Draw every parameter uniformly from (-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            fan_in = w.shape[1]
            self.weights[i] = _uniform_fan_in(rng, w.shape, fan_in, w.dtype)
            self.biases[i] = _uniform_fan_in(rng, b.shape, fan_in, b.dtype)
        return self

    def set_trainable(self, selector) -> "EncoderModel":
        """Mark layers trainable; selector is a predicate over layer index
        or an iterable of the layer indices that stay trainable."""
        n = self.num_layers
        if callable(selector):
            self.trainable = [bool(selector(i)) for i in range(n)]
        else:
            wanted = set(selector)
            unknown = [i for i in wanted if not 0 <= i < n]
            if unknown:
                raise ValueError(f"unknown encoder layer(s) {sorted(unknown)}; "
                                 f"model has {n} layers")
            self.trainable = [i in wanted for i in range(n)]
        return self

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"encoder.{i}.weight"] = w
            out[f"encoder.{i}.bias"] = b
        return out

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        return {
            name: arr
            for name, arr in self.parameters().items()
            if self.trainable[int(name.split(".")[1])]
        }

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input dimension {x.shape[-1]} does not match "
                             f"encoder input {self.input_dim}")

    def forward(self, x) -> np.ndarray:
        """Embed a single feature vector or a (batch, features) stack."""
        a = np.asarray(x, dtype=self.dtype)
        self._check_input(a)
        for w, b in zip(self.weights, self.biases):
            a = np.maximum(_affine(a, w, b), 0)
        return a

    def forward_cached(self, x: np.ndarray):
        """Batched forward keeping per-layer inputs and pre-activations."""
        a = np.asarray(x, dtype=self.dtype)
        if a.ndim != 2:
            raise ValueError("forward_cached expects a (batch, features) array")
        self._check_input(a)
        cache = []
        for w, b in zip(self.weights, self.biases):
            z = _affine(a, w, b)
            cache.append((a, z))
            a = np.maximum(z, 0)
        return a, cache

    def backward(self, cache, grad_embedding: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients (trainable layers only) for one cached forward."""
        if len(cache) != self.num_layers:
            raise ValueError("cache does not match this encoder")
        grads: dict[str, np.ndarray] = {}
        da = grad_embedding
        for i in reversed(range(self.num_layers)):
            a_in, z = cache[i]
            dz = da * (z > 0)
            if self.trainable[i]:
                grads[f"encoder.{i}.weight"] = np.einsum("bo,bi->oi", dz, a_in)
                grads[f"encoder.{i}.bias"] = dz.sum(axis=0)
            if i > 0:
                da = np.einsum("bo,oi->bi", dz, self.weights[i])
        return grads

    def copy(self) -> "EncoderModel":
        return EncoderModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.trainable),
        )


@dataclass
class LstmState:
    """Hidden and cell vectors carried between chunks of one video."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, dtype=DEFAULT_DTYPE) -> "LstmState":
        return cls(np.zeros(hidden_size, dtype=dtype), np.zeros(hidden_size, dtype=dtype))

    def copy(self) -> "LstmState":
        return LstmState(self.h.copy(), self.c.copy())


class PhaseModel:
    """Encoder followed by a single LSTM layer and an affine phase classifier.

    LSTM gate packing order along the 4H axis is input, forget, candidate,
    output.
    """

    def __init__(self, encoder: EncoderModel, lstm_w_input, lstm_w_hidden,
                 lstm_bias, clf_weight, clf_bias):
        self.encoder = encoder
        self.lstm_w_input = lstm_w_input
        self.lstm_w_hidden = lstm_w_hidden
        self.lstm_bias = lstm_bias
        self.clf_weight = clf_weight
        self.clf_bias = clf_bias
        h = self.hidden_size
        d = encoder.embedding_dim
        if lstm_w_input.shape != (4 * h, d) or lstm_bias.shape != (4 * h,):
            raise ValueError("LSTM parameter shapes are inconsistent")
        if clf_weight.shape[1] != h:
            raise ValueError("classifier width does not match LSTM hidden size")

    @classmethod
    def create(cls, encoder: EncoderModel, hidden_size: int, num_phases: int):
        if num_phases < 2:
            raise ValueError("need at least 2 phases")
        if hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        d = encoder.embedding_dim
        dt = encoder.dtype
        return cls(
            encoder,
            np.zeros((4 * hidden_size, d), dtype=dt),
            np.zeros((4 * hidden_size, hidden_size), dtype=dt),
            np.zeros(4 * hidden_size, dtype=dt),
            np.zeros((num_phases, hidden_size), dtype=dt),
            np.zeros(num_phases, dtype=dt),
        )

    @property
    def hidden_size(self) -> int:
        return self.lstm_w_hidden.shape[1]

    @property
    def num_phases(self) -> int:
        return self.clf_weight.shape[0]

    @property
    def dtype(self):
        return self.encoder.dtype

    def init_head_uniform_fan(self, rng) -> "PhaseModel":
        """Initialize LSTM and classifier only; an LSTM unit's fan-in counts
        both its embedding and its recurrent inputs."""
        d = self.encoder.embedding_dim
        h = self.hidden_size
        fan = d + h
        dt = self.dtype
        self.lstm_w_input = _uniform_fan_in(rng, self.lstm_w_input.shape, fan, dt)
        self.lstm_w_hidden = _uniform_fan_in(rng, self.lstm_w_hidden.shape, fan, dt)
        self.lstm_bias = _uniform_fan_in(rng, self.lstm_bias.shape, fan, dt)
        self.clf_weight = _uniform_fan_in(rng, self.clf_weight.shape, h, dt)
        self.clf_bias = _uniform_fan_in(rng, self.clf_bias.shape, h, dt)
        return self

    def init_uniform_fan(self, rng) -> "PhaseModel":
        self.encoder.init_uniform_fan(rng)
        return self.init_head_uniform_fan(rng)

    def zero_state(self) -> LstmState:
        return LstmState.zeros(self.hidden_size, self.dtype)

    def parameters(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.parameters())
        out["lstm.w_input"] = self.lstm_w_input
        out["lstm.w_hidden"] = self.lstm_w_hidden
        out["lstm.bias"] = self.lstm_bias
        out["classifier.weight"] = self.clf_weight
        out["classifier.bias"] = self.clf_bias
        return out

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.trainable_parameters())
        for name in ("lstm.w_input", "lstm.w_hidden", "lstm.bias",
                     "classifier.weight", "classifier.bias"):
            out[name] = self.parameters()[name]
        return out

    def _gates(self, zx_t: np.ndarray, h: np.ndarray):
        z = zx_t + np.einsum("oi,i->o", self.lstm_w_hidden, h)
        hs = self.hidden_size
        gi = _sigmoid(z[:hs])
        gf = _sigmoid(z[hs:2 * hs])
        gg = np.tanh(z[2 * hs:3 * hs])
        go = _sigmoid(z[3 * hs:])
        return gi, gf, gg, go

    def lstm_step(self, embedding, state: LstmState):
        """One recurrent step on an already-embedded frame.

        Returns (logits, new state)."""
        emb = np.asarray(embedding, dtype=self.dtype)
        if emb.shape != (self.encoder.embedding_dim,):
            raise ValueError(f"embedding shape {emb.shape} does not match "
                             f"encoder output {self.encoder.embedding_dim}")
        zx = _affine(emb, self.lstm_w_input, self.lstm_bias)
        gi, gf, gg, go = self._gates(zx, state.h)
        c = gf * state.c + gi * gg
        h = go * np.tanh(c)
        logits = _affine(h, self.clf_weight, self.clf_bias)
        return logits, LstmState(h, c)

    def forward_chunk(self, frames, state_in: LstmState):
        """Left-to-right pass over consecutive frames of one video.

        Returns (logits of shape (T, num_phases), state after last frame)."""
        logits, state, _ = self.forward_chunk_cached(frames, state_in, keep_cache=False)
        return logits, state

    def forward_chunk_cached(self, frames, state_in: LstmState, keep_cache=True):
        frames = np.asarray(frames, dtype=self.dtype)
        if frames.ndim != 2 or frames.shape[0] == 0:
            raise ValueError("frames must be a non-empty (T, features) array")
        emb, enc_cache = self.encoder.forward_cached(frames)
        n = frames.shape[0]
        hs = self.hidden_size
        zx = _affine(emb, self.lstm_w_input, self.lstm_bias)  # (T, 4H)
        h, c = state_in.h.copy(), state_in.c.copy()
        h_prev = np.empty((n, hs), dtype=self.dtype)
        c_prev = np.empty((n, hs), dtype=self.dtype)
        gates = np.empty((n, 4 * hs), dtype=self.dtype)
        cs = np.empty((n, hs), dtype=self.dtype)
        tanh_cs = np.empty((n, hs), dtype=self.dtype)
        hs_out = np.empty((n, hs), dtype=self.dtype)
        for t in range(n):
            h_prev[t] = h
            c_prev[t] = c
            gi, gf, gg, go = self._gates(zx[t], h)
            gates[t, :hs], gates[t, hs:2 * hs] = gi, gf
            gates[t, 2 * hs:3 * hs], gates[t, 3 * hs:] = gg, go
            c = gf * c + gi * gg
            tc = np.tanh(c)
            h = go * tc
            cs[t] = c
            tanh_cs[t] = tc
            hs_out[t] = h
        logits = _affine(hs_out, self.clf_weight, self.clf_bias)
        state_out = LstmState(h.copy(), c.copy())
        cache = None
        if keep_cache:
            cache = (enc_cache, emb, h_prev, c_prev, gates, cs, tanh_cs, hs_out)
        return logits, state_out, cache

    def backward_chunk(self, cache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Backpropagate through classifier, LSTM and encoder for one chunk.

        The carried-in state is treated as a constant, so no gradient flows
        across chunk boundaries."""
        enc_cache, emb, h_prev, c_prev, gates, cs, tanh_cs, hs_out = cache
        n, hs = hs_out.shape
        grads: dict[str, np.ndarray] = {
            "classifier.weight": np.einsum("tk,th->kh", grad_logits, hs_out),
            "classifier.bias": grad_logits.sum(axis=0),
        }
        dh_seq = np.einsum("tk,kh->th", grad_logits, self.clf_weight)
        dzs = np.empty((n, 4 * hs), dtype=dh_seq.dtype)
        dh_next = np.zeros(hs, dtype=dh_seq.dtype)
        dc_next = np.zeros(hs, dtype=dh_seq.dtype)
        for t in reversed(range(n)):
            gi, gf = gates[t, :hs], gates[t, hs:2 * hs]
            gg, go = gates[t, 2 * hs:3 * hs], gates[t, 3 * hs:]
            dh = dh_seq[t] + dh_next
            do = dh * tanh_cs[t]
            dc = dc_next + dh * go * (1.0 - tanh_cs[t] ** 2)
            di = dc * gg
            dg = dc * gi
            df = dc * c_prev[t]
            dc_next = dc * gf
            dzs[t, :hs] = di * gi * (1.0 - gi)
            dzs[t, hs:2 * hs] = df * gf * (1.0 - gf)
            dzs[t, 2 * hs:3 * hs] = dg * (1.0 - gg ** 2)
            dzs[t, 3 * hs:] = do * go * (1.0 - go)
            dh_next = np.einsum("oi,o->i", self.lstm_w_hidden, dzs[t])
        grads["lstm.w_input"] = np.einsum("to,ti->oi", dzs, emb)
        grads["lstm.w_hidden"] = np.einsum("to,ti->oi", dzs, h_prev)
        grads["lstm.bias"] = dzs.sum(axis=0)
        grad_emb = np.einsum("to,oi->ti", dzs, self.lstm_w_input)
        grads.update(self.encoder.backward(enc_cache, grad_emb))
        return grads

    def copy(self) -> "PhaseModel":
        return PhaseModel(
            self.encoder.copy(),
            self.lstm_w_input.copy(),
            self.lstm_w_hidden.copy(),
            self.lstm_bias.copy(),
            self.clf_weight.copy(),
            self.clf_bias.copy(),
        )


def softmax_cross_entropy(logits, label: int):
    """Numerically stable cross entropy of one frame.

    Returns (loss, gradient w.r.t. logits); the gradient is softmax minus
    the one-hot target. Computed in float64."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("logits must be a vector")
    if not 0 <= label < z.shape[0]:
        raise ValueError(f"label {label} out of range for {z.shape[0]} phases")
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    loss = float(log_norm - shifted[label])
    grad = np.exp(shifted - log_norm)
    grad[label] -= 1.0
    return loss, grad


def softmax_cross_entropy_batch(logits, labels):
    """Rowwise cross entropy; returns ((T,) losses, (T, K) gradients)."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ValueError("expected (T, K) logits and (T,) labels")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ValueError("label out of range")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(z.shape[0])
    losses = (log_norm[:, 0] - shifted[rows, labels])
    grads = np.exp(shifted - log_norm)
    grads[rows, labels] -= 1.0
    return losses, grads


@dataclass
class AdamState:
    """Bias-corrected Adam with per-parameter moment accumulators."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """Apply one Adam update in place to the parameters named in `grads`.

    Parameters without a gradient entry (e.g. frozen layers) are untouched."""
    for name in grads:
        if name not in params:
            raise ValueError(f"gradient for unknown parameter {name!r}")
        if grads[name].shape != params[name].shape:
            raise ValueError(f"gradient shape {grads[name].shape} does not match "
                             f"parameter {name!r} shape {params[name].shape}")
    if not grads:
        return
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in sorted(grads):
        p = params[name]
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
