"""Distance and temporal-coherence losses with analytic gradients.

All losses operate on embedding vectors and depend on their inputs only
through differences and Euclidean distances, so every loss is invariant to
translating all inputs by a common vector. Values and gradients are computed
in float64 regardless of input dtype.

Loss kinds:
  contrastive   pull (anchor, near) together, push (anchor, distant) beyond a margin
  ranking       require (anchor, near) closer than (anchor, distant) by a margin
  contrastive2  contrastive loss applied to first differences (steadiness)
  combined      contrastive + weight * contrastive2

Subgradient conventions (needed where the loss is not differentiable): the
gradient of a distance term is zero when the distance is zero, and the
gradient of a hinge is zero when its argument is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOSS_KINDS = ("contrastive", "ranking", "contrastive2", "combined")
LOSS_ARITY = {"contrastive": 3, "ranking": 3, "contrastive2": 4, "combined": 4}


@dataclass(frozen=True)
class LossConfig:
    """Margins and second-order weight for the coherence losses."""

    margin_contrastive: float = 2.0
    margin_ranking: float = 2.0
    second_order_weight: float = 0.5

    def __post_init__(self):
        if self.margin_contrastive < 0:
            raise ValueError("margin_contrastive must be >= 0")
        if self.margin_ranking < 0:
            raise ValueError("margin_ranking must be >= 0")
        if self.second_order_weight < 0:
            raise ValueError("second_order_weight must be >= 0")


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {v.shape}")
    return v


def _check_dims(*vectors: np.ndarray) -> None:
    dims = {v.shape[-1] for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"embedding dimensions differ: {sorted(dims)}")


def l2_distance(a, b) -> float:
    """Euclidean distance between two embedding vectors."""
    va, vb = _as_vector(a, "a"), _as_vector(b, "b")
    _check_dims(va, vb)
    return float(np.linalg.norm(va - vb))


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rowwise Euclidean distance for (..., d) stacks."""
    return np.linalg.norm(a - b, axis=-1)


def _unit(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """diff / dist rowwise, zero rows where dist == 0."""
    safe = np.where(dist > 0.0, dist, 1.0)
    return np.where((dist > 0.0)[..., None], diff / safe[..., None], 0.0)


def _contrastive(anchor, near, distant, margin, want_grads):
    d_near = _dist(anchor, near)
    d_far = _dist(anchor, distant)
    hinge = margin - d_far
    loss = d_near + np.maximum(0.0, hinge)
    if not want_grads:
        return loss, None
    u_near = _unit(anchor - near, d_near)
    u_far = _unit(anchor - distant, d_far)
    active = (hinge > 0.0)[..., None]
    g_anchor = u_near - np.where(active, u_far, 0.0)
    g_near = -u_near
    g_far = np.where(active, u_far, 0.0)
    return loss, [g_anchor, g_near, g_far]


def _ranking(anchor, near, distant, margin, want_grads):
    d_near = _dist(anchor, near)
    d_far = _dist(anchor, distant)
    hinge = d_near - d_far + margin
    loss = np.maximum(0.0, hinge)
    if not want_grads:
        return loss, None
    active = (hinge > 0.0)[..., None]
    u_near = np.where(active, _unit(anchor - near, d_near), 0.0)
    u_far = np.where(active, _unit(anchor - distant, d_far), 0.0)
    return loss, [u_near - u_far, -u_near, u_far]


def _second_order(anchor, near, near2, distant, margin, want_grads):
    # Contrastive loss on the three first-difference vectors.
    diff_a = anchor - near
    diff_b = near - near2
    diff_g = near - distant
    loss, grads = _contrastive(diff_a, diff_b, diff_g, margin, want_grads)
    if not want_grads:
        return loss, None
    g_a, g_b, g_g = grads
    return loss, [g_a, -g_a + g_b + g_g, -g_b, -g_g]


def _evaluate(kind: str, branches: list[np.ndarray], cfg: LossConfig, want_grads: bool):
    if kind == "contrastive":
        return _contrastive(*branches, cfg.margin_contrastive, want_grads)
    if kind == "ranking":
        return _ranking(*branches, cfg.margin_ranking, want_grads)
    if kind == "contrastive2":
        return _second_order(*branches, cfg.margin_contrastive, want_grads)
    if kind == "combined":
        anchor, near, near2, distant = branches
        l1, g1 = _contrastive(anchor, near, distant, cfg.margin_contrastive, want_grads)
        l2, g2 = _second_order(anchor, near, near2, distant, cfg.margin_contrastive, want_grads)
        w = cfg.second_order_weight
        loss = l1 + w * l2
        if not want_grads:
            return loss, None
        grads = [
            g1[0] + w * g2[0],
            g1[1] + w * g2[1],
            w * g2[2],
            g1[2] + w * g2[3],
        ]
        return loss, grads
    raise ValueError(f"unknown loss kind {kind!r}")


def batch_loss_and_gradients(kind, branches, cfg=LossConfig(), want_grads=True):
    """Evaluate a loss on stacked embeddings.

    `branches` is a list of arrays of shape (B, d) (or (d,) for a single
    example), one per network branch in tuple order. Returns per-example
    losses of shape (B,) and, when requested, one (B, d) gradient array per
    branch. Everything is computed in float64.
    """
    if kind not in LOSS_ARITY:
        raise ValueError(f"unknown loss kind {kind!r}")
    if len(branches) != LOSS_ARITY[kind]:
        raise ValueError(
            f"{kind} expects {LOSS_ARITY[kind]} inputs, got {len(branches)}"
        )
    arrays = [np.asarray(b, dtype=np.float64) for b in branches]
    _check_dims(*arrays)
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"branch shapes differ: {sorted(shapes)}")
    return _evaluate(kind, arrays, cfg, want_grads)


def contrastive_loss(anchor, near, distant, cfg: LossConfig = LossConfig()) -> float:
    """D(anchor, near) + max(0, margin - D(anchor, distant))."""
    vs = [_as_vector(v, n) for v, n in ((anchor, "anchor"), (near, "near"), (distant, "distant"))]
    _check_dims(*vs)
    loss, _ = _evaluate("contrastive", vs, cfg, want_grads=False)
    return float(loss)


def ranking_loss(anchor, near, distant, cfg: LossConfig = LossConfig()) -> float:
    """max(0, D(anchor, near) - D(anchor, distant) + margin)."""
    vs = [_as_vector(v, n) for v, n in ((anchor, "anchor"), (near, "near"), (distant, "distant"))]
    _check_dims(*vs)
    loss, _ = _evaluate("ranking", vs, cfg, want_grads=False)
    return float(loss)


def second_order_contrastive_loss(anchor, near, near2, distant,
                                  cfg: LossConfig = LossConfig()) -> float:
    """Contrastive loss applied to the first differences of a 4-tuple."""
    vs = [_as_vector(v, n) for v, n in
          ((anchor, "anchor"), (near, "near"), (near2, "near2"), (distant, "distant"))]
    _check_dims(*vs)
    loss, _ = _evaluate("contrastive2", vs, cfg, want_grads=False)
    return float(loss)


def combined_loss(anchor, near, near2, distant, cfg: LossConfig = LossConfig()) -> float:
    """First-order contrastive plus weighted second-order contrastive."""
    vs = [_as_vector(v, n) for v, n in
          ((anchor, "anchor"), (near, "near"), (near2, "near2"), (distant, "distant"))]
    _check_dims(*vs)
    loss, _ = _evaluate("combined", vs, cfg, want_grads=False)
    return float(loss)


def loss_gradients(kind: str, inputs, cfg: LossConfig = LossConfig()) -> list[np.ndarray]:
    """Analytic (sub)gradients of a loss with respect to each input embedding.

    Gradients flow through every branch; shared-parameter accumulation is the
    caller's concern.
    """
    vectors = [_as_vector(v, f"inputs[{i}]") for i, v in enumerate(inputs)]
    if kind not in LOSS_ARITY:
        raise ValueError(f"unknown loss kind {kind!r}")
    if len(vectors) != LOSS_ARITY[kind]:
        raise ValueError(f"{kind} expects {LOSS_ARITY[kind]} inputs, got {len(vectors)}")
    _check_dims(*vectors)
    _, grads = _evaluate(kind, vectors, cfg, want_grads=True)
    return grads
