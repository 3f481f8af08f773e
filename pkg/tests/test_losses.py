"""Loss values against hand-derived oracles, plus gradient and property checks."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradcheck import central_diff, rel_error
from tempcoh.losses import (
    LOSS_ARITY,
    LOSS_KINDS,
    LossConfig,
    batch_loss_and_gradients,
    combined_loss,
    contrastive_loss,
    l2_distance,
    loss_gradients,
    ranking_loss,
    second_order_contrastive_loss,
)

TOL = 1e-9

SCALAR_LOSS = {
    "contrastive": contrastive_loss,
    "ranking": ranking_loss,
    "contrastive2": second_order_contrastive_loss,
    "combined": combined_loss,
}


# ---------------------------------------------------------------- distance

def test_l2_pythagorean_triple():
    assert l2_distance((0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0, abs=TOL)


def test_l2_identity_is_zero():
    v = (1.25, -3.5, 0.0)
    assert l2_distance(v, v) == 0.0


def test_l2_matches_scalar_loop_oracle(rng):
    a = rng.normal(size=8)
    b = rng.normal(size=8)
    oracle = math.sqrt(sum((float(a[i]) - float(b[i])) ** 2 for i in range(8)))
    assert l2_distance(a, b) == pytest.approx(oracle, abs=1e-12)


def test_l2_symmetry(rng):
    a, b = rng.normal(size=5), rng.normal(size=5)
    assert l2_distance(a, b) == l2_distance(b, a)


def test_l2_dimension_mismatch():
    with pytest.raises(ValueError):
        l2_distance((1.0, 2.0), (1.0, 2.0, 3.0))


# ---------------------------------------------------------------- hand values

def test_contrastive_hand_examples():
    cfg = LossConfig(margin_contrastive=2.0)
    assert contrastive_loss((0, 0), (0, 1), (0, 4), cfg) == pytest.approx(1.0, abs=TOL)
    # Both terms vanish: identical near pair, distant pair exactly at margin.
    assert contrastive_loss((1, 1), (1, 1), (1, 3), cfg) == pytest.approx(0.0, abs=TOL)
    assert contrastive_loss((0, 0), (3, 4), (1, 0), cfg) == pytest.approx(6.0, abs=TOL)


def test_ranking_hand_examples():
    cfg = LossConfig(margin_ranking=2.0)
    assert ranking_loss((0, 0), (0, 1), (0, 4), cfg) == pytest.approx(0.0, abs=TOL)
    assert ranking_loss((0, 0), (3, 4), (1, 0), cfg) == pytest.approx(6.0, abs=TOL)


@pytest.mark.parametrize("margin", [2.0, 0.7, 0.0])
def test_ranking_equal_pairs_gives_margin(margin):
    cfg = LossConfig(margin_ranking=margin)
    v = (0.5, -1.5, 2.0)
    assert ranking_loss((0, 0, 0), v, v, cfg) == pytest.approx(margin, abs=TOL)


def test_second_order_hand_examples():
    cfg = LossConfig(margin_contrastive=2.0)
    got = second_order_contrastive_loss((0, 0), (1, 0), (2, 0), (5, 0), cfg)
    assert got == pytest.approx(0.0, abs=TOL)
    v = (1.0, 2.0)
    assert second_order_contrastive_loss(v, v, v, v, cfg) == pytest.approx(2.0, abs=TOL)
    got = second_order_contrastive_loss((0, 0), (1, 0), (3, 0), (2, 0), cfg)
    assert got == pytest.approx(3.0, abs=TOL)


def test_combined_hand_examples():
    cfg = LossConfig(margin_contrastive=2.0, second_order_weight=0.5)
    got = combined_loss((0, 0), (1, 0), (2, 0), (5, 0), cfg)
    assert got == pytest.approx(1.0, abs=TOL)
    v = (3.0, -1.0)
    assert combined_loss(v, v, v, v, cfg) == pytest.approx(3.0, abs=TOL)


def test_combined_with_zero_weight_equals_contrastive(rng):
    cfg = LossConfig(second_order_weight=0.0)
    for _ in range(20):
        a, b, c, g = (rng.normal(size=4) for _ in range(4))
        assert combined_loss(a, b, c, g, cfg) == contrastive_loss(a, b, g, cfg)


def test_second_order_equals_contrastive_on_differences_exactly(rng):
    cfg = LossConfig()
    for _ in range(200):
        a, b, c, g = (rng.normal(size=5) for _ in range(4))
        direct = second_order_contrastive_loss(a, b, c, g, cfg)
        via_diffs = contrastive_loss(a - b, b - c, b - g, cfg)
        assert direct == via_diffs  # bitwise, not approximate


def test_combined_is_sum_of_parts(rng):
    cfg = LossConfig(second_order_weight=0.5)
    for _ in range(50):
        a, b, c, g = (rng.normal(size=3) for _ in range(4))
        expected = (contrastive_loss(a, b, g, cfg)
                    + 0.5 * second_order_contrastive_loss(a, b, c, g, cfg))
        assert combined_loss(a, b, c, g, cfg) == pytest.approx(expected, abs=TOL)


# --------------------------------------------------------- argument checking

def test_loss_config_rejects_negative_values():
    with pytest.raises(ValueError):
        LossConfig(margin_contrastive=-0.1)
    with pytest.raises(ValueError):
        LossConfig(margin_ranking=-1.0)
    with pytest.raises(ValueError):
        LossConfig(second_order_weight=-0.5)


def test_wrong_input_count_rejected():
    v = np.zeros(2)
    with pytest.raises(ValueError):
        loss_gradients("contrastive", [v, v, v, v])
    with pytest.raises(ValueError):
        loss_gradients("combined", [v, v, v])
    with pytest.raises(ValueError):
        batch_loss_and_gradients("ranking", [v, v])


def test_unknown_kind_rejected():
    v = np.zeros(2)
    with pytest.raises(ValueError):
        loss_gradients("euclidean", [v, v, v])


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        contrastive_loss((0, 0), (0, 1, 2), (0, 4))


# ------------------------------------------------------ subgradient choices

def test_contrastive_near_term_subgradient_zero_at_coincidence():
    a = np.array([1.0, 2.0])
    far = np.array([9.0, 9.0])
    grads = loss_gradients("contrastive", [a, a.copy(), far])
    assert np.array_equal(grads[1], np.zeros(2))


def test_ranking_flat_region_gradients_all_zero():
    # D(near) + margin < D(far): hinge strictly inactive.
    a = np.array([0.0, 0.0])
    near = np.array([0.0, 1.0])
    far = np.array([0.0, 9.0])
    for g in loss_gradients("ranking", [a, near, far]):
        assert np.array_equal(g, np.zeros(2))


def test_contrastive_hinge_boundary_gradient_zero():
    # D(anchor, distant) equals the margin exactly: hinge argument is 0,
    # so the distant branch receives the zero subgradient.
    cfg = LossConfig(margin_contrastive=2.0)
    a = np.array([0.0, 0.0])
    far = np.array([2.0, 0.0])
    grads = loss_gradients("contrastive", [a, np.array([0.0, 0.5]), far], cfg)
    assert np.array_equal(grads[2], np.zeros(2))


# ------------------------------------------------------------- batched form

def test_batch_rows_equal_scalar_calls_exactly(rng):
    cfg = LossConfig()
    for kind in LOSS_KINDS:
        arity = LOSS_ARITY[kind]
        branches = [rng.normal(size=(9, 4)) for _ in range(arity)]
        losses, grads = batch_loss_and_gradients(kind, branches, cfg)
        assert losses.shape == (9,)
        assert len(grads) == arity and all(g.shape == (9, 4) for g in grads)
        for row in range(9):
            single = [b[row] for b in branches]
            assert losses[row] == SCALAR_LOSS[kind](*single, cfg)
            row_grads = loss_gradients(kind, single, cfg)
            for pos in range(arity):
                assert np.array_equal(grads[pos][row], row_grads[pos])


def test_batch_without_gradients(rng):
    branches = [rng.normal(size=(3, 2)) for _ in range(3)]
    losses, grads = batch_loss_and_gradients("contrastive", branches,
                                             want_grads=False)
    assert grads is None and losses.shape == (3,)


# ---------------------------------------------------------------- properties

finite_vec = st.integers(1, 5).flatmap(
    lambda d: st.lists(
        st.floats(-10, 10, allow_nan=False, allow_infinity=False),
        min_size=d, max_size=d))


@given(st.tuples(finite_vec, finite_vec, finite_vec, finite_vec))
def test_losses_nonnegative(vecs):
    d = len(vecs[0])
    vs = [np.resize(np.asarray(v, dtype=float), d) for v in vecs]
    for kind in LOSS_KINDS:
        assert SCALAR_LOSS[kind](*vs[:LOSS_ARITY[kind]]) >= 0.0


@given(st.tuples(finite_vec, finite_vec, finite_vec, finite_vec),
       st.floats(-5, 5, allow_nan=False))
def test_translation_invariance(vecs, shift):
    d = len(vecs[0])
    vs = [np.resize(np.asarray(v, dtype=float), d) for v in vecs]
    for kind in LOSS_KINDS:
        arity = LOSS_ARITY[kind]
        base = SCALAR_LOSS[kind](*vs[:arity])
        moved = SCALAR_LOSS[kind](*[v + shift for v in vs[:arity]])
        assert moved == pytest.approx(base, abs=1e-9)


def test_contrastive_monotone_in_far_distance(rng):
    # Pushing the distant embedding radially away from the anchor never
    # increases the loss; pulling the near embedding away never decreases it.
    for _ in range(50):
        a = rng.normal(size=3)
        near = a + rng.normal(size=3)
        far = a + rng.normal(size=3) + 0.1
        scales = sorted(rng.uniform(0.1, 3.0, size=4))
        far_losses = [contrastive_loss(a, near, a + s * (far - a)) for s in scales]
        assert all(x >= y - 1e-12 for x, y in zip(far_losses, far_losses[1:]))
        near_losses = [contrastive_loss(a, a + s * (near - a), far) for s in scales]
        assert all(x <= y + 1e-12 for x, y in zip(near_losses, near_losses[1:]))


# ------------------------------------------------------------ grad checking

def _nondegenerate(kind: str, pts, cfg: LossConfig, eps: float = 0.05) -> bool:
    """Keep points away from the distance and hinge non-smoothness."""
    def contrastive_ok(a, b, g):
        dn = np.linalg.norm(a - b)
        df = np.linalg.norm(a - g)
        return dn > eps and df > eps and abs(cfg.margin_contrastive - df) > eps

    if kind == "contrastive":
        return contrastive_ok(*pts)
    if kind == "ranking":
        a, b, g = pts
        dn = np.linalg.norm(a - b)
        df = np.linalg.norm(a - g)
        return dn > eps and df > eps and abs(dn - df + cfg.margin_ranking) > eps
    a, b, c, g = pts
    second = contrastive_ok(a - b, b - c, b - g)
    if kind == "contrastive2":
        return second
    return second and contrastive_ok(a, b, g)


def draw_nondegenerate(rng, kind: str, cfg: LossConfig, dim: int):
    while True:
        pts = [rng.uniform(-3.0, 3.0, size=dim) for _ in range(LOSS_ARITY[kind])]
        if _nondegenerate(kind, pts, cfg):
            return pts


def fd_worst_error(kind: str, pts, cfg: LossConfig) -> float:
    dim = pts[0].size
    arity = len(pts)
    flat = np.concatenate(pts)

    def loss_of(x):
        return SCALAR_LOSS[kind](*(x[i * dim:(i + 1) * dim] for i in range(arity)), cfg)

    numeric = central_diff(loss_of, flat)
    analytic = np.concatenate(loss_gradients(kind, pts, cfg))
    return rel_error(analytic, numeric)


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_gradients_match_finite_differences(kind, rng):
    cfg = LossConfig()
    worst = max(
        fd_worst_error(kind, draw_nondegenerate(rng, kind, cfg, dim), cfg)
        for _ in range(100)
        for dim in [int(rng.integers(2, 6))]
    )
    assert worst < 1e-4


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_gradients_tight_at_well_conditioned_points(kind, rng):
    # Far from every kink the losses are smooth, so central differences
    # agree to much better than the generic bound.
    cfg = LossConfig()
    worst = max(
        fd_worst_error(kind, draw_nondegenerate(rng, kind, cfg, 3), cfg)
        for _ in range(20)
    )
    assert worst < 1e-6
