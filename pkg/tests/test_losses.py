import math

import mpmath
import numpy as np
import pytest

import oracles
from epmine.errors import ConfigError, DataError, EmptyNegatives, NoValidTriplet
from epmine.losses import NCA_STRATEGIES, STRATEGIES, LossConfig, compute_loss, nca_term, triplet_hinge

from helpers import embedding_fd_check, random_labels, random_unit_rows


def mp_nca(s_pos, s_negs, tau):
    mpmath.mp.dps = 50
    num = mpmath.exp(mpmath.mpf(s_pos) / tau)
    den = num + sum(mpmath.exp(mpmath.mpf(s) / tau) for s in s_negs)
    return float(-mpmath.log(num / den))


# ---------------------------------------------------------------- nca_term


@pytest.mark.parametrize("tau", [0.05, 0.1, 1.0, 3.0])
def test_nca_symmetric_is_ln2(tau):
    loss, _, _ = nca_term(0.3, [0.3], tau)
    assert loss == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("s_pos, s_neg, tau", [(1.0, 0.0, 1.0), (0.9, 0.8, 0.1)])
def test_nca_gap_of_one(s_pos, s_neg, tau):
    expected = mp_nca(s_pos, [s_neg], tau)
    assert expected == pytest.approx(0.313262, abs=1e-6)
    assert nca_term(s_pos, [s_neg], tau)[0] == pytest.approx(expected, rel=1e-12)


def test_nca_against_high_precision(rng):
    for _ in range(50):
        k = int(rng.integers(1, 20))
        s = rng.uniform(-1, 1, size=k + 1)
        tau = float(rng.choice([0.05, 0.1, 0.5]))
        assert nca_term(s[0], s[1:], tau)[0] == pytest.approx(mp_nca(s[0], s[1:], tau), rel=1e-11)


def test_nca_gradients_are_softmax_weights(rng):
    s = rng.uniform(-1, 1, size=6)
    tau = 0.1
    _, dpos, dneg = nca_term(s[0], s[1:], tau)
    h = 1e-6
    fd_pos = (nca_term(s[0] + h, s[1:], tau)[0] - nca_term(s[0] - h, s[1:], tau)[0]) / (2 * h)
    assert dpos == pytest.approx(fd_pos, rel=1e-6)
    for i in range(5):
        up, dn = s[1:].copy(), s[1:].copy()
        up[i] += h
        dn[i] -= h
        fd = (nca_term(s[0], up, tau)[0] - nca_term(s[0], dn, tau)[0]) / (2 * h)
        assert dneg[i] == pytest.approx(fd, rel=1e-6, abs=1e-12)
    # softmax weights: dpos + sum(dneg) = 0
    assert dpos + dneg.sum() == pytest.approx(0, abs=1e-12)


def test_nca_stable_at_low_temperature():
    loss, dpos, _ = nca_term(-1.0, [1.0, 1.0], 0.001)
    assert math.isfinite(loss) and loss == pytest.approx(2000 + math.log(2), rel=1e-12)
    assert dpos == pytest.approx(-1000)


def test_nca_positive_and_vanishing():
    assert nca_term(0.5, [0.49], 0.1)[0] > 0
    assert nca_term(1.0, [-1.0], 0.01)[0] < 1e-80


def test_nca_empty_negatives():
    with pytest.raises(EmptyNegatives):
        nca_term(0.5, [], 0.1)


# ---------------------------------------------------------------- compute_loss


def test_loss_config_validation():
    with pytest.raises(ConfigError):
        LossConfig(strategy="MAGNET")
    with pytest.raises(ConfigError):
        LossConfig(temperature=0)
    with pytest.raises(ConfigError):
        LossConfig(margin=-1)
    with pytest.raises(ConfigError):
        LossConfig(shn_fallback="random")
    assert LossConfig("epshn").strategy == "EPSHN"
    assert LossConfig().temperature == 0.1


def test_four_point_batch_matches_straight_line():
    # 2 classes x 2 items near the axes of the plane
    rng = np.random.default_rng(2024)
    base = np.array([[1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [-0.6, 0.8]])
    E = base + 0.05 * rng.standard_normal(base.shape)
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    labels = [0, 0, 1, 1]
    for strategy in NCA_STRATEGIES:
        got = compute_loss(E, labels, LossConfig(strategy)).loss
        want = oracles.straight_line_loss(E.tolist(), labels, strategy)
        assert got == pytest.approx(want, rel=1e-12), strategy


@pytest.mark.parametrize("strategy", NCA_STRATEGIES)
def test_random_batches_match_straight_line(strategy, rng):
    for _ in range(20):
        if strategy == "NPAIR":
            labels = random_labels(rng, int(rng.integers(2, 12)) * 2, group_size=2)
        else:
            labels = random_labels(rng, int(rng.integers(4, 30)))
        E = random_unit_rows(rng, len(labels), int(rng.integers(2, 8)))
        for fallback in ("hardest", "skip"):
            cfg = LossConfig(strategy, shn_fallback=fallback)
            try:
                got = compute_loss(E, labels, cfg).loss
            except NoValidTriplet:
                continue
            want = oracles.straight_line_loss(E.tolist(), list(labels), strategy, fallback=fallback)
            assert got == pytest.approx(want, rel=1e-11)


def test_group_size_two_equivalences(rng):
    labels = random_labels(rng, 20, group_size=2)
    E = random_unit_rows(rng, 20, 5)
    out = {s: compute_loss(E, labels, LossConfig(s)) for s in ("EP", "HP", "NPAIR", "BATCH_ALL", "EPHN", "HPHN")}
    for s in ("HP", "NPAIR", "BATCH_ALL"):
        assert out[s].loss == out["EP"].loss
        np.testing.assert_array_equal(out[s].grad, out["EP"].grad)
    assert out["EPHN"].loss == out["HPHN"].loss


def test_npair_rejects_larger_groups(rng):
    with pytest.raises(DataError):
        compute_loss(random_unit_rows(rng, 6, 3), [0, 0, 0, 1, 1, 1], LossConfig("NPAIR"))


def test_single_class_batch_has_no_triplet(rng):
    for s in STRATEGIES:
        labels = [1, 1] if s == "NPAIR" else [1, 1, 1, 1]
        with pytest.raises(NoValidTriplet):
            compute_loss(random_unit_rows(rng, len(labels), 3), labels, LossConfig(s))


def test_shn_skip_vs_hardest():
    # anchor 0 positive at 0.5, both negatives are more similar: SHN infeasible
    E = np.array([[1.0, 0.0], [0.5, math.sqrt(0.75)], [0.9, math.sqrt(0.19)], [0.8, 0.6]])
    labels = [0, 0, 1, 1]
    hardest = compute_loss(E, labels, LossConfig("EPSHN", shn_fallback="hardest"))
    skip = compute_loss(E, labels, LossConfig("EPSHN", shn_fallback="skip"))
    assert hardest.selection[2][0] == 2  # falls back to the hard negative
    assert 0 not in skip.selection[0].tolist()
    assert skip.num_anchors < hardest.num_anchors


def test_grad_zero_for_unused_rows(rng):
    # item 4 is a singleton far from everything; under EPHN it is never mined
    E = np.array([[1, 0, 0], [0.9, 0.1, 0], [0, 1, 0], [0.1, 0.9, 0], [0, 0, 1.0]])
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    out = compute_loss(E, [0, 0, 1, 1, 2], LossConfig("EPHN"))
    assert np.all(out.grad[4] == 0)
    assert np.any(out.grad[0] != 0)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_embedding_gradient_finite_differences(strategy, rng):
    checked = 0
    while checked < 10:
        if strategy == "NPAIR":
            labels = random_labels(rng, int(rng.integers(2, 8)) * 2, group_size=2)
        else:
            labels = random_labels(rng, int(rng.integers(4, 16)))
        E = random_unit_rows(rng, len(labels), int(rng.integers(2, 6)))
        result = embedding_fd_check(E, labels, LossConfig(strategy))
        if result is None:
            continue
        assert result
        checked += 1


@pytest.mark.parametrize("strategy", ["EP", "EPSHN", "BATCH_ALL", "TRIPLET_MARGIN"])
def test_permutation_equivariance(strategy, rng):
    labels = random_labels(rng, 16)
    E = random_unit_rows(rng, 16, 4)
    perm = rng.permutation(16)
    cfg = LossConfig(strategy, triplet_positive="easy")
    a = compute_loss(E, labels, cfg)
    b = compute_loss(E[perm], labels[perm], cfg)
    assert b.loss == pytest.approx(a.loss, rel=1e-12)
    np.testing.assert_allclose(b.grad, a.grad[perm], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_ep_loss_at_most_hp_loss(seed):
    rng = np.random.default_rng(seed)
    labels = random_labels(rng, 24)
    E = random_unit_rows(rng, 24, 4)
    assert compute_loss(E, labels, LossConfig("EP")).loss <= compute_loss(E, labels, LossConfig("HP")).loss


# ---------------------------------------------------------------- triplet margin


def test_triplet_hinge_arithmetic():
    assert triplet_hinge(0.7, 0.7, 0.0) == 0.0
    assert triplet_hinge(1.0, 0.5, 0.1) == pytest.approx(0.6)


def test_triplet_margin_loss_value():
    # anchor 0: positive at distance 1, only negative at distance 0.5
    def at_distance(d):
        s = 1 - d * d / 2
        return [s, math.sqrt(1 - s * s)]

    E = np.array([[1.0, 0.0], at_distance(1.0), at_distance(0.5)])
    E[2, 1] *= -1
    cfg = LossConfig("TRIPLET_MARGIN", margin=0.1, triplet_positive="easy")
    out = compute_loss(E, [0, 0, 1], cfg)
    # anchors 0 and 1 contribute; anchor 0's term is 1.0 - 0.5 + 0.1
    d = lambda i, j: np.linalg.norm(E[i] - E[j])
    term1 = max(0.0, d(1, 0) - d(1, 2) + 0.1)
    assert out.loss == pytest.approx((0.6 + term1) / 2, rel=1e-12)


def test_triplet_zero_at_boundary():
    E = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    out = compute_loss(E, [0, 0, 1], LossConfig("TRIPLET_MARGIN", margin=0.0, triplet_positive="easy"))
    # anchor 0: d_ap = d_an = sqrt(2); anchor 1: d_ap = sqrt(2) < d_an = 2
    assert not out.selection[3].any()
    assert out.loss == 0.0
    assert np.all(out.grad == 0)


def test_triplet_random_positive_is_seeded(rng):
    labels = random_labels(rng, 20)
    E = random_unit_rows(rng, 20, 4)
    cfg = LossConfig("TRIPLET_MARGIN", seed=3)
    a, b = compute_loss(E, labels, cfg), compute_loss(E, labels, cfg)
    assert a.loss == b.loss
    assert np.array_equal(a.selection[1], b.selection[1])
