import math

import numpy as np
import pytest

from linecombo.exceptions import BadChannelCount, DegenerateSplit, NonFiniteInput
from linecombo.geometry import Frame, Line
from linecombo.grouping import (
    column_softmax,
    grouping_forward,
    ranking_loss,
    regression_loss,
    score_losses,
    sinusoidal_pe,
    srs_loss,
)

from conftest import random_crossing_lines


def _inputs(rng, m=8, hw=36, c=16, scale=0.3):
    return (rng.normal(size=(m, c)), rng.normal(scale=scale, size=(c, c)), rng.normal(scale=scale, size=(c, c)),
            rng.normal(scale=scale, size=(c, c)), rng.normal(size=(hw, c)), rng.normal(size=(hw, c)))


def test_sinusoidal_pe():
    pe = sinusoidal_pe(60, 60, 96)
    assert pe.shape == (3600, 96)
    assert np.allclose(pe[0, 0::2], 0.0) and np.allclose(pe[0, 1::2], 1.0)
    rows = {tuple(np.round(r, 12)) for r in sinusoidal_pe(32, 32, 16)}
    assert len(rows) == 32 * 32
    with pytest.raises(BadChannelCount):
        sinusoidal_pe(4, 4, 6)


def test_column_softmax_properties(rng):
    logits = rng.normal(size=(8, 50)) * 5
    a = column_softmax(logits)
    assert np.allclose(a.sum(axis=0), 1.0, atol=1e-12) and np.all(a >= 0)
    shifted = logits + rng.normal(size=(1, 50)) * 100
    assert np.allclose(column_softmax(shifted), a, atol=1e-9)


def test_grouping_shapes_default_sizes(rng):
    r, uq, uk, uv, f, s = _inputs(rng, m=8, hw=3600, c=96, scale=0.05)
    res = grouping_forward(r, uq, uk, uv, f, sinusoidal_pe(60, 60, 96))
    assert res.attention.shape == (8, 3600)
    assert res.semantic.shape == (3600, 96)
    assert res.membership.shape == (3600,)
    assert len(res.history) == 3


def test_attention_column_stochastic_each_step(rng):
    for _ in range(10):
        res = grouping_forward(*_inputs(rng))
        for a in res.history:
            assert np.allclose(a.sum(axis=0), 1.0, atol=1e-6) and np.all(a >= 0)


def test_zero_query_projection_gives_uniform(rng):
    r, uq, uk, uv, f, s = _inputs(rng)
    res = grouping_forward(r, np.zeros_like(uq), uk, uv, f, s, steps=1)
    assert np.allclose(res.attention, 1 / 8)
    assert np.all(res.membership == 0)


def test_zero_value_projection_is_residual_identity(rng):
    r, uq, uk, uv, f, s = _inputs(rng)
    res = grouping_forward(r, uq, uk, np.zeros_like(uv), f, s)
    assert np.array_equal(res.queries, r)


def test_membership_invariant_to_logit_scaling(rng):
    r, uq, uk, uv, f, s = _inputs(rng)
    a = grouping_forward(r, uq, uk, uv, f, s, steps=1)
    b = grouping_forward(r, uq * 2.0, uk * 1.5, uv, f, s, steps=1)
    assert np.array_equal(a.membership, b.membership)
    assert not np.allclose(a.attention, b.attention)


def test_grouping_rejects_nonfinite(rng):
    r, uq, uk, uv, f, s = _inputs(rng)
    f[0, 0] = np.nan
    with pytest.raises(NonFiniteInput):
        grouping_forward(r, uq, uk, uv, f, s)


def direct_srs(a, lines, gh, gw, frame, eps):
    """Independent oracle: explicit per-pixel loops and scalar KL sums."""
    total = 0.0
    for line in lines:
        xs, ys = [], []
        for i in range(gh):
            for j in range(gw):
                x = (j + 0.5) * frame.width / gw - frame.width / 2
                y = (i + 0.5) * frame.height / gh - frame.height / 2
                d = x * math.cos(line.theta) + y * math.sin(line.theta) - line.rho
                (xs if d >= 0 else ys).append(i * gw + j)
        px = [sum(a[m, k] for k in xs) / len(xs) + eps for m in range(a.shape[0])]
        py = [sum(a[m, k] for k in ys) / len(ys) + eps for m in range(a.shape[0])]
        px = [v / sum(px) for v in px]
        py = [v / sum(py) for v in py]
        total -= sum(p * math.log(p / q) for p, q in zip(px, py))
        total -= sum(q * math.log(q / p) for p, q in zip(px, py))
    return total


def test_srs_uniform_is_zero(square):
    loss, grad = srs_loss(np.full((4, 64), 0.25), [Line(0, 0)], 8, 8, square)
    assert loss == 0.0


def test_srs_two_query_closed_form(square):
    eps = 1e-8
    a = np.zeros((2, 64))
    cols = np.arange(64) % 8
    a[0, cols >= 4] = 1.0  # positive side of x = 0
    a[1, cols < 4] = 1.0
    loss, _ = srs_loss(a, [Line(0, 0)], 8, 8, square, eps=eps)
    e = eps / (1 + 2 * eps)
    assert loss == pytest.approx(-2 * (1 - 2 * e) * math.log((1 - e) / e), rel=1e-12)
    assert loss == pytest.approx(direct_srs(a, [Line(0, 0)], 8, 8, square, eps), rel=1e-12)


def test_srs_matches_direct_oracle_and_is_nonpositive(rng, square):
    for _ in range(10):
        a = column_softmax(rng.normal(size=(4, 64)) * 2)
        lines = random_crossing_lines(rng, square, 2, rho_frac=0.5)
        loss, _ = srs_loss(a, lines, 8, 8, square)
        assert loss <= 0
        assert loss == pytest.approx(direct_srs(a, lines, 8, 8, square, 1e-8), rel=1e-10, abs=1e-14)


def test_srs_gradient_finite_differences(rng, square):
    h = 1e-5
    for _ in range(20):
        a = column_softmax(rng.normal(size=(4, 64)))
        lines = random_crossing_lines(rng, square, int(rng.integers(1, 3)), rho_frac=0.5)
        _, grad = srs_loss(a, lines, 8, 8, square)
        fd = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            ap, am = a.copy(), a.copy()
            ap[idx] += h
            am[idx] -= h
            fd[idx] = (srs_loss(ap, lines, 8, 8, square)[0] - srs_loss(am, lines, 8, 8, square)[0]) / (2 * h)
        rel = np.max(np.abs(grad - fd)) / np.max(np.abs(fd))
        assert rel <= 1e-4


def test_srs_degenerate_split(square):
    with pytest.raises(DegenerateSplit):
        srs_loss(np.full((2, 16), 0.5), [Line(49.0, 0.0)], 4, 4, square)


def test_score_losses():
    assert regression_loss(0.4, 0.4) == 0.0
    assert regression_loss(0.3, 0.5) == pytest.approx(0.04, abs=1e-15)
    assert ranking_loss([(0.9, 0.9), (0.5, 0.5), (0.1, 0.1)], margin=0.1) == 0.0
    # one violated pair out of one ordered pair: margin - (0.5 - 0.6) = 0.2
    assert ranking_loss([(0.5, 0.9), (0.6, 0.1)], margin=0.1) == pytest.approx(0.2)
    assert score_losses(0.3, 0.5, [(0.5, 0.9), (0.6, 0.1)]) == pytest.approx((0.04, 0.2))
