import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from icrloss.geometry import Box
from icrloss.gradcheck import Scene, general_position
from icrloss.icr import (
    IcrConfig,
    containment_ratio,
    containment_ratio_with_grad,
    icr_factor,
    icr_fd_grad,
    icr_loss,
    icr_simple,
    mean_icr_loss,
)
from icrloss.losses import LossKind, loss_grad, loss_value

from .conftest import boxes, nested_pairs

ratios = st.floats(0.0, 1.0)
deltas = st.floats(0.0, 10.0)


def test_containment_ratio_oracles():
    car = Box.from_corners(0, 0, 10, 10)
    assert containment_ratio(Box(5, 5, 2, 2), car) == 1.0
    assert containment_ratio(Box.from_corners(9, 4, 11, 6), car) == pytest.approx(0.5)
    assert containment_ratio(Box(20, 20, 2, 2), car) == 0.0


@given(boxes(), boxes())
def test_ratio_gradient_matches_fd(pred, container):
    assume(general_position(Scene(pred, container, container)))
    r, g, _ = containment_ratio_with_grad(pred, container)
    assert r == pytest.approx(containment_ratio(pred, container))
    h = 1e-6 * max(pred.w, pred.h)
    fd = np.empty(4)
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        hi = containment_ratio(Box(*(np.array(pred.as_tuple()) + e)), container)
        lo = containment_ratio(Box(*(np.array(pred.as_tuple()) - e)), container)
        fd[j] = (hi - lo) / (2 * h)
    assert np.all(np.abs(g - fd) <= 1e-4 * np.abs(fd) + 1e-7)


@given(ratios, deltas)
def test_factor_bounds(r, d):
    f = icr_factor(r, d)
    assert 1.0 <= f <= d + 1.0


@given(ratios, ratios, deltas)
def test_factor_monotone_in_ratio(r1, r2, d):
    lo, hi = sorted((r1, r2))
    assert icr_factor(lo, d) >= icr_factor(hi, d)


def test_factor_rejects_bad_input():
    with pytest.raises(ValueError):
        icr_factor(1.2, 2.5)
    with pytest.raises(ValueError):
        icr_factor(0.5, -1.0)


def test_simple_form():
    assert icr_simple(0.4, 0.5, 2.5) == pytest.approx(1.0)
    assert icr_simple(0.4, 1.0, 2.5) == 0.4
    with pytest.raises(ValueError):
        icr_simple(0.4, 0.5, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        IcrConfig(-0.5)
    with pytest.raises(ValueError):
        IcrConfig(math.nan)
    assert IcrConfig(0.0, "giou").base is LossKind.GIOU


def test_target_inside_container_is_zero():
    gt = Box(20, -10, 12, 6)
    e = icr_loss(gt, gt, Box(0, 0, 100, 60))
    assert e.value == 0.0
    assert np.all(np.isfinite(e.grad))


@given(boxes(), boxes())
def test_zero_at_target_for_any_container(gt, container):
    assert icr_loss(gt, gt, container).value == 0.0


def test_disjoint_prediction_scales_by_delta_plus_one():
    gt = Box(20, -10, 12, 6)
    container = Box(0, 0, 100, 60)
    pred = Box(-120, 90, 10, 10)
    e = icr_loss(pred, gt, container, IcrConfig(2.5))
    assert e.ratio == 0.0
    assert e.value == pytest.approx(3.5 * loss_value("ciou", pred, gt), rel=1e-12)


@pytest.mark.parametrize("kind", list(LossKind))
@given(pred=boxes(), gt=boxes(), container=boxes())
def test_delta_zero_is_bit_equal(kind, pred, gt, container):
    e = icr_loss(pred, gt, container, IcrConfig(0.0, kind))
    b = loss_grad(kind, pred, gt)
    assert e.value == b.value
    assert np.array_equal(e.grad, b.grad)


@given(boxes(), boxes(), boxes(), st.floats(0.01, 10.0))
def test_pointwise_dominance(pred, gt, container, d):
    e = icr_loss(pred, gt, container, IcrConfig(d))
    assert e.value >= e.base_value
    if e.ratio == 1.0 or e.base_value == 0.0:
        assert abs(e.value - e.base_value) <= 1e-12
    excess = d * (1.0 - e.ratio) * e.base_value
    assert e.value - e.base_value == pytest.approx(excess, rel=1e-9, abs=1e-15)
    if excess > 1e-12:
        assert e.value > e.base_value


@pytest.mark.parametrize("kind", list(LossKind))
@given(pred=boxes(), gt=boxes(), margins=st.tuples(*[st.floats(0.2, 20.0)] * 4), d=st.floats(0.0, 5.0))
def test_composed_gradient_matches_fd(kind, pred, gt, margins, d):
    l, r, b, t = margins
    container = Box.from_corners(gt.x1 - l, gt.y1 - b, gt.x2 + r, gt.y2 + t)
    scene = Scene(pred, gt, container)
    assume(general_position(scene))
    cfg = IcrConfig(d, kind)
    step = 1e-6 * max(pred.w, pred.h)
    a = icr_loss(pred, gt, container, cfg).grad
    f = icr_fd_grad(pred, gt, container, cfg, step)
    assert np.all(np.abs(a - f) <= 1e-4 * np.abs(f) + 1e-7)


def _ray(container, gt, angle, n=120, length=150.0):
    t = np.linspace(0, length, n)
    return [Box(gt.cx + s * math.cos(angle), gt.cy + s * math.sin(angle), gt.w, gt.h) for s in t]


@given(st.floats(0, 2 * math.pi), st.floats(0.5, 5.0))
def test_outward_rays(angle, d):
    gt = Box(20, -10, 12, 6)
    container = Box(0, 0, 100, 60)
    cfg = IcrConfig(d)
    evals = [icr_loss(p, gt, container, cfg) for p in _ray(container, gt, angle)]
    ratio = np.array([e.ratio for e in evals])
    factor = np.array([e.factor for e in evals])
    base = np.array([e.base_value for e in evals])
    comp = np.array([e.value for e in evals])
    # Once outside, moving farther never increases containment.
    assert np.all(np.diff(ratio) <= 1e-12)
    assert np.all(np.diff(factor) >= -1e-12)
    db, dc = np.diff(base), np.diff(comp)
    mask = (db >= 0) & (np.diff(ratio) <= 0)
    assert np.all(dc[mask] >= db[mask] - 1e-12)


@given(nested_pairs())
def test_contained_prediction_has_unit_factor(pair):
    inner, outer = pair
    e = icr_loss(inner, inner.translate(0.01, 0.0), outer)
    assert e.ratio == 1.0
    assert e.factor == 1.0


def test_batch_counts_missing_containers():
    gt = Box(0, 0, 4, 2)
    preds = [Box(1, 1, 4, 2), Box(-1, 0, 3, 3)]
    containers = [Box(0, 0, 20, 20), None]
    out = mean_icr_loss(preds, [gt, gt], containers)
    assert out.missing_containers == 1
    expected = (
        icr_loss(preds[0], gt, containers[0]).value + loss_value("ciou", preds[1], gt)
    ) / 2
    assert out.value == pytest.approx(expected)
    assert out.grad.shape == (2, 4)
