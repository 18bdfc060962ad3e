import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pbp.errors import EmptyMapError, ShapeError, UndefinedMetricError
from pbp.lane_graph import LaneGraph
from pbp.metrics import (
    MetricsReport,
    check_monotone,
    dac,
    evaluate,
    lane_deviation,
    min_ade,
    min_fde,
    miss_rate,
    offroad_rate,
    top_k,
)
from pbp.predictor import PredictionSet

from maps import chain_graph, rect

_SETS = oracles.random_prediction_sets(60, seed=5)


@pytest.fixture(scope="module")
def sets():
    return _SETS


def pset(trajs, probs):
    trajs = np.asarray(trajs, dtype=float)
    return PredictionSet(trajs, probs, [None] * len(trajs), 0, "path_free", [False] * len(trajs))


def test_perfect_prediction():
    gt = np.stack([np.arange(30.0), np.zeros(30)], axis=1)
    p = pset([gt + 3.0, gt], [0.7, 0.3])
    assert min_ade(p, gt) == 0.0 and min_fde(p, gt) == 0.0
    assert miss_rate([(p, gt)]) == 0.0


def test_top1_uses_most_probable():
    gt = np.zeros((30, 2))
    p = pset([np.full((30, 2), 0.0), np.full((30, 2), [3.0, 4.0])], [0.4, 0.6])
    assert min_fde(p, gt, 1) == 5.0
    assert min_fde(p, gt, 2) == 0.0


def test_tie_prefers_lower_index():
    p = pset([np.ones((30, 2)), np.zeros((30, 2))], [0.5, 0.5])
    assert np.array_equal(top_k(p, 1)[0], np.ones((30, 2)))


def test_miss_threshold_strict():
    gt = np.zeros((30, 2))
    exact = pset([np.full((30, 2), [2.0, 0.0])], [1.0])
    beyond = pset([np.full((30, 2), [2.0 + 1e-9, 0.0])], [1.0])
    assert miss_rate([(exact, gt)]) == 0.0
    assert miss_rate([(beyond, gt)]) == 1.0


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        min_ade(pset([np.zeros((30, 2))], [1.0]), np.zeros((20, 2)))


def test_empty_inputs():
    with pytest.raises(UndefinedMetricError):
        miss_rate([])
    with pytest.raises(UndefinedMetricError):
        evaluate([])
    with pytest.raises(EmptyMapError):
        lane_deviation(pset([np.zeros((30, 2))], [1.0]), LaneGraph([], {}, []))


def test_offroad_examples():
    g = chain_graph()
    on = np.stack([np.linspace(1, 40, 30), np.zeros(30)], axis=1)
    off = on + [0.0, 10.0]
    rate, per = offroad_rate(pset([on, off], [0.5, 0.5]), g)
    assert rate == 0.5 and per == [0.5] * 30
    assert dac(pset([on, off], [0.5, 0.5]), g) == 0.5
    # points on the polygon edge count as inside
    edge = np.stack([np.linspace(1, 40, 30), np.full(30, 1.75)], axis=1)
    assert offroad_rate(pset([edge], [1.0]), g)[0] == 0.0


def test_lane_deviation_constant_offset():
    g = chain_graph()
    traj = np.stack([np.linspace(1, 40, 30), np.full(30, 1.25)], axis=1)
    assert lane_deviation(pset([traj], [1.0]), g) == pytest.approx(1.25, abs=1e-12)


def test_displacement_oracles(sets):
    for pred, gt, _ in sets:
        t, p = pred.trajectories.tolist(), pred.probabilities.tolist()
        for k in (None, 1, 3, 6):
            assert abs(min_ade(pred, gt, k) - oracles.min_ade(t, p, gt.tolist(), k)) <= 1e-9
            assert abs(min_fde(pred, gt, k) - oracles.min_fde(t, p, gt.tolist(), k)) <= 1e-9
    items = [(pred.trajectories.tolist(), pred.probabilities.tolist(), gt.tolist()) for pred, gt, _ in sets]
    for k in (1, 6):
        assert abs(miss_rate([(p, g) for p, g, _ in sets], k) - oracles.miss_rate(items, k)) <= 1e-9


def test_map_oracles(sets):
    for pred, _, graph in sets[:25]:
        rate, per = offroad_rate(pred, graph)
        o_rate, o_per, o_dac = oracles.offroad(pred.trajectories.tolist(), graph)
        assert abs(rate - o_rate) <= 1e-9
        assert np.max(np.abs(np.array(per) - o_per)) <= 1e-9
        assert abs(dac(pred, graph) - o_dac) <= 1e-9
        assert abs(lane_deviation(pred, graph) - oracles.lane_deviation(pred.trajectories.tolist(), graph)) <= 1e-9


def test_dac_matches_offroad_mask(sets):
    for pred, _, graph in sets:
        _, per = offroad_rate(pred, graph)
        if all(r == 0 for r in per):
            assert dac(pred, graph) == 1.0


def test_monotone_in_k(sets):
    rep = evaluate(sets, ks=(1, 2, 3, 6))
    check_monotone(rep)
    assert rep.n_samples == len(sets)


def test_check_monotone_detects_violation():
    rep = MetricsReport(min_ade={1: 1.0, 6: 2.0}, min_fde={1: 1.0, 6: 1.0}, miss_rate={1: 0.0, 6: 0.0})
    with pytest.raises(AssertionError):
        check_monotone(rep)


def test_evaluate_pools_waypoints(sets):
    rep = evaluate(sets[:10])
    masks = [oracles.offroad(p.trajectories.tolist(), g)[1] for p, _, g in sets[:10]]
    ks = np.array([len(p) for p, _, _ in sets[:10]])
    pooled = (np.array(masks) * ks[:, None]).sum(axis=0) / ks.sum()
    assert np.allclose(rep.offroad_by_horizon, pooled, atol=1e-12)
    assert rep.horizon_csv().splitlines()[0] == "horizon_step,offroad_rate"
    assert len(rep.horizon_csv().splitlines()) == 31


@settings(max_examples=30)
@given(st.floats(-np.pi, np.pi), st.floats(-100, 100), st.floats(-100, 100), st.integers(0, 59))
def test_metrics_rigid_invariant(theta, tx, ty, i):
    from pbp.geometry import rotation
    sets = _SETS
    pred, gt, graph = sets[i % len(sets)]
    rot, v = rotation(theta), np.array([tx, ty])
    moved = pset(pred.trajectories @ rot.T + v, pred.probabilities)
    mgt = gt @ rot.T + v
    mgraph = graph.transformed(rot, v)
    assert min_ade(moved, mgt, 6) == pytest.approx(min_ade(pred, gt, 6), abs=1e-9)
    assert min_fde(moved, mgt, 1) == pytest.approx(min_fde(pred, gt, 1), abs=1e-9)
    assert offroad_rate(moved, mgraph)[0] == offroad_rate(pred, graph)[0]
    assert lane_deviation(moved, mgraph) == pytest.approx(lane_deviation(pred, graph), abs=1e-9)


def test_rect_helper_is_drivable():
    g = LaneGraph([], {}, [rect(0, 0, 10, 4)])
    assert offroad_rate(pset([np.full((30, 2), [5.0, 2.0])], [1.0]), g)[0] == 0.0
