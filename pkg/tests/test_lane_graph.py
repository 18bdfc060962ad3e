import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbp.errors import EmptyMapError, ParseError, ValidationError
from pbp.geometry import rotation
from pbp.lane_graph import (
    LaneGraph,
    LaneSegment,
    contains_point,
    contains_points,
    load_scene,
    nearest_segment,
    scene_from_dict,
)
from pbp.scenario_gen import GenConfig, generate

from maps import chain_graph, rect

MINIMAL = {
    "map": {"segments": [{"id": 0, "start": [0, 0], "end": [10, 0]}], "successors": {}, "drivable_area": []},
    "agents": [{"id": 1, "history": [[0, 0], [1, 0]], "future": None}],
    "focal_agent_id": 1,
    "dt": 0.1,
}


def brute_nearest(graph, p):
    best = (None, np.inf)
    for seg in sorted(graph.segments, key=lambda s: s.id):
        ab = seg.end - seg.start
        t = np.clip(np.dot(p - seg.start, ab) / np.dot(ab, ab), 0, 1)
        dist = float(np.linalg.norm(p - (seg.start + t * ab)))
        if dist < best[1] - 1e-12:
            best = (seg.id, dist)
    return best


def test_minimal_scene_loads():
    scene = load_scene(json.dumps(MINIMAL).encode())
    assert len(scene.map) == 1
    assert scene.map.successor_map == {}
    assert scene.focal_agent.id == 1


def test_dangling_successor_names_segment():
    doc = json.loads(json.dumps(MINIMAL))
    doc["map"]["successors"] = {"0": [999]}
    with pytest.raises(ValidationError, match="segment 0"):
        load_scene(json.dumps(doc).encode())


def test_successor_gap_rejected():
    segs = [LaneSegment(0, [0, 0], [10, 0]), LaneSegment(1, [11, 0], [20, 0])]
    with pytest.raises(ValidationError, match="segment 0"):
        LaneGraph(segs, {0: [1]})
    LaneGraph([LaneSegment(0, [0, 0], [10, 0]), LaneSegment(1, [10.4, 0], [20, 0])], {0: [1]})


def test_zero_length_segment_rejected():
    with pytest.raises(ValidationError, match="segment 3"):
        LaneSegment(3, [1, 1], [1, 1])


def test_self_intersecting_polygon_rejected():
    bowtie = [[0, 0], [2, 2], [2, 0], [0, 2]]
    with pytest.raises(ValidationError):
        LaneGraph([LaneSegment(0, [0, 0], [1, 0])], {}, [bowtie])


def test_malformed_json_reports_byte_offset():
    raw = b'{"map": {"segments": [}'
    with pytest.raises(ParseError) as exc:
        load_scene(raw)
    assert exc.value.offset == raw.index(b"}")
    assert "byte offset" in str(exc.value)


def test_offset_counts_bytes_not_characters():
    raw = '{"x": "éé", oops}'.encode()
    with pytest.raises(ParseError) as exc:
        load_scene(raw)
    assert exc.value.offset == raw.index(b"oops")


def test_invalid_utf8():
    with pytest.raises(ParseError):
        load_scene(b'{"a": "\xff"}')


def test_missing_field_is_validation_error():
    doc = dict(MINIMAL)
    del doc["agents"]
    with pytest.raises(ValidationError, match="agents"):
        scene_from_dict(doc)


def test_generated_highway_segment_count():
    scene = generate(GenConfig(seed=3, layout="straight", n_scenes=1))[0]
    # three lanes of 200 m in 4 m chords
    assert len(scene.map) == 3 * 50


def test_roundtrip_is_structurally_identical(tmp_path):
    scene = generate(GenConfig(seed=5, layout="fork", n_scenes=1))[0]
    again = load_scene(io.BytesIO(scene.dumps().encode()))
    assert again.dumps() == scene.dumps()
    assert load_scene(io.BytesIO(again.dumps().encode())).dumps() == scene.dumps()


def test_nearest_on_midpoint():
    g = chain_graph()
    assert nearest_segment(g, [15.0, 0.0]) == (1, 0.0)


def test_nearest_tie_goes_to_lowest_id():
    segs = [LaneSegment(7, [0, 2], [10, 2]), LaneSegment(3, [0, -2], [10, -2])]
    g = LaneGraph(segs)
    assert nearest_segment(g, [5.0, 0.0]) == (3, 2.0)


def test_nearest_empty_map():
    with pytest.raises(EmptyMapError):
        nearest_segment(LaneGraph([]), [0, 0])


def test_nearest_matches_exhaustive_scan():
    scene = generate(GenConfig(seed=2, layout="grid", n_scenes=1))[0]
    g = scene.map
    rng = np.random.default_rng(0)
    lo, hi = g.starts.min(axis=0) - 20, g.starts.max(axis=0) + 20
    for p in rng.uniform(lo, hi, size=(200, 2)):
        sid, dist = nearest_segment(g, p)
        bid, bdist = brute_nearest(g, p)
        assert sid == bid
        assert dist == pytest.approx(bdist, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-500, 500), st.floats(-500, 500),
       st.floats(-20, 70), st.floats(-20, 20))
def test_nearest_distance_rigid_invariant(theta, ox, oy, px, py):
    g = chain_graph()
    rot = rotation(theta)
    off = np.array([ox, oy])
    p = np.array([px, py])
    _, d0 = nearest_segment(g, p)
    _, d1 = nearest_segment(g.transformed(rot, off), rot @ p + off)
    assert abs(d0 - d1) <= 1e-9


def test_contains_centroid_and_far_point():
    g = chain_graph()
    assert contains_point(g, [25.0, 0.0])
    assert not contains_point(g, [1e6, 1e6])


def test_boundary_counts_as_inside():
    g = LaneGraph([LaneSegment(0, [0, 0], [1, 0])], {}, [rect(0, 0, 4, 2)])
    for p in ([0, 1], [4, 1], [2, 0], [2, 2], [0, 0], [4, 2]):
        assert contains_point(g, p)
    assert not contains_point(g, [4.001, 1])


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 8), st.floats(0.1, 8),
       st.floats(-20, 20), st.floats(-20, 20))
def test_axis_aligned_rectangle_matches_interval_test(x0, y0, w, h, px, py):
    g = LaneGraph([LaneSegment(0, [0, 0], [1, 0])], {}, [rect(x0, y0, x0 + w, y0 + h)])
    expected = (x0 <= px <= x0 + w) and (y0 <= py <= y0 + h)
    assert contains_point(g, [px, py]) == expected


def test_contains_matches_rasterization():
    scene = generate(GenConfig(seed=4, layout="curve", n_scenes=1))[0]
    g = scene.map
    poly_pts = np.concatenate(g.drivable_area)
    lo, hi = poly_pts.min(axis=0), poly_pts.max(axis=0)
    res = 0.05
    xs = np.arange(lo[0], hi[0] + res, res)
    ys = np.arange(lo[1], hi[1] + res, res)
    # rasterize each polygon with an independent crossing-number test on cell centers
    grid = np.zeros((len(ys), len(xs)), dtype=bool)
    cx, cy = np.meshgrid(xs, ys)
    for poly in g.drivable_area:
        inside = np.zeros_like(grid)
        n = len(poly)
        for k in range(n):
            (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % n]
            cond = (y1 > cy) != (y2 > cy)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (cy - y1) * (x2 - x1) / (y2 - y1)
            inside ^= cond & (cx < xint)
        grid |= inside
    rng = np.random.default_rng(1)
    pts = rng.uniform(lo, hi, size=(1000, 2))
    got = contains_points(g, pts)
    ix = np.clip(np.round((pts[:, 0] - lo[0]) / res).astype(int), 0, len(xs) - 1)
    iy = np.clip(np.round((pts[:, 1] - lo[1]) / res).astype(int), 0, len(ys) - 1)
    oracle = grid[iy, ix]
    # ignore points within 0.1 m of any polygon edge
    from pbp.geometry import point_segment_distance
    edge_d = np.min([point_segment_distance(pts, p, np.roll(p, -1, axis=0)).min(axis=1)
                     for p in g.drivable_area], axis=0)
    far = edge_d > 0.1
    assert far.sum() > 900
    assert np.array_equal(got[far], oracle[far])
