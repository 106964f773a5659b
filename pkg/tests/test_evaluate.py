import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvgrasp.dataset import GraspRect, Sample
from mvgrasp.errors import EmptyInputError
from mvgrasp.evaluate import (
    angle_difference,
    benchmark_inference,
    clip_polygon,
    evaluate,
    grasp2d_to_rect,
    grasp_success,
    polygon_area,
    rect_iou,
)
from mvgrasp.grasp import Grasp2D
from mvgrasp.network import build_network
from mvgrasp.train import calibrate_batchnorm

rects = st.builds(
    GraspRect.from_params,
    st.floats(-5, 5), st.floats(-5, 5), st.floats(-np.pi, np.pi), st.floats(0.5, 6), st.floats(0.5, 6),
)


def test_iou_examples():
    a = GraspRect.from_params(0, 0, 0, 1, 1)
    assert rect_iou(a, a) == pytest.approx(1.0)
    assert rect_iou(a, GraspRect.from_params(5, 5, 0.3, 1, 1)) == 0.0
    assert rect_iou(a, GraspRect.from_params(0.5, 0, 0, 1, 1)) == pytest.approx(1 / 3)


@given(rects, rects)
def test_iou_symmetric_and_bounded(a, b):
    ab, ba = rect_iou(a, b), rect_iou(b, a)
    assert ab == pytest.approx(ba, abs=1e-9)
    assert 0.0 <= ab <= 1.0 + 1e-12


def test_clip_polygon_square_overlap():
    sq = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
    inter = clip_polygon(sq, sq + 1)
    assert polygon_area(inter) == pytest.approx(1.0)
    assert polygon_area(clip_polygon(sq, sq + 5)) == 0.0


def test_angle_difference_wraps_mod_pi():
    assert angle_difference(0.0, np.pi) == pytest.approx(0.0)
    assert angle_difference(np.deg2rad(85), np.deg2rad(-85)) == pytest.approx(np.deg2rad(10))




@pytest.mark.parametrize("iou,deg,ok", [(0.30, 10, True), (0.20, 0, False), (0.90, 35, False), (0.26, 29.9, True)])
def test_success_thresholds(monkeypatch, iou, deg, ok):
    import mvgrasp.evaluate as E

    monkeypatch.setattr(E, "rect_iou", lambda a, b: iou)
    gt = GraspRect.from_params(0, 0, 0, 10, 4)
    pred = GraspRect.from_params(0, 0, np.deg2rad(deg), 10, 4)
    assert grasp_success(pred, [gt]) is ok


def test_success_geometric():
    gt = GraspRect.from_params(0, 0, 0, 100, 10)
    assert grasp_success(GraspRect.from_params(0, 0, 0, 30, 10), [gt])
    assert not grasp_success(GraspRect.from_params(0, 0, 0, 20, 10), [gt])


def test_success_any_of_several_gts():
    pred = GraspRect.from_params(0, 0, 0, 10, 4)
    far = GraspRect.from_params(50, 50, 0, 10, 4)
    assert grasp_success(pred, [far, pred])
    assert not grasp_success(pred, [far])
    with pytest.raises(EmptyInputError):
        grasp_success(pred, [])


def test_grasp2d_to_rect_examples():
    r = grasp2d_to_rect(Grasp2D(40, 50, 0.0, 20.0, 1.0), plate_height_px=10)
    np.testing.assert_allclose(r.vertices, [(40, 35), (60, 35), (60, 45), (40, 45)])
    g = Grasp2D(12, 7, 0.4, 9.0, 1.0)
    back = grasp2d_to_rect(g)
    assert (back.center[1], back.center[0]) == pytest.approx((12, 7))
    assert back.angle == pytest.approx(0.4) and back.width == pytest.approx(9.0)
    assert back.height == pytest.approx(4.5)
    up = grasp2d_to_rect(Grasp2D(0, 0, np.pi / 2, 10.0, 1.0), 2)
    d = up.vertices[1] - up.vertices[0]
    assert abs(d[0]) < 1e-9 and abs(abs(d[1]) - 10) < 1e-9


def _samples():
    out = []
    for i in range(4):
        r = GraspRect.from_params(10 + i, 12, 0.2 * i, 8, 4)
        out.append(Sample(np.zeros((24, 24), np.float32), [r], f"s{i}"))
    return out


def test_oracle_and_disjoint_predictors():
    samples = _samples()
    m = evaluate(lambda s: s.rects[0], samples, timing=False)
    assert m.iou_success_rate == 1.0 and m.n_total == 4 and m.mean_latency_ms is None
    m = evaluate(lambda s: GraspRect.from_params(-100, -100, 0, 5, 5), samples)
    assert m.iou_success_rate == 0.0 and m.p95_latency_ms is not None
    m = evaluate(lambda s: None, samples)
    assert m.n_success == 0
    with pytest.raises(EmptyInputError):
        evaluate(lambda s: None, [])


def test_metrics_serialization(tmp_path):
    m = evaluate(lambda s: s.rects[0], _samples(), timing=False)
    d = json.loads(m.to_json())
    assert d["iou_success_rate"] == 1.0 and len(d["records"]) == 4
    assert "records" not in m.to_dict(include_records=False)
    m.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "id,success,best_iou,angle_diff_deg"
    assert "IoU success rate" in m.table()


def test_network_evaluation_requires_w_max(rng):
    net = build_network()
    calibrate_batchnorm(net, rng.standard_normal((2, 1, 24, 24)))
    with pytest.raises(ValueError):
        evaluate(net, _samples())
    m = evaluate(net, _samples(), w_max_px=24.0)
    assert m.n_total == 4


def test_benchmark_record_count(rng):
    net = build_network()
    calibrate_batchnorm(net, rng.standard_normal((2, 1, 24, 24)))
    b = benchmark_inference(net, (24, 24), iters=10, warmup=1)
    assert len(b["records_ms"]) == 10
    assert {"mean_ms", "p95_ms", "max_ms", "threads", "backend"} <= set(b)
    with pytest.raises(ValueError):
        benchmark_inference(net, (24, 24), iters=0)
