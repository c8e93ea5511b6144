from fractions import Fraction

import numpy as np
import pytest

from acfseg.config import EvalConfig
from acfseg.evaluation import (
    class_iou,
    confusion_matrix,
    evaluate,
    feature_similarity_map,
    miou,
    ms_flip_infer,
    ms_flip_probs,
    predict_probs,
    similarity_to_gray,
)
from acfseg.network import NetworkConfig, build_network

from oracles import exact_miou


def test_perfect_prediction():
    gt = np.array([0, 1, 2, 2, 1])
    assert miou(confusion_matrix(gt, gt, 3))[0] == 1.0


def test_swapped_prediction():
    gt = np.array([0, 0, 1, 1])
    assert miou(confusion_matrix(gt, 1 - gt, 2))[0] == 0.0


def test_toy_case_is_seven_twelfths():
    gt, pred = [0, 0, 1, 1], [0, 1, 1, 1]
    want, ious = exact_miou(gt, pred, 2)
    assert ious == [Fraction(1, 2), Fraction(2, 3)] and want == Fraction(7, 12)
    cm = confusion_matrix(np.array(gt), np.array(pred), 2)
    np.testing.assert_array_equal(cm, [[1, 1], [0, 2]])
    tp = np.diag(cm)
    frac = [Fraction(int(tp[i]), int(cm[i].sum() + cm[:, i].sum() - tp[i])) for i in range(2)]
    assert sum(frac) / 2 == Fraction(7, 12)
    assert miou(cm)[0] == pytest.approx(7 / 12, abs=1e-15)


def test_ignore_and_absent_classes():
    gt = np.array([0, 0, 255, 1])
    pred = np.array([0, 1, 2, 1])
    cm = confusion_matrix(gt, pred, 3)
    assert cm.sum() == 3
    assert np.isnan(class_iou(cm)[2])
    with pytest.raises(ValueError, match="no evaluated pixels"):
        miou(np.zeros((3, 3), int))


def test_confusion_accumulation_order_independent():
    rng = np.random.default_rng(0)
    gts = rng.integers(0, 4, (6, 8, 8))
    preds = rng.integers(0, 4, (6, 8, 8))
    a = sum(confusion_matrix(g, p, 4) for g, p in zip(gts, preds))
    perm = rng.permutation(6)
    b = sum(confusion_matrix(gts[i], preds[i], 4) for i in perm)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, confusion_matrix(gts, preds, 4))


def test_relabeling_invariance():
    rng = np.random.default_rng(1)
    gt, pred = rng.integers(0, 5, 200), rng.integers(0, 5, 200)
    perm = rng.permutation(5)
    assert miou(confusion_matrix(perm[gt], perm[pred], 5))[0] == pytest.approx(miou(confusion_matrix(gt, pred, 5))[0])


# ---------------------------------------------------------------- similarity


def test_similarity_examples():
    feat = np.zeros((2, 2, 2))
    feat[:, 0, 0] = [1, 0]
    feat[:, 0, 1] = [0, 3]
    feat[:, 1, 0] = [2, 0]
    sim = feature_similarity_map(feat, (0, 0))
    assert sim[0, 0] == 1.0 and sim[0, 1] == 0.0 and sim[1, 0] == 1.0 and sim[1, 1] == 0.0


def test_similarity_matches_loop_oracle():
    rng = np.random.default_rng(2)
    feat = rng.normal(size=(5, 4, 6))
    sim = feature_similarity_map(feat, (2, 3))
    ref = feat[:, 2, 3]
    for r in range(4):
        for c in range(6):
            v = feat[:, r, c]
            want = sum(a * b for a, b in zip(ref, v)) / (np.sqrt(sum(a * a for a in ref)) * np.sqrt(sum(b * b for b in v)))
            assert abs(sim[r, c] - want) < 1e-5
    assert np.all(np.abs(sim) <= 1 + 1e-6)


def test_similarity_gray_mapping():
    np.testing.assert_array_equal(similarity_to_gray(np.array([-1.0, 0.0, 1.0])), [0, 128, 255])
    with pytest.raises(ValueError):
        feature_similarity_map(np.ones((1, 2, 2)), (2, 0))


# ---------------------------------------------------------------- multi-scale / flip


@pytest.fixture(scope="module")
def model():
    net = build_network(NetworkConfig(num_classes=3, variant="sum"), seed=3)
    net.eval()
    return net


def test_single_scale_no_flip_is_plain_inference(model):
    image = np.random.default_rng(4).random((2, 3, 32, 32), dtype=np.float32)
    np.testing.assert_array_equal(ms_flip_infer(model, image, EvalConfig((1.0,), False)), predict_probs(model, image))


def test_flip_on_symmetric_input_is_symmetric(model):
    half = np.random.default_rng(5).random((1, 3, 32, 16), dtype=np.float32)
    image = np.concatenate([half, half[..., ::-1]], axis=-1)
    probs = ms_flip_infer(model, image, EvalConfig((0.75, 1.0, 1.5), True))
    np.testing.assert_allclose(probs, probs[..., ::-1], atol=1e-4)


def test_ms_flip_rows_sum_to_one_and_order_free(model):
    image = np.random.default_rng(6).random((1, 3, 24, 40), dtype=np.float32)
    probs = ms_flip_probs(model, image, EvalConfig((0.5, 1.0, 1.25), True))
    for p in probs.values():
        assert p.shape == (1, 3, 24, 40)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-5)
    reordered = ms_flip_probs(model, image, EvalConfig((1.25, 0.5, 1.0), True))
    np.testing.assert_allclose(reordered["fine"], probs["fine"], atol=1e-6)


def test_evaluate_reports_both_heads(model, tmp_path):
    rng = np.random.default_rng(7)
    images = rng.random((3, 3, 16, 16), dtype=np.float32)
    labels = rng.integers(0, 3, (3, 16, 16))
    report = evaluate(model, images, labels, class_names=["bg", "a", "b"])
    assert set(report.miou) == {"coarse", "fine"}
    report.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "class_id,class_name,iou_coarse,iou_fine"
    assert lines[1].startswith("0,bg,") and lines[-2].startswith("mean,miou,")
    with pytest.raises(ValueError):
        evaluate(model, images[:0], labels[:0])
