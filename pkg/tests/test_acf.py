import numpy as np
import pytest

from acfseg.acf import ACFModule, class_attention_concat, class_attention_sum, class_centers
from acfseg.autodiff import ConvBNReLU, Tensor
from acfseg.autodiff import functional as F
from acfseg.autodiff.gradcheck import TOLERANCE, run_suite

from oracles import attention_concat_oracle, attention_sum_oracle, centers_oracle, random_instance

# Four pixels laid out as a 2x2 map, two feature channels.
FEATS = np.array([[1, 0], [3, 0], [0, 2], [0, 4]], dtype=np.float32)


def as_map(rows):
    """(HW x K) rows -> 1 x K x 2 x 2 tensor."""
    return Tensor(np.asarray(rows, dtype=np.float32).T.reshape(1, -1, 2, 2))


# ---------------------------------------------------------------- class centers


def test_one_hot_centers_are_class_means():
    probs = as_map([[1, 0], [1, 0], [0, 1], [0, 1]])
    centers = class_centers(as_map(FEATS), probs).data[0]
    np.testing.assert_allclose(centers, [[2, 0], [0, 3]], atol=1e-5)


def test_uniform_probs_give_global_mean():
    probs = as_map(np.full((4, 3), 1 / 3))
    centers = class_centers(as_map(FEATS), probs).data[0]
    np.testing.assert_allclose(centers, np.tile(FEATS.mean(axis=0), (3, 1)), atol=1e-5)


def test_soft_probs_example():
    probs = as_map([[0.5, 0.5], [1, 0], [0, 1], [0, 1]])
    want = centers_oracle(as_map(FEATS).data, probs.data)[0]
    np.testing.assert_allclose(want, [[7 / 3, 0], [0.2, 2.4]], atol=1e-5)
    np.testing.assert_allclose(class_centers(as_map(FEATS), probs).data[0], want, atol=1e-5)


def test_absent_class_gets_zero_center():
    probs = as_map([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 1, 0]])
    centers = class_centers(as_map(FEATS), probs).data[0]
    np.testing.assert_array_equal(centers[2], [0, 0])
    assert np.all(np.isfinite(centers))


def test_center_shape_mismatch():
    with pytest.raises(ValueError):
        class_centers(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 2, 3, 2))))


@pytest.mark.parametrize("seed", range(20))
def test_one_hot_degeneracy_random(seed):
    rng = np.random.default_rng(seed)
    N, C, H, W = 4, 5, 6, 6
    labels = rng.integers(0, N, (H, W))
    feature = rng.uniform(-1, 1, (1, C, H, W)).astype(np.float32)
    probs = np.eye(N, dtype=np.float32)[labels].transpose(2, 0, 1)[None]
    centers = class_centers(Tensor(feature), Tensor(probs)).data[0]
    for i in np.unique(labels):
        np.testing.assert_allclose(centers[i], feature[0][:, labels == i].mean(axis=1), atol=1e-5)


# ---------------------------------------------------------------- attention


def test_attention_sum_examples():
    centers = Tensor(np.array([[[2, 0], [0, 3]]], dtype=np.float32))
    out = class_attention_sum(centers, Tensor(np.array([[[[1.0]], [[0.0]]]])))
    np.testing.assert_allclose(out.data.ravel(), [2, 0])
    out = class_attention_sum(centers, Tensor(np.array([[[[0.5]], [[0.5]]]])))
    np.testing.assert_allclose(out.data.ravel(), [1, 1.5])


def test_attention_concat_examples():
    centers = Tensor(np.array([[[2, 0], [0, 3]]], dtype=np.float32))
    out = class_attention_concat(centers, Tensor(np.array([[[[1.0]], [[0.0]]]])))
    np.testing.assert_allclose(out.data.ravel(), [2, 0, 0, 0])
    out = class_attention_concat(centers, Tensor(np.array([[[[0.5]], [[0.5]]]])))
    np.testing.assert_allclose(out.data.ravel(), [1, 0, 0, 1.5])


def test_matrix_paths_match_loop_oracles():
    rng = np.random.default_rng(1234)
    for _ in range(100):
        feature, probs = random_instance(rng)
        centers = class_centers(Tensor(feature), Tensor(probs))
        np.testing.assert_allclose(centers.data, centers_oracle(feature, probs), atol=1e-5)
        c = centers.data
        np.testing.assert_allclose(
            class_attention_sum(Tensor(c), Tensor(probs)).data, attention_sum_oracle(c, probs), atol=1e-5
        )
        np.testing.assert_allclose(
            class_attention_concat(Tensor(c), Tensor(probs)).data, attention_concat_oracle(c, probs), atol=1e-5
        )


def test_convexity():
    # The epsilon in the denominator shrinks each center toward zero, so the
    # bound is the hull of the pixel features together with the origin.
    rng = np.random.default_rng(99)
    for _ in range(50):
        feature, probs = random_instance(rng)
        centers = class_centers(Tensor(feature), Tensor(probs)).data
        lo = np.minimum(feature.min(axis=(2, 3)), 0)[:, None, :]
        hi = np.maximum(feature.max(axis=(2, 3)), 0)[:, None, :]
        assert np.all(centers >= lo - 1e-5) and np.all(centers <= hi + 1e-5)
        attn = class_attention_sum(Tensor(centers), Tensor(probs)).data
        assert np.all(attn >= centers.min(axis=1)[:, :, None, None] - 1e-5)
        assert np.all(attn <= centers.max(axis=1)[:, :, None, None] + 1e-5)


def test_permutation_equivariance():
    rng = np.random.default_rng(7)
    feature, probs = random_instance(rng)
    perm = rng.permutation(probs.shape[1])
    centers = class_centers(Tensor(feature), Tensor(probs)).data
    permuted = class_centers(Tensor(feature), Tensor(probs[:, perm])).data
    np.testing.assert_allclose(permuted, centers[:, perm], atol=1e-6)
    a = class_attention_sum(Tensor(centers), Tensor(probs)).data
    b = class_attention_sum(Tensor(permuted), Tensor(probs[:, perm])).data
    np.testing.assert_allclose(a, b, atol=1e-6)


# ---------------------------------------------------------------- module


def test_channel_reduce_identity():
    rng = np.random.default_rng(0)
    layer = ConvBNReLU(3, 3, 1, rng, norm=False)
    layer.conv.weight.data[...] = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    x = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
    np.testing.assert_allclose(layer(Tensor(x)).data, np.maximum(x, 0))


@pytest.mark.parametrize("variant,fuse_in", [("sum", 2 * 6), ("concat", (3 + 1) * 6), ("center", (3 + 1) * 6)])
def test_module_shapes(variant, fuse_in):
    rng = np.random.default_rng(0)
    module = ACFModule(10, 6, 3, 8, rng, variant=variant)
    assert module.fuse.conv.weight.shape[1] == fuse_in
    feature = Tensor(rng.normal(size=(2, 10, 4, 5)))
    probs = F.softmax(Tensor(rng.normal(size=(2, 3, 4, 5))), axis=1)
    assert module.reduce(feature).shape == (2, 6, 4, 5)
    assert module(feature, probs).shape == (2, 8, 4, 5)


def test_gradient_reaches_coarse_probabilities():
    rng = np.random.default_rng(1)
    module = ACFModule(4, 3, 2, 3, rng)
    logits = Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
    F.sum(module(Tensor(rng.normal(size=(1, 4, 3, 3))), F.softmax(logits, axis=1))).backward()
    assert logits.grad is not None and np.abs(logits.grad).max() > 0


@pytest.mark.parametrize("case", ["channel_reduce", "acf_sum_path", "acf_concat_path"])
def test_acf_gradcheck(case):
    results = run_suite([case], seeds=range(5))
    assert max(r.max_rel_error for r in results) < TOLERANCE
