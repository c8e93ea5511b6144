"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from . import functional as F
from .tensor import DTYPE, Tensor


@dataclass
class GradCheckResult:
    name: str
    seed: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


TOLERANCE = 1e-2
STEP = 1e-3


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation normalized by the larger gradient magnitude."""
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-6)
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    rng: np.random.Generator,
    step: float = STEP,
) -> float:
    """Compare backprop against central differences for every input array.

    The scalar objective is ``sum(fn(*inputs) * R)`` for a fixed random ``R``,
    so every output element contributes with a distinct weight.
    """
    leaves = [Tensor(np.array(x, dtype=DTYPE), requires_grad=True) for x in inputs]
    out = fn(*leaves)
    proj = rng.standard_normal(out.shape).astype(DTYPE)
    F.sum(F.mul(out, Tensor(proj))).backward()

    def objective(arrays) -> float:
        val = fn(*[Tensor(a) for a in arrays]).data
        return float(np.sum(val.astype(np.float64) * proj))

    worst = 0.0
    base = [leaf.data.copy() for leaf in leaves]
    for k, leaf in enumerate(leaves):
        numeric = np.zeros(leaf.shape, dtype=np.float64)
        flat = base[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            hi = DTYPE(orig + step)
            lo = DTYPE(orig - step)
            flat[i] = hi
            f_hi = objective(base)
            flat[i] = lo
            f_lo = objective(base)
            flat[i] = orig
            numeric.reshape(-1)[i] = (f_hi - f_lo) / (float(hi) - float(lo))
        analytic = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
        worst = max(worst, relative_error(analytic.astype(np.float64), numeric))
    return worst


def check_module_gradients(
    forward: Callable[[Tensor], Tensor],
    params: Sequence[Tensor],
    x: np.ndarray,
    rng: np.random.Generator,
    step: float = STEP,
) -> float:
    """Like :func:`check_gradients` but perturbs live parameters in place.

    The error is taken over the input and all parameters jointly.
    """
    xt = Tensor(np.array(x, dtype=DTYPE), requires_grad=True)
    for p in params:
        p.zero_grad()
    out = forward(xt)
    proj = rng.standard_normal(out.shape).astype(DTYPE)
    F.sum(F.mul(out, Tensor(proj))).backward()

    def objective() -> float:
        return float(np.sum(forward(xt).data.astype(np.float64) * proj))

    analytic, numeric = [], []
    for leaf in [xt, *params]:
        num = np.zeros(leaf.size, dtype=np.float64)
        flat = leaf.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            hi, lo = DTYPE(orig + step), DTYPE(orig - step)
            flat[i] = hi
            f_hi = objective()
            flat[i] = lo
            f_lo = objective()
            flat[i] = orig
            num[i] = (f_hi - f_lo) / (float(hi) - float(lo))
        grad = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
        analytic.append(grad.reshape(-1).astype(np.float64))
        numeric.append(num)
    # One normalization over the joint gradient: a parameter whose slope is
    # nearly cancelled (e.g. a conv right before train-mode batchnorm) would
    # otherwise be scored on float32 rounding alone.
    return relative_error(np.concatenate(analytic), np.concatenate(numeric))


KINK_MARGIN = 0.01


def relu_margin(out: Tensor) -> float:
    """Smallest ``|input|`` over every relu node in the graph behind ``out``."""
    margin, seen, stack = np.inf, set(), [out]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.op == "relu":
            margin = min(margin, float(np.abs(node._parents[0].data).min()))
        stack.extend(node._parents)
    return margin


def _module_case(build, x_shape, tries=100):
    """Gradcheck entry for a module: perturbs the input and every parameter.

    Draws are repeated until no relu input lies within ``KINK_MARGIN`` of zero;
    a finite difference straddling a kink measures the jump, not the slope.
    """

    def case(rng):
        for _ in range(tries):
            forward, params = build(rng)
            x = rng.uniform(-1, 1, x_shape)
            if relu_margin(forward(Tensor(np.array(x, DTYPE), requires_grad=True))) >= KINK_MARGIN:
                break
        return ("module", forward, params), [x]

    return case


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(-1, 1, shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin + x, x)


def op_cases() -> Dict[str, Callable[[np.random.Generator], tuple]]:
    """Small random instances per op: ``name -> rng -> (fn, inputs)``."""

    def conv(rng):
        fn = lambda x, w, b: F.conv2d(x, w, b, stride=1, padding=2, dilation=2)
        return fn, [rng.uniform(-1, 1, (2, 2, 5, 5)), rng.uniform(-1, 1, (3, 2, 3, 3)), rng.uniform(-1, 1, 3)]

    def conv_strided(rng):
        fn = lambda x, w: F.conv2d(x, w, None, stride=2, padding=1)
        return fn, [rng.uniform(-1, 1, (1, 2, 6, 6)), rng.uniform(-1, 1, (2, 2, 3, 3))]

    def conv1x1(rng):
        fn = lambda x, w, b: F.conv2d(x, w, b)
        return fn, [rng.uniform(-1, 1, (2, 3, 3, 3)), rng.uniform(-1, 1, (2, 3, 1, 1)), rng.uniform(-1, 1, 2)]

    def batchnorm(rng):
        c = 3

        def fn(x, g, b):
            return F.batch_norm2d(x, g, b, np.zeros(c, DTYPE), np.ones(c, DTYPE), True)

        return fn, [rng.uniform(-1, 1, (2, c, 3, 3)), rng.uniform(0.5, 1.5, c), rng.uniform(-1, 1, c)]

    def batchnorm_eval(rng):
        c = 2
        rm, rv = rng.uniform(-1, 1, c).astype(DTYPE), rng.uniform(0.5, 2, c).astype(DTYPE)
        fn = lambda x, g, b: F.batch_norm2d(x, g, b, rm, rv, False)
        return fn, [rng.uniform(-1, 1, (2, c, 2, 2)), rng.uniform(0.5, 1.5, c), rng.uniform(-1, 1, c)]

    def relu(rng):
        return F.relu, [_away_from_zero(rng, (3, 4))]

    def softmax(rng):
        return (lambda x: F.softmax(x, axis=1)), [rng.uniform(-1, 1, (2, 4, 3))]

    def log_softmax(rng):
        return (lambda x: F.log_softmax(x, axis=1)), [rng.uniform(-1, 1, (2, 4, 3))]

    def matmul(rng):
        return F.matmul, [rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (4, 2))]

    def bmatmul(rng):
        return F.matmul, [rng.uniform(-1, 1, (2, 3, 4)), rng.uniform(-1, 1, (2, 4, 2))]

    def transpose(rng):
        return (lambda x: F.transpose(x, (0, 2, 1))), [rng.uniform(-1, 1, (2, 3, 4))]

    def reshape(rng):
        return (lambda x: F.reshape(x, (4, 6))), [rng.uniform(-1, 1, (2, 3, 4))]

    def concat(rng):
        return (lambda a, b: F.concat([a, b], axis=1)), [rng.uniform(-1, 1, (2, 2, 3)), rng.uniform(-1, 1, (2, 3, 3))]

    def upsample(rng):
        return (lambda x: F.upsample_bilinear(x, 7, 5)), [rng.uniform(-1, 1, (1, 2, 3, 4))]

    def avg_pool(rng):
        return (lambda x: F.avg_pool2d(x, 2)), [rng.uniform(-1, 1, (1, 2, 4, 4))]

    def global_avg_pool(rng):
        return F.global_avg_pool, [rng.uniform(-1, 1, (2, 3, 3, 2))]

    def add(rng):
        return F.add, [rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 3))]

    def mul(rng):
        return F.mul, [rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 3))]

    def add_bias(rng):
        return F.add_bias, [rng.uniform(-1, 1, (2, 3, 2, 2)), rng.uniform(-1, 1, 3)]

    def mul_rows(rng):
        return F.mul_rows, [rng.uniform(-1, 1, (2, 3, 4)), rng.uniform(-1, 1, (2, 3))]

    def reciprocal(rng):
        return (lambda x: F.reciprocal(x, 1e-6)), [rng.uniform(0.5, 2.0, (3, 4))]

    def sum_axis(rng):
        return (lambda x: F.sum_axis(x, 2)), [rng.uniform(-1, 1, (2, 3, 4))]

    def expand_spatial(rng):
        return (lambda x: F.expand_spatial(x, 3, 2)), [rng.uniform(-1, 1, (2, 3, 1, 1))]

    def pick(rng):
        idx = rng.integers(0, 4, size=(2, 3, 3))
        return (lambda x: F.pick(x, idx, axis=1)), [rng.uniform(-1, 1, (2, 4, 3, 3))]

    def flip_width(rng):
        return F.flip_width, [rng.uniform(-1, 1, (1, 2, 3, 4))]

    def log(rng):
        return F.log, [rng.uniform(0.5, 2.0, (3, 3))]

    def composite(rng):
        def fn(x, w):
            h = F.relu(F.conv2d(x, w, None, padding=1))
            p = F.softmax(F.reshape(h, (h.shape[0], h.shape[1], -1)), axis=1)
            return F.matmul(p, F.transpose(p, (0, 2, 1)))

        return fn, [rng.uniform(-1, 1, (2, 2, 3, 3)), rng.uniform(-1, 1, (3, 2, 3, 3))]

    def _acf_path(variant):
        def build(rng):
            from ..acf import ACFModule

            module = ACFModule(3, 2, 3, 2, rng, variant=variant)
            logits = rng.uniform(-1, 1, (2, 3, 3, 3)).astype(DTYPE)
            probs_logits = Tensor(logits, requires_grad=True)

            def forward(x):
                return module(x, F.softmax(probs_logits, axis=1))

            return forward, [probs_logits] + module.parameters()

        return _module_case(build, (2, 3, 3, 3))

    def _channel_reduce(rng):
        from .nn import ConvBNReLU

        layer = ConvBNReLU(3, 2, 1, rng)
        return layer, layer.parameters()

    def _aspp(rng):
        from ..network import ASPP

        module = ASPP(2, 2, (1, 2, 3), rng)
        return module, module.parameters()

    cases = {name: f for name, f in locals().items() if callable(f) and not name.startswith("_")}
    cases["channel_reduce"] = _module_case(_channel_reduce, (2, 3, 3, 3))
    cases["acf_sum_path"] = _acf_path("sum")
    cases["acf_concat_path"] = _acf_path("concat")
    cases["aspp"] = _module_case(_aspp, (2, 2, 4, 4))
    return cases


def run_suite(names: Sequence[str] = (), seeds: Sequence[int] = range(5)) -> List[GradCheckResult]:
    cases = op_cases()
    unknown = set(names) - set(cases)
    if unknown:
        raise KeyError(f"unknown op(s): {sorted(unknown)}; choose from {sorted(cases)}")
    results = []
    for name in names or sorted(cases):
        for seed in seeds:
            rng = np.random.default_rng(seed)
            fn, inputs = cases[name](rng)
            if isinstance(fn, tuple):
                _, forward, params = fn
                err = check_module_gradients(forward, params, inputs[0], rng)
            else:
                err = check_gradients(fn, inputs, rng)
            results.append(GradCheckResult(name, seed, err))
    return results
