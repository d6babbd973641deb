"""Self-verification suite: gradient checks, split invariants and algorithm degeneracies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algorithms import Discriminator, GroupWeights, dann_step, erm_step, groupdro_step, mixup_step
from .data import GeneratorConfig, MinibatchSampler, loso_split, synthesize
from .models import MODEL_NAMES, Network, build_config
from .tensor import Adam, Tape, Tensor, grad_check, ops
from .tensor.gradcheck import numeric_grad

GRAD_TOL = 1e-4
EPS = 1e-5


@dataclass
class CheckResult:
    group: str
    name: str
    value: float
    threshold: float
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.group:<10} {self.name:<28} {self.value:.3e} (limit {self.threshold:.0e})"


def _projected(fn: Callable[[], Tensor], shape, seed: int) -> Callable[[], Tensor]:
    proj = Tensor(np.random.default_rng(seed).standard_normal(shape))
    return lambda: ops.sum(ops.mul(fn(), proj))


def primitive_cases(seed: int = 0) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """Scalar closures over float64 leaves, one per primitive."""
    rng = np.random.default_rng(seed)

    def t(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    cases = {}

    x, w, b = t(2, 3, 5, 7), t(4, 3, 2, 3), t(4)
    cases["conv2d"] = (_projected(lambda: ops.conv2d(x, w, b, stride=(1, 2), padding=(1, 1)), (2, 4, 6, 4), 1),
                       [x, w, b])
    x1, w1, b1 = t(2, 3, 11), t(4, 3, 3), t(4)
    cases["conv1d"] = (_projected(lambda: ops.conv1d(x1, w1, b1, stride=2, padding=1), (2, 4, 6), 2), [x1, w1, b1])
    xd, wd = t(2, 2, 4, 6), t(4, 1, 4, 3)
    cases["depthwise_conv2d"] = (_projected(
        lambda: ops.depthwise_conv2d(xd, wd, multiplier=2, padding=(0, 1)), (2, 4, 1, 6), 3), [xd, wd])
    xs, wsd, wsp = t(2, 3, 1, 9), t(3, 1, 1, 4), t(5, 3, 1, 1)
    cases["separable_conv2d"] = (_projected(
        lambda: ops.separable_conv2d(xs, wsd, wsp, padding=(0, 2)), (2, 5, 1, 10), 4), [xs, wsd, wsp])
    xp = t(2, 3, 1, 11)
    cases["max_pool"] = (_projected(lambda: ops.max_pool(xp, 3), (2, 3, 1, 3), 5), [xp])
    xa = t(2, 3, 13)
    cases["avg_pool"] = (_projected(lambda: ops.avg_pool(xa, 4), (2, 3, 3), 6), [xa])
    xe = t(3, 8)
    cases["elu"] = (_projected(lambda: ops.elu(xe), (3, 8), 7), [xe])
    xl, wl, bl = t(4, 6), t(3, 6), t(3)
    cases["linear"] = (_projected(lambda: ops.linear(xl, wl, bl), (4, 3), 8), [xl, wl, bl])
    xb, g, be = t(4, 3, 1, 5), t(3), t(3)
    cases["batch_norm_train"] = (_projected(
        lambda: ops.batch_norm(xb, g, be, np.zeros(3), np.ones(3), True), (4, 3, 1, 5), 9), [xb, g, be])
    xbe, ge, bee = t(4, 3, 5), t(3), t(3)
    rm, rv = rng.standard_normal(3), rng.uniform(0.5, 2, 3)
    cases["batch_norm_eval"] = (_projected(
        lambda: ops.batch_norm(xbe, ge, bee, rm, rv, False), (4, 3, 5), 10), [xbe, ge, bee])
    xo = t(4, 6)
    cases["dropout"] = (_projected(
        lambda: ops.dropout(xo, 0.5, True, np.random.default_rng(3)), (4, 6), 11), [xo])
    logits, y = t(5, 3), rng.integers(0, 3, 5)
    cases["softmax_ce_hard"] = (lambda: ops.softmax_cross_entropy(logits, y), [logits])
    logits2 = t(5, 3)
    soft = rng.dirichlet(np.ones(3), size=5)
    cases["softmax_ce_soft"] = (lambda: ops.softmax_cross_entropy(logits2, soft), [logits2])
    ea, eb = t(3, 2, 4), t(2, 5)
    cases["einsum"] = (_projected(lambda: ops.einsum("och,ck->ohk", ea, eb), (3, 4, 5), 13), [ea, eb])
    ma, mb = t(3, 4), t(4, 2)
    cases["matmul"] = (_projected(lambda: ops.matmul(ma, mb), (3, 2), 14), [ma, mb])
    return cases


def reversal_error(lam: float = 0.7, seed: int = 0) -> float:
    """Gradient reversal is the identity going forward, so its tape gradient
    must equal ``-lam`` times the finite-difference gradient of the same closure."""
    x = Tensor(np.random.default_rng(seed).standard_normal((3, 4)), requires_grad=True)
    f = _projected(lambda: ops.grad_reverse(x, lam), (3, 4), 12)
    with Tape() as tape:
        tape.backward(f(), [x])
    analytic = x.grad.reshape(-1).copy()
    worst = 0.0
    for i in range(x.size):
        num = -lam * numeric_grad(f, x, i, EPS)
        worst = max(worst, abs(analytic[i] - num) / max(abs(analytic[i]), abs(num), 1e-6))
    return worst


def model_grad_case(name: str, batch: int = 4, seed: int = 0):
    """(loss closure, parameters) for a float64 model on a small batch; dropout masks are replayed."""
    net = Network(build_config(name), seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    x = rng.standard_normal((batch, net.config.n_channels, net.config.n_samples))
    y = rng.integers(0, net.config.n_classes, batch)
    state = net.dropout_rng.bit_generator.state

    def f():
        net.dropout_rng.bit_generator.state = state
        return ops.softmax_cross_entropy(net(x), y)

    return f, net.parameters()


def _grad_checks(max_checks: int) -> list[CheckResult]:
    out = []
    for name, (f, inputs) in primitive_cases().items():
        err = grad_check(f, inputs, eps=EPS)
        out.append(CheckResult("gradient", name, err, GRAD_TOL, err < GRAD_TOL))
    err = reversal_error()
    out.append(CheckResult("gradient", "grad_reverse", err, GRAD_TOL, err < GRAD_TOL))
    for name in MODEL_NAMES:
        f, params = model_grad_case(name)
        err = grad_check(f, params, eps=EPS, max_checks=max_checks, rng=np.random.default_rng(0))
        out.append(CheckResult("gradient", name, err, GRAD_TOL, err < GRAD_TOL))
    return out


def _split_checks() -> list[CheckResult]:
    ds = synthesize(GeneratorConfig(subjects=3, sessions=2, trials_per_class=50, seed=0))
    out = []
    for s in ds.subjects:
        plan = loso_split(ds, s)
        overlap = sum(np.intersect1d(plan.train_idx[d], plan.val_idx[d]).size for d in plan.sources)
        bad = int(plan.target in plan.sources) + overlap + int(plan.target.session != 2)
        counts = [np.bincount(ds[d].labels[plan.train_idx[d]], minlength=3) for d in plan.sources]
        spread = max(int(np.abs(c - 45).max()) for c in counts)
        out.append(CheckResult("split", f"disjoint target {s}", float(bad), 0, bad == 0))
        out.append(CheckResult("split", f"class balance target {s}", float(spread), 1, spread <= 1))
    return out


def _degeneracy_checks() -> list[CheckResult]:
    rng = np.random.default_rng(0)
    ds = synthesize(GeneratorConfig(subjects=2, sessions=2, trials_per_class=4, seed=1))
    plan = loso_split(ds, 1)
    batches = MinibatchSampler(plan, rng, batch_size=4).sample()

    def fresh():
        return Network(build_config("ResNet1D-8"), seed=5)

    ref = fresh()
    erm_step(ref, batches, Adam(ref.parameters()))
    ref_state = ref.state_dict()

    def diff(net):
        return max(float(np.abs(ref_state[k] - v).max()) for k, v in net.state_dict().items())

    out = []
    net = fresh()
    disc = Discriminator(net.config.feature_dim, plan.sources)
    dann_step(net, disc, batches, Adam(net.parameters() + disc.parameters()), 0.0)
    out.append(CheckResult("algorithm", "DANN(lambda=0) == ERM", diff(net), 1e-6, diff(net) <= 1e-6))
    net = fresh()
    groupdro_step(net, batches, Adam(net.parameters()), GroupWeights.uniform(plan.sources), 0.0)
    out.append(CheckResult("algorithm", "GroupDRO(eta=0) == ERM", diff(net), 1e-6, diff(net) <= 1e-6))
    net = fresh()
    mixup_step(net, batches, Adam(net.parameters()), 0.2, rng, lam=1.0, pairing=list(range(len(batches))))
    out.append(CheckResult("algorithm", "Mixup(lambda=1) == ERM", diff(net), 1e-6, diff(net) <= 1e-6))
    q = GroupWeights.uniform(plan.sources[:2]).updated(np.array([1.0, 0.0]), 0.01)
    err = float(np.abs(q.q - [0.5025, 0.4975]).max())
    out.append(CheckResult("algorithm", "GroupDRO weight update", err, 5e-5, err < 5e-5))
    return out


def run_checks(max_checks: int = 3) -> list[CheckResult]:
    return _grad_checks(max_checks) + _split_checks() + _degeneracy_checks()
