import math

import numpy as np
import pytest

from eegdg.algorithms import (
    AlgoHyperParams,
    Discriminator,
    GroupWeights,
    dann_step,
    derangement,
    erm_step,
    groupdro_step,
    make_algorithm,
    mixup_batch,
    mixup_step,
)
from eegdg.data import DomainBatch, DomainKey, MinibatchSampler, loso_split
from eegdg.models import MODEL_NAMES, Network, build_config, param_hash
from eegdg.tensor import Adam, Tape, Tensor, ops

SMALL_INPUT = {"DeepConvNet": (4, 600), "EEGNet": (4, 256), "ResNet1D-8": (4, 256), "ResNet1D-18": (4, 256)}


def small_net(name="ResNet1D-8", seed=0, dtype=np.float32):
    c, t = SMALL_INPUT[name]
    return Network(build_config(name, n_channels=c, n_samples=t), seed=seed, dtype=dtype)


def fake_batches(net, n_domains=3, size=4, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    shape = (size, net.config.n_channels, net.config.n_samples)
    return [DomainBatch(DomainKey(d + 1, 1), rng.standard_normal(shape).astype(dtype), rng.integers(0, 3, size))
            for d in range(n_domains)]


def grads_after(step, net, extra_params=()):
    """Run ``step(opt)`` with a zero learning rate and return the gradients it left behind."""
    params = net.parameters() + list(extra_params)
    opt = Adam(params, lr=0.0)
    step(opt)
    return [p.grad.copy() for p in net.parameters()]


def states_equal_within(a, b, tol):
    return max(float(np.abs(a[k] - b[k]).max()) for k in a) <= tol


# -- degenerate settings reduce to ERM ---------------------------------------

@pytest.mark.parametrize("name", MODEL_NAMES)
def test_degenerate_algorithms_match_erm(name):
    proto = small_net(name, seed=4)
    batches = fake_batches(proto, n_domains=3, seed=1)

    ref = small_net(name, seed=4)
    erm_step(ref, batches, Adam(ref.parameters(), lr=1e-3))
    want = ref.state_dict()

    net = small_net(name, seed=4)
    disc = Discriminator(net.config.feature_dim, [b.domain for b in batches])
    dann_step(net, disc, batches, Adam(net.parameters() + disc.parameters(), lr=1e-3), 0.0)
    assert states_equal_within(net.state_dict(), want, 1e-6)

    net = small_net(name, seed=4)
    groupdro_step(net, batches, Adam(net.parameters(), lr=1e-3), GroupWeights.uniform([b.domain for b in batches]), 0.0)
    assert states_equal_within(net.state_dict(), want, 1e-6)

    net = small_net(name, seed=4)
    mixup_step(net, batches, Adam(net.parameters(), lr=1e-3), 0.2, np.random.default_rng(0), lam=1.0,
               pairing=[0, 1, 2])
    assert states_equal_within(net.state_dict(), want, 1e-6)


# -- ERM ---------------------------------------------------------------------

def test_erm_zero_lr_leaves_params_and_loss_near_log3():
    net = small_net()
    before = param_hash(net.parameters())
    stats = erm_step(net, fake_batches(net, n_domains=1, size=32), Adam(net.parameters(), lr=0.0))
    assert param_hash(net.parameters()) == before
    assert abs(stats.loss - math.log(3)) < 0.2


def test_erm_duplicate_batch_same_gradient():
    net = small_net(dtype=np.float64)
    b = fake_batches(net, n_domains=1, dtype=np.float64)[0]
    once = grads_after(lambda opt: erm_step(net, [b], opt), net)
    twice = grads_after(lambda opt: erm_step(net, [b, b], opt), net)
    for g1, g2 in zip(once, twice):
        np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)


def test_erm_pools_all_domains(small_dataset):
    plan = loso_split(small_dataset, 1)
    batches = MinibatchSampler(plan, np.random.default_rng(0), 8).sample()
    assert sum(len(b) for b in batches) == 8 * 5
    net = Network(build_config("EEGNet"))
    stats = erm_step(net, batches, Adam(net.parameters()))
    assert set(stats.domain_losses) == set(plan.sources)


def test_step_rejects_empty_or_foreign_batches():
    net = small_net()
    with pytest.raises(ValueError):
        erm_step(net, [], Adam(net.parameters()))
    b = fake_batches(net, n_domains=1)[0]
    bad = DomainBatch(b.domain, b.inputs, b.labels, split="test")
    with pytest.raises(ValueError, match="source-domain"):
        erm_step(net, [bad], Adam(net.parameters()))


# -- DANN --------------------------------------------------------------------

def test_untrained_discriminator_loss_near_log29():
    net = small_net()
    domains = [DomainKey(s, k) for s in range(1, 16) for k in (1, 2)][:29]
    disc = Discriminator(net.config.feature_dim, domains)
    batches = [DomainBatch(d, b.inputs, b.labels) for d, b in zip(domains, fake_batches(net, 29, size=2))]
    stats = dann_step(net, disc, batches, Adam(net.parameters() + disc.parameters(), lr=0.0), 1.0)
    assert abs(stats.extra["domain_loss"] - math.log(29)) < 0.3


@pytest.mark.parametrize("lam", [0.3, 2.0])
def test_dann_reversal_sign(lam):
    """Feature gradients equal task gradients minus lam times the domain-loss gradients (two-pass oracle)."""
    net = small_net(dtype=np.float64)
    batches = fake_batches(net, 3, dtype=np.float64, seed=2)
    domains = [b.domain for b in batches]
    disc = Discriminator(net.config.feature_dim, domains, dtype=np.float64, seed=1)
    combined = grads_after(lambda opt: dann_step(net, disc, batches, opt, lam), net, disc.parameters())

    x = np.concatenate([b.inputs for b in batches])
    y = np.concatenate([b.labels for b in batches])
    dom = np.repeat(np.arange(3), [len(b) for b in batches])
    params = net.parameters()
    with Tape() as tape:
        tape.backward(ops.softmax_cross_entropy(net(Tensor(x)), y), params)
    task = [p.grad.copy() for p in params]
    with Tape() as tape:
        tape.backward(ops.softmax_cross_entropy(disc(net.extract(Tensor(x))), dom), params)
    domain = [p.grad.copy() for p in params]

    n_feat = len(net.feature_parameters())
    for i, (c, t, d) in enumerate(zip(combined, task, domain)):
        want = t - lam * d if i < n_feat else t
        np.testing.assert_allclose(c, want, rtol=1e-8, atol=1e-12)


def test_dann_rejects_negative_lambda():
    net = small_net()
    batches = fake_batches(net, 2)
    disc = Discriminator(net.config.feature_dim, [b.domain for b in batches])
    with pytest.raises(ValueError):
        dann_step(net, disc, batches, Adam(net.parameters() + disc.parameters()), -0.1)


def test_dann_discriminator_learns():
    net = small_net()
    batches = fake_batches(net, 3, size=8)
    disc = Discriminator(net.config.feature_dim, [b.domain for b in batches])
    opt = Adam(disc.parameters(), lr=1e-3)
    first = dann_step(net, disc, batches, opt, 1.0).extra["domain_loss"]
    for _ in range(30):
        last = dann_step(net, disc, batches, opt, 1.0).extra["domain_loss"]
    assert last < first


# -- GroupDRO ----------------------------------------------------------------

def test_groupdro_weight_oracle():
    q = GroupWeights.uniform([DomainKey(1, 1), DomainKey(2, 1)]).updated(np.array([1.0, 0.0]), 0.01)
    e = math.exp(0.01)
    oracle = [0.5 * e / (0.5 * e + 0.5), 0.5 / (0.5 * e + 0.5)]
    np.testing.assert_allclose(q.q, oracle, rtol=1e-12)
    np.testing.assert_allclose(np.round(q.q, 4), [0.5025, 0.4975])


def test_groupdro_equal_losses_keep_q():
    q = GroupWeights([DomainKey(1, 1), DomainKey(2, 1), DomainKey(3, 1)], [0.2, 0.3, 0.5])
    np.testing.assert_allclose(q.updated(np.full(3, 1.7), 0.5).q, q.q, rtol=1e-12)


def test_groupdro_monotone_over_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = int(rng.integers(2, 30))
        q = GroupWeights([DomainKey(i + 1, 1) for i in range(g)], rng.dirichlet(np.ones(g)))
        losses = rng.uniform(0, 3, g)
        eta = float(10 ** rng.uniform(-3, -1))
        new = q.updated(losses, eta)
        assert abs(new.q.sum() - 1) < 1e-12 and (new.q > 0).all()
        worst = int(losses.argmax())
        assert new.q[worst] > q.q[worst]


def test_groupdro_step_returns_updated_q():
    net = small_net()
    batches = fake_batches(net, 3)
    q = GroupWeights.uniform([b.domain for b in batches])
    stats, q2 = groupdro_step(net, batches, Adam(net.parameters()), q, 0.5)
    worst = max(stats.domain_losses, key=stats.domain_losses.get)
    assert q2.q[q2.domains.index(worst)] > 1 / 3


def test_groupdro_rejects_mismatched_domains():
    net = small_net()
    batches = fake_batches(net, 3)
    q = GroupWeights.uniform([b.domain for b in batches] + [DomainKey(9, 1)])
    with pytest.raises(ValueError, match="missing"):
        groupdro_step(net, batches, Adam(net.parameters()), q, 0.01)


def test_group_weights_validation():
    with pytest.raises(ValueError):
        GroupWeights([DomainKey(1, 1)], [0.5])
    with pytest.raises(ValueError):
        GroupWeights.uniform([DomainKey(1, 1)]).updated(np.zeros(1), -1.0)


# -- Mixup -------------------------------------------------------------------

def _pair():
    rng = np.random.default_rng(0)
    bi = DomainBatch(DomainKey(1, 1), rng.standard_normal((6, 2, 5)).astype(np.float32), rng.integers(0, 3, 6))
    bj = DomainBatch(DomainKey(2, 1), rng.standard_normal((6, 2, 5)).astype(np.float32), rng.integers(0, 3, 6))
    return bi, bj


@pytest.mark.parametrize("lam,pick", [(1.0, 0), (0.0, 1)])
def test_mixup_endpoints(lam, pick):
    bi, bj = _pair()
    m = mixup_batch(bi, bj, 0.2, np.random.default_rng(0), lam=lam)
    src = (bi, bj)[pick]
    np.testing.assert_array_equal(m.inputs, src.inputs)
    np.testing.assert_array_equal(m.soft_targets, np.eye(3)[src.labels])


def test_mixup_midpoint_arithmetic():
    bi = DomainBatch(DomainKey(1, 1), np.array([[0.0, 2.0]]), np.array([0]))
    bj = DomainBatch(DomainKey(2, 1), np.array([[2.0, 0.0]]), np.array([2]))
    m = mixup_batch(bi, bj, 0.2, np.random.default_rng(0), lam=0.5)
    np.testing.assert_allclose(m.inputs, [[1.0, 1.0]])
    np.testing.assert_allclose(m.soft_targets, [[0.5, 0.0, 0.5]])


def test_mixup_per_sample_lambda():
    bi, bj = _pair()
    m = mixup_batch(bi, bj, 0.2, np.random.default_rng(3))
    assert len(np.unique(m.lambdas)) == len(bi)
    for k, lam in enumerate(m.lambdas):
        np.testing.assert_allclose(m.inputs[k], lam * bi.inputs[k] + (1 - lam) * bj.inputs[k], rtol=1e-5, atol=1e-6)


def test_beta_draws_are_bimodal():
    bi = DomainBatch(DomainKey(1, 1), np.zeros((10_000, 1)), np.zeros(10_000, dtype=int))
    bj = DomainBatch(DomainKey(2, 1), np.zeros((10_000, 1)), np.zeros(10_000, dtype=int))
    lams = mixup_batch(bi, bj, 0.2, np.random.default_rng(0)).lambdas
    assert abs(lams.mean() - 0.5) < 0.02
    assert ((lams < 0.1) | (lams > 0.9)).mean() > 0.5


def test_mixup_rejects_bad_input():
    bi, bj = _pair()
    with pytest.raises(ValueError):
        mixup_batch(bi, bj, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError, match="itself"):
        mixup_batch(bi, bi, 0.2, np.random.default_rng(0))
    short = DomainBatch(bj.domain, bj.inputs[:3], bj.labels[:3])
    with pytest.raises(ValueError, match="sizes"):
        mixup_batch(bi, short, 0.2, np.random.default_rng(0))


def test_mixup_step_needs_two_domains():
    net = small_net()
    with pytest.raises(ValueError, match="two"):
        mixup_step(net, fake_batches(net, 1), Adam(net.parameters()), 0.2, np.random.default_rng(0))


def test_mixup_identical_pair_is_erm():
    # compared on gradients: Adam's sign-like first step would amplify rounding in x' = lam*x + (1-lam)*x
    net = small_net(seed=1, dtype=np.float64)
    b = fake_batches(net, 1, dtype=np.float64)[0]
    twin = DomainBatch(DomainKey(7, 1), b.inputs, b.labels)
    erm = grads_after(lambda opt: erm_step(net, [b, twin], opt), net)
    mix = grads_after(lambda opt: mixup_step(net, [b, twin], opt, 0.2, np.random.default_rng(0)), net)
    for g1, g2 in zip(erm, mix):
        np.testing.assert_allclose(g1, g2, rtol=1e-7, atol=1e-10)


def test_mixup_zero_lr_changes_nothing():
    net = small_net()
    before = param_hash(net.parameters())
    mixup_step(net, fake_batches(net, 3), Adam(net.parameters(), lr=0.0), 0.2, np.random.default_rng(0))
    assert param_hash(net.parameters()) == before


def test_derangement_has_no_fixed_points():
    rng = np.random.default_rng(0)
    for n in range(2, 30):
        p = derangement(n, rng)
        assert sorted(p.tolist()) == list(range(n)) and not (p == np.arange(n)).any()
    with pytest.raises(ValueError):
        derangement(1, rng)


# -- wrappers ----------------------------------------------------------------

@pytest.mark.parametrize("algo", ["ERM", "DANN", "GroupDRO", "Mixup"])
def test_algorithm_steps_are_deterministic(algo):
    states = []
    for _ in range(2):
        net = small_net(seed=2)
        batches = fake_batches(net, 3, seed=5)
        a = make_algorithm(algo, net, AlgoHyperParams(lr=1e-3), [b.domain for b in batches], seed=9)
        for _ in range(2):
            a.step(batches)
        states.append(param_hash(net.parameters()))
    assert states[0] == states[1]


def test_hyperparams_must_be_positive():
    with pytest.raises(ValueError):
        AlgoHyperParams(lr=0.0)
    with pytest.raises(ValueError):
        make_algorithm("IRM", small_net(), AlgoHyperParams(), [DomainKey(1, 1)])
