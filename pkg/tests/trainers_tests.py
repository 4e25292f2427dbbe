from collections import OrderedDict

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from neurotrain.bptt import GradSet
from neurotrain.data import DatasetInfo, synth_patterns
from neurotrain.errors import (ArgumentError, ConfigError, IncompatibilityError,
        MissingRewardError)
from neurotrain.models import ModelSpec, build, preset
from neurotrain.tensor_core import Rng, rand_bernoulli
from neurotrain.trainers import (TRAINERS, Batch, BpttTrainer, DfaTrainer,
        DrtpTrainer, EligibilityTrace, EpropTrainer, FeedbackProjection,
        LocalReadoutTrainer, LrSchedule, OtttTrainer, PerturbationTrainer,
        RstdpTrainer, SlttTrainer, StdpTrainer, TrainerUpdate, compatibility,
        drtp_signal, fit, get_trainer, measure_step, perturbation_estimate,
        resolve_cell, stdp_delta, three_factor_update)


def small_model(seed=0, sizes=(6, 4, 2), kind="fc", scale=3.0, dtype=np.float64):
    model = build(ModelSpec(kind, sizes), Rng(seed), dtype=dtype)
    for value in model.params.values():
        value *= scale
    model.constrain()
    return model


def batch(seed=1, T=1, size=3, d=6, p=0.7, labels=(0, 1, 1)):
    inputs = rand_bernoulli(Rng(seed), np.full((T, size, d), p), np.float64)
    return Batch(inputs, np.asarray(labels[:size], dtype=np.int64))


def assert_same_deltas(a, b, tol=1e-6):
    assert list(a.deltas) == list(b.deltas)
    for name in a.deltas:
        assert_allclose(a.deltas[name], b.deltas[name], atol=tol, rtol=0)


def registry_test():
    assert list(TRAINERS) == ["bptt", "eprop", "ottt", "sltt", "dfa", "drtp", "local_readout",
                              "stdp", "rstdp", "perturbation"]
    assert get_trainer("dfa") is DfaTrainer
    with pytest.raises(ConfigError):
        get_trainer("hebbian")


def taxonomy_test():
    cells = {name: (cls.meta.local_in_time, cls.meta.local_in_space) for name, cls in TRAINERS.items()}
    assert cells["bptt"] == (False, False)
    assert cells["eprop"] == (True, False)
    assert cells["drtp"] == (True, True)
    assert cells["perturbation"] == (False, True)
    assert StdpTrainer.meta.supervision == "unsupervised"
    assert RstdpTrainer.meta.supervision == "reinforcement"
    assert BpttTrainer.meta.to_dict()["compatible_kinds"] == ["fc", "rc", "conv"]


def unknown_hyperparameter_test():
    with pytest.raises(ConfigError):
        EpropTrainer(small_model(), Rng(0), learning_rate=0.1)
    with pytest.raises(ConfigError):
        BpttTrainer(small_model(), Rng(0), momentum=1.0)


def incompatible_model_test():
    with pytest.raises(IncompatibilityError):
        DfaTrainer(small_model(kind="rc"), Rng(0))
    with pytest.raises(IncompatibilityError):
        StdpTrainer(small_model(), Rng(0))
    with pytest.raises(IncompatibilityError):
        EpropTrainer(small_model(sizes=(6, 4, 4, 2)), Rng(0))


def compatibility_test():
    mnist = DatasetInfo("mnist", 784, 10, (1, 28, 28))
    shd = DatasetInfo("shd", 700, 20, None, 25)
    assert compatibility(BpttTrainer, preset("fc", "mnist"), mnist) is None
    assert "700" in compatibility(BpttTrainer, preset("fc", "mnist"), shd)
    assert "conv" in compatibility(StdpTrainer, preset("conv", "mnist"), mnist)
    assert compatibility(BpttTrainer, preset("conv", "mnist"), mnist) is None


def resolve_cell_test():
    mnist = DatasetInfo("mnist", 784, 10, (1, 28, 28))
    spec, constraint = resolve_cell(StdpTrainer, preset("fc", "mnist"), mnist)
    assert constraint is None
    assert spec.layer_sizes == (784, 256)
    spec, constraint = resolve_cell(EpropTrainer, preset("fc", "cifar10"), DatasetInfo("cifar10", 3072, 10))
    assert spec.kind == "rc" and spec.layer_sizes == (3072, 512, 10)
    spec, _ = resolve_cell(BpttTrainer, preset("fc", "mnist"), mnist)
    assert spec.record_history
    spec, constraint = resolve_cell(BpttTrainer, None, DatasetInfo("shd", 700, 20))
    assert spec is None and "no model" in constraint


# Degenerate cases shared by the gradient-following rules

def single_step_rules_match_bptt_test():
    """With T = 1 every trace equals its input, so the online rules reduce to BPTT."""
    model = small_model()
    data = batch()
    reference = BpttTrainer(model, Rng(0)).step(model, data)
    for cls in (EpropTrainer, OtttTrainer, SlttTrainer):
        assert_same_deltas(cls(model, Rng(0)).step(model, data), reference)


def dfa_with_transposed_output_weights_is_eprop_test():
    model = small_model()
    data = batch(T=6)
    dfa = DfaTrainer(model, Rng(0))
    dfa.projections[0] = FeedbackProjection(model.params["fc1"].T.copy(), "dfa")
    assert_same_deltas(dfa.step(model, data), EpropTrainer(model, Rng(0)).step(model, data))


def dfa_is_eprop_with_the_same_broadcast_matrix_test():
    model = small_model()
    data = batch(T=6)
    dfa = DfaTrainer(model, Rng(0))
    eprop = EpropTrainer(model, Rng(0), feedback="broadcast")
    eprop.projection = FeedbackProjection(dfa.projections[0].B, "broadcast")
    assert_same_deltas(dfa.step(model, data), eprop.step(model, data))


def dfa_feedback_scaling_test():
    model = small_model()
    data = batch(T=6)
    dfa = DfaTrainer(model, Rng(0))
    base = dfa.step(model, data)
    B = dfa.projections[0].B
    dfa.projections[0] = FeedbackProjection(2.5 * B, "dfa")
    scaled = dfa.step(model, data)
    assert_allclose(scaled.deltas["fc0"], 2.5 * base.deltas["fc0"], atol=1e-12)
    assert_allclose(scaled.deltas["fc1"], base.deltas["fc1"])


def zero_learning_rate_test():
    model = small_model()
    for cls in (BpttTrainer, EpropTrainer, DfaTrainer, DrtpTrainer, PerturbationTrainer):
        update = cls(model, Rng(0), lr=0.0).step(model, batch(T=4))
        assert all(not d.any() for d in update.deltas.values())


def sltt_steps_test():
    model = small_model()
    assert SlttTrainer(model, Rng(0), k_steps=2).contributing_steps(4) == [0, 2]
    assert SlttTrainer(model, Rng(0), k_steps=3).contributing_steps(10) == [0, 3, 6]
    with pytest.raises(ConfigError):
        SlttTrainer(model, Rng(0), k_steps=0)
    with pytest.raises(ConfigError):
        SlttTrainer(model, Rng(0), k_steps=1.5)
    with pytest.raises(ConfigError) as caught:
        SlttTrainer.check_hyperparams({"k_steps": 5}, 4)
    assert caught.value.location == "hyperparams.k_steps"
    SlttTrainer.check_hyperparams({"k_steps": 4}, 4)
    SlttTrainer.check_hyperparams({}, 4)
    BpttTrainer.check_hyperparams({"lr": 0.1}, 1)


def measured_step_memory_independent_of_length_test():
    """Local rules hold the same memory at T = 50 as at T = 5; BPTT grows with its tape."""
    names = ("bptt", "eprop", "ottt", "sltt", "dfa", "drtp", "local_readout")
    labels = np.arange(16) % 4
    peaks = {}
    for name in names:
        cls = TRAINERS[name]
        for T in (5, 50):
            model = build(cls.adapt_spec(ModelSpec("fc", (20, 32, 4))), Rng(0), dtype=np.float32)
            data = Batch(rand_bernoulli(Rng(1), np.full((T, 16, 20), 0.5), np.float32), labels)
            trainer = cls(model, Rng(0))
            trainer.step(model, data)
            _, peaks[name, T] = measure_step(trainer, model, data)
            assert trainer.measured_peak_bytes == peaks[name, T]
            assert peaks[name, T] >= trainer.peak_aux_bytes
    for name in names[1:]:
        assert peaks[name, 50] <= peaks[name, 5] + 16384, name
    # 45 more steps of hidden membrane and spikes on the tape
    assert peaks["bptt", 50] - peaks["bptt", 5] > 45 * 16 * 32 * 4 * 2


def local_readout_freeze_test():
    model = small_model()
    trainer = LocalReadoutTrainer(model, Rng(0))
    trainer.frozen = {"fc1"}
    update = trainer.step(model, batch(T=5))
    assert not update.deltas["fc1"].any()
    assert update.deltas["fc0"].any()


def local_readout_ignores_output_weights_test():
    model = small_model()
    data = batch(T=5)
    trainer = LocalReadoutTrainer(model, Rng(0))
    before = trainer.step(model, data).deltas["fc0"]
    model.params["fc1"] *= -4.0
    assert_allclose(trainer.step(model, data).deltas["fc0"], before)


# DRTP

def drtp_signal_test():
    projection = FeedbackProjection(np.eye(4), "drtp")
    assert_array_equal(drtp_signal(projection, np.eye(4)[[3]]), [[0, 0, 0, 1]])
    signs = drtp_signal(FeedbackProjection(np.random.default_rng(0).normal(size=(5, 4)), "drtp", "sign"),
                        np.eye(4))
    assert set(np.unique(signs)) <= {-1.0, 1.0}
    with pytest.raises(ConfigError):
        FeedbackProjection(np.eye(2), "drtp", "relu")


def drtp_hidden_update_ignores_output_test():
    model = small_model()
    data = batch(T=5)
    trainer = DrtpTrainer(model, Rng(0))
    before = trainer.step(model, data)
    model.params["fc1"] *= -2.0
    after = trainer.step(model, data)
    assert_allclose(after.deltas["fc0"], before.deltas["fc0"])


def drtp_missing_projection_test():
    model = small_model()
    trainer = DrtpTrainer(model, Rng(0))
    trainer.projections.clear()
    with pytest.raises(ConfigError):
        trainer.step(model, batch(T=2))


# STDP

def stdp_potentiation_example_test():
    pre = np.zeros((5, 1, 1))
    post = np.zeros((5, 1, 1))
    pre[1] = 1
    post[3] = 1
    delta = stdp_delta(pre, post, a_plus=0.01, a_minus=0.012, decay_pre=0.8, decay_post=0.8)
    assert delta[0, 0] == pytest.approx(0.01 * 0.64)


def stdp_sign_test():
    gen = np.random.default_rng(0)
    for _ in range(1000):
        T = int(gen.integers(2, 30))
        t_pre, t_post = gen.choice(T, size=2, replace=False)
        pre = np.zeros((T, 1, 1))
        post = np.zeros((T, 1, 1))
        pre[t_pre] = 1
        post[t_post] = 1
        a_plus, a_minus = gen.uniform(0.001, 0.1, size=2)
        decay = gen.uniform(0.5, 0.99)
        delta = stdp_delta(pre, post, a_plus, a_minus, decay, decay)[0, 0]
        if t_post > t_pre:
            assert delta > 0
        else:
            assert delta < 0


def stdp_trainer_test():
    model = build(ModelSpec("fc", (8, 5)), Rng(0))
    trainer = StdpTrainer(model, Rng(1))
    trainer.prepare(model)
    W = model.params["fc0"]
    assert W.min() >= 0 and W.max() <= 1.0
    assert_allclose(W.sum(axis=1), 0.1 * 8, rtol=1e-5)
    inputs = rand_bernoulli(Rng(2), np.full((20, 4, 8), 0.8))
    update = trainer.step(model, Batch(inputs))
    trainer.apply(model, update)
    assert W.min() >= 0 and W.max() <= 1.0
    assert trainer.theta.max() > 0
    counts = trainer.run(model, inputs, plastic=False)[0]
    # winner-take-all: at most one unit fires per step and sample
    assert counts.sum(axis=1).max() <= 20


def weight_clipping_test():
    model = build(ModelSpec("fc", (8, 3)), Rng(0))
    trainer = RstdpTrainer(model, Rng(0))
    trainer.apply(model, TrainerUpdate(GradSet(fc0=np.full((3, 8), 10.0, dtype=np.float32))))
    assert (model.params["fc0"] == 1.0).all()
    trainer.apply(model, TrainerUpdate(GradSet(fc0=np.full((3, 8), -30.0, dtype=np.float32))))
    assert (model.params["fc0"] == 0.0).all()


# Three-factor rules

def three_factor_update_test():
    e = np.random.default_rng(0).normal(size=(3, 4))
    assert not three_factor_update(e, 0.0, 0.5).any()
    assert_allclose(three_factor_update(e, 2.0, 0.5), 2 * three_factor_update(e, 1.0, 0.5))
    assert_allclose(three_factor_update(e, -1.0, 0.5), -three_factor_update(e, 1.0, 0.5))


def eligibility_trace_test():
    trace = EligibilityTrace((2,), 0.5)
    trace.step(np.array([1.0, 0.0]))
    trace.step(np.array([0.0, 1.0]))
    assert_allclose(trace.value, [0.5, 1.0])
    with pytest.raises(ArgumentError):
        EligibilityTrace((2,), 1.5)


def rstdp_zero_modulator_test():
    model = build(ModelSpec("fc", (6, 2)), Rng(0))
    trainer = RstdpTrainer(model, Rng(0))
    trainer.prepare(model)
    inputs = rand_bernoulli(Rng(1), np.full((20, 2, 6), 0.7))
    update = trainer.step(model, Batch(inputs, reward_fn=lambda actions: np.zeros(len(actions))))
    assert not update.deltas["fc0"].any()
    assert update.modulator == 0.0
    assert len(update.diagnostics["actions"]) == 2


def rstdp_reward_sign_test():
    model = build(ModelSpec("fc", (6, 2)), Rng(0))
    inputs = rand_bernoulli(Rng(1), np.full((20, 1, 6), 0.7))
    deltas = {}
    for reward in (1.0, -1.0):
        trainer = RstdpTrainer(model, Rng(0), lr=0.1)
        trainer.prepare(model)
        update = trainer.step(model, Batch(inputs, reward_fn=lambda actions: np.full(len(actions), reward)))
        deltas[reward] = update.deltas["fc0"]
    assert deltas[1.0].any()
    assert_allclose(deltas[-1.0], -deltas[1.0], rtol=1e-6)


def rstdp_needs_reward_test():
    model = build(ModelSpec("fc", (6, 2)), Rng(0))
    with pytest.raises(MissingRewardError):
        RstdpTrainer(model, Rng(0)).step(model, Batch(np.zeros((3, 1, 6), dtype=np.float32)))


# Perturbation

def perturbation_estimate_direction_test():
    gen = np.random.default_rng(0)
    target = gen.normal(size=5)
    w = gen.normal(size=5)
    sigma = 0.01
    grad = w - target
    total = np.zeros(5)
    for _ in range(4000):
        xi = gen.normal(scale=sigma, size=5)
        plus = 0.5 * np.sum((w + xi - target) ** 2)
        minus = 0.5 * np.sum((w - xi - target) ** 2)
        total += perturbation_estimate(plus, minus, xi, sigma, 1.0)
    mean = total / 4000
    cosine = np.dot(mean, -grad) / np.linalg.norm(mean) / np.linalg.norm(grad)
    assert cosine > 0.95


def perturbation_restores_parameters_test():
    model = small_model(dtype=np.float32)
    saved = OrderedDict((k, v.copy()) for k, v in model.params.items())
    trainer = PerturbationTrainer(model, Rng(0))
    update = trainer.step(model, batch(T=4))
    for name in saved:
        assert_array_equal(model.params[name], saved[name])
    assert {"loss", "loss_plus", "loss_minus"} <= set(update.diagnostics)


# Training loop

def synthetic(seed=0):
    return synth_patterns(Rng(seed), 2, 8, 8, 0.05, n_train=32, n_test=16)


def fit_zero_epochs_test():
    dataset = synthetic()
    model = build(ModelSpec("fc", (8, 6, 2)), Rng(0))
    before = model.params["fc0"].copy()
    log = fit(EpropTrainer(model, Rng(1)), model, dataset, epochs=0, batch_size=8, rng=Rng(2))
    assert [r["epoch"] for r in log.records] == [0]
    assert log.final["loss"] is None
    assert 0.0 <= log.final["test_acc"] <= 1.0
    assert_array_equal(model.params["fc0"], before)


def fit_is_reproducible_test():
    dataset = synthetic()
    logs, params = [], []
    for _ in range(2):
        model = build(ModelSpec("fc", (8, 6, 2)), Rng(0))
        log = fit(OtttTrainer(model, Rng(1), lr=2.0), model, dataset, epochs=2, batch_size=8, rng=Rng(2))
        logs.append(log.accuracies())
        params.append(model.params["fc0"])
    assert logs[0] == logs[1]
    assert_array_equal(params[0], params[1])
    assert len(logs[0]) == 3


def fit_rejects_incompatible_dataset_test():
    dataset = synthetic()
    model = build(ModelSpec("fc", (9, 6, 2)), Rng(0))
    with pytest.raises(IncompatibilityError):
        fit(BpttTrainer(model, Rng(1)), model, dataset, epochs=1)


def fit_unsupervised_test():
    dataset = synthetic()
    model = build(ModelSpec("fc", (8, 6)), Rng(0))
    log = fit(StdpTrainer(model, Rng(1)), model, dataset, epochs=1, batch_size=16, rng=Rng(2))
    assert len(log.records) == 2
    assert log.peak_aux_bytes > 0
    assert 0.0 <= log.spike_sparsity <= 1.0


def lr_schedule_test():
    assert LrSchedule().lr_at(0.1, 5) == 0.1
    assert LrSchedule("step", step_size=2, gamma=0.5).lr_at(1.0, 5) == 0.25
    assert LrSchedule("exponential", gamma=0.5).lr_at(1.0, 3) == 0.125
    with pytest.raises(ConfigError):
        LrSchedule("cosine")
