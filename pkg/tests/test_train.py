"""Trainer contracts: determinism, phase equivalences, freeze barriers,
divergence handling, metrics, and the selection protocol."""

import numpy as np
import pytest

from graphdistill.data import GraphDataset, make_synthetic_citation, make_synthetic_multigraph
from graphdistill.distill import LossWeights
from graphdistill.models import GNNModel, ModelConfig
from graphdistill.train import (
    DatasetContexts,
    TrainConfig,
    TrainingDiverged,
    compute_metrics,
    ensemble_predict,
    evaluate,
    evaluate_group,
    pretrain_teacher,
    primary_metric_name,
    rng_stream,
    select_best_student,
    train_dml,
    train_ensemble,
    train_fitnet,
    train_kd,
    train_oad,
    train_single,
)


def tiny_dataset() -> GraphDataset:
    return make_synthetic_citation(num_nodes=60, num_classes=3, feature_dim=8,
                                   train_per_class=5, num_val=12, num_test=15,
                                   seed=7, intra_p=0.15, inter_p=0.02)


def tiny_config(ds, hidden=6) -> ModelConfig:
    return ModelConfig("gcn", ds.feature_dim, [hidden, ds.num_classes])


def tiny_train(seed=0, warmup=2, online=2, alpha=1.0, beta=1.0, m=2, **kw) -> TrainConfig:
    kw.setdefault("temperature", 3.0)
    return TrainConfig(epochs_warmup=warmup, epochs_online=online, lr=0.01,
                       weight_decay=5e-4, seed=seed, weights=LossWeights(alpha, beta),
                       group_size=m, **kw)


def flat_params(model_or_group):
    models = (model_or_group.students if hasattr(model_or_group, "students")
              else [model_or_group])
    return [p.data.copy() for mod in models for p in mod.params()]


def assert_bit_identical(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


# ---------------------------------------------------------------------------
# config validation and seeding
# ---------------------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError, match="temperature"):
        tiny_train(temperature=0.5)
    with pytest.raises(ValueError, match="group size"):
        tiny_train(m=0)
    with pytest.raises(ValueError, match="optimizer"):
        tiny_train(optimizer="lbfgs")
    with pytest.raises(ValueError, match="kd direction"):
        tiny_train(kd_direction="sideways")
    with pytest.raises(ValueError, match="epoch"):
        tiny_train(warmup=-1)


def test_rng_streams_are_independent():
    a = rng_stream(0, 0, 0).normal(size=4)
    b = rng_stream(0, 0, 1).normal(size=4)
    c = rng_stream(0, 0, 0).normal(size=4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, c)


def test_group_trainer_rejects_mismatches():
    ds = tiny_dataset()
    with pytest.raises(ValueError, match="model configs for group size"):
        train_oad(ds, [tiny_config(ds)], tiny_train(m=2))
    bad = ModelConfig("gcn", ds.feature_dim + 1, [4, ds.num_classes])
    with pytest.raises(ValueError, match="in_dim"):
        train_oad(ds, [bad, bad], tiny_train(m=2))
    uneven = [ModelConfig("gcn", ds.feature_dim, [4, ds.num_classes]),
              ModelConfig("gcn", ds.feature_dim, [6, ds.num_classes])]
    with pytest.raises(ValueError, match="equal embedding widths"):
        train_oad(ds, uneven, tiny_train(m=2, alpha=1.0))


# ---------------------------------------------------------------------------
# determinism and phase equivalences
# ---------------------------------------------------------------------------

def test_reruns_are_bit_identical():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 2
    cfg = tiny_train(seed=3)
    g1, r1 = train_oad(ds, configs, cfg)
    g2, r2 = train_oad(ds, configs, cfg)
    assert_bit_identical(flat_params(g1), flat_params(g2))
    for a, b in zip(r1, r2):
        assert a.ce == b.ce and a.l_g == b.l_g and a.l_b == b.l_b
        assert a.total == b.total and a.val == b.val
        assert a.ensemble_val == b.ensemble_val


def test_seed_changes_results():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 2
    g1, _ = train_oad(ds, configs, tiny_train(seed=1))
    g2, _ = train_oad(ds, configs, tiny_train(seed=2))
    assert any(not np.array_equal(a, b)
               for a, b in zip(flat_params(g1), flat_params(g2)))


def test_warmup_total_equals_ce():
    ds = tiny_dataset()
    _, reports = train_oad(ds, [tiny_config(ds)] * 2, tiny_train(warmup=3, online=1))
    warm = [r for r in reports if r.phase == "warmup"]
    assert len(warm) == 3
    for r in warm:
        assert r.total == r.ce and r.l_g == [0.0, 0.0] and r.l_b == [0.0, 0.0]


def test_inert_online_phase_equals_extended_warmup():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 2
    mixed, _ = train_oad(ds, configs, tiny_train(warmup=3, online=3, alpha=0.0, beta=0.0))
    pure, _ = train_oad(ds, configs, tiny_train(warmup=6, online=0, alpha=0.0, beta=0.0))
    assert_bit_identical(flat_params(mixed), flat_params(pure))


def test_dml_equals_group_training_without_adversary():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 3
    cfg = tiny_train(m=3, alpha=1.0, beta=1.0)
    dml_group, _ = train_dml(ds, configs, cfg)
    oad_group, _ = train_oad(ds, configs, tiny_train(m=3, alpha=0.0, beta=1.0))
    assert_bit_identical(flat_params(dml_group), flat_params(oad_group))
    assert dml_group.discriminators == []


def test_single_equals_degenerate_group():
    ds = tiny_dataset()
    config = tiny_config(ds)
    solo, _ = train_single(ds, config, tiny_train(m=1))
    group, _ = train_oad(ds, [config], tiny_train(m=1, alpha=0.0, beta=0.0))
    assert_bit_identical(flat_params(solo), flat_params(group.students[0]))


def test_adversarial_phases_freeze_the_other_side():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 2
    checkpoints = {}

    def hook(stage, epoch, group):
        students = [p.data.copy() for s in group.students for p in s.params()]
        discs = [p.data.copy() for d in group.discriminators for p in d.params()]
        if stage == "before_disc_phase":
            checkpoints["students"] = students
        elif stage == "after_disc_phase":
            assert_bit_identical(checkpoints["students"], students)
            checkpoints["discs"] = discs
            checkpoints["disc_changed"] = False
        elif stage == "after_student_phase":
            assert_bit_identical(checkpoints["discs"], discs)

    group, reports = train_oad(ds, configs, tiny_train(warmup=1, online=3), on_phase=hook)
    assert len(group.discriminators) == 2
    online = [r for r in reports if r.phase == "online"]
    assert all(v != 0.0 for r in online for v in r.l_g)


def test_discriminators_actually_train():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 2
    snaps = []

    def hook(stage, epoch, group):
        if stage == "after_disc_phase":
            snaps.append([p.data.copy() for d in group.discriminators for p in d.params()])

    train_oad(ds, configs, tiny_train(warmup=0, online=2), on_phase=hook)
    assert len(snaps) == 2
    assert any(not np.array_equal(a, b) for a, b in zip(snaps[0], snaps[1]))


def test_divergence_aborts_with_diagnostic():
    ds = tiny_dataset()
    cfg = TrainConfig(epochs_warmup=40, epochs_online=0, optimizer="sgd_momentum",
                      lr=1e8, weight_decay=1e8, momentum=0.9, seed=0,
                      weights=LossWeights(0.0, 0.0), group_size=1)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged, match="non-finite"):
            train_oad(ds, [tiny_config(ds)], cfg)


# ---------------------------------------------------------------------------
# baselines against the shared streams
# ---------------------------------------------------------------------------

def test_kd_teacher_is_frozen_and_alpha_zero_matches_single():
    ds = tiny_dataset()
    cfg = tiny_train(m=1, warmup=2, online=2)
    teacher, _ = pretrain_teacher(ds, tiny_config(ds, hidden=10), cfg)
    before = flat_params(teacher)
    student_cfg = tiny_config(ds)
    kd_zero, _ = train_kd(ds, teacher, student_cfg,
                          tiny_train(m=1, alpha=0.0, beta=0.0))
    assert_bit_identical(before, flat_params(teacher))
    solo, _ = train_single(ds, student_cfg, tiny_train(m=1))
    assert_bit_identical(flat_params(kd_zero), flat_params(solo))


def test_kd_with_teacher_differs_from_single():
    ds = tiny_dataset()
    cfg = tiny_train(m=1)
    teacher, _ = pretrain_teacher(ds, tiny_config(ds, hidden=10), cfg)
    kd_model, reports = train_kd(ds, teacher, tiny_config(ds), tiny_train(m=1, alpha=1.0))
    solo, _ = train_single(ds, tiny_config(ds), tiny_train(m=1))
    assert any(not np.array_equal(a, b)
               for a, b in zip(flat_params(kd_model), flat_params(solo)))
    assert all(np.isfinite(r.l_b[0]) for r in reports)


def test_fitnet_alpha_zero_student_matches_single():
    ds = tiny_dataset()
    cfg = tiny_train(m=1)
    teacher, _ = pretrain_teacher(ds, tiny_config(ds, hidden=10), cfg)
    fit, _ = train_fitnet(ds, teacher, tiny_config(ds),
                          tiny_train(m=1, alpha=0.0, beta=0.0))
    solo, _ = train_single(ds, tiny_config(ds), tiny_train(m=1))
    assert_bit_identical(flat_params(fit), flat_params(solo))


def test_fitnet_with_hint_trains_projection():
    ds = tiny_dataset()
    cfg = tiny_train(m=1)
    teacher, _ = pretrain_teacher(ds, tiny_config(ds, hidden=10), cfg)
    model, reports = train_fitnet(ds, teacher, tiny_config(ds), tiny_train(m=1, alpha=1.0))
    assert all(r.l_g[0] >= 0.0 for r in reports)
    assert any(r.l_g[0] > 0.0 for r in reports)


def test_ensemble_regime_is_independent_students():
    ds = tiny_dataset()
    configs = [tiny_config(ds)] * 2
    group, _ = train_ensemble(ds, configs, tiny_train(m=2))
    solo0, _ = train_single(ds, configs[0], tiny_train(m=1))
    assert_bit_identical(flat_params(group.students[0]), flat_params(solo0))
    assert group.discriminators == []


# ---------------------------------------------------------------------------
# inductive path
# ---------------------------------------------------------------------------

def test_inductive_multigraph_training_runs():
    ds = make_synthetic_multigraph(num_graphs=4, nodes_per_graph=25, num_labels=3,
                                   feature_dim=6, seed=1, split=(2, 1, 1))
    configs = [ModelConfig("sage", 6, [5, 3])] * 2
    group, reports = train_oad(ds, configs, tiny_train(warmup=1, online=2, m=2))
    assert primary_metric_name(ds) == "micro_f1"
    assert len(reports) == 3
    per_student, ens = evaluate_group(group.students, ds, "test")
    for metrics in per_student + [ens]:
        assert 0.0 <= metrics["micro_f1"] <= 1.0


# ---------------------------------------------------------------------------
# metrics and selection
# ---------------------------------------------------------------------------

def test_metrics_perfect_predictor():
    probs = np.array([[0.9, 0.1], [0.1, 0.9], [0.8, 0.2]])
    m = compute_metrics(probs, np.array([0, 1, 0]), False)
    assert m == {"accuracy": 1.0, "micro_f1": 1.0, "balanced_accuracy": 1.0}


def test_metrics_single_class_predictor_balanced_is_one_over_k():
    probs = np.tile([0.9, 0.05, 0.05], (6, 1))
    m = compute_metrics(probs, np.array([0, 0, 1, 1, 2, 2]), False)
    assert abs(m["balanced_accuracy"] - 1 / 3) < 1e-12
    assert m["accuracy"] == m["micro_f1"]


def test_metrics_multilabel_micro_hand_case():
    # TP=2, FP=1, FN=1 -> micro F1 = 4/6
    probs = np.array([[0.9], [0.9], [0.9], [0.1]])
    labels = np.array([[1], [1], [0], [1]])
    m = compute_metrics(probs, labels, True)
    assert abs(m["micro_f1"] - 2 * 2 / (2 * 2 + 1 + 1)) < 1e-12
    assert abs(m["micro_f1"] - 0.6667) < 1e-4


def test_metrics_empty_split_rejected():
    with pytest.raises(ValueError, match="empty split"):
        compute_metrics(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), False)


def test_evaluate_on_dataset_roles():
    ds = tiny_dataset()
    model = GNNModel(tiny_config(ds), rng_stream(0, 0, 0))
    for role in ("train", "val", "test"):
        m = evaluate(model, ds, role)
        assert set(m) == {"accuracy", "micro_f1", "balanced_accuracy"}
        assert all(0.0 <= v <= 1.0 for v in m.values())


def test_ensemble_predict_properties():
    ds = tiny_dataset()
    ctx = DatasetContexts(ds).ctx(0)
    x = ds.graphs[0].features
    a = GNNModel(tiny_config(ds), rng_stream(0, 0, 0))
    b = GNNModel(tiny_config(ds), rng_stream(0, 0, 1))
    solo = ensemble_predict([a], ctx, x, False)
    from graphdistill.train import predict_probs
    assert np.array_equal(solo, predict_probs(a, ctx, x, False))
    twin = GNNModel(tiny_config(ds), rng_stream(0, 0, 0))
    same = ensemble_predict([a, twin], ctx, x, False)
    assert np.allclose(same, solo)
    mixed = ensemble_predict([a, b], ctx, x, False)
    assert np.allclose(mixed.sum(axis=1), 1.0, atol=1e-12)


def test_select_best_student_rules():
    assert select_best_student([0.1, 0.5, 0.9]) == 2
    assert select_best_student([0.5, 0.5, 0.5]) == 0
    assert select_best_student([0.2, 0.7, 0.7]) == 1
    with pytest.raises(ValueError):
        select_best_student([])


# ---------------------------------------------------------------------------
# learning smoke test
# ---------------------------------------------------------------------------

def test_single_student_learns_synthetic_citation():
    ds = tiny_dataset()
    cfg = TrainConfig(epochs_warmup=60, epochs_online=0, lr=0.02, weight_decay=5e-4,
                      seed=0, weights=LossWeights(0.0, 0.0), group_size=1)
    model, reports = train_single(ds, tiny_config(ds), cfg)
    final_val = reports[-1].val[0]
    assert final_val > 0.55  # 3 classes, chance is 0.33
    assert reports[-1].ce[0] < reports[0].ce[0]
