"""Acceptance gate: eight criteria, one printed verdict line each.

Criteria 1-3 and 5-7 need the real benchmark datasets (cora, citeseer,
pubmed, ppi) as canonical JSON under $GRAPHDISTILL_DATA or the repository's
data/ directory. The converter subcommand builds those files from raw text
dumps (see README, "Benchmark data"). When a file is absent the criterion
skips loudly rather than asserting against synthetic stand-ins. Criteria 4
and 8 always run.
"""

import os
import time

import numpy as np
import pytest

from graphdistill.autodiff import Tape, Tensor
from graphdistill.data import (load_dataset, make_synthetic_citation,
                               perturb_features_noise)
from graphdistill.distill import (LossWeights, cyclic_pairs, global_kd_loss,
                                  softened_probs, supervised_loss)
from graphdistill.models import (Discriminator, GNNModel, GraphContext,
                                 ModelConfig, count_parameters)
from graphdistill.sparse import SparseAdjacency, normalize_adjacency, spmm
from graphdistill.train import (TrainConfig, evaluate, pretrain_teacher,
                                rng_stream, select_best_student, train_dml,
                                train_kd, train_oad, train_single)

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_ROOT = os.environ.get("GRAPHDISTILL_DATA",
                           os.path.join(REPO_ROOT, "data"))


def announce(capsys, n: int, status: str, detail: str) -> None:
    with capsys.disabled():
        print(f"\nACCEPTANCE CRITERION {n}: {status} - {detail}")


def require_dataset(capsys, n: int, name: str):
    path = os.path.join(DATA_ROOT, f"{name}.json")
    if not os.path.exists(path):
        msg = (f"{name}.json not found under {DATA_ROOT}; convert the real "
               f"dataset (README, 'Benchmark data') to run this criterion")
        announce(capsys, n, "SKIP", msg)
        pytest.skip(msg)
    return load_dataset(path)


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    announce(capsys, n, "PASS" if ok else "FAIL", detail)
    assert ok, f"criterion {n}: {detail}"


# ---------------------------------------------------------------------------
# shared benchmark recipes (citation setup: 2-layer GCN, 16 hidden, M=4,
# T=3, alpha=beta=1, 100 warmup + 100 online, adam 0.005 / 5e-4)
# ---------------------------------------------------------------------------

SEEDS = [0, 1, 2, 3]


def citation_student(ds) -> ModelConfig:
    return ModelConfig("gcn", ds.feature_dim, [16, ds.num_classes], dropout=0.5)


def citation_teacher(ds) -> ModelConfig:
    return ModelConfig("gcn", ds.feature_dim, [128, ds.num_classes], dropout=0.5)


def single_test_percent(ds, seed: int) -> float:
    model, _ = train_single(ds, citation_student(ds), TrainConfig(seed=seed))
    return 100.0 * evaluate(model, ds, "test")["accuracy"]


def group_test_percent(ds, seed: int, alpha=1.0, beta=1.0) -> float:
    cfg = TrainConfig(seed=seed, weights=LossWeights(alpha, beta))
    group, _ = train_oad(ds, [citation_student(ds)] * 4, cfg)
    vals = [evaluate(s, ds, "val")["accuracy"] for s in group.students]
    best = group.students[select_best_student(vals)]
    return 100.0 * evaluate(best, ds, "test")["accuracy"]


def test_criterion_1_cora_reproduction(capsys):
    started = time.perf_counter()
    ds = require_dataset(capsys, 1, "cora")
    singles = [single_test_percent(ds, s) for s in SEEDS]
    groups = [group_test_percent(ds, s) for s in SEEDS]
    smean, gmean = float(np.mean(singles)), float(np.mean(groups))
    elapsed = time.perf_counter() - started
    ok = (abs(smean - 80.0) <= 1.5 and abs(gmean - 80.9) <= 1.5
          and gmean > smean and elapsed < 600)
    verdict(capsys, 1, ok,
            f"cora single {smean:.2f} (target 80.0+-1.5), group {gmean:.2f} "
            f"(target 80.9+-1.5, must exceed single), {elapsed:.0f}s (< 600s)")


def test_criterion_2_citeseer_reproduction(capsys):
    started = time.perf_counter()
    ds = require_dataset(capsys, 2, "citeseer")
    singles = [single_test_percent(ds, s) for s in SEEDS]
    groups = [group_test_percent(ds, s) for s in SEEDS]
    smean, gmean = float(np.mean(singles)), float(np.mean(groups))
    elapsed = time.perf_counter() - started
    ok = (abs(smean - 65.7) <= 2.0 and abs(gmean - 67.5) <= 2.0
          and gmean - smean >= 0.5 and elapsed < 600)
    verdict(capsys, 2, ok,
            f"citeseer single {smean:.2f} (target 65.7+-2.0), group {gmean:.2f} "
            f"(target 67.5+-2.0, delta >= +0.5), {elapsed:.0f}s (< 600s)")


def test_criterion_3_pubmed_reproduction(capsys):
    started = time.perf_counter()
    ds = require_dataset(capsys, 3, "pubmed")
    singles = [single_test_percent(ds, s) for s in SEEDS]
    groups = [group_test_percent(ds, s) for s in SEEDS]
    smean, gmean = float(np.mean(singles)), float(np.mean(groups))
    elapsed = time.perf_counter() - started
    ok = (abs(smean - 78.9) <= 1.5 and abs(gmean - 79.3) <= 1.5
          and elapsed < 1500)
    verdict(capsys, 3, ok,
            f"pubmed single {smean:.2f} (target 78.9+-1.5), group {gmean:.2f} "
            f"(target 79.3+-1.5), {elapsed:.0f}s (< 1500s)")


# ---------------------------------------------------------------------------
# criterion 4: parameter counts (always runs)
# ---------------------------------------------------------------------------

def _model_count(arch, in_dim, dims, heads=None) -> int:
    config = ModelConfig(arch, in_dim, list(dims), list(heads) if heads else None)
    return count_parameters(GNNModel(config, rng_stream(0, 0, 0)))


def _disc_count(embed_dim, hidden) -> int:
    return count_parameters(Discriminator(embed_dim, hidden, rng_stream(0, 1, 0)))


# (exact allocated-scalar total, table value, unit in the table's last digit)
# Hand-derived totals: e.g. cora gcn student = (1433*16+16) + (16*7+7) = 23063.
PARAM_ROWS = [
    # cora: 1433 features, 7 classes
    ("cora gcn-student", _model_count("gcn", 1433, [16, 7]), 23063, 0.02e6, 0.01e6),
    ("cora gcn-teacher", _model_count("gcn", 1433, [128, 7]), 184455, 0.18e6, 0.01e6),
    ("cora gat-student", _model_count("gat", 1433, [8, 7], [8, 1]), 92373, 0.09e6, 0.01e6),
    ("cora gat-teacher", _model_count("gat", 1433, [128, 7], [8, 1]), 1477653, 1.47e6, 0.01e6),
    ("cora sage-student", _model_count("sage", 1433, [16, 7]), 46103, 0.05e6, 0.01e6),
    ("cora sage-teacher", _model_count("sage", 1433, [128, 7]), 368775, 0.37e6, 0.01e6),
    # citeseer: 3703 features, 6 classes
    ("citeseer gcn-student", _model_count("gcn", 3703, [16, 6]), 59366, 0.06e6, 0.01e6),
    ("citeseer gcn-teacher", _model_count("gcn", 3703, [128, 6]), 474886, 0.47e6, 0.01e6),
    ("citeseer gat-student", _model_count("gat", 3703, [8, 6], [8, 1]), 237586, 0.24e6, 0.01e6),
    ("citeseer gat-teacher", _model_count("gat", 3703, [128, 6], [8, 1]), 3801106, 3.80e6, 0.01e6),
    ("citeseer sage-student", _model_count("sage", 3703, [16, 6]), 118710, 0.12e6, 0.01e6),
    ("citeseer sage-teacher", _model_count("sage", 3703, [128, 6]), 949638, 0.95e6, 0.01e6),
    # pubmed: 500 features, 3 classes
    ("pubmed gcn-student", _model_count("gcn", 500, [16, 3]), 8067, 0.008e6, 0.001e6),
    ("pubmed gcn-teacher", _model_count("gcn", 500, [128, 3]), 64515, 0.06e6, 0.01e6),
    ("pubmed gat-student", _model_count("gat", 500, [8, 3], [8, 8]), 33800, 0.03e6, 0.01e6),
    ("pubmed gat-teacher", _model_count("gat", 500, [128, 3], [8, 8]), 539720, 0.54e6, 0.01e6),
    ("pubmed sage-student", _model_count("sage", 500, [16, 3]), 16115, 0.02e6, 0.01e6),
    ("pubmed sage-teacher", _model_count("sage", 500, [128, 3]), 128899, 0.13e6, 0.01e6),
    # citation discriminators (embedding widths 16 / 64 / 16)
    ("citation gcn-disc", _disc_count(16, []), 17, 0.017e3, 0.001e3),
    ("citation gat-disc", _disc_count(64, [16]), 1057, 1.06e3, 0.01e3),
    ("citation sage-disc", _disc_count(16, [16]), 289, 0.29e3, 0.01e3),
    # ppi: 50 features, 121 labels; the two gat rows' table values disagree
    # with any consistent per-head accounting, so they pin integers only
    ("ppi sage-student", _model_count("sage", 50, [64, 64, 64, 64, 121]), 46841, 0.047e6, 0.001e6),
    ("ppi sage-teacher", _model_count("sage", 50, [256, 256, 121]), 219257, 0.22e6, 0.01e6),
    ("ppi gat-student", _model_count("gat", 50, [64, 64, 64, 64, 121], [2, 2, 2, 2, 2]), 88790, None, None),
    ("ppi gat-teacher", _model_count("gat", 50, [256, 256, 121], [4, 4, 6]), 1851522, None, None),
    ("ppi gat-disc", _disc_count(128, [64]), 8321, 0.008e6, 0.001e6),
    ("ppi sage-disc", _disc_count(64, [64]), 4225, 0.004e6, 0.001e6),
]


def test_criterion_4_parameter_counts(capsys):
    started = time.perf_counter()
    failures = []
    rounded_rows = 0
    for name, computed, exact, table_value, unit in PARAM_ROWS:
        if computed != exact:
            failures.append(f"{name}: allocated {computed} != derived {exact}")
        if table_value is not None:
            rounded_rows += 1
            if abs(computed - table_value) > unit:
                failures.append(
                    f"{name}: {computed} rounds outside {table_value:g}+-{unit:g}")
    elapsed = time.perf_counter() - started
    ok = not failures and elapsed < 60
    detail = (f"{len(PARAM_ROWS)} architecture rows exact, {rounded_rows} "
              f"match table rounding, {elapsed:.1f}s" if ok
              else "; ".join(failures))
    verdict(capsys, 4, ok, detail)


# ---------------------------------------------------------------------------
# criteria 5-7: ablations, dynamic graphs, inductive multi-label
# ---------------------------------------------------------------------------

def test_criterion_5_ablation_ordering(capsys):
    ds = require_dataset(capsys, 5, "cora")
    full = float(np.mean([group_test_percent(ds, s) for s in SEEDS]))
    no_global = float(np.mean([group_test_percent(ds, s, beta=0.0)
                               for s in SEEDS]))
    no_adversarial = float(np.mean([group_test_percent(ds, s, alpha=0.0)
                                    for s in SEEDS]))
    ok = full >= max(no_global, no_adversarial) - 0.3
    verdict(capsys, 5, ok,
            f"cora full {full:.2f} vs no-prediction-sharing {no_global:.2f} "
            f"and no-adversarial {no_adversarial:.2f} (full >= max - 0.3)")


def test_criterion_6_dynamic_noise(capsys):
    started = time.perf_counter()
    clean = require_dataset(capsys, 6, "cora")
    noisy = perturb_features_noise(clean, 1.0, seed=0)
    kd_deltas, group_deltas = [], []
    for seed in SEEDS:
        cfg = TrainConfig(seed=seed)
        single = single_test_percent(noisy, seed)
        teacher, _ = pretrain_teacher(clean, citation_teacher(clean), cfg)
        student, _ = train_kd(noisy, teacher, citation_student(noisy), cfg)
        kd = 100.0 * evaluate(student, noisy, "test")["accuracy"]
        group = group_test_percent(noisy, seed)
        kd_deltas.append(kd - single)
        group_deltas.append(group - single)
    kd_mean = float(np.mean(kd_deltas))
    group_mean = float(np.mean(group_deltas))
    elapsed = time.perf_counter() - started
    ok = group_mean >= kd_mean and elapsed < 1200
    verdict(capsys, 6, ok,
            f"cora noise 1.0: group delta {group_mean:+.2f} vs kd delta "
            f"{kd_mean:+.2f} (clean-graph teacher), {elapsed:.0f}s (< 1200s)")


def test_criterion_7_inductive_multilabel(capsys):
    ds = require_dataset(capsys, 7, "ppi")
    config = ModelConfig("sage", ds.feature_dim, [32, 32, ds.num_classes])
    single_scores, dml_scores, oad_scores = [], [], []
    for seed in (0, 1):
        cfg = TrainConfig(epochs_warmup=30, epochs_online=30, seed=seed)
        model, _ = train_single(ds, config, cfg)
        single_scores.append(100.0 * evaluate(model, ds, "val")["micro_f1"])
        for scores, weights in ((dml_scores, LossWeights(0.0, 1.0)),
                                (oad_scores, LossWeights(1.0, 1.0))):
            group, _ = train_oad(ds, [config] * 4,
                                 TrainConfig(epochs_warmup=30, epochs_online=30,
                                             seed=seed, weights=weights))
            vals = [evaluate(s, ds, "val")["micro_f1"] for s in group.students]
            best = group.students[select_best_student(vals)]
            scores.append(100.0 * evaluate(best, ds, "val")["micro_f1"])
    single = float(np.mean(single_scores))
    dml = float(np.mean(dml_scores))
    oad = float(np.mean(oad_scores))
    ok = oad >= dml - 0.5 and oad >= single and dml >= single
    verdict(capsys, 7, ok,
            f"ppi reduced-sage val micro-f1: group {oad:.2f}, mutual {dml:.2f}, "
            f"single {single:.2f} (group >= mutual - 0.5, both >= single)")


# ---------------------------------------------------------------------------
# criterion 8: property suite (always runs, no benchmark-scale training)
# ---------------------------------------------------------------------------

def _fd_worst_error(arch: str) -> float:
    rng = np.random.default_rng(5)
    edges = np.array([[0, 1], [1, 2], [2, 3], [3, 4], [0, 4], [1, 3]])
    ctx = GraphContext(SparseAdjacency.from_edges(5, edges))
    x = rng.normal(size=(5, 3))
    labels = np.array([0, 1, 1, 0, 1])
    mask = np.ones(5, dtype=bool)
    heads = [2, 1] if arch == "gat" else None
    model = GNNModel(ModelConfig(arch, 3, [4, 2], heads), rng_stream(11, 0, 0))

    def value() -> float:
        _, logits = model.forward(ctx, x, training=False)
        return supervised_loss(logits, labels, mask, False).item()

    with Tape() as tape:
        _, logits = model.forward(ctx, x, training=False)
        loss = supervised_loss(logits, labels, mask, False)
    tape.backward(loss)
    eps, worst = 1e-6, 0.0
    for p in model.params():
        flat, grad = p.data.ravel(), p.grad.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = value()
            flat[i] = keep - eps
            down = value()
            flat[i] = keep
            numeric = (up - down) / (2 * eps)
            scale = max(abs(numeric) + abs(grad[i]), 1e-8)
            worst = max(worst, abs(numeric - grad[i]) / scale)
    return worst


def _flat(models) -> list:
    return [p.data.copy() for m in models for p in m.params()]


def _identical(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def test_criterion_8_property_suite(capsys):
    started = time.perf_counter()
    failures = []

    # finite-difference gradients through every architecture
    for arch in ("gcn", "gat", "sage"):
        worst = _fd_worst_error(arch)
        if worst >= 1e-4:
            failures.append(f"{arch} gradient rel err {worst:.2e}")

    # sparse matmul against the dense oracle
    rng = np.random.default_rng(3)
    edges = np.array([[u, v] for u in range(8) for v in range(u + 1, 8)
                      if rng.random() < 0.4])
    adj = SparseAdjacency.from_edges(8, edges)
    x = rng.normal(size=(8, 5))
    for a in (adj, normalize_adjacency(adj)):
        gap = float(np.abs(spmm(a, Tensor(x)).data - a.to_dense() @ x).max())
        if gap > 1e-12:
            failures.append(f"spmm vs dense gap {gap:.2e}")

    # softened-distribution identities
    logits = rng.normal(size=(6, 4))
    p = softened_probs(Tensor(logits), 3.0).data
    shifted = softened_probs(Tensor(logits + 11.0), 3.0).data
    if float(np.abs(p - shifted).max()) > 1e-12:
        failures.append("temperature softmax is not shift invariant")
    if abs(global_kd_loss(Tensor(p), p, 3.0).item()) > 1e-12:
        failures.append("kl at equality is nonzero")
    q = softened_probs(Tensor(rng.normal(size=(6, 4))), 3.0).data
    at_t = global_kd_loss(Tensor(q), p, 3.0).item()
    at_one = global_kd_loss(Tensor(q), p, 1.0).item()
    if abs(at_t - 9.0 * at_one) > 1e-12 * max(1.0, abs(at_t)):
        failures.append("kl temperature scaling is not T^2")

    # cyclic pairing covers every student as source and target exactly once
    if cyclic_pairs(1) != []:
        failures.append("cyclic pairs for a lone student should be empty")
    for m in (2, 3, 5):
        pairs = cyclic_pairs(m)
        if (sorted(a for a, _ in pairs) != list(range(m))
                or sorted(b for _, b in pairs) != list(range(m))
                or any(b != (a + 1) % m for a, b in pairs)):
            failures.append(f"cyclic pairs broken for M={m}")

    # phase freezes, trainer equivalences, determinism (tiny synthetic runs)
    ds = make_synthetic_citation(num_nodes=60, num_classes=3, feature_dim=8,
                                 train_per_class=5, num_val=12, num_test=15,
                                 seed=7, intra_p=0.15, inter_p=0.02)
    config = ModelConfig("gcn", ds.feature_dim, [6, ds.num_classes])
    cfg = TrainConfig(epochs_warmup=1, epochs_online=2, lr=0.01, seed=3,
                      group_size=2, weights=LossWeights(1.0, 1.0))
    snaps = {}

    def hook(stage, epoch, group):
        if stage == "before_disc_phase":
            snaps["students"] = _flat(group.students)
        elif stage == "after_disc_phase":
            if not _identical(snaps["students"], _flat(group.students)):
                failures.append("discriminator phase moved student parameters")
            snaps["discs"] = _flat(group.discriminators)
        elif stage == "after_student_phase":
            if not _identical(snaps["discs"], _flat(group.discriminators)):
                failures.append("student phase moved discriminator parameters")

    train_oad(ds, [config] * 2, cfg, on_phase=hook)

    mixed = TrainConfig(epochs_warmup=1, epochs_online=2, lr=0.01, seed=5,
                        group_size=2, weights=LossWeights(0.8, 1.0))
    dml_group, _ = train_dml(ds, [config] * 2, mixed)
    from dataclasses import replace
    oad_group, _ = train_oad(ds, [config] * 2,
                             replace(mixed, weights=LossWeights(0.0, 1.0)))
    if not _identical(_flat(dml_group.students), _flat(oad_group.students)):
        failures.append("mutual learning differs from group run with alpha=0")

    solo_cfg = TrainConfig(epochs_warmup=1, epochs_online=2, lr=0.01, seed=9,
                           group_size=1, weights=LossWeights(1.0, 1.0))
    lone, _ = train_oad(ds, [config], solo_cfg)
    single, _ = train_single(ds, config, solo_cfg)
    if not _identical(_flat(lone.students), _flat([single])):
        failures.append("M=1 group run differs from the single baseline")

    again, _ = train_oad(ds, [config] * 2, cfg)
    base, _ = train_oad(ds, [config] * 2, cfg)
    if not _identical(_flat(again.students), _flat(base.students)):
        failures.append("rerun with identical config is not bit-identical")

    elapsed = time.perf_counter() - started
    ok = not failures and elapsed < 120
    detail = (f"gradients, sparse kernels, softening identities, cycle cover, "
              f"phase freezes, trainer equivalences, determinism all hold, "
              f"{elapsed:.1f}s (< 120s)" if ok else "; ".join(failures))
    verdict(capsys, 8, ok, detail)
