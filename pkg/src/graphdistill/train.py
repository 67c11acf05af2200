"""Training regimes and evaluation protocol.

The group trainer runs two phases per Algorithm-style schedule: a warmup
stretch where every student minimizes plain cross-entropy independently,
then an online stretch where each epoch (per training graph)

  (i)   forwards all students to snapshot their node embeddings,
  (ii)  updates every discriminator on detached embeddings (cyclic
        fake/real pairing), students untouched,
  (iii) recomputes student forwards and updates every student on
        CE + alpha * confusion term + beta * peer-KL, discriminators frozen.

Forwards are recomputed between (ii) and (iii) so student gradients reflect
the just-updated discriminators. With alpha = 0 the discriminator machinery
is never instantiated, which makes mutual learning (DML) and the degenerate
single-student case exact parameter-level special cases.

Seeding: every stochastic consumer owns a counter-based stream derived from
(seed, role, index), so adding or removing one consumer never shifts the
draws of another.
"""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Array, Tape, Tensor, add
from .data import GraphDataset
from .distill import (
    LossWeights,
    cyclic_pairs,
    discriminator_loss,
    fitnet_loss,
    generator_loss,
    global_kd_loss,
    multilabel_kd_loss,
    peer_average,
    softened_bernoulli,
    softened_probs,
    supervised_loss,
    total_loss,
    vanilla_kd_loss,
)
from .models import (
    Discriminator,
    GNNModel,
    GraphContext,
    ModelConfig,
    default_discriminator_hidden,
    glorot_uniform,
)
from .optim import OPTIMIZERS, make_optimizer

KD_DIRECTIONS = ("target_first", "student_first")


def rng_stream(*key: int) -> np.random.Generator:
    """Counter-based generator for a fixed (seed, role, index) key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(map(int, key)))))


class TrainingDiverged(RuntimeError):
    """A logged loss stopped being finite; the run is aborted."""


@dataclass
class TrainConfig:
    epochs_warmup: int = 100
    epochs_online: int = 100
    optimizer: str = "adam"
    lr: float = 0.005
    weight_decay: float = 0.0005
    momentum: float = 0.9
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    temperature: float = 3.0
    group_size: int = 4
    kd_direction: str = "target_first"
    disc_hidden: list[int] | None = None   # None: pick by arch and dataset kind

    def __post_init__(self):
        if self.epochs_warmup < 0 or self.epochs_online < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.temperature < 1.0:
            raise ValueError("temperature must be >= 1 for distillation")
        if self.group_size < 1:
            raise ValueError("group size must be >= 1")
        if self.kd_direction not in KD_DIRECTIONS:
            raise ValueError(f"unknown kd direction {self.kd_direction!r}")


@dataclass
class EpochReport:
    epoch: int
    phase: str                  # warmup | online
    ce: list[float]
    l_g: list[float]
    l_b: list[float]
    total: list[float]
    val: list[float]            # primary validation metric per student
    ensemble_val: float
    wall_ms: float              # informational; excluded from determinism


@dataclass
class GroupState:
    students: list[GNNModel]
    discriminators: list[Discriminator]
    phase: str = "warmup"

    @property
    def group_size(self) -> int:
        return len(self.students)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _np_softmax(z: Array) -> Array:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _np_sigmoid(z: Array) -> Array:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class DatasetContexts:
    """Lazy per-graph adjacency caches shared across a whole run."""

    def __init__(self, ds: GraphDataset):
        self.ds = ds
        self._cache: dict[int, GraphContext] = {}

    def ctx(self, graph_index: int) -> GraphContext:
        if graph_index not in self._cache:
            self._cache[graph_index] = GraphContext.from_graph(self.ds.graphs[graph_index])
        return self._cache[graph_index]

    def role_items(self, role: str):
        """(ctx, graph) pairs for the graphs carrying a role."""
        if self.ds.transductive:
            idxs = [0]
        else:
            idxs = self.ds.graph_split[role]
        return [(self.ctx(i), self.ds.graphs[i]) for i in idxs]


def predict_probs(model: GNNModel, ctx: GraphContext, features: Array,
                  multi_label: bool) -> Array:
    _, logits = model.forward(ctx, features, training=False)
    return _np_sigmoid(logits.data) if multi_label else _np_softmax(logits.data)


def ensemble_predict(students: list[GNNModel], ctx: GraphContext, features: Array,
                     multi_label: bool) -> Array:
    probs = [predict_probs(s, ctx, features, multi_label) for s in students]
    return sum(probs) / len(probs)


def compute_metrics(probs: Array, labels: Array, multi_label: bool) -> dict[str, float]:
    """accuracy, micro_f1, balanced_accuracy over already-selected rows."""
    if probs.shape[0] == 0:
        raise ValueError("empty split")
    if multi_label:
        y = np.asarray(labels, dtype=bool)
        pred = probs >= 0.5
        tp = int((pred & y).sum())
        fp = int((pred & ~y).sum())
        fn = int((~pred & y).sum())
        micro = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        recalls = []
        for k in range(y.shape[1]):
            support = int(y[:, k].sum())
            if support:
                recalls.append(float((pred[:, k] & y[:, k]).sum()) / support)
        balanced = float(np.mean(recalls)) if recalls else 0.0
        return {"accuracy": float((pred == y).mean()), "micro_f1": float(micro),
                "balanced_accuracy": balanced}
    y = np.asarray(labels, dtype=np.int64)
    pred = probs.argmax(axis=1)
    correct = pred == y
    tp = int(correct.sum())
    wrong = int((~correct).sum())  # each error is one FP and one FN pooled
    micro = 2 * tp / (2 * tp + 2 * wrong) if len(y) else 0.0
    recalls = []
    for k in np.unique(y):
        sel = y == k
        recalls.append(float(correct[sel].mean()))
    return {"accuracy": float(correct.mean()), "micro_f1": float(micro),
            "balanced_accuracy": float(np.mean(recalls))}


def _pooled_rows(ds: GraphDataset, ctxs: DatasetContexts, role: str,
                 prob_fn) -> tuple[Array, Array]:
    probs_rows, label_rows = [], []
    for ctx, g in ctxs.role_items(role):
        mask = g.mask(role)
        probs = prob_fn(ctx, g)
        probs_rows.append(probs[mask])
        label_rows.append(g.labels[mask])
    return np.concatenate(probs_rows, axis=0), np.concatenate(label_rows, axis=0)


def evaluate(model: GNNModel, ds: GraphDataset, role: str,
             ctxs: DatasetContexts | None = None) -> dict[str, float]:
    ctxs = ctxs or DatasetContexts(ds)
    probs, labels = _pooled_rows(
        ds, ctxs, role,
        lambda ctx, g: predict_probs(model, ctx, g.features, ds.multi_label))
    return compute_metrics(probs, labels, ds.multi_label)


def evaluate_group(students: list[GNNModel], ds: GraphDataset, role: str,
                   ctxs: DatasetContexts | None = None,
                   ) -> tuple[list[dict[str, float]], dict[str, float]]:
    """Per-student metrics plus the averaged-prediction ensemble metric,
    sharing one forward per student per graph."""
    ctxs = ctxs or DatasetContexts(ds)
    per_student_rows = [[] for _ in students]
    ensemble_rows, label_rows = [], []
    for ctx, g in ctxs.role_items(role):
        mask = g.mask(role)
        graph_probs = [predict_probs(s, ctx, g.features, ds.multi_label)
                       for s in students]
        for m, p in enumerate(graph_probs):
            per_student_rows[m].append(p[mask])
        ensemble_rows.append((sum(graph_probs) / len(graph_probs))[mask])
        label_rows.append(g.labels[mask])
    labels = np.concatenate(label_rows, axis=0)
    per_student = [compute_metrics(np.concatenate(rows, axis=0), labels, ds.multi_label)
                   for rows in per_student_rows]
    ensemble = compute_metrics(np.concatenate(ensemble_rows, axis=0), labels,
                               ds.multi_label)
    return per_student, ensemble


def primary_metric_name(ds: GraphDataset) -> str:
    return "micro_f1" if ds.multi_label else "accuracy"


def select_best_student(val_values: list[float]) -> int:
    """Highest validation metric wins; ties go to the lowest index."""
    if not val_values:
        raise ValueError("no students to select from")
    return int(np.argmax(val_values))


# ---------------------------------------------------------------------------
# shared training plumbing
# ---------------------------------------------------------------------------

def _check_finite(value: float, what: str, epoch: int) -> float:
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became non-finite at epoch {epoch}")
    return float(value)


def _train_items(ds: GraphDataset, ctxs: DatasetContexts):
    """(ctx, features-as-constant, labels, ce-mask) per training graph."""
    items = []
    for ctx, g in ctxs.role_items("train"):
        items.append((ctx, Tensor(g.features), g.labels, g.mask("train")))
    return items


def _validate_dims(ds: GraphDataset, config: ModelConfig) -> None:
    if config.in_dim != ds.feature_dim:
        raise ValueError(
            f"model in_dim {config.in_dim} does not match dataset features {ds.feature_dim}")
    if config.out_dim != ds.num_classes:
        raise ValueError(
            f"model out_dim {config.out_dim} does not match {ds.num_classes} classes")


def _soften(logits: Tensor, t: float, multi_label: bool) -> Tensor:
    return softened_bernoulli(logits, t) if multi_label else softened_probs(logits, t)


def _kd_term(student_soft: Tensor, target: Tensor, t: float, multi_label: bool,
             direction: str) -> Tensor:
    if multi_label:
        return multilabel_kd_loss(student_soft, target, t, direction)
    return global_kd_loss(student_soft, target, t, direction)


# ---------------------------------------------------------------------------
# group training (warmup + online phases)
# ---------------------------------------------------------------------------

PhaseHook = Callable[[str, int, "GroupState"], None]


def train_oad(ds: GraphDataset, model_configs: list[ModelConfig], cfg: TrainConfig,
              on_phase: PhaseHook | None = None,
              ) -> tuple[GroupState, list[EpochReport]]:
    """Group training. Works for any M >= 1; with alpha = 0 no
    discriminators exist and the online phase is pure mutual learning; with
    M = 1 the online phase degenerates to continued warmup."""
    m_count = len(model_configs)
    if m_count != cfg.group_size:
        raise ValueError(f"{m_count} model configs for group size {cfg.group_size}")
    for config in model_configs:
        _validate_dims(ds, config)

    seed = cfg.seed
    students = [GNNModel(config, rng_stream(seed, 0, m))
                for m, config in enumerate(model_configs)]
    drop_rngs = [rng_stream(seed, 2, m) for m in range(m_count)]
    optimizers = [make_optimizer(cfg.optimizer, s.params(), cfg.lr,
                                 weight_decay=cfg.weight_decay, momentum=cfg.momentum)
                  for s in students]

    adversarial = cfg.weights.alpha > 0 and m_count >= 2
    share_predictions = cfg.weights.beta > 0 and m_count >= 2
    discriminators: list[Discriminator] = []
    disc_optimizers = []
    if adversarial:
        dims = {config.embedding_dim for config in model_configs}
        if len(dims) != 1:
            raise ValueError("cyclic embedding sharing needs equal embedding widths")
        hidden = cfg.disc_hidden
        if hidden is None:
            hidden = default_discriminator_hidden(model_configs[0].arch, ds.multi_label)
        embed_dim = model_configs[0].embedding_dim
        discriminators = [Discriminator(embed_dim, hidden, rng_stream(seed, 1, m))
                          for m in range(m_count)]
        disc_optimizers = [make_optimizer(cfg.optimizer, d.params(), cfg.lr,
                                          weight_decay=0.0, momentum=cfg.momentum)
                           for d in discriminators]

    group = GroupState(students, discriminators, phase="warmup")
    ctxs = DatasetContexts(ds)
    items = _train_items(ds, ctxs)
    metric = primary_metric_name(ds)
    reports: list[EpochReport] = []
    pairs = cyclic_pairs(m_count)
    t = cfg.temperature

    def epoch_report(epoch: int, phase: str, sums: dict[str, Array]) -> EpochReport:
        started = time.perf_counter()
        per_student, ensemble = evaluate_group(students, ds, "val", ctxs)
        val = [s[metric] for s in per_student]
        n = max(1, len(items))
        return EpochReport(
            epoch=epoch, phase=phase,
            ce=list(sums["ce"] / n), l_g=list(sums["l_g"] / n),
            l_b=list(sums["l_b"] / n), total=list(sums["total"] / n),
            val=val, ensemble_val=ensemble[metric],
            wall_ms=(time.perf_counter() - started) * 1000.0 + sums["train_ms"])

    def fresh_sums() -> dict[str, Array]:
        return {k: np.zeros(m_count) for k in ("ce", "l_g", "l_b", "total")} | {
            "train_ms": 0.0}

    for epoch in range(cfg.epochs_warmup):
        started = time.perf_counter()
        sums = fresh_sums()
        for ctx, x, labels, mask in items:
            for m, student in enumerate(students):
                optimizers[m].zero_grad()
                with Tape() as tape:
                    _, logits = student.forward(ctx, x, training=True, rng=drop_rngs[m])
                    ce = supervised_loss(logits, labels, mask, ds.multi_label)
                tape.backward(ce)
                value = _check_finite(ce.item(), f"student {m} warmup loss", epoch)
                optimizers[m].step()
                sums["ce"][m] += value
                sums["total"][m] += value
        sums["train_ms"] = (time.perf_counter() - started) * 1000.0
        reports.append(epoch_report(epoch, "warmup", sums))

    group.phase = "online"
    for step in range(cfg.epochs_online):
        epoch = cfg.epochs_warmup + step
        started = time.perf_counter()
        sums = fresh_sums()
        for ctx, x, labels, mask in items:
            if adversarial:
                if on_phase:
                    on_phase("before_disc_phase", epoch, group)
                # (i) snapshot embeddings; nothing is recorded
                embeds = [student.forward(ctx, x, training=True, rng=drop_rngs[m])[0].data
                          for m, student in enumerate(students)]
                # (ii) discriminators learn to separate fake from real
                for opt in disc_optimizers:
                    opt.zero_grad()
                with Tape() as tape:
                    d_losses = []
                    for fake_m, real_m in pairs:
                        disc = discriminators[fake_m]
                        fake = disc.forward(ctx, Tensor(embeds[fake_m]))
                        real = disc.forward(ctx, Tensor(embeds[real_m]))
                        d_losses.append(discriminator_loss(fake, real))
                    d_total = d_losses[0]
                    for extra in d_losses[1:]:
                        d_total = add(d_total, extra)
                tape.backward(d_total)
                _check_finite(d_total.item(), "discriminator loss", epoch)
                for opt in disc_optimizers:
                    opt.step()
                if on_phase:
                    on_phase("after_disc_phase", epoch, group)
                for disc in discriminators:
                    for p in disc.params():
                        p.requires_grad = False
            # (iii) students: recomputed forwards against updated discriminators
            for opt in optimizers:
                opt.zero_grad()
            with Tape() as tape:
                forwards = [student.forward(ctx, x, training=True, rng=drop_rngs[m])
                            for m, student in enumerate(students)]
                softened = ([_soften(z, t, ds.multi_label) for _, z in forwards]
                            if share_predictions else None)
                totals = []
                for m, (h, z) in enumerate(forwards):
                    ce = supervised_loss(z, labels, mask, ds.multi_label)
                    l_g = (generator_loss(discriminators[m].forward(ctx, h))
                           if adversarial else None)
                    l_b = (_kd_term(softened[m], peer_average(softened, m), t,
                                    ds.multi_label, cfg.kd_direction)
                           if share_predictions else None)
                    totals.append(total_loss(ce, l_g, l_b, cfg.weights))
                    sums["ce"][m] += _check_finite(ce.item(), f"student {m} ce", epoch)
                    if l_g is not None:
                        sums["l_g"][m] += _check_finite(l_g.item(), f"student {m} l_g", epoch)
                    if l_b is not None:
                        sums["l_b"][m] += _check_finite(l_b.item(), f"student {m} l_b", epoch)
                for m, tot in enumerate(totals):
                    tape.backward(tot)
                    sums["total"][m] += _check_finite(
                        tot.item(), f"student {m} total loss", epoch)
            for opt in optimizers:
                opt.step()
            if adversarial:
                for disc in discriminators:
                    for p in disc.params():
                        p.requires_grad = True
                if on_phase:
                    on_phase("after_student_phase", epoch, group)
        sums["train_ms"] = (time.perf_counter() - started) * 1000.0
        reports.append(epoch_report(epoch, "online", sums))
    return group, reports


def train_dml(ds: GraphDataset, model_configs: list[ModelConfig], cfg: TrainConfig,
              ) -> tuple[GroupState, list[EpochReport]]:
    """Mutual learning: the group trainer with the adversarial weight off."""
    quiet = replace(cfg, weights=LossWeights(0.0, cfg.weights.beta))
    return train_oad(ds, model_configs, quiet)


def train_ensemble(ds: GraphDataset, model_configs: list[ModelConfig], cfg: TrainConfig,
                   ) -> tuple[GroupState, list[EpochReport]]:
    """Independent CE-only students; predictions are averaged at eval time."""
    quiet = replace(cfg, weights=LossWeights(0.0, 0.0))
    return train_oad(ds, model_configs, quiet)


def train_single(ds: GraphDataset, model_config: ModelConfig, cfg: TrainConfig,
                 ) -> tuple[GNNModel, list[EpochReport]]:
    solo = replace(cfg, group_size=1, weights=LossWeights(0.0, 0.0))
    group, reports = train_oad(ds, [model_config], solo)
    return group.students[0], reports


# ---------------------------------------------------------------------------
# fixed-teacher regimes
# ---------------------------------------------------------------------------

def _train_ce_model(ds: GraphDataset, config: ModelConfig, cfg: TrainConfig,
                    init_rng: np.random.Generator, drop_rng: np.random.Generator,
                    epochs: int, label: str) -> tuple[GNNModel, list[EpochReport]]:
    _validate_dims(ds, config)
    model = GNNModel(config, init_rng)
    opt = make_optimizer(cfg.optimizer, model.params(), cfg.lr,
                         weight_decay=cfg.weight_decay, momentum=cfg.momentum)
    ctxs = DatasetContexts(ds)
    items = _train_items(ds, ctxs)
    metric = primary_metric_name(ds)
    reports = []
    for epoch in range(epochs):
        started = time.perf_counter()
        ce_sum = 0.0
        for ctx, x, labels, mask in items:
            opt.zero_grad()
            with Tape() as tape:
                _, logits = model.forward(ctx, x, training=True, rng=drop_rng)
                ce = supervised_loss(logits, labels, mask, ds.multi_label)
            tape.backward(ce)
            ce_sum += _check_finite(ce.item(), f"{label} loss", epoch)
            opt.step()
        train_ms = (time.perf_counter() - started) * 1000.0
        ce_mean = ce_sum / max(1, len(items))
        val = evaluate(model, ds, "val", ctxs)[metric]
        reports.append(EpochReport(epoch, "warmup", [ce_mean], [0.0], [0.0],
                                   [ce_mean], [val], val, train_ms))
    return model, reports


def pretrain_teacher(ds: GraphDataset, teacher_config: ModelConfig, cfg: TrainConfig,
                     ) -> tuple[GNNModel, list[EpochReport]]:
    """CE-only training of the larger network on its own seed streams."""
    return _train_ce_model(ds, teacher_config, cfg,
                           rng_stream(cfg.seed, 3), rng_stream(cfg.seed, 4),
                           cfg.epochs_warmup + cfg.epochs_online, "teacher")


def _teacher_outputs(teacher: GNNModel, items, want_hidden: bool):
    """Eval-mode teacher logits (and optionally embeddings) per train graph,
    captured once; the teacher is never touched again."""
    outs = []
    for ctx, x, _, _ in items:
        h, z = teacher.forward(ctx, x, training=False)
        outs.append((h.data.copy() if want_hidden else None, z.data.copy()))
    return outs


def train_kd(ds: GraphDataset, teacher: GNNModel, student_config: ModelConfig,
             cfg: TrainConfig) -> tuple[GNNModel, list[EpochReport]]:
    """Fixed-teacher logit distillation; the distillation weight is
    cfg.weights.alpha and the CE mask matches supervised training."""
    _validate_dims(ds, student_config)
    student = GNNModel(student_config, rng_stream(cfg.seed, 0, 0))
    drop_rng = rng_stream(cfg.seed, 2, 0)
    opt = make_optimizer(cfg.optimizer, student.params(), cfg.lr,
                         weight_decay=cfg.weight_decay, momentum=cfg.momentum)
    ctxs = DatasetContexts(ds)
    items = _train_items(ds, ctxs)
    targets = _teacher_outputs(teacher, items, want_hidden=False)
    metric = primary_metric_name(ds)
    alpha = cfg.weights.alpha
    reports = []
    for epoch in range(cfg.epochs_warmup + cfg.epochs_online):
        started = time.perf_counter()
        ce_sum = kd_sum = tot_sum = 0.0
        for (ctx, x, labels, mask), (_, t_logits) in zip(items, targets):
            opt.zero_grad()
            with Tape() as tape:
                _, logits = student.forward(ctx, x, training=True, rng=drop_rng)
                loss = vanilla_kd_loss(logits, t_logits, labels, mask,
                                       cfg.temperature, alpha, ds.multi_label,
                                       cfg.kd_direction)
            tape.backward(loss)
            tot = _check_finite(loss.item(), "kd loss", epoch)
            opt.step()
            ce_val = supervised_loss(Tensor(logits.data), labels, mask,
                                     ds.multi_label).item()
            ce_sum += ce_val
            kd_sum += (tot - ce_val) / alpha if alpha else 0.0
            tot_sum += tot
        train_ms = (time.perf_counter() - started) * 1000.0
        n = max(1, len(items))
        val = evaluate(student, ds, "val", ctxs)[metric]
        reports.append(EpochReport(epoch, "online", [ce_sum / n], [0.0],
                                   [kd_sum / n], [tot_sum / n], [val], val, train_ms))
    return student, reports


def train_fitnet(ds: GraphDataset, teacher: GNNModel, student_config: ModelConfig,
                 cfg: TrainConfig) -> tuple[GNNModel, list[EpochReport]]:
    """Hidden-layer regression onto the teacher's penultimate embedding
    through a learned linear projection, weighted by cfg.weights.alpha and
    trained jointly with the student's CE."""
    _validate_dims(ds, student_config)
    student = GNNModel(student_config, rng_stream(cfg.seed, 0, 0))
    drop_rng = rng_stream(cfg.seed, 2, 0)
    proj_rng = rng_stream(cfg.seed, 5, 0)
    s_dim = student_config.embedding_dim
    t_dim = teacher.config.embedding_dim
    proj_w = Tensor(glorot_uniform(proj_rng, s_dim, t_dim, (s_dim, t_dim)),
                    requires_grad=True, name="proj.W")
    proj_b = Tensor(np.zeros((1, t_dim)), requires_grad=True, name="proj.b")
    opt = make_optimizer(cfg.optimizer, student.params() + [proj_w, proj_b], cfg.lr,
                         weight_decay=cfg.weight_decay, momentum=cfg.momentum)
    ctxs = DatasetContexts(ds)
    items = _train_items(ds, ctxs)
    targets = _teacher_outputs(teacher, items, want_hidden=True)
    metric = primary_metric_name(ds)
    alpha = cfg.weights.alpha
    reports = []
    for epoch in range(cfg.epochs_warmup + cfg.epochs_online):
        started = time.perf_counter()
        ce_sum = hint_sum = tot_sum = 0.0
        for (ctx, x, labels, mask), (t_hidden, _) in zip(items, targets):
            opt.zero_grad()
            with Tape() as tape:
                hidden, logits = student.forward(ctx, x, training=True, rng=drop_rng)
                ce = supervised_loss(logits, labels, mask, ds.multi_label)
                hint = fitnet_loss(hidden, t_hidden, proj_w, proj_b)
                loss = total_loss(ce, hint, None, LossWeights(alpha, 0.0))
            tape.backward(loss)
            tot = _check_finite(loss.item(), "fitnet loss", epoch)
            opt.step()
            ce_sum += ce.item()
            hint_sum += hint.item()
            tot_sum += tot
        train_ms = (time.perf_counter() - started) * 1000.0
        n = max(1, len(items))
        val = evaluate(student, ds, "val", ctxs)[metric]
        reports.append(EpochReport(epoch, "online", [ce_sum / n], [hint_sum / n],
                                   [0.0], [tot_sum / n], [val], val, train_ms))
    return student, reports
