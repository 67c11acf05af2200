"""End-to-end experiment drivers: seed repeats, teacher caching, robustness
sweeps, checkpointing, and artifact writing."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import replace

import numpy as np

from . import figures, report
from .config import ExperimentConfig, serialize_config
from .data import (GraphDataset, PerturbationSpec, atomic_write_text,
                   dataset_hash, load_dataset)
from .distill import LossWeights
from .models import (Discriminator, GNNModel, ModelConfig, count_parameters,
                     group_parameter_count)
from .report import ResultRow
from .train import (evaluate_group, pretrain_teacher, primary_metric_name,
                    rng_stream, select_best_student, train_fitnet, train_kd,
                    train_oad, train_single)

OUTPUT_ROOT_ENV = "GRAPHDISTILL_OUTPUT_ROOT"

CHECKPOINT_VERSION = 1


def resolve_output(path: str) -> str:
    """Run artifacts land under $GRAPHDISTILL_OUTPUT_ROOT when it is set and
    the configured output is relative."""
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def student_model_config(cfg: ExperimentConfig, ds: GraphDataset) -> ModelConfig:
    return ModelConfig(cfg.arch, ds.feature_dim, list(cfg.layer_dims),
                       list(cfg.heads) if cfg.heads else None, cfg.dropout)


def teacher_model_config(cfg: ExperimentConfig, ds: GraphDataset) -> ModelConfig:
    if not cfg.teacher_layer_dims:
        raise ValueError(f"method {cfg.method} requires teacher.layer_dims")
    return ModelConfig(cfg.arch, ds.feature_dim, list(cfg.teacher_layer_dims),
                       list(cfg.teacher_heads) if cfg.teacher_heads else None,
                       cfg.dropout)


def perturbation_of(cfg: ExperimentConfig) -> PerturbationSpec | None:
    if cfg.perturb_kind is None:
        return None
    return PerturbationSpec(cfg.perturb_kind, cfg.perturb_level, cfg.perturb_seed)


# ---------------------------------------------------------------------------
# teacher cache
# ---------------------------------------------------------------------------

def teacher_cache_key(ds_hash: str, config: ModelConfig, train_cfg) -> str:
    payload = {
        "dataset": ds_hash,
        "arch": config.arch, "in_dim": config.in_dim,
        "layer_dims": config.layer_dims, "heads": config.heads,
        "dropout": config.dropout,
        "optimizer": train_cfg.optimizer, "lr": train_cfg.lr,
        "weight_decay": train_cfg.weight_decay, "momentum": train_cfg.momentum,
        "epochs": train_cfg.epochs_warmup + train_cfg.epochs_online,
        "seed": train_cfg.seed,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def get_teacher(ds: GraphDataset, config: ModelConfig, train_cfg,
                cache_dir: str) -> tuple[GNNModel, bool]:
    """Pretrained teacher, loaded from the cache when the (dataset, config,
    seed) triple has been trained before. Returns (model, cache_hit)."""
    key = teacher_cache_key(dataset_hash(ds), config, train_cfg)
    path = os.path.join(cache_dir, key + ".npz")
    if os.path.exists(path):
        model = GNNModel(config, rng_stream(train_cfg.seed, 3))
        with np.load(path) as blob:
            model.load_state({k: blob[k] for k in blob.files})
        return model, True
    teacher, _ = pretrain_teacher(ds, config, train_cfg)
    os.makedirs(cache_dir, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **teacher.state_dict())
    os.replace(tmp, path)
    return teacher, False


# ---------------------------------------------------------------------------
# per-seed training dispatch
# ---------------------------------------------------------------------------

def run_seed(train_ds: GraphDataset, cfg: ExperimentConfig, seed: int,
             teacher_dir: str, clean_ds: GraphDataset | None = None,
             ) -> tuple[list[GNNModel], list[Discriminator], list, int]:
    """Train one seed of cfg.method on train_ds.

    Teachers for kd/fitnet are pretrained on clean_ds (the unperturbed
    dataset) when given, so a dynamic-graph run distills stale knowledge.
    Returns (students, discriminators, reports, teacher_params).
    """
    scfg = replace(cfg.train, seed=seed)
    student = student_model_config(cfg, train_ds)
    method = cfg.method
    if method in ("oad", "dml", "ensemble"):
        configs = [student] * scfg.group_size
        if method == "dml":
            scfg = replace(scfg, weights=LossWeights(0.0, scfg.weights.beta))
        elif method == "ensemble":
            scfg = replace(scfg, weights=LossWeights(0.0, 0.0))
        group, reports = train_oad(train_ds, configs, scfg)
        return group.students, group.discriminators, reports, 0
    if method == "single":
        model, reports = train_single(train_ds, student, scfg)
        return [model], [], reports, 0
    if method in ("kd", "fitnet"):
        teacher_ds = clean_ds if clean_ds is not None else train_ds
        t_config = teacher_model_config(cfg, teacher_ds)
        teacher, _ = get_teacher(teacher_ds, t_config, scfg, teacher_dir)
        trainer = train_kd if method == "kd" else train_fitnet
        model, reports = trainer(train_ds, teacher, student, scfg)
        return [model], [], reports, count_parameters(teacher)
    raise ValueError(f"unknown method {method!r}")


def best_epoch_of(reports) -> tuple[int, float]:
    """Epoch whose best per-student validation metric peaked (earliest wins)."""
    peaks = [max(r.val) for r in reports]
    idx = int(np.argmax(peaks)) if peaks else 0
    return idx, (peaks[idx] if peaks else 0.0)


def result_row(cfg: ExperimentConfig, ds: GraphDataset, seed: int,
               students: list[GNNModel], discs: list[Discriminator],
               reports, teacher_params: int) -> ResultRow:
    metric = primary_metric_name(ds)
    val_metrics, val_ens = evaluate_group(students, ds, "val")
    test_metrics, test_ens = evaluate_group(students, ds, "test")
    best = select_best_student([m[metric] for m in val_metrics])
    best_epoch, best_epoch_val = best_epoch_of(reports)
    student_params = count_parameters(students[best])
    disc_params = count_parameters(discs[0]) if discs else 0
    return ResultRow(
        method=cfg.method, dataset=ds.name, arch=cfg.arch, seed=seed,
        metric=metric, best_student=best,
        best_student_val=val_metrics[best][metric],
        best_student_test=test_metrics[best][metric],
        ensemble_val=val_ens[metric], ensemble_test=test_ens[metric],
        best_epoch=best_epoch, best_epoch_val=best_epoch_val,
        student_params=student_params, disc_params=disc_params,
        teacher_params=teacher_params,
        group_params=group_parameter_count(len(students), student_params,
                                           disc_params))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, cfg: ExperimentConfig, ds: GraphDataset,
                    seed: int, students: list[GNNModel], best: int) -> None:
    config = students[0].config
    meta = {
        "version": CHECKPOINT_VERSION, "method": cfg.method,
        "arch": config.arch, "in_dim": config.in_dim,
        "layer_dims": config.layer_dims, "heads": config.heads,
        "dropout": config.dropout, "num_students": len(students),
        "best_student": best, "dataset_name": ds.name, "seed": seed,
        "multi_label": ds.multi_label,
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for m, student in enumerate(students):
        for name, data in student.state_dict().items():
            arrays[f"s{m}.{name}"] = data
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict, list[GNNModel]]:
    with np.load(path) as blob:
        meta = json.loads(str(blob["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version in {path}")
        config = ModelConfig(meta["arch"], meta["in_dim"],
                             list(meta["layer_dims"]),
                             list(meta["heads"]) if meta["heads"] else None,
                             meta["dropout"])
        students = []
        for m in range(meta["num_students"]):
            prefix = f"s{m}."
            state = {k[len(prefix):]: blob[k] for k in blob.files
                     if k.startswith(prefix)}
            model = GNNModel(config, rng_stream(0, 0, m))
            model.load_state(state)
            students.append(model)
    return meta, students


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out: str | None = None,
                   teacher_dir: str | None = None,
                   ) -> tuple[list[ResultRow], str]:
    cfg.validate()
    out = resolve_output(out if out is not None else cfg.output)
    os.makedirs(out, exist_ok=True)
    teacher_dir = teacher_dir or os.path.join(out, "teachers")

    clean = load_dataset(cfg.dataset)
    spec = perturbation_of(cfg)
    ds = spec.apply(clean) if spec is not None else clean

    atomic_write_text(os.path.join(out, "config.txt"), serialize_config(cfg))
    metric = primary_metric_name(ds)

    rows: list[ResultRow] = []
    per_seed_reports: dict[int, list] = {}
    run_totals: dict[int, float] = {}
    for i in range(cfg.repeats):
        seed = cfg.train.seed + i
        started = time.perf_counter()
        students, discs, reports, teacher_params = run_seed(
            ds, cfg, seed, teacher_dir, clean_ds=clean if spec else None)
        run_totals[seed] = (time.perf_counter() - started) * 1000.0
        row = result_row(cfg, ds, seed, students, discs, reports, teacher_params)
        rows.append(row)
        per_seed_reports[seed] = reports
        save_checkpoint(os.path.join(out, "checkpoints", f"seed{seed}.npz"),
                        cfg, ds, seed, students, row.best_student)
        figures.render_curves(
            os.path.join(out, f"curves_seed{seed}.png"), reports, metric,
            f"{cfg.method} on {ds.name} ({cfg.arch}, seed {seed})")
        figures.render_loss_curves(
            os.path.join(out, f"losses_seed{seed}.png"), reports,
            f"{cfg.method} losses (seed {seed})")

    report.write_results_csv(os.path.join(out, "results.csv"), rows)
    report.write_summary_csv(os.path.join(out, "summary.csv"), rows)
    report.write_epochs_csv(os.path.join(out, "epochs.csv"), per_seed_reports)
    report.write_timings_csv(os.path.join(out, "timings.csv"),
                             per_seed_reports, run_totals)
    return rows, out


def run_dynamic_suite(cfg: ExperimentConfig, levels: list[float],
                      out: str | None = None) -> tuple[list[list], str]:
    """Robustness harness: at each perturbation level train the single
    baseline, the fixed-teacher distilled student (teacher pretrained on the
    clean graph), and the online group, then report test-metric deltas."""
    cfg.validate()
    if cfg.perturb_kind is None:
        raise ValueError("dynamic suite needs perturb.kind in the config")
    if not cfg.teacher_layer_dims:
        raise ValueError("dynamic suite needs teacher.layer_dims for kd")
    if not levels:
        raise ValueError("dynamic suite needs at least one level")
    out = resolve_output(out if out is not None else cfg.output)
    os.makedirs(out, exist_ok=True)
    teacher_dir = os.path.join(out, "teachers")

    clean = load_dataset(cfg.dataset)
    metric = primary_metric_name(clean)
    atomic_write_text(os.path.join(out, "config.txt"), serialize_config(cfg))

    rows: list[list] = []
    summary_rows: list[list] = []
    for level in levels:
        spec = PerturbationSpec(cfg.perturb_kind, level, cfg.perturb_seed)
        ds = spec.apply(clean)
        kd_deltas, oad_deltas = [], []
        for i in range(cfg.repeats):
            seed = cfg.train.seed + i
            scores = {}
            for method in ("single", "kd", "oad"):
                mcfg = replace(cfg, method=method)
                students, discs, reports, _ = run_seed(
                    ds, mcfg, seed, teacher_dir, clean_ds=clean)
                row = result_row(mcfg, ds, seed, students, discs, reports, 0)
                scores[method] = row.best_student_test
            kd_delta = scores["kd"] - scores["single"]
            oad_delta = scores["oad"] - scores["single"]
            kd_deltas.append(kd_delta)
            oad_deltas.append(oad_delta)
            rows.append([cfg.perturb_kind, level, seed, metric,
                         scores["single"], scores["kd"], scores["oad"],
                         kd_delta, oad_delta])
        kd_mean, kd_std = report.mean_std(kd_deltas)
        oad_mean, oad_std = report.mean_std(oad_deltas)
        summary_rows.append([cfg.perturb_kind, level, metric, cfg.repeats,
                             kd_mean, "" if kd_std is None else kd_std,
                             oad_mean, "" if oad_std is None else oad_std])

    report.write_dynamic_csv(os.path.join(out, "dynamic.csv"), rows)
    report.write_dynamic_summary_csv(os.path.join(out, "dynamic_summary.csv"),
                                     summary_rows)
    figures.render_dynamic(os.path.join(out, "dynamic.png"),
                           [r[1] for r in summary_rows],
                           [r[4] for r in summary_rows],
                           [r[6] for r in summary_rows],
                           cfg.perturb_kind, metric)
    return rows, out


def run_group_size_sweep(cfg: ExperimentConfig, sizes: list[int],
                         out: str | None = None) -> tuple[list[list], str]:
    """Group-size ablation sharing seeds across sizes; size 1 reproduces the
    single-model baseline exactly."""
    cfg.validate()
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("group sizes must be positive")
    out = resolve_output(out if out is not None else cfg.output)
    os.makedirs(out, exist_ok=True)

    clean = load_dataset(cfg.dataset)
    spec = perturbation_of(cfg)
    ds = spec.apply(clean) if spec is not None else clean
    metric = primary_metric_name(ds)
    atomic_write_text(os.path.join(out, "config.txt"), serialize_config(cfg))

    rows: list[list] = []
    best_means, ens_means = [], []
    for size in sizes:
        best_scores, ens_scores = [], []
        for i in range(cfg.repeats):
            seed = cfg.train.seed + i
            mcfg = replace(cfg, method="oad",
                           train=replace(cfg.train, seed=seed, group_size=size))
            students, discs, reports, _ = run_seed(ds, mcfg, seed,
                                                   os.path.join(out, "teachers"))
            row = result_row(mcfg, ds, seed, students, discs, reports, 0)
            rows.append([size, seed, metric, row.best_student_test,
                         row.ensemble_test])
            best_scores.append(row.best_student_test)
            ens_scores.append(row.ensemble_test)
        best_means.append(report.mean_std(best_scores)[0])
        ens_means.append(report.mean_std(ens_scores)[0])

    report.write_sweep_csv(os.path.join(out, "group_size.csv"), rows)
    figures.render_sweep(os.path.join(out, "group_size.png"), sizes,
                         best_means, ens_means, metric)
    return rows, out


# ---------------------------------------------------------------------------
# embedding export
# ---------------------------------------------------------------------------

def export_embeddings(checkpoint_path: str, dataset_path: str, out: str,
                      anchor_seed: int = 0) -> str:
    """Write the checkpoint's selected student's penultimate-layer embedding
    for every node, plus Euclidean distances to one seeded anchor node per
    graph. Identical checkpoints and datasets give identical CSV bytes."""
    from .models import GraphContext

    meta, students = load_checkpoint(checkpoint_path)
    ds = load_dataset(dataset_path)
    if ds.feature_dim != meta["in_dim"]:
        raise ValueError(
            f"checkpoint expects {meta['in_dim']} input features, dataset "
            f"{ds.name} has {ds.feature_dim}")
    model = students[meta["best_student"]]

    out = resolve_output(out)
    os.makedirs(out, exist_ok=True)
    embed_rows, dist_rows, all_dists = [], [], []
    embed_dim = None
    for gi, g in enumerate(ds.graphs):
        ctx = GraphContext.from_graph(g)
        embedding, _ = model.forward(ctx, g.features, training=False)
        e = embedding.data
        embed_dim = e.shape[1]
        anchor = int(rng_stream(anchor_seed, gi).integers(g.num_nodes))
        dists = np.sqrt(((e - e[anchor]) ** 2).sum(axis=1))
        for node in range(g.num_nodes):
            embed_rows.append([gi, node] + [float(v) for v in e[node]])
            dist_rows.append([gi, node, anchor, float(dists[node])])
        all_dists.extend(float(v) for v in dists)

    efields = ["graph", "node"] + [f"e{j}" for j in range(embed_dim)]
    atomic_write_text(os.path.join(out, "embeddings.csv"),
                      report.render_csv("embeddings", efields, embed_rows))
    atomic_write_text(os.path.join(out, "distances.csv"),
                      report.render_csv("distances",
                                        ["graph", "node", "anchor", "distance"],
                                        dist_rows))
    figures.render_distance_hist(os.path.join(out, "distances.png"),
                                 all_dists, dist_rows[0][2] if dist_rows else 0)
    return out
