"""Command-line interface.

Exit codes: 0 on success, 1 for configuration or input problems (bad keys,
missing files, malformed datasets), 2 when training diverges.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, load_config
from .data import (DatasetError, Graph, GraphDataset, dataset_from_dict,
                   dataset_to_dict, load_dataset, save_dataset, seeded_split)
from .experiments import (export_embeddings, run_dynamic_suite,
                          run_experiment, run_group_size_sweep,
                          student_model_config, teacher_model_config)
from .models import (Discriminator, GNNModel, count_parameters,
                     default_discriminator_hidden, group_parameter_count)
from .train import TrainingDiverged, rng_stream

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphdistill",
        description="Group training of small graph neural networks with "
                    "adversarial embedding alignment and prediction sharing.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_command(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config",
                       help="key=value config file; bare key=value tokens "
                            "anywhere after the subcommand override entries")
        p.add_argument("--out", default=None,
                       help="output directory (defaults to the config's)")
        return p

    add_config_command("run", "train one method and write result artifacts")

    p = add_config_command("dynamic", "robustness sweep over perturbation levels")
    p.add_argument("--levels", type=_float_list, required=True,
                   help="comma-separated perturbation levels")

    p = add_config_command("sweep-group", "ablation over group sizes")
    p.add_argument("--sizes", type=_int_list, required=True,
                   help="comma-separated group sizes")

    p = add_config_command("params", "print parameter counts for a config")
    p.add_argument("--in-dim", type=int, default=None,
                   help="input feature width (skips loading the dataset)")

    p = sub.add_parser("export-embeddings",
                       help="dump a checkpoint's node embeddings to CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--anchor-seed", type=int, default=0)

    p = sub.add_parser("convert",
                       help="build a canonical dataset file from raw text inputs")
    p.add_argument("--edges", required=True,
                   help="whitespace-separated 'u v' pairs, one per line")
    p.add_argument("--features", required=True,
                   help="CSV of node features, row i for node i")
    p.add_argument("--labels", required=True,
                   help="one class id per line, or a 0/1 CSV row with --multi-label")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="converted")
    p.add_argument("--multi-label", action="store_true")
    p.add_argument("--split-seed", type=int, default=None,
                   help="draw seeded train/val/test masks instead of all-train")
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--num-val", type=int, default=500)
    p.add_argument("--num-test", type=int, default=1000)
    return parser


# ---------------------------------------------------------------------------
# convert
# ---------------------------------------------------------------------------

def _read_edges(path: str) -> list[tuple[int, int]]:
    pairs = set()
    with open(path, encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{i}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{path}:{i}: non-integer node id") from None
            if u == v:
                continue  # self-loops carry no information here
            pairs.add((min(u, v), max(u, v)))
    return sorted(pairs)


def _read_matrix(path: str, dtype) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([dtype(part) for part in line.split(",")])
            except ValueError:
                raise DatasetError(f"{path}:{i}: malformed row") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetError(f"{path}: inconsistent row widths {sorted(widths)}")
    return np.asarray(rows)


def convert_dataset(args) -> GraphDataset:
    features = _read_matrix(args.features, float).astype(np.float64)
    n = features.shape[0]
    if args.multi_label:
        labels = _read_matrix(args.labels, int).astype(np.int8)
        if set(np.unique(labels)) - {0, 1}:
            raise DatasetError("multi-label rows must be 0/1")
        num_classes = labels.shape[1]
    else:
        labels = _read_matrix(args.labels, int).astype(np.int64)
        if labels.shape[1] != 1:
            raise DatasetError("single-label input must be one class id per line")
        labels = labels[:, 0]
        if labels.min() < 0:
            raise DatasetError("class ids must be >= 0")
        num_classes = int(labels.max()) + 1
    if labels.shape[0] != n:
        raise DatasetError(
            f"{labels.shape[0]} label rows for {n} feature rows")

    pairs = _read_edges(args.edges)
    edges = (np.asarray(pairs, dtype=np.int64) if pairs
             else np.zeros((0, 2), dtype=np.int64))
    if pairs and edges.max() >= n:
        raise DatasetError(f"edge endpoint {int(edges.max())} out of range "
                           f"for {n} nodes")

    if args.split_seed is not None:
        if args.multi_label:
            raise DatasetError("seeded splits need single-label classes")
        train, val, test = seeded_split(labels, args.split_seed,
                                        args.train_per_class,
                                        args.num_val, args.num_test)
    else:
        train = np.ones(n, dtype=bool)
        val = np.zeros(n, dtype=bool)
        test = np.zeros(n, dtype=bool)

    graph = Graph(num_nodes=n, edges=edges, features=features, labels=labels,
                  train_mask=train, val_mask=val, test_mask=test)
    ds = GraphDataset(name=args.name, num_classes=num_classes,
                      multi_label=args.multi_label, graphs=[graph])
    return dataset_from_dict(dataset_to_dict(ds))  # run the full validator


# ---------------------------------------------------------------------------
# params
# ---------------------------------------------------------------------------

def print_params(cfg, in_dim: int | None, stream) -> None:
    if in_dim is None:
        ds = load_dataset(cfg.dataset)
        in_dim = ds.feature_dim
        multi_label = ds.multi_label
    else:
        multi_label = False
    probe = GraphDataset(name="probe", num_classes=cfg.layer_dims[-1],
                         multi_label=multi_label,
                         graphs=[_probe_graph(in_dim, cfg.layer_dims[-1],
                                              multi_label)])
    student = student_model_config(cfg, probe)
    s_count = count_parameters(GNNModel(student, rng_stream(0, 0, 0)))
    size = cfg.train.group_size if cfg.method in ("oad", "dml", "ensemble") else 1
    adversarial = cfg.method == "oad" and cfg.train.weights.alpha > 0 and size >= 2
    d_count = 0
    if adversarial:
        hidden = cfg.train.disc_hidden
        if hidden is None:
            hidden = default_discriminator_hidden(cfg.arch, multi_label)
        d_count = count_parameters(
            Discriminator(student.embedding_dim, hidden, rng_stream(0, 1, 0)))
    print(f"student_params={s_count}", file=stream)
    print(f"disc_params={d_count}", file=stream)
    print(f"group_size={size}", file=stream)
    print(f"group_params={group_parameter_count(size, s_count, d_count)}",
          file=stream)
    if cfg.teacher_layer_dims:
        teacher = teacher_model_config(cfg, probe)
        t_count = count_parameters(GNNModel(teacher, rng_stream(0, 3)))
        print(f"teacher_params={t_count}", file=stream)


def _probe_graph(in_dim: int, num_classes: int, multi_label: bool) -> Graph:
    # minimal valid graph carrying only the feature width
    n = max(2, num_classes)
    if multi_label:
        labels = np.zeros((n, num_classes), dtype=np.int8)
        labels[:, 0] = 1
    else:
        labels = np.arange(n, dtype=np.int64) % num_classes
    return Graph(num_nodes=n, edges=np.array([[0, 1]], dtype=np.int64),
                 features=np.zeros((n, in_dim)), labels=labels,
                 train_mask=np.ones(n, dtype=bool),
                 val_mask=np.zeros(n, dtype=bool),
                 test_mask=np.zeros(n, dtype=bool))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

CONFIG_COMMANDS = ("run", "dynamic", "sweep-group", "params")


def _extract_overrides(argv: list[str]) -> tuple[list[str], list[str]]:
    """Pull bare key=value tokens out of a config subcommand's arguments so
    they can appear before or after flags like --levels."""
    kept, overrides = [argv[0]], []
    for token in argv[1:]:
        if "=" in token and not token.startswith("-"):
            overrides.append(token)
        else:
            kept.append(token)
    return kept, overrides


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    overrides: list[str] = []
    if argv and argv[0] in CONFIG_COMMANDS:
        argv, overrides = _extract_overrides(argv)
    args = build_parser().parse_args(argv)
    args.overrides = overrides
    try:
        if args.command == "run":
            cfg = load_config(args.config, args.overrides)
            rows, out = run_experiment(cfg, out=args.out)
            for row in rows:
                print(f"seed {row.seed}: best student {row.best_student} "
                      f"test {row.metric}={row.best_student_test:.4f} "
                      f"ensemble={row.ensemble_test:.4f}")
            print(f"artifacts written to {out}")
        elif args.command == "dynamic":
            cfg = load_config(args.config, args.overrides)
            rows, out = run_dynamic_suite(cfg, args.levels, out=args.out)
            for row in rows:
                print(f"level {row[1]} seed {row[2]}: single={row[4]:.4f} "
                      f"kd={row[5]:.4f} group={row[6]:.4f}")
            print(f"artifacts written to {out}")
        elif args.command == "sweep-group":
            cfg = load_config(args.config, args.overrides)
            rows, out = run_group_size_sweep(cfg, args.sizes, out=args.out)
            for row in rows:
                print(f"size {row[0]} seed {row[1]}: best={row[3]:.4f} "
                      f"ensemble={row[4]:.4f}")
            print(f"artifacts written to {out}")
        elif args.command == "params":
            cfg = load_config(args.config, args.overrides)
            print_params(cfg, args.in_dim, sys.stdout)
        elif args.command == "export-embeddings":
            out = export_embeddings(args.checkpoint, args.dataset, args.out,
                                    anchor_seed=args.anchor_seed)
            print(f"embeddings written to {out}")
        elif args.command == "convert":
            ds = convert_dataset(args)
            save_dataset(ds, args.out)
            print(f"wrote {args.out}: {ds.graphs[0].num_nodes} nodes, "
                  f"{ds.graphs[0].edges.shape[0]} edges, "
                  f"{ds.num_classes} classes")
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, DatasetError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
