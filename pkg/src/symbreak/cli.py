"""Command-line front door.

Subcommands: orbits, gen-data, train, multitask, transfer, verify, discovery,
report. A config file (flat key=value lines, one per flag) can seed any
subcommand's flags; explicit flags win. Exit codes: 0 success, 2 usage error,
3 data or format error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .buildinfo import build_hash
from .groupcatalog import GroupParseError, parse_group, to_generators
from .nn import Model, ModelConfig, TaskBinding, load_checkpoint, save_checkpoint
from .orbitclosure import (
    EdgeOrbitMatrix,
    SupportMask,
    combine_colorings,
    edge_orbits,
    node_orbits,
    restrict_support,
)
from .permgroup import order, schreier_sims
from .taskgen import (
    DEFAULT_WINDOW,
    EQUIVARIANT,
    INVARIANT,
    TASK_NAMES,
    TaskSpec,
    default_group_text,
    generate,
    save_dataset,
)
from .trainer import (
    RunReport,
    TrainConfig,
    build_single,
    pretrain_finetune,
    train_multitask,
    train_single,
)
from . import verify as verify_mod

GROUP_GRAMMAR = (
    "group expressions: atoms S(n), C(n), A(n), Rev(n), I(n), FixFirst(n), "
    "Intersect(n), Patch(rows,cols,p), Involutions(n; (a b)(c d), ...); "
    "products join atoms with 'x', e.g. \"S(5)xS(5)\"; points are 0-indexed"
)


class DataError(Exception):
    pass


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from exc
    return values


def _apply_config_file(parser: argparse.ArgumentParser, args: list) -> list:
    """Pull --config out of argv and turn file entries into defaults."""
    if "--config" not in args:
        return args
    i = args.index("--config")
    if i + 1 >= len(args):
        parser.error("--config needs a path")
    values = _read_config_file(args[i + 1])
    rest = args[:i] + args[i + 2 :]
    known = {a.dest for a in parser._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise DataError(
                f"unknown config key {key!r} (valid: {sorted(known - {'help'})})"
            )
        defaults[dest] = value
    parser.set_defaults(**defaults)
    return rest


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        hidden=int(args.hidden),
        layers=int(args.layers),
        heads=int(args.heads),
        attn_dim=int(args.attn_dim),
        dropout=float(args.dropout),
        aggregator=args.aggregator,
        use_node_orbits=bool(args.use_node_orbits),
    )


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        lr=float(args.lr),
        batch=int(args.batch),
        epochs=None if args.epochs is None else int(args.epochs),
        seed=seed,
        test_fraction=float(args.test_fraction),
        records=None if args.records is None else int(args.records),
        units=None if args.units is None else float(args.units),
        loss=args.loss,
        backbone_lr_scale=float(args.backbone_lr_scale),
        target_units=float(args.target_units),
        pretrain_units=float(args.pretrain_units),
        pretrain_epochs=None
        if args.pretrain_epochs is None
        else int(args.pretrain_epochs),
    )


def _task_spec(name: str, args, mode: str) -> TaskSpec:
    name = name.strip().lower()
    if name not in TASK_NAMES:
        raise DataError(f"unknown task {name!r}; valid tasks: {', '.join(TASK_NAMES)}")
    n = int(args.n)
    vocab = int(args.vocab)
    if name == "signofpermutation":
        vocab = n
    if name == "detectcapital" and vocab % 2:
        vocab *= 2
    return TaskSpec(name, n, vocab, mode, window=int(args.window))


def _seeds(args) -> list:
    return [int(s) for s in str(args.seeds).split(",") if s != ""]


def _checkpoint_config(model: Model, tasks: dict) -> dict:
    return {
        "model": model.config_echo(),
        "groups": {t: td.group_text for t, td in tasks.items()},
        "build_hash": build_hash(),
    }


def _save_model(path, model: Model, tasks: dict) -> None:
    save_checkpoint(path, _checkpoint_config(model, tasks), model.params)


def _load_model(path) -> tuple:
    config, arrays = load_checkpoint(path)
    echo = dict(config["model"])
    seed = echo.pop("seed")
    bindings = {
        t: TaskBinding(b["vocab"], b["num_edge_orbits"], b["num_node_orbits"])
        for t, b in echo.pop("bindings").items()
    }
    cfg = ModelConfig(**echo)
    model = Model(cfg, bindings, seed)
    if set(arrays) != set(model.params):
        raise DataError("checkpoint parameters do not match its config echo")
    for name, value in arrays.items():
        expect = model.params[name].data.shape
        if tuple(value.shape) != tuple(expect):
            raise DataError(f"checkpoint block {name}: shape {value.shape} != {expect}")
        model.params[name].data = value.astype(cfg.np_dtype())
    return model, config


# ---------------------------------------------------------------- commands


def cmd_orbits(args) -> int:
    expr = parse_group(args.group)
    if args.n is not None and int(args.n) != expr.degree:
        raise DataError(f"--n {args.n} != group degree {expr.degree}")
    gens = to_generators(expr)
    a2 = edge_orbits(gens)
    a1 = node_orbits(gens)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "edge_orbits.csv"), "w", newline="\n") as fh:
        fh.write(a2.to_csv())
    with open(os.path.join(args.out, "node_orbits.csv"), "w", newline="\n") as fh:
        fh.write(a1.to_csv())
    summary = {
        "group": expr.pretty(),
        "degree": expr.degree,
        "num_edge_orbits": a2.num_orbits,
        "num_node_orbits": a1.num_orbits,
        "group_order": str(order(schreier_sims(gens))),
        "build_hash": build_hash(),
    }
    if args.support:
        keep = np.loadtxt(args.support, delimiter=",", dtype=np.int64)
        if keep.shape != (expr.degree, expr.degree):
            raise DataError(
                f"support mask shape {keep.shape} != ({expr.degree}, {expr.degree})"
            )
        sparse = restrict_support(a2, SupportMask(expr.degree, keep.astype(bool)))
        with open(os.path.join(args.out, "edge_orbits_sparse.csv"), "w", newline="\n") as fh:
            fh.write(sparse.to_csv())
        summary["num_sparse_orbits"] = sparse.num_orbits
        summary["sparse_sentinel"] = sparse.sentinel
        if args.combine:
            weak = combine_colorings(a2, sparse)
            path = os.path.join(args.out, "edge_orbits_weakly_sparse.csv")
            with open(path, "w", newline="\n") as fh:
                fh.write(weak.to_csv())
            summary["num_weakly_sparse_orbits"] = weak.num_orbits
    elif args.combine:
        raise DataError("--combine needs --support")
    with open(os.path.join(args.out, "summary.json"), "w", newline="\n") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(
        f"group {summary['group']} degree {expr.degree}: "
        f"{a2.num_orbits} edge orbits, {a1.num_orbits} node orbits, "
        f"order {summary['group_order']}"
    )
    return 0


def cmd_gen_data(args) -> int:
    mode = args.mode
    if mode not in (EQUIVARIANT, INVARIANT):
        raise DataError(f"--mode must be eq or inv, got {mode!r}")
    spec = _task_spec(args.task, args, mode)
    ds = generate(spec, int(args.count), int(args.seed))
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.records)} records to {args.out}")
    return 0


def _run_seeds(args, runner) -> int:
    seeds = _seeds(args)
    os.makedirs(args.out, exist_ok=True)
    if args.parallel and len(seeds) > 1:
        import concurrent.futures as futures

        with futures.ProcessPoolExecutor(
            max_workers=min(len(seeds), os.cpu_count() or 1)
        ) as pool:
            list(pool.map(runner, seeds))
    else:
        for seed in seeds:
            runner(seed)
    return 0


def cmd_train(args) -> int:
    mode = args.mode
    spec = _task_spec(args.task, args, mode)
    group_text = args.group or default_group_text(spec.name, spec.n, mode)
    mcfg = _model_config(args)

    def run(seed: int) -> None:
        cfg = _train_config(args, seed)
        if args.save_init:
            model0, tasks0 = build_single(spec, group_text, cfg, mcfg)
            _save_model(
                os.path.join(args.out, f"checkpoint_init_seed{seed}.bin"), model0, tasks0
            )
        model, report = train_single(spec, group_text, cfg, mcfg)
        with open(
            os.path.join(args.out, f"report_seed{seed}.json"), "w", newline="\n"
        ) as fh:
            fh.write(report.to_json())
        tasks = {spec.name: _TaskStub(group_text)}
        _save_model(os.path.join(args.out, f"checkpoint_seed{seed}.bin"), model, tasks)
        print(
            f"seed {seed}: final test loss "
            f"{report.final['test_loss']:.6f} -> {args.out}"
        )

    return _run_seeds(args, run)


class _TaskStub:
    def __init__(self, group_text: str):
        self.group_text = group_text


def cmd_multitask(args) -> int:
    mode = args.mode
    names = [t.strip().lower() for t in args.tasks.split(",") if t.strip()]
    if not names:
        raise DataError("--tasks needs a comma-separated task list")
    groups = (
        [g.strip() for g in args.groups.split(";")]
        if args.groups
        else [None] * len(names)
    )
    if len(groups) != len(names):
        raise DataError("--groups must list one expression per task (';'-separated)")
    task_groups = []
    for name, group in zip(names, groups):
        spec = _task_spec(name, args, mode)
        task_groups.append(
            (spec, group or default_group_text(spec.name, spec.n, mode))
        )
    mcfg = _model_config(args)

    def run(seed: int) -> None:
        cfg = _train_config(args, seed)
        model, report = train_multitask(task_groups, cfg, mcfg)
        with open(
            os.path.join(args.out, f"report_seed{seed}.json"), "w", newline="\n"
        ) as fh:
            fh.write(report.to_json())
        stubs = {spec.name: _TaskStub(g) for spec, g in task_groups}
        _save_model(os.path.join(args.out, f"checkpoint_seed{seed}.bin"), model, stubs)
        print(f"seed {seed}: final pooled test loss {report.final['test_loss']:.6f}")

    return _run_seeds(args, run)


def cmd_transfer(args) -> int:
    mode = args.mode
    target = _task_spec(args.target, args, mode)
    target_group = args.group or default_group_text(target.name, target.n, mode)
    pre_names = [t.strip().lower() for t in args.pretrain.split(",") if t.strip()]
    if not pre_names:
        raise DataError("--pretrain needs a comma-separated task list")
    pretrain = []
    for name in pre_names:
        spec = _task_spec(name, args, mode)
        pretrain.append((spec, default_group_text(spec.name, spec.n, mode)))
    mcfg = _model_config(args)

    def run(seed: int) -> None:
        cfg = _train_config(args, seed)
        out = pretrain_finetune(pretrain, (target, target_group), cfg, mcfg)
        bundle = {
            "scratch": json.loads(out["scratch"].to_json()),
            "pretrain": json.loads(out["pretrain"].to_json()),
            "finetuned": json.loads(out["finetuned"].to_json()),
        }
        path = os.path.join(args.out, f"transfer_seed{seed}.json")
        with open(path, "w", newline="\n") as fh:
            fh.write(json.dumps(bundle, sort_keys=True, indent=2) + "\n")
        print(
            f"seed {seed}: scratch {bundle['scratch']['final']['test_loss']:.6f} "
            f"vs finetuned {bundle['finetuned']['final']['test_loss']:.6f}"
        )

    return _run_seeds(args, run)


def cmd_verify(args) -> int:
    model, config = _load_model(args.checkpoint)
    task = args.task or sorted(model.bindings)[0]
    group_text = args.group or config["groups"][task]
    a2 = edge_orbits(to_generators(parse_group(group_text)))
    report = verify_mod.check_equivariance(
        model,
        a2,
        group_text,
        n_samples=int(args.samples),
        tol=float(args.tol),
        task=task,
        seed=int(args.seed),
    )
    text = report.to_json()
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    print(
        f"group {group_text}: max residual {report.max_residual:.3e} "
        f"over {report.samples} samples (tol {report.tol:g}) -> "
        + ("PASS" if report.passed else "FAIL")
    )
    return 0 if report.passed else 4


def cmd_discovery(args) -> int:
    init_model, _ = _load_model(args.init_checkpoint)
    trained_model, _ = _load_model(args.checkpoint)
    report = verify_mod.analyze_discovery(
        init_model,
        trained_model,
        args.full_group,
        args.mis_group,
        task=args.task,
    )
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "discovery.json"), "w", newline="\n") as fh:
        fh.write(report.to_json())
    for name, matrix in (
        ("initial_distances.csv", report.initial_distances),
        ("trained_distances.csv", report.trained_distances),
    ):
        with open(os.path.join(args.out, name), "w", newline="\n") as fh:
            fh.write(verify_mod.DiscoveryReport.distances_csv(matrix))
    if report.degenerate:
        print("degenerate: groups induce the same pair coloring")
    else:
        print(
            f"merge ratio {report.initial_ratio:.4f} -> {report.trained_ratio:.4f}"
        )
    return 0


def cmd_report(args) -> int:
    with open(args.run, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    os.makedirs(args.out, exist_ok=True)

    def emit_report(prefix: str, data: dict) -> None:
        rep = RunReport(**data)
        with open(os.path.join(args.out, f"{prefix}curves.csv"), "w", newline="\n") as fh:
            fh.write(rep.curves_csv())
        lines = ["task,final_test_loss"]
        for key in sorted(rep.final):
            if key.startswith("test_loss:"):
                lines.append(f"{key.split(':', 1)[1]},{rep.final[key]!r}")
        with open(os.path.join(args.out, f"{prefix}final.csv"), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    if "train_loss" in blob:
        emit_report("", blob)
    elif "scratch" in blob:
        for arm in ("scratch", "pretrain", "finetuned"):
            emit_report(f"{arm}_", blob[arm])
    elif "initial_distances" in blob:
        for name, key in (
            ("initial_distances.csv", "initial_distances"),
            ("trained_distances.csv", "trained_distances"),
        ):
            with open(os.path.join(args.out, name), "w", newline="\n") as fh:
                fh.write(verify_mod.DiscoveryReport.distances_csv(blob[key]))
    else:
        raise DataError(f"unrecognized report file {args.run}")
    print(f"wrote CSVs to {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def _add_task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", default=10, help="sequence length")
    p.add_argument("--vocab", default=7, help="vocabulary size")
    p.add_argument("--window", default=DEFAULT_WINDOW, help="window length k/c")
    p.add_argument("--mode", default=EQUIVARIANT, choices=[EQUIVARIANT, INVARIANT])


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", default=0.01)
    p.add_argument("--batch", default=64)
    p.add_argument("--epochs", default=None)
    p.add_argument("--records", default=None, help="explicit record count")
    p.add_argument("--units", default=None, help="data size in units")
    p.add_argument("--test-fraction", default=0.2)
    p.add_argument("--loss", default="auto",
                   choices=["auto", "ce", "l1", "weighted_l1", "bce"])
    p.add_argument("--backbone-lr-scale", default=0.1)
    p.add_argument("--target-units", default=0.15)
    p.add_argument("--pretrain-units", default=1.5)
    p.add_argument("--pretrain-epochs", default=None)
    p.add_argument("--hidden", default=128)
    p.add_argument("--layers", default=4)
    p.add_argument("--heads", default=4)
    p.add_argument("--attn-dim", default=32)
    p.add_argument("--dropout", default=0.0)
    p.add_argument("--aggregator", default="attention", choices=["attention", "mean_mlp"])
    p.add_argument("--use-node-orbits", action="store_true")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--parallel", action="store_true",
                   help="run seeds in parallel processes")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symbreak",
        description="Subgroup-equivariant sequence models via edge-orbit "
        "symmetry breaking. " + GROUP_GRAMMAR,
    )
    parser.add_argument("--version", action="version",
                        version=f"symbreak {build_hash()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbits", help="edge/node orbit colorings for a group")
    p.add_argument("--group", required=True, help=GROUP_GRAMMAR)
    p.add_argument("--n", default=None, help="expected degree (validated)")
    p.add_argument("--support", default=None, help="CSV 0/1 mask for sparse support")
    p.add_argument("--combine", action="store_true",
                   help="also write the weakly-sparse (full + sparse) coloring")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_orbits)

    p = sub.add_parser("gen-data", help="generate a synthetic task dataset")
    p.add_argument("--task", required=True, help=", ".join(TASK_NAMES))
    _add_task_flags(p)
    p.add_argument("--count", required=True)
    p.add_argument("--seed", default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="single-task training (spec protocol)")
    p.add_argument("--task", required=True)
    p.add_argument("--group", default=None, help="symmetry group (default: task's)")
    p.add_argument("--save-init", action="store_true",
                   help="also checkpoint the initialized model")
    _add_task_flags(p)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("multitask", help="shared-backbone multitask training")
    p.add_argument("--tasks", required=True, help="comma-separated task names")
    p.add_argument("--groups", default=None,
                   help="optional ';'-separated group expressions, one per task")
    _add_task_flags(p)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_multitask)

    p = sub.add_parser("transfer", help="pretrain on other tasks, fine-tune target")
    p.add_argument("--target", required=True)
    p.add_argument("--pretrain", required=True, help="comma-separated task names")
    p.add_argument("--group", default=None, help="target group expression")
    _add_task_flags(p)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("verify", help="equivariance check on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--group", default=None, help="defaults to the trained group")
    p.add_argument("--task", default=None)
    p.add_argument("--samples", default=100)
    p.add_argument("--tol", default=1e-4)
    p.add_argument("--seed", default=0)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("discovery", help="edge-embedding merge analysis (init vs trained)")
    p.add_argument("--init-checkpoint", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--full-group", required=True)
    p.add_argument("--mis-group", required=True)
    p.add_argument("--task", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_discovery)

    p = sub.add_parser("report", help="convert run JSON to per-figure CSVs")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    for p in sub.choices.values():
        p.add_argument("--config", default=None,
                       help="key=value file; flags override file entries")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and argv[0] in parser._subparsers._group_actions[0].choices:
            subparser = parser._subparsers._group_actions[0].choices[argv[0]]
            argv = [argv[0]] + _apply_config_file(subparser, argv[1:])
        args = parser.parse_args(argv)
        return args.fn(args)
    except (DataError, GroupParseError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
