"""Single-task, multitask, and transfer training loops.

Reproducibility layout: every random stream is keyed by (seed, label) through
blake2s, so adding tasks or arms never perturbs unrelated draws. The batch
stream label depends only on the task set being fitted, which makes a
fine-tune run with an untouched model bit-identical to training from scratch
(the degenerate zero-pretrain case).

A "unit" of data is 2500 records in the equivariant setting and 8000 in the
invariant one. Epoch defaults are 40 (equivariant) and 80 (invariant).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, asdict

import numpy as np
from threadpoolctl import threadpool_limits

from .buildinfo import build_hash
from .groupcatalog import parse_group, to_generators
from .nn import (
    Adam,
    HEAD_EQUIVARIANT,
    HEAD_INVARIANT,
    Model,
    ModelConfig,
    TOKEN_EMBED,
    TOKEN_ONEHOT,
    TaskBinding,
    bce_with_logits,
    cross_entropy,
    l1,
    no_grad,
    weighted_l1,
)
from .orbitclosure import edge_orbits, node_orbits
from .taskgen import EQUIVARIANT, INVARIANT, TaskSpec, UNIT_RECORDS, generate


def derive_seed(seed: int, label: str) -> int:
    raw = hashlib.blake2s(f"{seed}:{label}".encode(), digest_size=4).digest()
    return int.from_bytes(raw, "little")


def _stream(seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, label)))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    batch: int = 64
    epochs: int | None = None  # None: 40 equivariant / 80 invariant
    seed: int = 0
    test_fraction: float = 0.2
    records: int | None = None  # explicit count wins over units
    units: float | None = None
    loss: str = "auto"  # auto | ce | l1 | weighted_l1 | bce
    backbone_lr_scale: float = 0.1  # fine-tuning only
    target_units: float = 0.15  # transfer: target-task data budget
    pretrain_units: float = 1.5  # transfer: per pretraining task
    pretrain_epochs: int | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.batch <= 0:
            raise ValueError("lr and batch must be positive")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.loss not in ("auto", "ce", "l1", "weighted_l1", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")


def resolve_epochs(cfg: TrainConfig, mode: str) -> int:
    if cfg.epochs is not None:
        return cfg.epochs
    return 40 if mode == EQUIVARIANT else 80


def resolve_records(cfg: TrainConfig, mode: str) -> int:
    if cfg.records is not None:
        return cfg.records
    units = cfg.units if cfg.units is not None else 1.0
    return max(2, int(round(units * UNIT_RECORDS[mode])))


def resolve_loss(cfg: TrainConfig, spec: TaskSpec) -> str:
    if cfg.loss != "auto":
        return cfg.loss
    if spec.mode == EQUIVARIANT:
        return "ce"
    # the parity task is invariant binary classification in the source
    # protocol; everything else regresses with L1
    return "bce" if spec.name == "signofpermutation" else "l1"


@dataclass
class RunReport:
    config: dict
    train_loss: list
    test_loss: list
    per_task: dict
    final: dict
    epoch_seconds: list

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "RunReport":
        return RunReport(**json.loads(text))

    def curves_csv(self) -> str:
        lines = ["epoch,split,task,value"]
        for task, curves in sorted(self.per_task.items()):
            for split, values in sorted(curves.items()):
                for epoch, value in enumerate(values):
                    v = "" if value is None else repr(float(value))
                    lines.append(f"{epoch},{split},{task},{v}")
        return "\n".join(lines) + "\n"


def comparable_json(report_json: str) -> str:
    """Report JSON with wall-clock stripped, for determinism comparisons."""
    blob = json.loads(report_json)
    blob.pop("epoch_seconds", None)
    return json.dumps(blob, sort_keys=True)


@dataclass
class _TaskData:
    spec: TaskSpec
    group_text: str
    a2: object
    nodes: object
    inputs: np.ndarray
    eq: np.ndarray | None
    inv: np.ndarray | None
    train_idx: np.ndarray
    test_idx: np.ndarray
    train_loss_kind: str = "ce"
    eval_loss_kind: str = "ce"
    scale: float = 1.0


def prepare_task(spec: TaskSpec, group_text: str, cfg: TrainConfig,
                 records: int | None = None) -> _TaskData:
    count = records if records is not None else resolve_records(cfg, spec.mode)
    ds = generate(spec, count, derive_seed(cfg.seed, f"data:{spec.name}"))
    inputs = np.array([r.input for r in ds.records], dtype=np.int64)
    eq = inv = None
    if spec.mode == EQUIVARIANT:
        eq = np.array([r.eq for r in ds.records], dtype=np.int64)
    else:
        inv = np.array([float(r.inv) for r in ds.records])
    perm = _stream(cfg.seed, f"split:{spec.name}").permutation(count)
    n_test = max(1, int(round(count * cfg.test_fraction)))
    gens = to_generators(parse_group(group_text))
    kind = resolve_loss(cfg, spec)
    td = _TaskData(
        spec=spec,
        group_text=group_text,
        a2=edge_orbits(gens),
        nodes=node_orbits(gens),
        inputs=inputs,
        eq=eq,
        inv=inv,
        train_idx=perm[n_test:],
        test_idx=perm[:n_test],
        train_loss_kind=kind,
        eval_loss_kind="l1" if kind == "weighted_l1" else kind,
    )
    if kind == "weighted_l1":
        train_targets = td.inv[td.train_idx]
        td.scale = float(np.abs(train_targets).max()) or 1.0
    return td


def _batch_loss(model: Model, td: _TaskData, idx: np.ndarray, kind: str,
                rng=None, train: bool = False):
    out = model.forward(
        td.a2,
        td.inputs[idx],
        task=td.spec.name,
        node_orbits=td.nodes if model.cfg.use_node_orbits else None,
        rng=rng,
        train=train,
    )
    if kind == "ce":
        return out, cross_entropy(out, td.eq[idx])
    target = td.inv[idx]
    if kind == "l1":
        return out, l1(out, target)
    if kind == "weighted_l1":
        return out, weighted_l1(out, target, td.scale)
    if kind == "bce":
        return out, bce_with_logits(out, target)
    raise ValueError(f"unknown loss kind {kind!r}")  # pragma: no cover


def _evaluate(model: Model, td: _TaskData, idx: np.ndarray, batch: int):
    total = 0.0
    hits = 0
    with no_grad():
        for start in range(0, len(idx), batch):
            chunk = idx[start : start + batch]
            out, loss = _batch_loss(model, td, chunk, td.eval_loss_kind)
            total += loss.item() * len(chunk)
            if td.eval_loss_kind == "ce":
                pred = np.argmax(out.data, axis=-1)
                hits += int((pred == td.eq[chunk]).sum())
    loss = total / len(idx)
    acc = hits / (len(idx) * td.spec.n) if td.eval_loss_kind == "ce" else None
    return loss, acc


def _fit(
    model: Model,
    tasks: dict,
    cfg: TrainConfig,
    epochs: int,
    batch_label: str,
    lr_map: dict | None = None,
) -> RunReport:
    names = sorted(tasks)
    opt = Adam(model.params, cfg.lr, lr_map=lr_map)
    batch_rng = _stream(cfg.seed, batch_label)
    total_train = sum(len(tasks[t].train_idx) for t in names)
    steps = max(1, math.ceil(total_train / cfg.batch))
    train_rng = _stream(cfg.seed, f"dropout:{batch_label}")

    per_task = {
        t: {"train": [], "test": []} for t in names
    }
    for t in names:
        if tasks[t].eval_loss_kind == "ce":
            per_task[t]["test_acc"] = []
    train_curve, test_curve, epoch_seconds = [], [], []

    with threadpool_limits(limits=1):
        for _epoch in range(epochs):
            tick = time.perf_counter()
            sums = {t: 0.0 for t in names}
            counts = {t: 0 for t in names}
            if len(names) == 1:
                td = tasks[names[0]]
                order = td.train_idx[batch_rng.permutation(len(td.train_idx))]
                batches = [
                    (names[0], order[s : s + cfg.batch])
                    for s in range(0, len(order), cfg.batch)
                ]
            else:
                batches = []
                for _ in range(steps):
                    t = names[int(batch_rng.integers(len(names)))]
                    pool = tasks[t].train_idx
                    k = min(cfg.batch, len(pool))
                    batches.append((t, batch_rng.choice(pool, size=k, replace=False)))
            for t, idx in batches:
                td = tasks[t]
                opt.zero_grad()
                _, loss = _batch_loss(
                    model, td, idx, td.train_loss_kind, rng=train_rng, train=True
                )
                loss.backward()
                opt.step()
                sums[t] += loss.item() * len(idx)
                counts[t] += len(idx)
            epoch_train = sum(sums.values()) / max(1, sum(counts.values()))
            train_curve.append(epoch_train)
            test_total, test_n = 0.0, 0
            for t in names:
                td = tasks[t]
                per_task[t]["train"].append(
                    sums[t] / counts[t] if counts[t] else None
                )
                loss, acc = _evaluate(model, td, td.test_idx, cfg.batch)
                per_task[t]["test"].append(loss)
                if acc is not None:
                    per_task[t]["test_acc"].append(acc)
                test_total += loss * len(td.test_idx)
                test_n += len(td.test_idx)
            test_curve.append(test_total / test_n)
            epoch_seconds.append(time.perf_counter() - tick)

    final = {"test_loss": test_curve[-1] if test_curve else None}
    for t in names:
        final[f"test_loss:{t}"] = per_task[t]["test"][-1] if epochs else None

    config = {
        "train": asdict(cfg),
        "model": model.config_echo(),
        "epochs": epochs,
        "batch_label": batch_label,
        "lr_map": dict(lr_map or {}),
        "build_hash": build_hash(),
        "tasks": {
            t: {
                "spec": {
                    "name": tasks[t].spec.name,
                    "n": tasks[t].spec.n,
                    "vocab": tasks[t].spec.vocab,
                    "mode": tasks[t].spec.mode,
                    "window": tasks[t].spec.window,
                },
                "group": tasks[t].group_text,
                "records": int(len(tasks[t].train_idx) + len(tasks[t].test_idx)),
                "train_size": int(len(tasks[t].train_idx)),
                "test_size": int(len(tasks[t].test_idx)),
                "train_loss": tasks[t].train_loss_kind,
                "eval_loss": tasks[t].eval_loss_kind,
                "scale": tasks[t].scale,
                "num_edge_orbits": int(tasks[t].a2.num_orbits),
            }
            for t in names
        },
    }
    return RunReport(config, train_curve, test_curve, per_task, final, epoch_seconds)


def _model_config_for(mode: str, mcfg: ModelConfig) -> ModelConfig:
    head = HEAD_EQUIVARIANT if mode == EQUIVARIANT else HEAD_INVARIANT
    # invariant runs are regression-style: token embedding is replaced by a
    # one-hot lift owned by the shared backbone
    token = TOKEN_EMBED if mode == EQUIVARIANT else TOKEN_ONEHOT
    return dataclasses.replace(mcfg, head_mode=head, token_mode=token)


def _bindings(tasks: dict) -> dict:
    return {
        t: TaskBinding(
            vocab=td.spec.vocab,
            num_edge_orbits=td.a2.num_orbits,
            num_node_orbits=td.nodes.num_orbits,
        )
        for t, td in tasks.items()
    }


def build_single(
    spec: TaskSpec, group_text: str, cfg: TrainConfig, mcfg: ModelConfig
) -> tuple:
    """Data + freshly initialized model, before any fitting (reproducible)."""
    td = prepare_task(spec, group_text, cfg)
    tasks = {spec.name: td}
    model = Model(_model_config_for(spec.mode, mcfg), _bindings(tasks), cfg.seed)
    return model, tasks


def train_single(
    spec: TaskSpec, group_text: str, cfg: TrainConfig, mcfg: ModelConfig
) -> tuple:
    model, tasks = build_single(spec, group_text, cfg, mcfg)
    report = _fit(model, tasks, cfg, resolve_epochs(cfg, spec.mode), f"batches:{spec.name}")
    return model, report


def train_multitask(task_groups: list, cfg: TrainConfig, mcfg: ModelConfig) -> tuple:
    """task_groups: list of (TaskSpec, group expression text), sharing n and mode."""
    if not task_groups:
        raise ValueError("at least one task required")
    n_values = {spec.n for spec, _ in task_groups}
    modes = {spec.mode for spec, _ in task_groups}
    if len(n_values) != 1:
        raise ValueError(f"multitask requires one sequence length, got {n_values}")
    if len(modes) != 1:
        raise ValueError("multitask requires one label mode")
    mode = modes.pop()
    tasks = {spec.name: prepare_task(spec, g, cfg) for spec, g in task_groups}
    model = Model(_model_config_for(mode, mcfg), _bindings(tasks), cfg.seed)
    report = _fit(model, tasks, cfg, resolve_epochs(cfg, mode), "batches:multitask")
    return model, report


def pretrain_finetune(
    pretrain: list, target: tuple, cfg: TrainConfig, mcfg: ModelConfig
) -> dict:
    """Two arms on a shared target split: from-scratch vs pretrain+finetune."""
    target_spec, target_group = target
    mode = target_spec.mode
    if any(spec.mode != mode for spec, _ in pretrain):
        raise ValueError("pretraining tasks must share the target's label mode")
    if any(spec.n != target_spec.n for spec, _ in pretrain):
        raise ValueError("pretraining tasks must share the target's length")

    target_records = max(2, int(round(cfg.target_units * UNIT_RECORDS[mode])))
    target_td = prepare_task(target_spec, target_group, cfg, records=target_records)
    target_tasks = {target_spec.name: target_td}
    epochs = resolve_epochs(cfg, mode)
    run_cfg = _model_config_for(mode, mcfg)

    scratch_model = Model(run_cfg, _bindings(target_tasks), cfg.seed)
    scratch = _fit(
        scratch_model, target_tasks, cfg, epochs, f"batches:{target_spec.name}"
    )

    pre_records = max(2, int(round(cfg.pretrain_units * UNIT_RECORDS[mode])))
    pre_tasks = {
        spec.name: prepare_task(spec, g, cfg, records=pre_records)
        for spec, g in pretrain
    }
    all_bindings = {**_bindings(pre_tasks), **_bindings(target_tasks)}
    model = Model(run_cfg, all_bindings, cfg.seed)
    pre_epochs = cfg.pretrain_epochs if cfg.pretrain_epochs is not None else epochs
    pretrain_report = _fit(model, pre_tasks, cfg, pre_epochs, "batches:multitask")

    # fine-tune: embedding tables move at full speed, the shared trunk slower
    lr_map = {
        name: cfg.lr * cfg.backbone_lr_scale
        for name in model.params
        if name.startswith(("backbone/", "head/"))
    }
    finetuned = _fit(
        model, target_tasks, cfg, epochs, f"batches:{target_spec.name}", lr_map=lr_map
    )
    return {
        "scratch": scratch,
        "pretrain": pretrain_report,
        "finetuned": finetuned,
        "scratch_model": scratch_model,
        "model": model,
    }
