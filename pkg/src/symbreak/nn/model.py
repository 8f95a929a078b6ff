"""Edge-orbit-keyed message-passing models.

The symmetry constraint lives entirely in the lookup tables: edge embeddings
are keyed by edge-orbit color (one learnable row per orbit), token embeddings
by vocabulary index, and optional positional embeddings by node-orbit color.
Any permutation preserving those colorings commutes with the whole network by
weight sharing, for any parameter values.

Two aggregators: a GATv2-flavored attention layer (default) where the edge
embedding enters both the attention score and the message, and a
mean-of-MLP layer kept simple enough to check against a hand-rolled forward
pass. Sentinel-colored cells (masked-out edges) contribute nothing: their
attention weights are exactly zeroed and mean counts exclude them.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from ..orbitclosure import EdgeOrbitMatrix, NodeOrbitVector
from . import tensor as T
from .tensor import Tensor

ATTENTION = "attention"
MEAN_MLP = "mean_mlp"
HEAD_EQUIVARIANT = "equivariant_binary"
HEAD_INVARIANT = "invariant_scalar"
TOKEN_EMBED = "embed"
TOKEN_ONEHOT = "onehot"


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128
    layers: int = 4
    edge_dim: int = 0  # 0 means: equal to hidden
    heads: int = 4
    attn_dim: int = 32  # width of the pairwise score space
    dropout: float = 0.0
    use_layer_norm: bool = True
    aggregator: str = ATTENTION
    head_mode: str = HEAD_EQUIVARIANT
    token_mode: str = TOKEN_EMBED
    use_node_orbits: bool = False
    negative_slope: float = 0.2
    dtype: str = "float32"  # float64 for gradient checks

    def __post_init__(self):
        if self.hidden <= 0 or self.layers < 1 or self.attn_dim <= 0:
            raise ValueError("hidden, layers and attn_dim must be positive")
        if self.hidden % self.heads:
            raise ValueError("heads must divide hidden")
        if self.aggregator not in (ATTENTION, MEAN_MLP):
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.head_mode not in (HEAD_EQUIVARIANT, HEAD_INVARIANT):
            raise ValueError(f"unknown head mode {self.head_mode!r}")
        if self.token_mode not in (TOKEN_EMBED, TOKEN_ONEHOT):
            raise ValueError(f"unknown token mode {self.token_mode!r}")

    @property
    def edge_width(self) -> int:
        return self.edge_dim or self.hidden

    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


@dataclass(frozen=True)
class TaskBinding:
    """Per-task table sizes; the backbone and head are task-agnostic."""

    vocab: int
    num_edge_orbits: int
    num_node_orbits: int | None = None


def _component_rng(seed: int, component: str) -> np.random.Generator:
    # independent stream per component: adding a task never shifts the
    # initialization of shared or unrelated parameters
    key = zlib.crc32(component.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))


def _glorot(rng, shape, dtype):
    fan_in, fan_out = shape[0], shape[-1]
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape).astype(dtype)


class Model:
    def __init__(self, cfg: ModelConfig, bindings: dict, seed: int):
        if not bindings:
            raise ValueError("at least one task binding required")
        if cfg.token_mode == TOKEN_ONEHOT:
            vocabs = {b.vocab for b in bindings.values()}
            if len(vocabs) != 1:
                raise ValueError("onehot token mode needs one shared vocab")
        self.cfg = cfg
        self.bindings = dict(bindings)
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        dt = cfg.np_dtype()
        for task in sorted(bindings):
            self._init_task(task, bindings[task], dt)
        self._init_backbone(dt)
        self._init_head(dt)

    # -- parameter construction ------------------------------------------
    def _param(self, name: str, value: np.ndarray):
        self.params[name] = Tensor(value, requires_grad=True)

    def _init_task(self, task: str, binding: TaskBinding, dt):
        d, de = self.cfg.hidden, self.cfg.edge_width
        if self.cfg.token_mode == TOKEN_EMBED:
            rng = _component_rng(self.seed, f"token:{task}")
            self._param(f"token:{task}/table", rng.normal(0, 1.0 / np.sqrt(d), (binding.vocab, d)).astype(dt))
        rng = _component_rng(self.seed, f"edge:{task}")
        rows = max(1, binding.num_edge_orbits)
        self._param(f"edge:{task}/table", rng.normal(0, 1.0 / np.sqrt(de), (rows, de)).astype(dt))
        if self.cfg.use_node_orbits:
            if binding.num_node_orbits is None:
                raise ValueError(f"task {task}: node-orbit count required")
            rng = _component_rng(self.seed, f"node:{task}")
            self._param(
                f"node:{task}/table",
                rng.normal(0, 1.0 / np.sqrt(d), (binding.num_node_orbits, d)).astype(dt),
            )

    def _init_backbone(self, dt):
        cfg = self.cfg
        d, de, H = cfg.hidden, cfg.edge_width, cfg.heads
        if cfg.token_mode == TOKEN_ONEHOT:
            rng = _component_rng(self.seed, "backbone:input")
            vocab = next(iter(self.bindings.values())).vocab
            self._param("backbone/input/w", _glorot(rng, (vocab, d), dt))
            self._param("backbone/input/b", np.zeros(d, dtype=dt))
        for l in range(cfg.layers):
            rng = _component_rng(self.seed, f"backbone:layer{l}")
            p = f"backbone/l{l}/"
            if cfg.aggregator == ATTENTION:
                da = cfg.attn_dim
                self._param(p + "w_src", _glorot(rng, (d, da), dt))
                self._param(p + "w_dst", _glorot(rng, (d, da), dt))
                self._param(p + "w_edge_score", _glorot(rng, (de, da), dt))
                self._param(p + "b_score", np.zeros(da, dtype=dt))
                self._param(p + "attn", _glorot(rng, (da, H), dt))
                self._param(p + "w_val", _glorot(rng, (d, d), dt))
                self._param(p + "b_val", np.zeros(d, dtype=dt))
                self._param(p + "w_edge_msg", _glorot(rng, (de, d), dt))
                # damped residual branches: the network starts near the
                # identity, which keeps the protocol learning rate stable
                self._param(p + "w_out", _glorot(rng, (d, d), dt) * dt(0.05))
                self._param(p + "b_out", np.zeros(d, dtype=dt))
            else:
                self._param(p + "w_m_self", _glorot(rng, (d, d), dt))
                self._param(p + "w_m_nbr", _glorot(rng, (d, d), dt))
                self._param(p + "w_m_edge", _glorot(rng, (de, d), dt))
                self._param(p + "b_m", np.zeros(d, dtype=dt))
                self._param(p + "w_up", _glorot(rng, (d, d), dt) * dt(0.05))
                self._param(p + "b_up", np.zeros(d, dtype=dt))
            if cfg.use_layer_norm:
                self._param(p + "ln_g", np.ones(d, dtype=dt))
                self._param(p + "ln_b", np.zeros(d, dtype=dt))

    def _init_head(self, dt):
        rng = _component_rng(self.seed, "head")
        d = self.cfg.hidden
        out = 2 if self.cfg.head_mode == HEAD_EQUIVARIANT else 1
        self._param("head/w", _glorot(rng, (d, out), dt))
        self._param("head/b", np.zeros(out, dtype=dt))

    # -- forward -----------------------------------------------------------
    def forward(
        self,
        a2: EdgeOrbitMatrix,
        inputs,
        task: str | None = None,
        node_orbits: NodeOrbitVector | None = None,
        rng: np.random.Generator | None = None,
        train: bool = False,
    ) -> Tensor:
        """Logits [B, n, 2] (equivariant head) or scalars [B] (invariant head).

        Accepts a single sequence [n] or a batch [B, n] of token indices.
        """
        cfg = self.cfg
        if task is None:
            if len(self.bindings) != 1:
                raise ValueError("task name required for a multitask model")
            task = next(iter(self.bindings))
        binding = self.bindings[task]
        x = np.asarray(inputs)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != a2.n:
            raise ValueError(f"input length {x.shape[1]} != a2 size {a2.n}")
        if x.min() < 0 or x.max() >= binding.vocab:
            raise ValueError("token index out of vocab range")
        if max(1, a2.num_orbits) != self.params[f"edge:{task}/table"].shape[0]:
            raise ValueError("a2 orbit count does not match the edge table")
        dt = cfg.np_dtype()

        if cfg.token_mode == TOKEN_EMBED:
            h = T.take_rows(self.params[f"token:{task}/table"], x)
        else:
            onehot = np.zeros((x.size, binding.vocab), dtype=dt)
            onehot[np.arange(x.size), x.ravel()] = 1.0
            h = T.reshape(
                T.linear(
                    Tensor(onehot),
                    self.params["backbone/input/w"],
                    self.params["backbone/input/b"],
                ),
                (x.shape[0], a2.n, cfg.hidden),
            )

        if cfg.use_node_orbits:
            if node_orbits is None:
                raise ValueError("model configured with node orbits: pass them")
            node_emb = T.take_rows(self.params[f"node:{task}/table"], np.asarray(node_orbits.colors))
            h = h + T.reshape(node_emb, (1, a2.n, cfg.hidden))

        live = a2.live_mask()
        colors = np.minimum(a2.colors, max(0, a2.num_orbits - 1))
        edge_flat = T.take_rows(
            self.params[f"edge:{task}/table"], colors.ravel()
        )  # [n*n, de]
        mask = live.astype(dt)

        for l in range(cfg.layers):
            p = f"backbone/l{l}/"
            # pre-normalization: the residual stream stays un-normalized,
            # which keeps training stable at the protocol learning rate
            hin = h
            if cfg.use_layer_norm:
                hin = T.layer_norm(h, self.params[p + "ln_g"], self.params[p + "ln_b"])
            if train and cfg.dropout > 0:
                # feature dropout on the block input, per-node-per-channel
                if rng is None:
                    raise ValueError("dropout needs an rng during training")
                keep = (rng.random(hin.shape) >= cfg.dropout).astype(dt)
                hin = hin * (keep / (1.0 - cfg.dropout))
            if cfg.aggregator == ATTENTION:
                h = self._attention_layer(h, hin, edge_flat, mask, p, x.shape[0], a2.n, rng, train)
            else:
                h = self._mean_mlp_layer(h, hin, edge_flat, mask, p, x.shape[0], a2.n)

        if cfg.head_mode == HEAD_EQUIVARIANT:
            out = T.reshape(
                T.linear(
                    T.reshape(h, (x.shape[0] * a2.n, cfg.hidden)),
                    self.params["head/w"],
                    self.params["head/b"],
                ),
                (x.shape[0], a2.n, 2),
            )
            return T.reshape(out, (a2.n, 2)) if single else out
        pooled = T.mean(h, axis=1)  # symmetric pooling keeps invariance
        out = T.linear(pooled, self.params["head/w"], self.params["head/b"])
        out = T.reshape(out, (x.shape[0],))
        return T.reshape(out, ()) if single else out

    def _attention_layer(self, h, hin, edge_flat, mask, p, B, n, rng, train):
        cfg = self.cfg
        d, H = cfg.hidden, cfg.heads
        dh = d // H
        P = self.params
        hf = T.reshape(hin, (B * n, d))  # keep the linear maps as single gemms
        score = T.gat_pair_scores(
            hf @ P[p + "w_src"],
            hf @ P[p + "w_dst"],
            edge_flat @ P[p + "w_edge_score"],
            P[p + "b_score"],
            P[p + "attn"],
            B,
            n,
            cfg.negative_slope,
        )
        # masked scores sink to -1e9 so softmax assigns them exactly zero
        # weight after the mask multiply, even for fully masked rows
        score = score + ((mask - 1.0) * 1e9).reshape(1, n, n, 1)
        alpha = T.softmax(score, axis=2)
        alpha = alpha * mask.reshape(1, n, n, 1)
        if train and cfg.dropout > 0:
            if rng is None:
                raise ValueError("dropout needs an rng during training")
            keep = (rng.random(alpha.shape) >= cfg.dropout).astype(mask.dtype)
            alpha = alpha * (keep / (1.0 - cfg.dropout))
        val = T.reshape(T.linear(hf, P[p + "w_val"], P[p + "b_val"]), (B, n, H, dh))
        emsg = T.reshape(edge_flat @ P[p + "w_edge_msg"], (n, n, H, dh))
        # value part: batched gemm over (batch, head)
        aggv = T.transpose(
            T.transpose(alpha, (0, 3, 1, 2)) @ T.transpose(val, (0, 2, 1, 3)),
            (0, 2, 1, 3),
        )
        # edge part: batched gemm over (receiver, head)
        agge = T.transpose(
            T.transpose(alpha, (1, 3, 0, 2)) @ T.transpose(emsg, (0, 2, 1, 3)),
            (2, 0, 1, 3),
        )
        agg = T.leaky_relu(T.reshape(aggv + agge, (B * n, d)), cfg.negative_slope)
        return h + T.reshape(T.linear(agg, P[p + "w_out"], P[p + "b_out"]), (B, n, d))

    def _mean_mlp_layer(self, h, hin, edge_flat, mask, p, B, n):
        d = self.cfg.hidden
        P = self.params
        hf = T.reshape(hin, (B * n, d))
        pre = (
            T.reshape(hf @ P[p + "w_m_self"], (B, n, 1, d))
            + T.reshape(hf @ P[p + "w_m_nbr"], (B, 1, n, d))
            + T.reshape(edge_flat @ P[p + "w_m_edge"], (1, n, n, d))
            + P[p + "b_m"]
        )
        msg = T.relu(pre)
        counts = np.maximum(mask.sum(axis=1), 1.0)  # senders per receiver
        agg = T.einsum2("bijd,ij->bid", msg, Tensor(mask))
        agg = agg * (1.0 / counts).reshape(1, n, 1)
        return h + T.reshape(
            T.linear(T.reshape(agg, (B * n, d)), P[p + "w_up"], P[p + "b_up"]),
            (B, n, d),
        )

    # -- parameter access --------------------------------------------------
    def named_parameters(self) -> dict:
        return self.params

    def task_parameter_names(self, task: str) -> list:
        prefixes = (f"token:{task}/", f"edge:{task}/", f"node:{task}/")
        return [k for k in self.params if k.startswith(prefixes)]

    def config_echo(self) -> dict:
        echo = asdict(self.cfg)
        echo["bindings"] = {
            t: {"vocab": b.vocab, "num_edge_orbits": b.num_edge_orbits,
                "num_node_orbits": b.num_node_orbits}
            for t, b in sorted(self.bindings.items())
        }
        echo["seed"] = self.seed
        return echo
