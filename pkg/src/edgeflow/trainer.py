"""Adam training loop, checkpoints and perplexity.

Every source of randomness is derived from the seed and a counter: the batch
order of epoch ``e`` comes from ``default_rng([seed, 0, e])`` and the dropout
masks of global step ``s`` from ``default_rng([seed, 1, s])``.  A checkpoint
therefore only needs the counters to resume bit-exactly.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numcore as nc
from .checkpoint import Checkpoint, CheckpointError
from .corpus import DialogPair, Vocabulary
from .fsutil import atomic_write_text
from .genmodel import EdgeFlowModel, compute_loss, make_batch, token_probabilities
from .kgraph import KnowledgeGraph
from .subgraph import Subgraph

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "L_gen", "L_copy", "L_gate", "L", "ppl")
# epoch accumulator slots: L_gen, L_copy, L_gate, L, batches, token NLL, tokens
_ACC_SIZE = 7


class TrainingError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 30
    grad_clip_norm: float = 5.0
    dropout: float = 0.2
    epochs: int = 10
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self) -> None:
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or (self.max_steps is not None and self.max_steps < 0):
            raise ValueError("epochs and max_steps must be non-negative")


def clip_gradients(params: Sequence[nc.Parameter], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = nc.global_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad = p.grad * scale
    return norm


class Adam:
    def __init__(self, params: nc.ParamStore, config: TrainConfig):
        self.params = params
        self.config = config
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.t = 0

    def step(self) -> None:
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p.data -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_log: list[dict]
    step_losses: list[float] = field(default_factory=list)

    def csv_text(self) -> str:
        return loss_log_csv(self.loss_log)


def loss_log_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([r["epoch"]] + [repr(float(r[k])) for k in LOG_COLUMNS[1:]])
    return buf.getvalue()


def _epoch_row(epoch: int, acc: np.ndarray) -> dict:
    n = max(acc[4], 1.0)
    return {"epoch": epoch, "L_gen": acc[0] / n, "L_copy": acc[1] / n, "L_gate": acc[2] / n,
            "L": acc[3] / n, "ppl": math.exp(acc[5] / acc[6]) if acc[6] else float("nan")}


def _batches_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def train(model: EdgeFlowModel, pairs: Sequence[DialogPair], subgraphs: Sequence[Subgraph],
          vocab: Vocabulary, graph: KnowledgeGraph, config: TrainConfig,
          resume: Checkpoint | None = None,
          on_step: Callable[[int, dict], None] | None = None) -> TrainResult:
    """Run Adam over the corpus for ``config.epochs`` epochs (or ``max_steps``).

    Subgraphs are precomputed, one per pair.  The loss log holds one row per
    completed epoch, plus a trailing row for a partially completed epoch.
    """
    if len(pairs) != len(subgraphs):
        raise ValueError(f"{len(pairs)} pairs but {len(subgraphs)} subgraphs")
    if not pairs:
        raise ValueError("cannot train on an empty corpus")
    opt = Adam(model.params, config)
    step = epoch = batch_in_epoch = 0
    acc = np.zeros(_ACC_SIZE)
    rows: list[dict] = []
    if resume is not None:
        restore(model, resume, opt)
        if resume.seed != config.seed:
            raise CheckpointError(f"checkpoint seed {resume.seed} differs from run seed {config.seed}")
        step, epoch, batch_in_epoch = resume.step, resume.epoch, resume.batch_in_epoch
        acc = resume.records.get("trainer/acc", acc).copy()
        rows = [dict(r) for r in resume.meta.get("loss_log", [])]

    params = list(model.params)
    per_epoch = _batches_per_epoch(len(pairs), config.batch_size)
    step_losses: list[float] = []
    while epoch < config.epochs and (config.max_steps is None or step < config.max_steps):
        order = np.random.default_rng([config.seed, 0, epoch]).permutation(len(pairs))
        while batch_in_epoch < per_epoch:
            if config.max_steps is not None and step >= config.max_steps:
                break
            idx = order[batch_in_epoch * config.batch_size:(batch_in_epoch + 1) * config.batch_size]
            batch = make_batch([pairs[i] for i in idx], [subgraphs[i] for i in idx], vocab, graph,
                               model.et_config)
            rng = np.random.default_rng([config.seed, 1, step])
            model.params.zero_grad()
            try:
                with nc.Tape() as tape:
                    steps = model.forward(batch, config.dropout, rng)
                    parts = compute_loss(steps, batch.ref_ids, batch.copy_target, batch.ref_mask)
                    total = parts.total
                if not np.isfinite(total.item()):
                    raise nc.NonFiniteError("loss")
                nc.backward(tape, total, params)
            except nc.NonFiniteError as exc:
                raise TrainingError(step, f"non-finite value during training ({exc})") from exc
            clip_gradients(params, config.grad_clip_norm)
            opt.step()

            vals = parts.values()
            probs = token_probabilities(steps, batch.ref_ids, batch.copy_target)[batch.ref_mask]
            with np.errstate(divide="ignore"):
                nll = -np.log(probs)
            acc += [vals["L_gen"], vals["L_copy"], vals["L_gate"], vals["L"], 1.0,
                    float(nll.sum()), float(probs.size)]
            step_losses.append(vals["L"])
            if on_step is not None:
                on_step(step, vals)
            log.debug("step %d epoch %d loss %.6f", step, epoch, vals["L"])
            step += 1
            batch_in_epoch += 1
        if batch_in_epoch < per_epoch:
            break
        rows.append(_epoch_row(epoch, acc))
        log.info("epoch %d mean loss %.6f ppl %.4f", epoch, rows[-1]["L"], rows[-1]["ppl"])
        epoch += 1
        batch_in_epoch = 0
        acc = np.zeros(_ACC_SIZE)

    ckpt = make_checkpoint(model, opt, config, step, epoch, batch_in_epoch, acc, rows)
    out_rows = list(rows)
    if batch_in_epoch:
        out_rows.append(_epoch_row(epoch, acc))
    return TrainResult(ckpt, out_rows, step_losses)


def make_checkpoint(model: EdgeFlowModel, opt: Adam | None, config: TrainConfig, step: int = 0,
                    epoch: int = 0, batch_in_epoch: int = 0, acc: np.ndarray | None = None,
                    loss_log: Sequence[dict] = ()) -> Checkpoint:
    records: dict[str, np.ndarray] = {}
    for name, p in model.params.items():
        records[f"param/{name}"] = p.data.copy()
    if opt is not None:
        for name in model.params.names():
            records[f"adam_m/{name}"] = opt.m[name].copy()
        for name in model.params.names():
            records[f"adam_v/{name}"] = opt.v[name].copy()
    records["trainer/acc"] = np.zeros(_ACC_SIZE) if acc is None else np.asarray(acc, dtype=float).copy()
    meta = {"model": model.config_dict(), "train": asdict(config), "loss_log": list(loss_log)}
    return Checkpoint(model.config_hash(), step, epoch, batch_in_epoch, config.seed, meta, records)


def restore(model: EdgeFlowModel, ckpt: Checkpoint, opt: Adam | None = None) -> None:
    """Copy parameters (and Adam moments) from ``ckpt`` into ``model``."""
    if ckpt.config_hash != model.config_hash():
        raise CheckpointError("checkpoint config hash does not match the current model configuration")
    for name, p in model.params.items():
        key = f"param/{name}"
        if key not in ckpt.records:
            raise CheckpointError(f"checkpoint has no record {key!r}")
        arr = ckpt.records[key]
        if arr.shape != p.shape:
            raise CheckpointError(f"{key}: shape {arr.shape} vs model {p.shape}")
        p.data = arr.copy()
    if opt is not None:
        for name in model.params.names():
            for prefix, store in (("adam_m/", opt.m), ("adam_v/", opt.v)):
                if prefix + name not in ckpt.records:
                    raise CheckpointError(f"checkpoint has no optimizer record {prefix + name!r}")
                store[name] = ckpt.records[prefix + name].copy()
        opt.t = ckpt.step


def evaluate_ppl(model: EdgeFlowModel, pairs: Sequence[DialogPair], subgraphs: Sequence[Subgraph],
                 vocab: Vocabulary, graph: KnowledgeGraph, batch_size: int = 30,
                 concept_mode: bool = False) -> float:
    """exp(mean NLL) of the reference tokens (EOS included) with dropout off.

    ``concept_mode`` scores copy steps under p_copy and the rest under p_vocab.
    """
    probs = reference_probabilities(model, pairs, subgraphs, vocab, graph, batch_size, concept_mode)
    with np.errstate(divide="ignore"):
        return float(np.exp(-np.mean(np.log(probs))))


def reference_probabilities(model: EdgeFlowModel, pairs: Sequence[DialogPair],
                            subgraphs: Sequence[Subgraph], vocab: Vocabulary, graph: KnowledgeGraph,
                            batch_size: int = 30, concept_mode: bool = False) -> np.ndarray:
    if not pairs:
        raise ValueError("perplexity of an empty split is undefined")
    out = []
    for lo in range(0, len(pairs), batch_size):
        batch = make_batch(pairs[lo:lo + batch_size], subgraphs[lo:lo + batch_size], vocab, graph,
                           model.et_config)
        steps = model.forward(batch)
        p = token_probabilities(steps, batch.ref_ids, batch.copy_target, concept_mode)
        out.append(p[batch.ref_mask])
    return np.concatenate(out)


def save_loss_log(path: str | Path, rows: Sequence[dict]) -> None:
    atomic_write_text(path, loss_log_csv(rows))


def model_from_checkpoint(ckpt: Checkpoint, node_init: np.ndarray | None = None) -> EdgeFlowModel:
    """Rebuild the model described by a checkpoint's metadata and load its weights."""
    from .edgeformer import EdgeTransformerConfig
    from .genmodel import Seq2SeqConfig

    try:
        m = ckpt.meta["model"]
        model = EdgeFlowModel(m["vocab_size"], m["num_nodes"], m["num_relations"],
                              Seq2SeqConfig(**m["seq2seq"]), EdgeTransformerConfig(**m["edgeformer"]),
                              seed=ckpt.seed)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint metadata does not describe a model ({exc})") from None
    restore(model, ckpt)
    return model
