"""Joint loss and the training loop.

The total objective is detection + lambda_rcg * recognition + lambda_info *
tagging. Character-level terms are masked per-text means averaged over texts,
so short strings are not drowned by long ones and steps past the end token
contribute nothing.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .corpus.schema import EntitySchema, Vocabulary
from .detector import DetectorConfig, detection_loss
from .evaluate import evaluate_model
from .model import DocOutput, DocumentModel, ModelConfig, desk_scale_config

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lambda_rcg: float = 1.0
    lambda_info: float = 1.0
    optimizer: str = "adadelta"  # or "adam"
    lr: float = 1.0
    lr_decay: float = 0.1
    lr_decay_every: int = 40
    batch_size: int = 2
    epochs: int = 150
    seed: int = 0
    grad_clip: float = 5.0
    # 0 evaluates on the final epoch only.
    eval_every: int = 1
    # Ablation switches; None leaves the model config untouched.
    use_visual_ctx: bool | None = None
    use_textual_ctx: bool | None = None
    end_to_end: bool | None = None

    def __post_init__(self):
        if self.lambda_rcg < 0 or self.lambda_info < 0:
            raise ValueError("loss weights must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adadelta", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    model: DocumentModel
    metrics: list[dict]
    checkpoint_path: Path | None


def _per_text_nll(
    logits: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """(N, T, C) logits -> per-text masked mean NLL (N,) and validity (N,)."""
    n, t, c = logits.shape
    nll = nn.functional.cross_entropy(
        logits.reshape(-1, c), targets.reshape(-1), reduction="none"
    ).reshape(n, t)
    m = mask.to(nll.dtype)
    counts = m.sum(dim=1)
    per_text = (nll * m).sum(dim=1) / counts.clamp(min=1)
    return per_text, counts > 0


def joint_loss(
    outputs: list[DocOutput],
    cfg: TrainConfig,
    det_cfg: DetectorConfig | None = None,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Batch loss and its three reported terms.

    The returned total is exactly det + lambda_rcg * rcg + lambda_info * info;
    a zero weight drops that term from the sum (and from the graph) entirely.
    """
    if not outputs:
        raise ValueError("empty batch")
    if sum(o.rcg_logits.shape[0] for o in outputs) == 0:
        raise ValueError("batch contains zero texts")

    det = torch.stack(
        [detection_loss(o.det, o.gt_boxes, det_cfg) for o in outputs]
    ).mean()

    rcg_parts, rcg_valid = zip(
        *[_per_text_nll(o.rcg_logits, o.rcg_targets, o.rcg_mask) for o in outputs]
    )
    info_parts, info_valid = zip(
        *[_per_text_nll(o.tag_logits, o.tag_targets, o.tag_mask) for o in outputs]
    )

    def pooled(parts, valids):
        values = torch.cat(parts)
        keep = torch.cat(valids)
        if bool(keep.any()):
            return values[keep].mean()
        return values.sum() * 0.0

    rcg = pooled(rcg_parts, rcg_valid)
    info = pooled(info_parts, info_valid)

    total = det
    if cfg.lambda_rcg:
        total = total + cfg.lambda_rcg * rcg
    if cfg.lambda_info:
        total = total + cfg.lambda_info * info
    return total, {"det": det, "rcg": rcg, "info": info}


def _apply_switches(model_cfg: ModelConfig, cfg: TrainConfig) -> ModelConfig:
    changes = {}
    for name in ("use_visual_ctx", "use_textual_ctx", "end_to_end"):
        value = getattr(cfg, name)
        if value is not None:
            changes[name] = value
    return dataclasses.replace(model_cfg, **changes) if changes else model_cfg


def _make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=cfg.lr)
    return torch.optim.Adadelta(model.parameters(), lr=cfg.lr)


def train(
    samples,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    eval_samples=None,
    out_dir: str | Path | None = None,
    model: DocumentModel | None = None,
    schema: EntitySchema | None = None,
    vocab: Vocabulary | None = None,
    progress=None,
) -> TrainResult:
    """Train on labeled documents; deterministic for a fixed seed.

    The model is built here (seeded) unless one is passed in. Metrics rows
    carry the three loss terms plus eval F1 per entity; a non-finite loss
    aborts immediately, naming the term that went bad.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty corpus")
    torch.manual_seed(cfg.seed)
    if model is None:
        model_cfg = _apply_switches(model_cfg or desk_scale_config(), cfg)
        if schema is None or vocab is None:
            raise ValueError("schema and vocab are required when no model is given")
        model = DocumentModel(schema, vocab, model_cfg)
    else:
        model.cfg = _apply_switches(model.cfg, cfg)
    optimizer = _make_optimizer(model, cfg)
    eval_set = list(eval_samples) if eval_samples is not None else samples

    metrics: list[dict] = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_every)
        for group in optimizer.param_groups:
            group["lr"] = lr

        rng = np.random.default_rng([cfg.seed, 1000003, epoch])
        order = rng.permutation(len(samples))
        sums = {"det": 0.0, "rcg": 0.0, "info": 0.0}
        n_batches = 0
        model.train()
        for start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[start : start + cfg.batch_size]]
            outputs = [model.forward_train(s) for s in batch]
            total, terms = joint_loss(outputs, cfg, model.cfg.detector)
            for name in ("det", "rcg", "info"):
                value = terms[name].detach().item()
                if not np.isfinite(value):
                    raise RuntimeError(
                        f"non-finite {name} loss ({value}) at epoch {epoch}, "
                        f"batch {n_batches}; aborting"
                    )
                sums[name] += value
            optimizer.zero_grad()
            total.backward()
            if cfg.grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            n_batches += 1

        row = {
            "epoch": epoch,
            "lr": lr,
            "loss_det": sums["det"] / n_batches,
            "loss_rcg": sums["rcg"] / n_batches,
            "loss_info": sums["info"] / n_batches,
        }
        want_eval = cfg.eval_every > 0 and (epoch + 1) % cfg.eval_every == 0
        if want_eval or epoch == cfg.epochs - 1:
            model.eval()
            stats = evaluate_model(model, eval_set)
            row["f1_avg"] = stats["entity_f1"]
            row["seq_acc"] = stats["seq_acc"]
            for name, s in stats["report"].per_entity.items():
                row[f"f1_{name}"] = s.f1
        metrics.append(row)
        if progress is not None:
            progress(row)

    checkpoint_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", metrics, cfg)
        checkpoint_path = out / "checkpoint.pt"
        save_checkpoint(checkpoint_path, model, cfg, epoch=cfg.epochs - 1)
    return TrainResult(model=model, metrics=metrics, checkpoint_path=checkpoint_path)


def write_metrics_csv(path: Path, metrics: list[dict], cfg: TrainConfig) -> None:
    columns: list[str] = []
    for row in metrics:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# optimizer={cfg.optimizer} lr={cfg.lr} decay={cfg.lr_decay}"
            f"/{cfg.lr_decay_every} batch={cfg.batch_size} seed={cfg.seed}\n"
        )
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        writer.writerows(metrics)


def save_checkpoint(
    path: str | Path, model: DocumentModel, train_cfg: TrainConfig | None, epoch: int
) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "model_state": model.state_dict(),
            "model_cfg": model.cfg,
            "entities": tuple(model.schema.entity_names),
            "vocab_chars": "".join(model.vocab.chars),
            "train_cfg": train_cfg,
            "epoch": epoch,
            "torch_rng": torch.get_rng_state(),
        },
        path,
    )


@dataclass
class LoadedCheckpoint:
    model: DocumentModel
    train_cfg: TrainConfig | None
    epoch: int


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    blob = torch.load(path, weights_only=False)
    version = blob.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    schema = EntitySchema(tuple(blob["entities"]))
    vocab = Vocabulary(tuple(blob["vocab_chars"]))
    model = DocumentModel(schema, vocab, blob["model_cfg"])
    model.load_state_dict(blob["model_state"])
    model.eval()
    return LoadedCheckpoint(model=model, train_cfg=blob["train_cfg"], epoch=blob["epoch"])
