"""Training loop, run directory layout and checkpoint (de)serialization of models."""

from __future__ import annotations

import csv
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import config as cfg
from ..autodiff import Tensor
from ..config import EvalConfig, TrainConfig
from ..data.dataset import SegDataset
from ..evaluation import evaluate
from ..network import ACFNet, build_network
from . import checkpoint
from .augment import augment
from .losses import BootstrapConfig, LossWeights, balanced_ce, total_loss
from .optim import SGD

log = logging.getLogger(__name__)

METRICS_HEADER = ["iter", "lr", "loss_total", "loss_aux", "loss_coarse", "loss_fine", "val_miou"]
CONFIG_KEY = "meta/config"
OPTIM_PREFIX = "optim/"


class NonFiniteLossError(FloatingPointError):
    pass


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per subsystem (``init``, ``augment``, ``sampling``)."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def model_from_config(config: TrainConfig) -> ACFNet:
    return ACFNet(config.network(), stream(config.seed, "init"))


def checkpoint_tensors(model: ACFNet, config: TrainConfig, optimizer: Optional[SGD] = None) -> Dict[str, np.ndarray]:
    tensors = dict(model.state_dict())
    if optimizer is not None:
        tensors.update({OPTIM_PREFIX + k: v for k, v in optimizer.state_dict().items()})
    tensors[CONFIG_KEY] = checkpoint.text_to_tensor(cfg.to_text(config))
    return tensors


def save_checkpoint(path, iteration: int, model: ACFNet, config: TrainConfig, optimizer: Optional[SGD] = None) -> None:
    checkpoint.save(path, iteration, checkpoint_tensors(model, config, optimizer))


def load_checkpoint(path) -> Tuple[ACFNet, TrainConfig, int, Dict[str, np.ndarray]]:
    """Rebuild the model stored in ``path``; returns ``(model, config, iteration, optim_buffers)``."""
    iteration, tensors = checkpoint.load(path)
    if CONFIG_KEY not in tensors:
        raise checkpoint.CheckpointError(f"{path}: no embedded configuration")
    text = checkpoint.tensor_to_text(tensors.pop(CONFIG_KEY))
    config = cfg.from_mapping(TrainConfig, cfg.parse_kv_text(text, str(path)))
    optim = {k[len(OPTIM_PREFIX):]: v for k, v in tensors.items() if k.startswith(OPTIM_PREFIX)}
    state = {k: v for k, v in tensors.items() if not k.startswith(OPTIM_PREFIX)}
    model = model_from_config(config)
    model.load_state_dict(state)
    model.eval()
    return model, config, iteration, optim


@dataclass
class TrainResult:
    model: ACFNet
    history: List[Dict[str, float]] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    val_miou: Optional[float] = None


def _first_nonfinite(named: Dict[str, Optional[Tensor]]) -> Optional[str]:
    for name, t in named.items():
        if t is not None and not np.all(np.isfinite(t.data)):
            return name
    return None


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def train(
    config: TrainConfig,
    train_set: SegDataset,
    run_dir=None,
    val_set: Optional[SegDataset] = None,
) -> TrainResult:
    """Train from scratch; write ``metrics.csv``, ``config.txt`` and checkpoints to ``run_dir``.

    Deterministic for a fixed ``config.seed``: initialization, batch sampling
    and augmentation each draw from their own seeded stream.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if train_set.num_classes != config.num_classes:
        raise ValueError(
            f"dataset has {train_set.num_classes} classes but config says {config.num_classes}"
        )
    run = Path(run_dir) if run_dir is not None else None
    if run is not None:
        run.mkdir(parents=True, exist_ok=True)
        (run / "config.txt").write_text(cfg.to_text(config), encoding="utf-8")

    model = model_from_config(config)
    model.train()
    optimizer = SGD(
        model.named_parameters(), config.lr, config.momentum, config.weight_decay,
        config.max_iter, config.poly_power,
    )
    weights = LossWeights(config.lambda_aux, config.lambda_coarse, config.lambda_fine)
    boot = BootstrapConfig(True, config.bootstrap_theta, config.bootstrap_min_k) if config.bootstrap else None
    class_weights = "auto" if config.class_balanced else None
    sampler, aug_rng = stream(config.seed, "sampling"), stream(config.seed, "augment")
    mean_color = train_set.images.mean(axis=(0, 2, 3))
    order: List[int] = []

    result = TrainResult(model)
    metrics_fh = open(run / "metrics.csv", "w", newline="", encoding="utf-8") if run else None
    writer = csv.writer(metrics_fh, lineterminator="\n") if metrics_fh else None
    if writer:
        writer.writerow(METRICS_HEADER)
    try:
        for it in range(config.max_iter):
            idx = []
            while len(idx) < config.batch_size:
                if not order:
                    order = list(sampler.permutation(len(train_set)))
                idx.append(order.pop())
            pairs = [
                augment(train_set.images[i], train_set.labels[i], aug_rng, config.crop_size,
                        (config.scale_min, config.scale_max), config.flip, mean_color, config.ignore_id)
                for i in idx
            ]
            images = np.stack([p[0] for p in pairs])
            labels = np.stack([p[1] for p in pairs])

            lr = optimizer.lr_at(it)
            out = model.forward(Tensor(images))
            la = balanced_ce(out.aux, labels, config.ignore_id, class_weights)
            lc = balanced_ce(out.coarse, labels, config.ignore_id, class_weights,
                             boot if config.bootstrap_coarse else None)
            lf = None
            if out.fine is not None:
                lf = balanced_ce(out.fine, labels, config.ignore_id, class_weights,
                                 boot if config.bootstrap_fine else None)
            loss = total_loss(la, lc, lf, weights)
            bad = _first_nonfinite({
                "aux_logits": out.aux, "coarse_logits": out.coarse, "fine_logits": out.fine,
                "loss_aux": la, "loss_coarse": lc, "loss_fine": lf, "loss_total": loss,
            })
            if bad is not None:
                raise NonFiniteLossError(f"iteration {it}: non-finite values first seen in {bad}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr)

            step = it + 1
            val = None
            if val_set is not None and (step % config.val_every == 0 or step == config.max_iter):
                val = evaluate(model, val_set.images, val_set.labels, EvalConfig(),
                               val_set.class_names, config.ignore_id).final_miou
                result.val_miou = val
                model.train()
            row = {
                "iter": step, "lr": lr, "loss_total": loss.item(), "loss_aux": la.item(),
                "loss_coarse": lc.item(), "loss_fine": None if lf is None else lf.item(), "val_miou": val,
            }
            result.history.append(row)
            if writer:
                writer.writerow([step] + [_fmt(row[k]) for k in METRICS_HEADER[1:]])
            if run is not None and (step % config.checkpoint_every == 0 or step == config.max_iter):
                path = run / f"ckpt_{step:06d}.acfs"
                save_checkpoint(path, step, model, config, optimizer)
                result.checkpoints.append(path)
            if step % 100 == 0:
                log.info("iter %d lr %.5f loss %.4f", step, lr, row["loss_total"])
    finally:
        if metrics_fh:
            metrics_fh.close()
    if run is not None:
        final = run / "final.acfs"
        save_checkpoint(final, config.max_iter, model, config, optimizer)
        result.checkpoints.append(final)
    model.eval()
    return result
