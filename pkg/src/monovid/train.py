"""Two-stage self-supervised training: an image model (single frames, no
temporal term) and a video model (frame sequences with recurrence and the
temporal term), the latter typically initialized from the former.

The optimizer is Adam at lr 1e-4, cut by 3.33x whenever the epoch-mean loss
plateaus. Training aborts on a non-finite loss with diagnostics.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import losses
from .backbone import ExtractorConfig
from .config import HyperParams, TrainConfig
from .data import DatasetIndex, TrainBatch, sample_batch, scan_dataset
from .degrade import CnsLayer, NoiseSpec, quantize_tensor
from .model import MononizerModel, load_checkpoint, save_checkpoint


@dataclass
class StepOutputs:
    """Per-time-step streams from one forward pass (lists of (B,3,H,W))."""

    mono: list
    left: list
    right: list


def forward_train(batch: TrainBatch, model: MononizerModel, hp: HyperParams,
                  cns: Optional[CnsLayer] = None,
                  quantize: bool = True) -> tuple[dict, StepOutputs]:
    """Run encode -> quantize -> (CNS) -> decode over a batch of sequences,
    threading the recurrent pyramids, and compute all loss terms.

    ``quantize=False`` is a test-only switch that removes the quantization
    layer so the loss path can be cross-checked against straight
    reimplementations.
    """
    n = batch.steps
    mono_frames = []
    prev_pm = None
    for t in range(n):
        o_m, p_m = model.encoder(batch.left[:, t], batch.right[:, t], prev_pm)
        if quantize:
            o_m = quantize_tensor(o_m)
        mono_frames.append(o_m)
        prev_pm = p_m

    flows_l = [batch.flows_left[:, t] for t in range(n - 1)] \
        if batch.flows_left is not None else None
    decoder_in = cns(mono_frames, flows_l) if cns is not None else mono_frames

    left_frames, right_frames = [], []
    prev_pl = prev_pr = None
    for t in range(n):
        o_l, o_r, p_l, p_r = model.decoder(decoder_in[t], prev_pl, prev_pr)
        left_frames.append(o_l)
        right_frames.append(o_r)
        prev_pl, prev_pr = p_l, p_r

    l_m = torch.stack([losses.monocular_loss(mono_frames[t], batch.left[:, t], hp)
                       for t in range(n)]).mean()
    l_i = torch.stack([losses.invertibility_loss(left_frames[t], right_frames[t],
                                                 batch.left[:, t], batch.right[:, t], hp)
                       for t in range(n)]).mean()
    if n > 1:
        if batch.flows_left is None or batch.flows_right is None:
            raise ValueError("sequences longer than one frame require flows")
        l_t = torch.stack([
            losses.temporal_loss(mono_frames[t - 1], left_frames[t - 1],
                                 right_frames[t - 1], mono_frames[t],
                                 left_frames[t], right_frames[t],
                                 batch.flows_left[:, t - 1],
                                 batch.flows_right[:, t - 1], hp)
            for t in range(1, n)]).mean()
    else:
        l_t = torch.zeros(())
    total = losses.total_loss(l_m, l_i, l_t, hp)
    loss_dict = {"monocular": l_m, "invertibility": l_i, "temporal": l_t,
                 "total": total}
    return loss_dict, StepOutputs(mono_frames, left_frames, right_frames)


@dataclass
class TrainResult:
    model: MononizerModel
    log: list
    best_loss: float
    checkpoint_best: Optional[Path] = None
    checkpoint_last: Optional[Path] = None


def noise_spec_from_config(tc: TrainConfig) -> NoiseSpec:
    return NoiseSpec(jitter_threshold=tc.cns_jitter_threshold,
                     jitter_max_shift=tc.cns_jitter_max_shift,
                     quality_range=(tc.cns_quality_min, tc.cns_quality_max),
                     inter_prob=tc.cns_inter_prob,
                     rng_seed=tc.seed,
                     enabled=tc.cns_enabled)


def train(hp: HyperParams, tc: TrainConfig,
          index: Optional[DatasetIndex] = None,
          batch_size: Optional[int] = None,
          crop: Optional[int] = None,
          steps_per_epoch: Optional[int] = None,
          log_fn=None) -> TrainResult:
    """Run one training stage per the given configuration.

    ``index`` defaults to scanning ``tc.data_root``. Returns the trained
    model plus a per-epoch log (epoch, mean losses, lr). Checkpoints
    ``best.pt`` and ``last.pt`` land in ``tc.checkpoint_dir``.
    """
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    if index is None:
        index = scan_dataset(tc.data_root, require_flows=(tc.mode == "video"))

    cfg = ExtractorConfig(channels_per_level=tuple(tc.channels),
                          residual_blocks_per_level=tc.res_blocks)
    if tc.init_checkpoint:
        model = load_checkpoint(tc.init_checkpoint)
        if model.cfg != cfg:
            raise ValueError(
                f"init checkpoint architecture {model.cfg} differs from configured {cfg}")
    else:
        model = MononizerModel(cfg)
    model.train()

    cns = CnsLayer(noise_spec_from_config(tc)) if (tc.cns_enabled and
                                                   tc.mode == "video") else None
    optimizer = torch.optim.Adam(model.parameters(), lr=hp.lr_init)

    b = batch_size if batch_size is not None else hp.b_batch
    if steps_per_epoch is None:
        windows = sum(max(e.frame_count - (hp.n_seq if tc.mode == "video" else 1) + 1, 0)
                      for e in index.sequences)
        steps_per_epoch = max(1, windows // b)
    max_epochs = tc.max_epochs or (hp.epochs_video if tc.mode == "video"
                                   else hp.epochs_image)

    ckpt_dir = Path(tc.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log: list[dict] = []
    best = float("inf")
    wait = 0
    lr = hp.lr_init
    iters = 0
    t_start = time.monotonic()

    for epoch in range(max_epochs):
        epoch_losses = []
        components = {"monocular": 0.0, "invertibility": 0.0, "temporal": 0.0}
        for _ in range(steps_per_epoch):
            batch = sample_batch(index, hp, rng, mode=tc.mode,
                                 batch_size=b, crop=crop)
            loss_dict, _ = forward_train(batch, model, hp, cns)
            total = loss_dict["total"]
            if not torch.isfinite(total):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, iter {iters}: "
                    + ", ".join(f"{k}={float(v):.6g}" for k, v in loss_dict.items()))
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            epoch_losses.append(float(total))
            for k in components:
                components[k] += float(loss_dict[k])
            iters += 1
            if tc.max_iters and iters >= tc.max_iters:
                break

        mean_loss = float(np.mean(epoch_losses))
        entry = {"epoch": epoch, "loss": mean_loss, "lr": lr, "iters": iters,
                 "seconds": round(time.monotonic() - t_start, 3)}
        entry.update({k: v / len(epoch_losses) for k, v in components.items()})
        log.append(entry)
        if log_fn:
            log_fn(entry)

        if mean_loss < best * (1.0 - tc.plateau_rel_threshold):
            best = mean_loss
            wait = 0
            save_checkpoint(ckpt_dir / "best.pt", model,
                            extra={"epoch": epoch, "loss": mean_loss})
        else:
            wait += 1
            if wait >= tc.plateau_patience:
                lr /= hp.plateau_factor
                for group in optimizer.param_groups:
                    group["lr"] = lr
                wait = 0

        if tc.max_iters and iters >= tc.max_iters:
            break

    save_checkpoint(ckpt_dir / "last.pt", model, extra={"loss": log[-1]["loss"]})
    (ckpt_dir / "training_log.json").write_text(json.dumps(log, indent=2))
    model.eval()
    return TrainResult(model, log, best,
                       checkpoint_best=ckpt_dir / "best.pt",
                       checkpoint_last=ckpt_dir / "last.pt")
