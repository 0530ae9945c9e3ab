"""Training objective: monocular, invertibility, and temporal terms plus
their weighted total.

All norms reduce as per-element means, so loss magnitudes are independent of
resolution and batch size. The temporal term warps the previous output onto
the current one with externally estimated flows, which are treated as
constants.
"""

from __future__ import annotations

import torch

from .config import HyperParams
from .flowio import warp_tensor


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def charbonnier(x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Smooth L1: mean of sqrt(x^2 + eps^2)."""
    return torch.sqrt(x * x + eps * eps).mean()


def grad_xy(f: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences along width and height, zero at the last
    column/row. Input (..., H, W)."""
    dx = torch.zeros_like(f)
    dy = torch.zeros_like(f)
    dx[..., :, :-1] = f[..., :, 1:] - f[..., :, :-1]
    dy[..., :-1, :] = f[..., 1:, :] - f[..., :-1, :]
    return dx, dy


def monocular_loss(o_m: torch.Tensor, i_l: torch.Tensor, hp: HyperParams) -> torch.Tensor:
    """MSE to the left view plus a Charbonnier penalty on the gradient
    difference, which suppresses residual stereo patterns."""
    mx, my = grad_xy(o_m)
    ix, iy = grad_xy(i_l)
    grad_diff = torch.cat([mx - ix, my - iy], dim=-3)
    return mse(o_m, i_l) + hp.alpha * charbonnier(grad_diff, hp.eps_charbonnier)


def invertibility_loss(o_l: torch.Tensor, o_r: torch.Tensor,
                       i_l: torch.Tensor, i_r: torch.Tensor,
                       hp: HyperParams) -> torch.Tensor:
    """Weighted restoration MSE; the right view carries almost all the weight
    because it is the harder one to recover."""
    return (1.0 - hp.beta) * mse(o_l, i_l) + hp.beta * mse(o_r, i_r)


def temporal_loss(prev_m: torch.Tensor, prev_l: torch.Tensor, prev_r: torch.Tensor,
                  cur_m: torch.Tensor, cur_l: torch.Tensor, cur_r: torch.Tensor,
                  flow_l: torch.Tensor, flow_r: torch.Tensor,
                  hp: HyperParams) -> torch.Tensor:
    """Frame-to-frame coherence: previous outputs warped by the input flows
    should match the current outputs. The mononized stream reuses the
    left-view flow; the right-view term is weighted by gamma."""
    return (mse(warp_tensor(prev_m, flow_l), cur_m)
            + mse(warp_tensor(prev_l, flow_l), cur_l)
            + hp.gamma * mse(warp_tensor(prev_r, flow_r), cur_r))


def total_loss(l_m: torch.Tensor, l_i: torch.Tensor, l_t: torch.Tensor,
               hp: HyperParams) -> torch.Tensor:
    for name, v in (("monocular", l_m), ("invertibility", l_i), ("temporal", l_t)):
        if not torch.isfinite(torch.as_tensor(v)):
            raise FloatingPointError(f"{name} loss is non-finite: {v}")
    return l_m + hp.lambda1 * l_i + hp.lambda2 * l_t
