"""Spectral-domain networks for mesh classification and segmentation.

All layers act on the last two dimensions ``(k, c)``: ``k`` spectral rows
(one per eigenvector) and ``c`` channels. A leading batch dimension is
allowed everywhere. Pooling and unpooling between nested eigenbases reduce
to row truncation and zero padding and carry no parameters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import container
from .descriptors import N_FEATURES

TASKS = ("classification", "segmentation")


def conv1x1(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """Kernel-size-1 convolution over spectral rows: ``x @ W + b``."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"conv1x1 expects {weight.shape[0]} input channels, got {x.shape[-1]}")
    out = x @ weight
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ValueError("bias shape does not match output channels")
        out = out + bias
    return out


def elu(x: torch.Tensor) -> torch.Tensor:
    return F.elu(x)


def spectral_pool(x: torch.Tensor, k: int) -> torch.Tensor:
    """Transfer to a coarser nested basis: keep the first ``k`` rows."""
    if k > x.shape[-2]:
        raise ValueError(f"cannot pool {x.shape[-2]} rows up to {k}")
    return x[..., :k, :]


def spectral_unpool(x: torch.Tensor, k: int) -> torch.Tensor:
    """Transfer to a finer nested basis: zero-fill rows up to ``k``."""
    if k < x.shape[-2]:
        raise ValueError(f"cannot unpool {x.shape[-2]} rows down to {k}")
    return F.pad(x, (0, 0, 0, k - x.shape[-2]))


class Conv1x1(nn.Module):
    def __init__(self, c_in: int, c_out: int, bias: bool = True):
        super().__init__()
        bound = 1.0 / np.sqrt(c_in)
        self.weight = nn.Parameter(torch.empty(c_in, c_out).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.empty(c_out).uniform_(-bound, bound)) if bias else None

    def forward(self, x):
        return conv1x1(x, self.weight, self.bias)


class ELU(nn.Module):
    def forward(self, x):
        return elu(x)


class ChannelNorm(nn.Module):
    """Per-sample, per-channel standardization over the spectral rows.

    It removes any per-channel constant, so convolutions feeding it carry
    no bias.
    """

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        mean = x.mean(dim=-2, keepdim=True)
        var = x.var(dim=-2, unbiased=False, keepdim=True)
        return (x - mean) / torch.sqrt(var + self.eps) * self.weight + self.bias


class SEResNetBlock(nn.Module):
    """``y = x + gate(u) * norm(u)`` with ``u = conv(ELU(norm(conv(x))))``.

    The residual branch is conv-norm-ELU-conv-norm. The squeeze-excitation
    gate reads the row mean of ``u``, taken before the last normalization:
    after it every channel has row mean equal to the norm bias, which would
    make the gate ignore its input. The gate bottleneck has width
    ``max(1, channels // reduction)``.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.channels = channels
        self.branch = nn.Sequential(
            Conv1x1(channels, channels, bias=False), ChannelNorm(channels), ELU(),
            Conv1x1(channels, channels, bias=False),
        )
        self.out_norm = ChannelNorm(channels)
        self.squeeze = Conv1x1(channels, hidden)
        self.excite = Conv1x1(hidden, channels)

    def gate(self, u: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.excite(elu(self.squeeze(u.mean(dim=-2)))))

    def forward(self, x):
        if x.shape[-1] != self.channels:
            raise ValueError(f"block expects {self.channels} channels, got {x.shape[-1]}")
        u = self.branch(x)
        return x + self.gate(u).unsqueeze(-2) * self.out_norm(u)


@dataclass
class ModelConfig:
    task: str = "segmentation"
    k: tuple = (512, 128, 32)
    widths: tuple = (64, 128, 256)
    n_classes: int = 2
    in_channels: int = N_FEATURES
    blocks: int = 2
    reduction: int = 4
    seed: int = 0

    def __post_init__(self):
        self.k = tuple(int(v) for v in self.k)
        self.widths = tuple(int(v) for v in self.widths)
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if len(self.k) != 3 or not self.k[0] > self.k[1] > self.k[2] >= 1:
            raise ValueError(f"k pyramid must satisfy k0 > k1 > k2 >= 1, got {self.k}")
        if len(self.widths) != 3:
            raise ValueError("need one width per pyramid level")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k"], d["widths"] = list(self.k), list(self.widths)
        return d


def _stage(c_in, c_out, blocks, reduction):
    return nn.Sequential(
        Conv1x1(c_in, c_out, bias=False), ChannelNorm(c_out), ELU(),
        *[SEResNetBlock(c_out, reduction) for _ in range(blocks)],
    )


class _Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w, c = cfg.widths, cfg.in_channels
        self.k = cfg.k
        self.stems = nn.ModuleList(
            [nn.Sequential(Conv1x1(c, wi, bias=False), ChannelNorm(wi), ELU()) for wi in w]
        )
        self.stages = nn.ModuleList([
            _stage(w[0], w[0], cfg.blocks, cfg.reduction),
            _stage(w[1] + w[0], w[1], cfg.blocks, cfg.reduction),
            _stage(w[2] + w[1], w[2], cfg.blocks, cfg.reduction),
        ])

    def forward(self, xs):
        if len(xs) != 3:
            raise ValueError("expected inputs at three resolutions")
        for x, k in zip(xs, self.k):
            if x.shape[-2] != k:
                raise ValueError(f"input has {x.shape[-2]} rows, pyramid expects {k}")
        skips = []
        h = None
        for lvl in range(3):
            e = self.stems[lvl](xs[lvl])
            if h is not None:
                e = torch.cat([e, spectral_pool(h, self.k[lvl])], dim=-1)
            h = self.stages[lvl](e)
            skips.append(h)
        return skips


def pyramid_inputs(x0: torch.Tensor, k) -> list:
    """Inputs at all three resolutions from the finest one (nested bases)."""
    return [x0[..., :ki, :] for ki in k]


class SpectralClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = _Encoder(cfg)
        w = cfg.widths[2]
        self.fc1 = Conv1x1(w, max(1, w // 2))
        self.fc2 = Conv1x1(max(1, w // 2), cfg.n_classes)

    def forward(self, x0, x1=None, x2=None):
        """Logits ``(..., C)``; pass one finest-level tensor or all three levels."""
        xs = pyramid_inputs(x0, self.cfg.k) if x1 is None else [x0, x1, x2]
        h = self.encoder(xs)[-1].mean(dim=-2)
        return self.fc2(elu(self.fc1(h)))


class SpectralSegmenter(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.encoder = _Encoder(cfg)
        self.dec1 = _stage(w[2] + w[1], w[1], cfg.blocks, cfg.reduction)
        self.dec0 = _stage(w[1] + w[0], w[0], cfg.blocks, cfg.reduction)
        self.head = Conv1x1(w[0], cfg.n_classes)

    def spectral(self, xs):
        h0, h1, h2 = self.encoder(xs)
        d1 = self.dec1(torch.cat([spectral_unpool(h2, self.cfg.k[1]), h1], dim=-1))
        return self.dec0(torch.cat([spectral_unpool(d1, self.cfg.k[0]), h0], dim=-1))

    def logits(self, x0, basis, x1=None, x2=None):
        xs = pyramid_inputs(x0, self.cfg.k) if x1 is None else [x0, x1, x2]
        if basis.shape[-1] != self.cfg.k[0]:
            raise ValueError(f"basis has {basis.shape[-1]} columns, pyramid expects k0={self.cfg.k[0]}")
        d0 = self.spectral(xs)
        return self.head(basis @ d0)

    def forward(self, x0, basis, x1=None, x2=None):
        """Per-vertex class probabilities ``(n, C)``.

        ``basis`` is the ``n x k0`` eigenvector matrix used to bring the
        finest spectral tensor back to the vertices.
        """
        return torch.softmax(self.logits(x0, basis, x1, x2), dim=-1)


def build_model(cfg: ModelConfig) -> nn.Module:
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(cfg.seed)
    try:
        model = SpectralClassifier(cfg) if cfg.task == "classification" else SpectralSegmenter(cfg)
    finally:
        torch.random.set_rng_state(gen_state)
    return model


def make_optimizer(params, lr: float = 1e-3) -> torch.optim.Optimizer:
    return torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def save_checkpoint(path, model: nn.Module, extra: dict | None = None) -> None:
    """Parameters go to an L2MT file, the config to ``<path>.json``."""
    path = Path(path)
    tensors = {k: v.detach().cpu().numpy().astype(np.float32) for k, v in model.state_dict().items()}
    container.save(path, tensors)
    meta = {"model": model.cfg.to_dict(), "seed": model.cfg.seed, **(extra or {})}
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple:
    """Returns ``(model, meta)`` with the model in eval mode."""
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    cfg = ModelConfig(**meta["model"])
    model = build_model(cfg)
    tensors = container.load(path)
    state = {k: torch.from_numpy(v) for k, v in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model, meta
