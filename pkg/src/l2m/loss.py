"""Cross-entropy and the adjacency regularizer on per-vertex softmax output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .laplacian import AdjacencyData

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """``sigma=None`` means: use the mean edge length of the mesh."""

    sigma: float | None = None
    omega: float = 1.0
    gaussian_squared: bool = False

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.omega >= 0:
            raise ValueError("omega must be non-negative")


def _check_labels(y: torch.Tensor, n_classes: int) -> None:
    if y.numel() and (int(y.min()) < 0 or int(y.max()) >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")


def cross_entropy(P: torch.Tensor, y) -> torch.Tensor:
    """Mean negative log-probability of the true class, ``P`` clamped to [1e-7, 1 - 1e-7]."""
    y = torch.as_tensor(y, dtype=torch.long)
    _check_labels(y, P.shape[-1])
    picked = P.gather(-1, y.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp(PROB_EPS, 1.0 - PROB_EPS)).mean()


def mean_edge_length(vertices, edges) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    e = np.asarray(edges)
    if len(e) == 0:
        return 1.0
    return float(np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1).mean())


def edge_weights(vertices, edges, sigma: float, squared: bool = False) -> np.ndarray:
    """Distance kernel per edge: ``exp(-d / 2 sigma)``, or ``exp(-d^2 / 2 sigma^2)`` if ``squared``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    v = np.asarray(vertices, dtype=np.float64)
    e = np.asarray(edges)
    d = np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1)
    return np.exp(-d**2 / (2 * sigma**2)) if squared else np.exp(-d / (2 * sigma))


def adjacency_loss(P: torch.Tensor, y, vertices, adj: AdjacencyData, sigma: float,
                   squared: bool = False, weights=None) -> torch.Tensor:
    """Edge-sparse adjacency loss.

    With ``Y_i = P[i, y_i]`` each vertex accumulates
    ``sum_j A_ij exp(-|v_i - v_j| / 2 sigma) |Y_i - Y_j|``, which is divided
    by its 1-ring size and averaged over vertices that have neighbours.
    Precomputed ``weights`` (see :func:`edge_weights`) skip the kernel.
    """
    y = torch.as_tensor(y, dtype=torch.long)
    _check_labels(y, P.shape[-1])
    Y = P.gather(-1, y.unsqueeze(-1)).squeeze(-1)
    if weights is None:
        weights = edge_weights(vertices, adj.edges, sigma, squared)
    w = torch.as_tensor(weights, dtype=P.dtype)
    e = torch.as_tensor(adj.edges, dtype=torch.long)
    if e.numel() == 0:
        return P.sum() * 0.0
    term = w * (Y[e[:, 0]] - Y[e[:, 1]]).abs()
    theta = torch.zeros_like(Y).index_add(0, e[:, 0], term).index_add(0, e[:, 1], term)
    phi = torch.as_tensor(adj.phi, dtype=P.dtype)
    valid = phi > 0
    return (theta[valid] / phi[valid]).sum() / valid.sum()


def combined_loss(P: torch.Tensor, y, vertices, adj: AdjacencyData, cfg: LossConfig,
                  weights=None) -> torch.Tensor:
    ce = cross_entropy(P, y)
    if cfg.omega == 0:
        return ce
    sigma = cfg.sigma if cfg.sigma is not None else mean_edge_length(vertices, adj.edges)
    return ce + cfg.omega * adjacency_loss(P, y, vertices, adj, sigma, cfg.gaussian_squared, weights)
