import sys

import numpy as np
import pytest

from l2m import shapes
from l2m.mesh import Mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def two_triangles():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return Mesh(v, [[0, 1, 2], [0, 2, 3]])


def three_fins():
    """Three triangles sharing edge (0, 1)."""
    v = np.array([[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -0.5, 0.8], [0.5, -0.5, -0.8]], dtype=float)
    return Mesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def two_tetrahedra():
    t = shapes.tetrahedron()
    v = np.vstack([t.vertices, t.vertices + [5.0, 0, 0]])
    return Mesh(v, np.vstack([t.faces, t.faces + 4]))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def finite_difference_error(fn, inputs, h=1e-4):
    """Relative error between autograd and central differences.

    ``fn`` maps the tensors in ``inputs`` to a scalar. The gradients with
    respect to all inputs are stacked into one vector ``g`` and the error is
    ``|g_fd - g_ad| / max(|g_fd|, |g_ad|)`` in the 2-norm.
    """
    import torch

    inputs = [x.detach().clone().requires_grad_(True) for x in inputs]
    out = fn(*inputs)
    grads = torch.autograd.grad(out, inputs, allow_unused=True)
    ad, fd_all = [], []
    with torch.no_grad():
        for x, g in zip(inputs, grads):
            fd = torch.zeros_like(x)
            flat, fdf = x.view(-1), fd.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = fn(*inputs).item()
                flat[i] = old - h
                down = fn(*inputs).item()
                flat[i] = old
                fdf[i] = (up - down) / (2 * h)
            fd_all.append(fd.reshape(-1))
            ad.append(torch.zeros_like(fd).reshape(-1) if g is None else g.reshape(-1))
    fd_v, ad_v = torch.cat(fd_all), torch.cat(ad)
    denom = max(fd_v.norm().item(), ad_v.norm().item())
    return 0.0 if denom == 0 else (fd_v - ad_v).norm().item() / denom


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
