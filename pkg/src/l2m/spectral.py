"""Partial eigendecomposition of the Laplacian and the Laplacian-space transforms.

Projection maps vertex signals ``G`` (n x d) to ``E^T G`` (k x d),
reconstruction maps back with ``E S``. Pooling between two bases of the same
Laplacian multiplies by the transfer matrix ``E_j^T E_i``; for nested
(prefix) bases that product is a truncation or a zero-padding.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
ZERO_EIG_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """The eigensolver did not reach the requested accuracy."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ProvenanceError(ValueError):
    """Spectral tensor and basis come from different Laplacians or resolutions."""


def matrix_fingerprint(L: sp.spmatrix) -> str:
    L = sp.csr_matrix(L)
    h = hashlib.sha1()
    h.update(np.asarray(L.shape, dtype=np.int64).tobytes())
    h.update(L.indptr.astype(np.int64).tobytes())
    h.update(L.indices.astype(np.int64).tobytes())
    h.update(L.data.astype(np.float64).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class EigenBasis:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    provenance: str

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        E = np.asarray(self.vectors, dtype=np.float64)
        if E.ndim != 2 or lam.shape != (E.shape[1],):
            raise ValueError(f"inconsistent basis shapes {lam.shape} / {E.shape}")
        if E.shape[1] < 1:
            raise ValueError("an eigenbasis needs at least one vector")
        for name, a in (("eigenvalues", lam), ("vectors", E)):
            a = np.ascontiguousarray(a)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def zero_mode_count(self, tol: float = ZERO_EIG_TOL) -> int:
        """Number of (numerically) zero eigenvalues: one per connected component."""
        scale = max(1.0, float(np.abs(self.eigenvalues).max()))
        return int(np.sum(self.eigenvalues <= tol * scale))


@dataclass(frozen=True, eq=False)
class SpectralTensor:
    data: np.ndarray
    provenance: str

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[1] < 1:
            raise ValueError(f"spectral tensor must be k x d with d > 0, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def k(self) -> int:
        return self.data.shape[0]


def _fix_signs(E: np.ndarray) -> np.ndarray:
    # first entry of largest magnitude made positive
    idx = np.argmax(np.abs(E), axis=0)
    s = np.sign(E[idx, np.arange(E.shape[1])])
    s[s == 0] = 1.0
    return E * s


def smallest_eigenpairs(L: sp.spmatrix, k: int, seed: int = 0,
                        dense_limit: int = DENSE_LIMIT) -> EigenBasis:
    """The ``k`` smallest eigenpairs of a symmetric PSD matrix, ascending.

    Dense LAPACK for ``n <= dense_limit``, otherwise shift-invert Lanczos
    (ARPACK) with tolerance 1e-10 and at most ``50 k`` iterations, started
    from a seeded vector. The result is checked against the residual bound
    ``||L E - E diag(lam)||_F <= 1e-8 max(1, |lam|_inf) sqrt(n k)``.
    """
    L = sp.csr_matrix(L, dtype=np.float64)
    n = L.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if n <= dense_limit:
        lam, E = sla.eigh(L.toarray(), subset_by_index=[0, k - 1], driver="evr")
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        # shift slightly below zero so the factorization of L - sigma I is regular
        diag = np.abs(L.diagonal())
        sigma = -1e-6 * max(float(diag.mean()) if n else 1.0, 1e-12)
        try:
            lam, E = spla.eigsh(L, k=k, sigma=sigma, which="LM", tol=1e-10,
                                maxiter=50 * k, v0=v0)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigsh did not converge for k={k}: {exc}") from None
        order = np.argsort(lam, kind="stable")
        lam, E = lam[order], E[:, order]
        # Rayleigh-Ritz refinement on the converged subspace
        E, _ = np.linalg.qr(E)
        lam, rot = np.linalg.eigh(E.T @ (L @ E))
        E = E @ rot
    lam = np.where((lam < 0) & (lam > -ZERO_EIG_TOL * max(1.0, abs(lam).max())), 0.0, lam)
    E = _fix_signs(E)
    res = np.linalg.norm(L @ E - E * lam, "fro")
    bound = 1e-8 * max(1.0, float(np.abs(lam).max())) * np.sqrt(n * k)
    if not res <= bound:
        raise ConvergenceError(f"eigen residual {res:.3e} exceeds {bound:.3e}", residual=res)
    return EigenBasis(lam, E, matrix_fingerprint(L))


def check_k0(n: int, k0: int) -> None:
    """Warn when the finest resolution is below half the vertex count."""
    if 2 * k0 < n:
        logger.warning("k0=%d is below half the vertex count (n=%d); reconstruction will be lossy", k0, n)


def prefix_basis(basis: EigenBasis, k: int) -> EigenBasis:
    if not 1 <= k <= basis.k:
        raise ValueError(f"prefix size must lie in [1, {basis.k}], got {k}")
    if k == basis.k:
        return basis
    return EigenBasis(basis.eigenvalues[:k], basis.vectors[:, :k], basis.provenance)


def nonzero_modes(basis: EigenBasis) -> EigenBasis:
    """Drop the near-zero (per-component constant) modes."""
    c = basis.zero_mode_count()
    if c >= basis.k:
        raise ValueError("basis has no non-zero modes")
    return EigenBasis(basis.eigenvalues[c:], basis.vectors[:, c:], basis.provenance + f"/nz{c}")


def project(basis: EigenBasis, G: np.ndarray) -> SpectralTensor:
    G = np.asarray(G, dtype=np.float64)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape[0] != basis.n:
        raise ValueError(f"signal has {G.shape[0]} rows, basis has {basis.n}")
    return SpectralTensor(basis.vectors.T @ G, basis.provenance)


def reconstruct(basis: EigenBasis, S: SpectralTensor) -> np.ndarray:
    if S.provenance != basis.provenance:
        raise ProvenanceError(f"tensor from {S.provenance!r} used with basis {basis.provenance!r}")
    if S.k != basis.k:
        raise ProvenanceError(f"tensor resolution {S.k} does not match basis k={basis.k}")
    return basis.vectors @ S.data


def transfer_matrix(basis_from: EigenBasis, basis_to: EigenBasis) -> np.ndarray:
    """``E_to^T E_from``: maps coefficients in one basis to the other."""
    if basis_from.provenance != basis_to.provenance:
        raise ProvenanceError("bases come from different Laplacians")
    return basis_to.vectors.T @ basis_from.vectors


def pool_transfer(basis_i: EigenBasis, basis_j: EigenBasis, I_i: SpectralTensor) -> SpectralTensor:
    """Re-express a flow at resolution ``k_i`` in the ``k_j`` basis."""
    if I_i.provenance != basis_i.provenance:
        raise ProvenanceError("tensor does not belong to the source basis")
    if I_i.k != basis_i.k:
        raise ProvenanceError(f"tensor resolution {I_i.k} does not match k_i={basis_i.k}")
    return SpectralTensor(transfer_matrix(basis_i, basis_j) @ I_i.data, basis_j.provenance)


def unpool_transfer(basis_i: EigenBasis, basis_j: EigenBasis, I: SpectralTensor) -> SpectralTensor:
    """Inverse direction of :func:`pool_transfer`: from ``k_j`` back to ``k_i``."""
    return pool_transfer(basis_j, basis_i, I)


def truncate_or_pad(data: np.ndarray, k: int) -> np.ndarray:
    """Nested-basis shortcut for the transfer: keep or zero-fill rows up to ``k``."""
    if data.shape[0] >= k:
        return data[:k]
    out = np.zeros((k,) + data.shape[1:], dtype=data.dtype)
    out[: data.shape[0]] = data
    return out


def relative_rms_error(original: np.ndarray, approx: np.ndarray) -> float:
    """RMS vertex error divided by the RMS distance to the centroid."""
    centered = original - original.mean(axis=0)
    return float(np.linalg.norm(original - approx) / np.linalg.norm(centered))
