"""Plain PCA and differentially private PCA via Wishart noise on the second moment.

The private route: rows normalized into the unit ball, A = (1/n) X^T X, then
A_hat = A + W with W ~ Wishart_d(d+1, 3/(2 n eps) * I). All of eps is spent on
that single draw (pure eps-DP); whatever consumes the projection afterwards is
post-processing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .randmat import SeededRng, sym_eigendecompose, wishart_sample

_PROJ_MAGIC = int.from_bytes(b"PFPJ", "little")
_PROJ_VERSION = 1


@dataclass
class Projection:
    basis: np.ndarray  # (d, k), orthonormal columns
    eigenvalues: np.ndarray  # (k,), descending
    epsilon: float | None  # None = non-private


def second_moment(x: np.ndarray) -> np.ndarray:
    """(1/n) X^T X, symmetrized to kill float asymmetry from the BLAS path."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a nonempty n x d matrix")
    a = (x.T @ x) / x.shape[0]
    return (a + a.T) / 2.0


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale every row by 1/max(1, ||row||_2) so each lands in the unit ball."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    return x / np.maximum(norms, 1.0)[:, None]


def _top_k(a: np.ndarray, k: int, epsilon) -> Projection:
    vals, vecs = sym_eigendecompose(a)
    return Projection(basis=vecs[:, :k].copy(), eigenvalues=vals[:k].copy(), epsilon=epsilon)


def pca(x: np.ndarray, k: int, center: bool = False) -> Projection:
    """Noiseless top-k eigendecomposition of the second moment (optionally mean-centered)."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= k <= x.shape[1]:
        raise ValueError(f"k must lie in [1, d], got k={k}, d={x.shape[1]}")
    if center:
        x = x - x.mean(axis=0, keepdims=True)
    return _top_k(second_moment(x), k, None)


def dp_pca(x: np.ndarray, k: int, epsilon: float, rng: SeededRng) -> Projection:
    """Top-k eigenvectors of (1/n) X^T X + Wishart_d(d+1, 3/(2 n eps) I).

    Rows must already be normalized (||x_i|| <= 1): the mechanism's sensitivity
    analysis lives and dies by that bound, so it is a hard precondition rather
    than something silently fixed here.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a nonempty n x d matrix")
    n, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, d], got k={k}, d={d}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    max_norm = float(np.max(np.linalg.norm(x, axis=1)))
    if max_norm > 1.0 + 1e-9:
        raise ValueError(
            f"rows must be pre-normalized to the unit ball (max norm {max_norm:.6g}); "
            "call normalize_rows first"
        )
    scale = 3.0 / (2.0 * n * epsilon)
    a_hat = second_moment(x) + wishart_sample(d, d + 1, scale, rng)
    return _top_k(a_hat, k, float(epsilon))


def project(x: np.ndarray, p: Projection) -> np.ndarray:
    """X @ basis — coordinates of the rows in the projection subspace."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != p.basis.shape[0]:
        raise ValueError(f"data dim {x.shape[1]} does not match basis dim {p.basis.shape[0]}")
    return x @ p.basis


def save_projection(path, p: Projection) -> None:
    """Binary dump: 16-byte header (magic, version, d, k), then basis row-major,
    eigenvalues, and epsilon (NaN marks non-private), all little-endian float64."""
    d, k = p.basis.shape
    eps = np.float64(np.nan if p.epsilon is None else p.epsilon)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", _PROJ_MAGIC, _PROJ_VERSION, d, k))
        fh.write(np.ascontiguousarray(p.basis, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(p.eigenvalues, dtype="<f8").tobytes())
        fh.write(eps.astype("<f8").tobytes())


def load_projection(path) -> Projection:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated header")
        magic, version, d, k = struct.unpack("<IIII", header)
        if magic != _PROJ_MAGIC:
            raise ValueError(f"{path}: bad magic {magic:#x}")
        if version != _PROJ_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read()
    want = 8 * (d * k + k + 1)
    if len(payload) != want:
        raise ValueError(f"{path}: expected {want} payload bytes, found {len(payload)}")
    buf = np.frombuffer(payload, dtype="<f8")
    basis = buf[: d * k].reshape(d, k).astype(np.float64)
    eigenvalues = buf[d * k : d * k + k].astype(np.float64)
    eps_raw = float(buf[-1])
    return Projection(basis, eigenvalues, None if np.isnan(eps_raw) else eps_raw)
