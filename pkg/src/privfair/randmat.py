"""Seeded random-matrix primitives: Gaussian draws, Wishart draws, symmetric eigendecomposition.

Everything downstream (noise injection, DP-PCA, synthetic data) funnels its randomness
through SeededRng so that a single 64-bit master seed pins the whole experiment.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # 2^64 / golden ratio, odd


def _splitmix64(x: int) -> int:
    # splitmix64 finalizer (Steele et al.); bijective on 64-bit words.
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(master: int, *indices: int) -> int:
    """Derive a child seed from ``master`` and a tuple of stream indices.

    Splitmix64 chain: each index advances the state by (index+1) golden-ratio
    steps before remixing, so derive_seed(m), derive_seed(m, 0) and
    derive_seed(m, 0, 0) all land in distinct streams. This is the hash used to
    hand independent streams to parallel tasks.
    """
    x = (master & _MASK64) ^ _GOLDEN
    for idx in indices:
        x = _splitmix64((x + ((int(idx) + 1) * _GOLDEN)) & _MASK64)
    return x


class SeededRng:
    """Deterministic RNG handle over a counter-based (Philox) bit generator.

    Identical seed + identical call sequence -> identical output, independent of
    platform. Handles must not be shared between concurrent tasks; spawn one per
    task with child().
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.gen = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, *indices: int) -> "SeededRng":
        """Independent child stream keyed by the given indices."""
        return SeededRng(derive_seed(self.seed, *indices))

    def __repr__(self):  # pragma: no cover
        return f"SeededRng(seed={self.seed:#018x})"


def gaussian_matrix(rows: int, cols: int, std: float, rng: SeededRng) -> np.ndarray:
    """rows x cols matrix of i.i.d. Normal(0, std^2) samples."""
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    if rows < 0 or cols < 0:
        raise ValueError("matrix dimensions must be nonnegative")
    return rng.gen.normal(0.0, std, size=(rows, cols))


def wishart_sample(d: int, df: float, scale_diag: float, rng: SeededRng) -> np.ndarray:
    """One draw W ~ Wishart_d(df, scale_diag * I), via the Bartlett decomposition.

    L is lower triangular with L_ii = sqrt(chi2(df - i)) (0-indexed) and N(0,1)
    below the diagonal; W = scale_diag * L L^T. Exact, O(d^2) per draw, and the
    output is symmetric to the last ulp and PSD by construction.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if df < d:
        raise ValueError(f"df must be >= d for a nondegenerate Wishart (df={df}, d={d})")
    if scale_diag < 0:
        raise ValueError(f"scale_diag must be nonnegative, got {scale_diag}")
    g = rng.gen
    L = np.zeros((d, d))
    L[np.diag_indices(d)] = np.sqrt(g.chisquare(df - np.arange(d)))
    if d > 1:
        r, c = np.tril_indices(d, -1)
        L[r, c] = g.standard_normal(r.size)
    w = scale_diag * (L @ L.T)
    return (w + w.T) / 2.0


def sym_eigendecompose(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues descending, eigenvector matrix with orthonormal columns).
    Ties keep the underlying solver order (stable sort); each eigenvector's sign
    is fixed so its largest-magnitude entry is positive, which makes the
    decomposition deterministic.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"square matrix required, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-9 * scale:
        raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    s = (a + a.T) / 2.0
    vals, vecs = np.linalg.eigh(s)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs
