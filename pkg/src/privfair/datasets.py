"""Dataset container, CSV IO, the group registry, and the synthetic generator.

The synthetic generator is a desk-scale stand-in for precomputed text embeddings:
class-conditional Gaussians with a shared class direction, plus per-group mean
offsets confined to the leading coordinates (the planted signal the leakage
attack goes after). Group sizes and label priors are deliberately unequal so
that privacy noise hurts the small groups first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .randmat import SeededRng, derive_seed

# The eight target groups, registry order fixed.
CIVILCOMMENTS_GROUPS = (
    "LGBTQ",
    "male",
    "female",
    "Christian",
    "Muslim",
    "other religions",
    "Black",
    "White",
)

_SPLITS = ("train", "validation", "test")


def civilcomments_groups() -> list:
    """The eight protected target groups, in registry order."""
    return list(CIVILCOMMENTS_GROUPS)


@dataclass
class Dataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) in {0,1}
    group_ids: np.ndarray  # (n,) in [0, G)
    group_names: tuple
    split: str  # train | validation | test

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.group_ids = np.asarray(self.group_ids, dtype=np.int64)
        self.group_names = tuple(self.group_names)
        n = self.features.shape[0]
        if n < 1:
            raise ValueError("dataset must be nonempty")
        if self.labels.shape != (n,) or self.group_ids.shape != (n,):
            raise ValueError("features/labels/group_ids lengths disagree")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be binary")
        if self.group_ids.min() < 0 or self.group_ids.max() >= len(self.group_names):
            raise ValueError("group id outside registry")
        if self.split not in _SPLITS:
            raise ValueError(f"split must be one of {_SPLITS}, got {self.split!r}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class SynthConfig:
    dims: int = 64
    counts: tuple = (3000, 2500, 2500, 1500, 600, 400, 1200, 1200)
    priors: tuple = (0.5, 0.3, 0.3, 0.2, 0.35, 0.35, 0.45, 0.45)
    class_sep: float = 2.5  # distance between class-conditional means
    group_signal_dims: int = 32  # leading coordinates carrying group offsets
    group_signal_strength: float = 2.0
    seed: int = 2026
    group_names: tuple = CIVILCOMMENTS_GROUPS

    def __post_init__(self):
        self.counts = tuple(int(c) for c in self.counts)
        self.priors = tuple(float(p) for p in self.priors)
        self.group_names = tuple(self.group_names)
        if not (len(self.counts) == len(self.priors) == len(self.group_names)):
            raise ValueError("counts, priors, group_names must align")
        if any(c < 10 for c in self.counts):
            raise ValueError(f"per-group count < 10 is too small to stratify: {self.counts}")
        if any(not 0.0 < p < 1.0 for p in self.priors):
            raise ValueError(f"priors must lie in (0,1): {self.priors}")
        if self.class_sep < 0 or self.group_signal_strength < 0:
            raise ValueError("separation/signal strength must be nonnegative")
        if not 0 <= self.group_signal_dims <= self.dims:
            raise ValueError("group_signal_dims must lie in [0, dims]")


def _split_cell(count: int, fractions=(0.7, 0.1, 0.2)) -> tuple:
    """Largest-remainder allocation of `count` items over the three splits."""
    raw = [f * count for f in fractions]
    base = [math.floor(r) for r in raw]
    rem = count - sum(base)
    # hand leftover items to the largest fractional parts; ties favor train, then val
    order = sorted(range(3), key=lambda i: (-(raw[i] - base[i]), i))
    for i in range(rem):
        base[order[i]] += 1
    return tuple(base)


def synth_generate(config: SynthConfig):
    """Generate (train, validation, test) with class + group structure.

    Per group g: labels ~ Bernoulli(prior_g); features = N(0, I_d) + y*s*u +
    strength*v_g, with u a fixed unit direction and the v_g orthonormal inside
    the leading group_signal_dims coordinates. Split 70/10/20 stratified by
    (group, label) with largest-remainder rounding.
    """
    d = config.dims
    G = len(config.counts)
    rng = SeededRng(derive_seed(config.seed, 0xDA7A))
    # shared class direction
    u = rng.gen.standard_normal(d)
    u /= np.linalg.norm(u)
    # orthonormal group directions inside the leading block
    m = config.group_signal_dims
    v = np.zeros((G, d))
    if m > 0 and config.group_signal_strength > 0:
        raw = rng.gen.standard_normal((m, max(G, 1)))
        q, _ = np.linalg.qr(raw)
        take = min(G, q.shape[1], m)
        v[:take, :m] = q[:, :take].T
        if take < G:  # more groups than signal dims: reuse normalized noise directions
            extra = rng.gen.standard_normal((G - take, m))
            extra /= np.linalg.norm(extra, axis=1, keepdims=True)
            v[take:, :m] = extra

    feats, labels, gids = [], [], []
    for g in range(G):
        c = config.counts[g]
        y = (rng.gen.random(c) < config.priors[g]).astype(np.int64)
        x = rng.gen.standard_normal((c, d))
        x += y[:, None] * (config.class_sep * u)[None, :]
        x += config.group_signal_strength * v[g][None, :]
        feats.append(x)
        labels.append(y)
        gids.append(np.full(c, g, dtype=np.int64))
    X = np.concatenate(feats)
    y_all = np.concatenate(labels)
    g_all = np.concatenate(gids)

    # stratified 70/10/20 split per (group, label) cell
    split_idx = [[], [], []]
    for g in range(G):
        for lab in (0, 1):
            cell = np.flatnonzero((g_all == g) & (y_all == lab))
            cell = rng.gen.permutation(cell)
            n_tr, n_va, n_te = _split_cell(cell.size)
            split_idx[0].append(cell[:n_tr])
            split_idx[1].append(cell[n_tr : n_tr + n_va])
            split_idx[2].append(cell[n_tr + n_va :])
    out = []
    for si, name in enumerate(_SPLITS):
        idx = np.concatenate(split_idx[si])
        idx = rng.gen.permutation(idx)  # mix groups within the split
        out.append(Dataset(X[idx], y_all[idx], g_all[idx], config.group_names, name))
    return tuple(out)


# ---------------------------------------------------------------- CSV IO
#
# Format (bit-exact contract): header `f0,f1,...,f{d-1},label,group`; one row per
# example; label in {0,1}; group is the registered name verbatim (safe even with
# spaces because the group column is last); UTF-8, LF endings, '.' decimal
# separator, floats at 17 significant digits.


def save_csv(dataset: Dataset, path) -> None:
    d = dataset.dim
    header = ",".join([f"f{i}" for i in range(d)] + ["label", "group"])
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for i in range(dataset.n):
                cells = [("%.17g" % v) for v in dataset.features[i]]
                cells.append(str(int(dataset.labels[i])))
                cells.append(dataset.group_names[int(dataset.group_ids[i])])
                fh.write(",".join(cells) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing dataset to {path}: {exc}") from exc


def load_csv(path, group_names: Sequence[str] | None = None, split: str | None = None) -> Dataset:
    """Parse a dataset CSV written by save_csv (or hand-produced to the same contract)."""
    names = tuple(group_names) if group_names is not None else CIVILCOMMENTS_GROUPS
    name_to_id = {name: i for i, name in enumerate(names)}
    if split is None:
        import os

        stem = os.path.splitext(os.path.basename(str(path)))[0]
        if stem not in _SPLITS:
            raise ValueError(
                f"{path}: cannot infer split tag from filename {stem!r}; pass split= explicitly"
            )
        split = stem
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"failed reading dataset from {path}: {exc}") from exc
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 3 or header[-2:] != ["label", "group"]:
        raise ValueError(f"{path}: malformed header (want f0,...,label,group)")
    d = len(header) - 2
    if header[:d] != [f"f{i}" for i in range(d)]:
        raise ValueError(f"{path}: malformed header feature columns")
    if len(lines) == 1:
        raise ValueError(f"{path}: empty data section")

    n = len(lines) - 1
    feats = np.empty((n, d))
    labels = np.empty(n, dtype=np.int64)
    gids = np.empty(n, dtype=np.int64)
    for r, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != d + 2:
            raise ValueError(f"{path}: row {r} has {len(cells)} columns, expected {d + 2}")
        for cidx in range(d):
            try:
                feats[r - 1, cidx] = float(cells[cidx])
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric cell at row {r}, column f{cidx}: {cells[cidx]!r}"
                ) from None
        if cells[d] not in ("0", "1"):
            raise ValueError(f"{path}: row {r} label must be 0 or 1, got {cells[d]!r}")
        labels[r - 1] = int(cells[d])
        gname = cells[d + 1]
        if gname not in name_to_id:
            raise ValueError(f"{path}: row {r} has unknown group name {gname!r}")
        gids[r - 1] = name_to_id[gname]
    return Dataset(feats, labels, gids, names, split)
