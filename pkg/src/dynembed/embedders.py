"""Spectral embedders for adjacency snapshot sequences.

Four methods producing, for each snapshot, one point per node:

- :func:`uase`: joint SVD of the column-concatenated snapshots; one shared
  left point set plus per-snapshot right point sets in a common coordinate
  system.
- :func:`omnibus_embed`: eigendecomposition of the pairwise-average block
  matrix of all snapshots.
- :func:`independent_ase`: each snapshot embedded on its own.
- :func:`separate_embed`: each snapshot replaced by a weighted average of its
  history, then embedded on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .linalg import (
    MemoryBudgetError,
    memory_budget_entries,
    save_matrix_csv,
    truncated_eigh,
    truncated_svd,
)
from .netseries import GraphSeries


@dataclass
class Embedding:
    """Per-snapshot node point sets produced by one embedder.

    points: list with one (n, d_t) array per snapshot.
    method: name of the producing embedder.
    left: shared (n, d) left point set when the method defines one.
    signatures: per-decomposition (positive, negative) eigenvalue counts when
        the method is eigenvalue-based, else None.
    dims: embedding dimension per snapshot.
    """

    points: list
    method: str
    left: np.ndarray | None = None
    signatures: list | None = None
    dims: list = field(init=False)

    def __post_init__(self):
        self.dims = [p.shape[1] for p in self.points]

    @property
    def n_snapshots(self) -> int:
        return len(self.points)

    @property
    def n_nodes(self) -> int:
        return self.points[0].shape[0]

    def stacked(self) -> np.ndarray:
        """All point sets stacked vertically; requires a common dimension."""
        if len(set(self.dims)) != 1:
            raise ValueError("snapshots have differing dimensions")
        return np.vstack(self.points)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for t, p in enumerate(self.points):
            save_matrix_csv(directory / f"points_{t}.csv", p)
        if self.left is not None:
            save_matrix_csv(directory / "left.csv", self.left)
        with open(directory / "meta.txt", "w", encoding="utf-8") as fh:
            fh.write(f"method {self.method}\n")
            fh.write(f"snapshots {self.n_snapshots}\n")
            if self.signatures is not None:
                for sig in self.signatures:
                    fh.write(f"signature {sig[0]} {sig[1]}\n")

    @classmethod
    def load(cls, directory) -> "Embedding":
        directory = Path(directory)
        meta = {}
        signatures = []
        with open(directory / "meta.txt", encoding="utf-8") as fh:
            for line in fh:
                key, _, value = line.strip().partition(" ")
                if key == "signature":
                    pos, neg = value.split()
                    signatures.append((int(pos), int(neg)))
                else:
                    meta[key] = value
        t_count = int(meta["snapshots"])
        points = [
            np.atleast_2d(np.loadtxt(directory / f"points_{t}.csv", delimiter=","))
            for t in range(t_count)
        ]
        left_path = directory / "left.csv"
        left = (
            np.atleast_2d(np.loadtxt(left_path, delimiter=","))
            if left_path.exists()
            else None
        )
        return cls(
            points=points,
            method=meta["method"],
            left=left,
            signatures=signatures or None,
        )


def _as_snapshot_list(series):
    if isinstance(series, GraphSeries):
        return series.snapshots
    return list(series)


def uase(series, d: int, seed: int = 0) -> Embedding:
    """Unfolded adjacency spectral embedding.

    Concatenates the snapshots column-wise into an n x (T n) matrix, takes its
    rank-d SVD and scales both factors by the square-rooted singular values.
    The right factor splits into T blocks of n rows, one point set per
    snapshot, all living in one coordinate system; the left factor is a single
    time-invariant point set.
    """
    snaps = _as_snapshot_list(series)
    n = snaps[0].shape[0]
    unfolded = sp.hstack([sp.csr_matrix(a) for a in snaps], format="csr")
    res = truncated_svd(unfolded, d, seed)
    scale = np.sqrt(res.s)
    left = res.u * scale
    right = res.v * scale
    points = [right[t * n : (t + 1) * n] for t in range(len(snaps))]
    return Embedding(points=points, method="uase", left=left)


def _signed_symmetric_embedding(a, d: int, seed: int):
    """Point set v * sqrt(sigma) from the SVD of a symmetric matrix, plus the
    eigenvalue signature recovered from the left/right vector orientation."""
    res = truncated_svd(a, d, seed)
    orientation = np.sum(res.u * res.v, axis=0)  # +1 or -1 per component
    positive = int(np.sum(orientation > 0))
    return res.v * np.sqrt(res.s), (positive, d - positive)


def independent_ase(series, dims, seed: int = 0) -> Embedding:
    """Adjacency spectral embedding of each snapshot separately.

    dims: either one integer applied to every snapshot or a sequence with one
    dimension per snapshot. Point sets from different snapshots live in
    unrelated coordinate systems.
    """
    snaps = _as_snapshot_list(series)
    if np.isscalar(dims):
        dims = [int(dims)] * len(snaps)
    if len(dims) != len(snaps):
        raise ValueError("need one dimension per snapshot")
    points, signatures = [], []
    for t, a in enumerate(snaps):
        p, sig = _signed_symmetric_embedding(a, dims[t], seed)
        points.append(p)
        signatures.append(sig)
    return Embedding(points=points, method="independent", signatures=signatures)


def history_weights(t_index: int, scheme: str, *, forgetting: float = 0.5, window: int = 3) -> np.ndarray:
    """Normalized weights over snapshots 0..t_index for one smoothing scheme.

    Returned array w has w[s] multiplying snapshot s, sum(w) == 1. Schemes:
    "constant" (flat average of the full history), "exponential" (geometric
    decay by the forgetting factor, newest snapshot heaviest), "window" (flat
    over the last ``window`` snapshots). Near the start of the series fewer
    snapshots exist than a scheme nominally spans; the available weights are
    rescaled to keep the total at 1.
    """
    length = t_index + 1
    if scheme == "constant":
        raw = np.ones(length)
    elif scheme == "exponential":
        if not 0 < forgetting <= 1:
            raise ValueError("forgetting factor must lie in (0, 1]")
        lags = np.arange(length - 1, -1, -1)  # lag of each snapshot s = t - s
        raw = (1.0 - forgetting) ** lags
    elif scheme == "window":
        if window < 1:
            raise ValueError("window must be at least 1")
        raw = np.zeros(length)
        raw[max(0, length - window) :] = 1.0
    else:
        raise ValueError(f"unknown smoothing scheme {scheme!r}")
    return raw / raw.sum()


def separate_embed(
    series,
    dims,
    seed: int = 0,
    *,
    scheme: str = "exponential",
    forgetting: float = 0.5,
    window: int = 3,
) -> Embedding:
    """Embed each snapshot's smoothed history separately.

    Snapshot t is replaced by the weighted average of snapshots 0..t under
    :func:`history_weights`, then spectrally embedded on its own.
    """
    snaps = [sp.csr_matrix(a) for a in _as_snapshot_list(series)]
    if np.isscalar(dims):
        dims = [int(dims)] * len(snaps)
    if len(dims) != len(snaps):
        raise ValueError("need one dimension per snapshot")
    points, signatures = [], []
    for t in range(len(snaps)):
        w = history_weights(t, scheme, forgetting=forgetting, window=window)
        blended = sum(w[s] * snaps[s] for s in range(t + 1) if w[s] > 0)
        p, sig = _signed_symmetric_embedding(blended, dims[t], seed)
        points.append(p)
        signatures.append(sig)
    return Embedding(points=points, method=f"separate-{scheme}", signatures=signatures)


def _omnibus_matvec(snaps):
    # (M v)_s = (A_s * sum_t v_t + sum_t A_t v_t) / 2 where v_t are the n-row
    # blocks of v; avoids materializing the (T n) x (T n) matrix
    t_count = len(snaps)
    n = snaps[0].shape[0]

    def matvec(block):
        blocks = [block[t * n : (t + 1) * n] for t in range(t_count)]
        total = sum(blocks)
        sum_av = sum(snaps[t] @ blocks[t] for t in range(t_count))
        out = np.empty_like(block)
        for s in range(t_count):
            out[s * n : (s + 1) * n] = (snaps[s] @ total + sum_av) / 2.0
        return out

    return matvec


def omnibus_matrix(series) -> np.ndarray:
    """Dense pairwise-average block matrix: block (s, t) is (A_s + A_t) / 2."""
    snaps = [np.asarray(sp.csr_matrix(a).todense()) for a in _as_snapshot_list(series)]
    t_count = len(snaps)
    n = snaps[0].shape[0]
    if (t_count * n) ** 2 > memory_budget_entries():
        raise MemoryBudgetError(
            f"omnibus matrix would hold {(t_count * n) ** 2} entries; "
            "raise DYNEMBED_MEMORY_BUDGET or use omnibus_embed directly"
        )
    m = np.empty((t_count * n, t_count * n))
    for s in range(t_count):
        for t in range(t_count):
            m[s * n : (s + 1) * n, t * n : (t + 1) * n] = (snaps[s] + snaps[t]) / 2.0
    return m


def omnibus_embed(series, d: int, seed: int = 0) -> Embedding:
    """Omnibus embedding of all snapshots jointly.

    Builds the (T n) x (T n) matrix whose (s, t) block is the average of
    snapshots s and t, takes its top-d eigenpairs by magnitude and scales the
    eigenvectors by the square-rooted eigenvalue magnitudes. Row block t is
    the snapshot-t point set; all blocks share one coordinate system. The
    (positive, negative) eigenvalue counts are reported as the signature.

    The matrix is materialized when it fits the memory budget; otherwise a
    matrix-free product over the snapshot blocks is used.
    """
    snaps = [sp.csr_matrix(a) for a in _as_snapshot_list(series)]
    t_count = len(snaps)
    n = snaps[0].shape[0]
    side = t_count * n
    if side * side <= memory_budget_entries():
        spec = truncated_eigh(omnibus_matrix(series), d, seed)
    else:
        spec = truncated_eigh(None, d, seed, matvec=_omnibus_matvec(snaps), side=side)
    vectors = spec.vectors.copy()
    # canonical orientation: largest-magnitude entry of each eigenvector
    # positive, matching the convention of the SVD paths
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vectors[:, j] = -col
    scaled = vectors * np.sqrt(np.abs(spec.values))
    points = [scaled[t * n : (t + 1) * n] for t in range(t_count)]
    positive = int(np.sum(spec.values > 0))
    return Embedding(
        points=points,
        method="omnibus",
        signatures=[(positive, d - positive)],
    )


def select_dimension(singular_values: np.ndarray, max_d: int | None = None) -> tuple[int, np.ndarray]:
    """Profile likelihood elbow selection over a singular value scree.

    For each split position q the values are modeled as two Gaussian groups
    with a pooled common variance; the returned dimension maximizes the
    profile log likelihood. Also returns the per-split likelihood curve.
    """
    s = np.asarray(singular_values, dtype=float)
    if max_d is not None:
        s = s[:max_d]
    s = np.sort(s)[::-1]
    m = s.shape[0]
    if m < 2:
        raise ValueError("need at least two singular values")
    curve = np.full(m - 1, -np.inf)
    overall_var = max(np.var(s), 1e-12)
    for q in range(1, m):
        head, tail = s[:q], s[q:]
        pooled = (np.sum((head - head.mean()) ** 2) + np.sum((tail - tail.mean()) ** 2)) / m
        pooled = max(pooled, 1e-12 * overall_var)
        loglik = -0.5 * m * np.log(2 * np.pi * pooled) - 0.5 * m
        curve[q - 1] = loglik
    best = int(np.argmax(curve)) + 1
    return best, curve
