"""Dynamic stochastic block model specification and sampling.

A model is a sequence of K x K symmetric inter-community probability
matrices, one per time point, together with community memberships (fixed or
time-varying), optional per-node degree weights and a global sparsity factor.
Edge probabilities are

    P_t[i, j] = rho * w_i * w_j * B_t[z_i(t), z_j(t)]

and snapshots are independent Bernoulli draws on the upper triangle,
symmetrized, with an empty diagonal.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .netseries import GraphSeries


@dataclass
class DsbmSpec:
    """Parameters of a dynamic stochastic block model.

    block_matrices: list of (K, K) symmetric matrices, entries in [0, 1].
    n_nodes: number of nodes.
    memberships: (T, n) or (n,) integer community labels in [0, K); a 1-d
        array means the same labels at every time. None distributes nodes
        over communities in equal contiguous blocks.
    degree_weights: optional (n,) positive multipliers w_i.
    rho: global sparsity factor in (0, 1].
    """

    block_matrices: list
    n_nodes: int
    memberships: np.ndarray | None = None
    degree_weights: np.ndarray | None = None
    rho: float = 1.0

    n_communities: int = field(init=False)
    n_snapshots: int = field(init=False)

    def __post_init__(self):
        self.block_matrices = [np.asarray(b, dtype=float) for b in self.block_matrices]
        if not self.block_matrices:
            raise ValueError("need at least one block matrix")
        k = self.block_matrices[0].shape[0]
        for b in self.block_matrices:
            if b.shape != (k, k):
                raise ValueError("all block matrices must be K x K with the same K")
            if not np.allclose(b, b.T):
                raise ValueError("block matrices must be symmetric")
            if np.any(b < 0) or np.any(b > 1):
                raise ValueError("block probabilities must lie in [0, 1]")
        self.n_communities = k
        self.n_snapshots = len(self.block_matrices)
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")

        if self.memberships is None:
            # equal contiguous blocks, remainder spread over the first groups
            base = np.repeat(np.arange(k), self.n_nodes // k)
            extra = np.arange(self.n_nodes - base.shape[0]) % k
            z = np.sort(np.concatenate([base, extra]))
            self.memberships = np.tile(z, (self.n_snapshots, 1))
        else:
            z = np.asarray(self.memberships, dtype=int)
            if z.ndim == 1:
                z = np.tile(z, (self.n_snapshots, 1))
            if z.shape != (self.n_snapshots, self.n_nodes):
                raise ValueError(
                    f"memberships must be ({self.n_snapshots}, {self.n_nodes}), got {z.shape}"
                )
            if z.min() < 0 or z.max() >= k:
                raise ValueError("membership labels out of range")
            self.memberships = z

        if self.degree_weights is not None:
            w = np.asarray(self.degree_weights, dtype=float)
            if w.shape != (self.n_nodes,):
                raise ValueError("degree_weights must have one entry per node")
            if np.any(w <= 0):
                raise ValueError("degree_weights must be positive")
            self.degree_weights = w

    def gram_matrix(self, t: int) -> np.ndarray:
        """Edge probability matrix P_t (dense, zero diagonal kept nonzero:
        the diagonal is defined by the same formula but never sampled)."""
        z = self.memberships[t]
        p = self.block_matrices[t][np.ix_(z, z)]
        if self.degree_weights is not None:
            p = p * np.outer(self.degree_weights, self.degree_weights)
        p = self.rho * p
        if np.any(p > 1.0 + 1e-12):
            raise ValueError("edge probabilities exceed 1; lower rho or weights")
        return np.clip(p, 0.0, 1.0)

    def gram_matrices(self) -> list:
        return [self.gram_matrix(t) for t in range(self.n_snapshots)]


def sample_adjacency(p: np.ndarray, seed: int, stream: int = 0) -> sp.csr_matrix:
    """One symmetric Bernoulli(p) adjacency draw with an empty diagonal.

    Uses a counter-based generator keyed by (seed, stream) so snapshots of a
    series can be drawn independently yet reproducibly.
    """
    n = p.shape[0]
    if p.shape != (n, n):
        raise ValueError("p must be square")
    rng = np.random.Generator(np.random.Philox(key=(seed, stream)))
    iu = np.triu_indices(n, k=1)
    draws = rng.random(iu[0].shape[0]) < p[iu]
    rows = iu[0][draws]
    cols = iu[1][draws]
    data = np.ones(rows.shape[0])
    a = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return a + a.T


def sample_dsbm(spec: DsbmSpec, seed: int = 0) -> GraphSeries:
    """Draw a snapshot sequence from the model; snapshot t uses stream t."""
    snaps = [
        sample_adjacency(spec.gram_matrix(t), seed, stream=t)
        for t in range(spec.n_snapshots)
    ]
    return GraphSeries(snapshots=snaps)


def _parse_matrix(raw: str) -> np.ndarray:
    rows = [r.strip() for r in raw.strip().splitlines() if r.strip()]
    return np.array([[float(x) for x in r.replace(",", " ").split()] for r in rows])


def load_dsbm_config(path) -> DsbmSpec:
    """Read a model from an ini-style config file.

    Layout::

        [model]
        n_nodes = 1000
        rho = 1.0
        # optional: memberships = 0 0 1 1 2 ...  (one label per node)
        # optional: degree_weights = path or inline numbers

        [snapshot.1]
        block_matrix =
            0.08 0.02
            0.02 0.20

        [snapshot.2]
        ...

    Snapshot sections are ordered by their numeric suffix.
    """
    cp = configparser.ConfigParser()
    read = cp.read(path, encoding="utf-8")
    if not read:
        raise FileNotFoundError(path)
    if "model" not in cp:
        raise ValueError("config needs a [model] section")
    model = cp["model"]
    n_nodes = model.getint("n_nodes")
    if n_nodes is None or n_nodes <= 0:
        raise ValueError("n_nodes must be a positive integer")
    rho = model.getfloat("rho", fallback=1.0)

    snapshot_sections = []
    for name in cp.sections():
        if name.startswith("snapshot."):
            try:
                order = int(name.split(".", 1)[1])
            except ValueError:
                raise ValueError(f"bad snapshot section name {name!r}") from None
            snapshot_sections.append((order, name))
    if not snapshot_sections:
        raise ValueError("config needs at least one [snapshot.N] section")
    snapshot_sections.sort()
    blocks = [_parse_matrix(cp[name]["block_matrix"]) for _, name in snapshot_sections]

    memberships = None
    if "memberships" in model:
        memberships = np.array([int(x) for x in model["memberships"].split()])
    weights = None
    if "degree_weights" in model:
        weights = np.array([float(x) for x in model["degree_weights"].split()])

    return DsbmSpec(
        block_matrices=blocks,
        n_nodes=n_nodes,
        memberships=memberships,
        degree_weights=weights,
        rho=rho,
    )


def bundled_config_path(name: str) -> Path:
    """Path of a config file shipped with the package."""
    path = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return path
