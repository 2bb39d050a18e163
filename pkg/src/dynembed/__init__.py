"""Stable spectral embedding of dynamic networks.

Core pieces:

- :mod:`dynembed.netseries`: adjacency snapshot containers and edge-list ingestion.
- :mod:`dynembed.models`: dynamic stochastic block model simulators.
- :mod:`dynembed.mrdpg`: finite-support multilayer random dot product graphs,
  noise-free embeddings and asymptotic error covariances.
- :mod:`dynembed.embedders`: unfolded, omnibus, independent and smoothed
  spectral embedders.
- :mod:`dynembed.stability`: longitudinal/cross-sectional stability diagnostics.
- :mod:`dynembed.cluster`: Gaussian mixture clustering with BIC model selection.
- :mod:`dynembed.cli`: reproducible command line pipelines.
"""

__version__ = "0.1.0"

from .embedders import Embedding, independent_ase, omnibus_embed, separate_embed, uase
from .netseries import GraphSeries, ingest_edge_list
from .models import DsbmSpec, sample_dsbm

__all__ = [
    "Embedding",
    "GraphSeries",
    "DsbmSpec",
    "uase",
    "omnibus_embed",
    "independent_ase",
    "separate_embed",
    "ingest_edge_list",
    "sample_dsbm",
]
