"""Cellular sheaves on graphs: Laplacians, diffusion, learned sheaf models."""

from .graph import Graph, LabeledDataset, load_dataset, load_edge_list
from .laplacian import BlockMatrix, NormalizationKind, NormKind, assemble, normalize
from .sheaf import Family, Sheaf, random_bundle, transport, trivial_sheaf

__version__ = "0.1.0"

__all__ = [
    "BlockMatrix", "Family", "Graph", "LabeledDataset", "NormKind", "NormalizationKind", "Sheaf",
    "assemble", "load_dataset", "load_edge_list", "normalize", "random_bundle", "transport",
    "trivial_sheaf",
]
