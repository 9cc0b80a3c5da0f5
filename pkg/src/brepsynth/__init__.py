"""brepsynth: hierarchical generation of boundary-representation solids.

Two topology models (a sequence VAE over face-adjacency counts and an
autoregressive half-edge pointer decoder) and four diffusion denoisers
generate a solid level by level; the package also carries the B-rep data
model, canonical topology serializations, validity checking,
post-processing, a synthetic training corpus and the evaluation metrics.
"""

__version__ = "0.1.0"

from .brep import BrepModel, EdgeCurve, EdgeFaceTable, EdgeVertexTable, FaceSurface, Aabb

__all__ = [
    "BrepModel",
    "EdgeCurve",
    "EdgeFaceTable",
    "EdgeVertexTable",
    "FaceSurface",
    "Aabb",
    "__version__",
]
