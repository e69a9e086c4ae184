"""Hierarchical building-layout autoencoding: SGD trees, tree-LSTM autoencoder, latent GMM, metrics."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AETreeError, ComponentCollapse, DegenerateFootprintError, DegenerateParentError,
    DegenerateShapeError, InvalidArgument, SchemaError, TrainingDiverged,
)
from .geometry import Cuboid, min_bounding_rect, overlap_area  # noqa: E402
from .tree import LayoutSet, SgdWeights, SpatialTree, build_tree, sgd_distance  # noqa: E402
