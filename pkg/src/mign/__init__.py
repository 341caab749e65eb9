"""Mesh interpolation graph network for station weather forecasting."""

from .geo import EdgeList, GeoCoord, great_circle_distance, knn_edges, make_geo
from .healpix import HealpixMesh, build_mesh, mesh_graph, mesh_node_count
from .model import MignModel, ModelConfig, forward, temporal_forward
from .sh import real_sh, sh_basis, sh_embed
from .snapshot import Sample, StationSnapshot
from .training import TrainConfig, train

__all__ = [
    "EdgeList", "GeoCoord", "great_circle_distance", "knn_edges", "make_geo",
    "HealpixMesh", "build_mesh", "mesh_graph", "mesh_node_count",
    "MignModel", "ModelConfig", "forward", "temporal_forward",
    "real_sh", "sh_basis", "sh_embed",
    "Sample", "StationSnapshot",
    "TrainConfig", "train",
]
