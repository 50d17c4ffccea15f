"""SE(3)-equivariant geometry-complete graph networks on a small numpy autodiff core."""

from .diffcore import ParamStore, Tensor, adam_step, backward
from .gcp import GCP, GcpConfig, Geometry, ResGCP, ScalarVector
from .gcpconv import ConvConfig, GCPConv
from .geomkit import GeoGraph
from .model import GCPNet, GraphBatch, ModelConfig, TaskOutput

__all__ = [
    "ConvConfig", "GCP", "GCPConv", "GCPNet", "GcpConfig", "GeoGraph", "Geometry", "GraphBatch",
    "ModelConfig", "ParamStore", "ResGCP", "ScalarVector", "TaskOutput", "Tensor", "adam_step", "backward",
]
