"""flexcast: inductive per-station cellular traffic forecasting.

Per-station predictions come from the station's k-hop proximity subgraph:
each node's traffic history runs through dilated causal convolutions, layers
of GIN-style sum aggregation fuse the neighborhood, and a two-step readout
produces the multi-horizon forecast.  Training, transfer, and evaluation are
exposed both as a library and through the `flexcast` command.
"""

__version__ = "0.1.0"

from .data import SplitSpec
from .graph import StationMap, build_proximity_graph, edge_dropout, khop_subgraph
from .model import ModelConfig, count_parameters, forward, init_parameters
from .training import TrainConfig, finetune, train

__all__ = [
    "ModelConfig",
    "SplitSpec",
    "StationMap",
    "TrainConfig",
    "build_proximity_graph",
    "count_parameters",
    "edge_dropout",
    "finetune",
    "forward",
    "init_parameters",
    "khop_subgraph",
    "train",
    "__version__",
]
