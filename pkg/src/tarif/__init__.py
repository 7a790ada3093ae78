"""High-rank, low-entropy linear attention for graphs, with the diagnostics
and Monte-Carlo oracles that verify its analytical claims at desk scale."""

__version__ = "0.1.0"

from .attention import kernel_map, linear_attention, sharpen, softmax_attention
from .diagnostics import attention_entropy, pse
from .graphs import Graph, SbmSpec, generate_sbm, load_edge_list, load_graph, save_graph, split
from .linalg import RankEstimate, matmul, numerical_rank, row_normalize, scatter_trace
from .metrics import accuracy, roc_auc
from .model import Model, TarifConfig, gat_branch, hybrid_layer, load_checkpoint, save_checkpoint
from .train import TrainConfig, ablation_sweep, train

__all__ = [
    "__version__",
    "Graph", "SbmSpec", "generate_sbm", "load_edge_list", "load_graph", "save_graph", "split",
    "RankEstimate", "matmul", "numerical_rank", "row_normalize", "scatter_trace",
    "kernel_map", "sharpen", "linear_attention", "softmax_attention",
    "pse", "attention_entropy",
    "accuracy", "roc_auc",
    "Model", "TarifConfig", "gat_branch", "hybrid_layer", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "train", "ablation_sweep",
]
