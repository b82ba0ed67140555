"""Meta-path recommender: LightGCN main view, masked autoencoder views, contrastive alignment."""
from .ablation import VARIANTS, ablation_config, run_ablation
from .bae import BAEConfig
from .datasets import planted_hetero_graph
from .dcl import DCLConfig
from .estimator import IHGCLRecommender, LightGCNRecommender
from .evaluation import EvalReport, evaluate, ndcg_at_k, recall_at_k, sparsity_report
from .graphdata import (
    HeteroGraph,
    InteractionMatrix,
    MetaPathSubgraph,
    load_hetero_graph,
    parse_metapath,
    select_model_subgraphs,
)
from .trainer import ModelData, TrainConfig, build_model_data, embeddings, fit

__version__ = "0.1.0"

__all__ = [
    "BAEConfig",
    "DCLConfig",
    "EvalReport",
    "HeteroGraph",
    "IHGCLRecommender",
    "InteractionMatrix",
    "LightGCNRecommender",
    "MetaPathSubgraph",
    "ModelData",
    "TrainConfig",
    "VARIANTS",
    "ablation_config",
    "build_model_data",
    "embeddings",
    "evaluate",
    "fit",
    "load_hetero_graph",
    "ndcg_at_k",
    "parse_metapath",
    "planted_hetero_graph",
    "recall_at_k",
    "run_ablation",
    "select_model_subgraphs",
    "sparsity_report",
]
