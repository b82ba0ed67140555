"""Ablation variants of the full model and a runner that trains and evaluates one."""
from __future__ import annotations

from .evaluation import DEFAULT_KS, EvalReport, evaluate
from .graphdata import InteractionMatrix
from .trainer import ModelData, TrainConfig, TrainState, embeddings, fit

VARIANTS = ("full", "wo_dcl", "wo_bae", "wo_ib", "wo_icl", "wo_iicl", "lightgcn")


class UnknownVariantError(ValueError):
    pass


def ablation_config(variant: str, cfg: TrainConfig) -> TrainConfig:
    """Config for ``variant`` derived from the full-model config ``cfg``.

    ``lightgcn`` is the plain main-view baseline with every intent component off.
    """
    if variant == "full":
        return cfg
    if variant == "wo_dcl":
        return cfg.with_updates(dcl={"lambda_icl": 0.0, "lambda_iicl": 0.0})
    if variant == "wo_bae":
        return cfg.with_updates(use_bae=False, lambda1=0.0)
    if variant == "wo_ib":
        return cfg.with_updates(lambda1=0.0, edge_sampling=False)
    if variant == "wo_icl":
        return cfg.with_updates(dcl={"lambda_icl": 0.0})
    if variant == "wo_iicl":
        return cfg.with_updates(dcl={"lambda_iicl": 0.0})
    if variant == "lightgcn":
        return cfg.with_updates(model="lightgcn", lambda1=0.0, dcl={"lambda_icl": 0.0, "lambda_iicl": 0.0})
    raise UnknownVariantError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def run_ablation(
    variant: str,
    cfg: TrainConfig,
    data: ModelData,
    test: InteractionMatrix,
    ks=DEFAULT_KS,
    n_buckets: int = 0,
    log_path=None,
) -> tuple[EvalReport, TrainState]:
    """Train ``variant`` from scratch and evaluate it on ``test``."""
    vcfg = ablation_config(variant, cfg)
    state = fit(data, vcfg, log_path=log_path)
    d_user, d_item = embeddings(state.final_params(), data, vcfg)
    return evaluate(d_user, d_item, test, data.observed(), ks, n_buckets), state


__all__ = ["UnknownVariantError", "VARIANTS", "ablation_config", "run_ablation"]
