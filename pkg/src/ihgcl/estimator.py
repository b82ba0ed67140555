"""scikit-learn style front-end over the trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import check_indices, check_pairs, check_positive_int
from .evaluation import evaluate, topk_items
from .graphdata import InteractionMatrix
from .trainer import ModelData, TrainConfig, build_model_data, embeddings, fit

_BAE_KEYS = ("p", "encoder_layers", "decoder_layers", "beta", "temperature", "edge_threshold", "sample_count")
_DCL_KEYS = ("tau_icl", "tau_iicl", "lambda_icl", "lambda_iicl")


class IHGCLRecommender(BaseEstimator):
    """Recommender over (user, item) interaction pairs plus four meta-path views.

    ``fit`` takes the subgraphs in the order user view 1, user view 2, item
    view 1, item view 2 (see :func:`graphdata.select_model_subgraphs`).
    """

    def __init__(
        self,
        model="ihgcl",
        d=64,
        n_layers=2,
        lr=0.001,
        batch_size=4096,
        epochs=300,
        batches_per_epoch=0,
        lambda1=0.1,
        lambda2=1e-4,
        p=0.2,
        encoder_layers=1,
        decoder_layers=1,
        beta=0.01,
        temperature=1.0,
        edge_threshold=0.3,
        sample_count=1,
        tau_icl=0.2,
        tau_iicl=0.2,
        lambda_icl=0.01,
        lambda_iicl=0.05,
        use_bae=True,
        edge_sampling=True,
        valid_ratio=0.1,
        early_stop_patience=20,
        eval_every=1,
        seed=2024,
    ):
        self.model = model
        self.d = d
        self.n_layers = n_layers
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.batches_per_epoch = batches_per_epoch
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.p = p
        self.encoder_layers = encoder_layers
        self.decoder_layers = decoder_layers
        self.beta = beta
        self.temperature = temperature
        self.edge_threshold = edge_threshold
        self.sample_count = sample_count
        self.tau_icl = tau_icl
        self.tau_iicl = tau_iicl
        self.lambda_icl = lambda_icl
        self.lambda_iicl = lambda_iicl
        self.use_bae = use_bae
        self.edge_sampling = edge_sampling
        self.valid_ratio = valid_ratio
        self.early_stop_patience = early_stop_patience
        self.eval_every = eval_every
        self.seed = seed

    def to_config(self) -> TrainConfig:
        params = self.get_params()
        raw = {k: v for k, v in params.items() if k not in _BAE_KEYS + _DCL_KEYS}
        raw["bae"] = {k: params[k] for k in _BAE_KEYS}
        raw["dcl"] = {k: params[k] for k in _DCL_KEYS}
        return TrainConfig.from_dict(raw)

    def fit(self, X, y=None, subgraphs=(), n_users=None, n_items=None):
        pairs = check_pairs(X)
        if len(pairs) == 0:
            raise ValueError("no interactions to fit")
        n_users = check_positive_int(n_users if n_users is not None else pairs[:, 0].max() + 1, "n_users")
        n_items = check_positive_int(n_items if n_items is not None else pairs[:, 1].max() + 1, "n_items")
        pairs = check_pairs(pairs, n_users, n_items)
        cfg = self.to_config()
        train = InteractionMatrix(n_users, n_items, pairs)
        self.data_: ModelData = build_model_data(train, tuple(subgraphs), cfg)
        state = fit(self.data_, cfg)
        self.params_ = state.final_params()
        self.n_epochs_ = state.epoch
        self.best_valid_recall_ = state.best_metric
        self.n_users_ = n_users
        self.n_items_ = n_items
        self.user_embedding_, self.item_embedding_ = embeddings(self.params_, self.data_, cfg)
        return self

    def _seen(self) -> InteractionMatrix:
        return self.data_.observed()

    def transform(self, users):
        """Final user representations for ``users``."""
        check_is_fitted(self, "user_embedding_")
        users = check_indices(users, self.n_users_, "user index")
        return self.user_embedding_[users]

    def predict(self, X):
        """Inner-product scores for (user, item) pairs."""
        check_is_fitted(self, "user_embedding_")
        pairs = check_pairs(X, self.n_users_, self.n_items_)
        return np.einsum("nd,nd->n", self.user_embedding_[pairs[:, 0]], self.item_embedding_[pairs[:, 1]])

    def recommend(self, users, k=20, exclude_seen=True):
        """Top-``k`` item lists; -1 pads users with fewer than ``k`` candidates."""
        check_is_fitted(self, "user_embedding_")
        users = check_indices(users, self.n_users_, "user index")
        k = check_positive_int(k, "k")
        exclude = self._seen() if exclude_seen else None
        return topk_items(self.user_embedding_, self.item_embedding_, users, exclude, k)

    def score(self, X, y=None, k=20):
        """Recall@``k`` on held-out pairs ``X``, excluding the fitted interactions."""
        check_is_fitted(self, "user_embedding_")
        test = InteractionMatrix(self.n_users_, self.n_items_, check_pairs(X, self.n_users_, self.n_items_))
        report = evaluate(self.user_embedding_, self.item_embedding_, test, self._seen(), ks=(k,))
        return report.recall(k)


class LightGCNRecommender(IHGCLRecommender):
    """The main view alone, trained with BPR."""

    def __init__(self, d=64, n_layers=2, lr=0.001, batch_size=4096, epochs=300, batches_per_epoch=0,
                 lambda2=1e-4, valid_ratio=0.1, early_stop_patience=20, eval_every=1, seed=2024):
        super().__init__(
            model="lightgcn", d=d, n_layers=n_layers, lr=lr, batch_size=batch_size, epochs=epochs,
            batches_per_epoch=batches_per_epoch, lambda1=0.0, lambda2=lambda2, lambda_icl=0.0,
            lambda_iicl=0.0, valid_ratio=valid_ratio, early_stop_patience=early_stop_patience,
            eval_every=eval_every, seed=seed,
        )

    def to_config(self) -> TrainConfig:
        return TrainConfig.from_dict({
            "model": "lightgcn", "d": self.d, "n_layers": self.n_layers, "lr": self.lr,
            "batch_size": self.batch_size, "epochs": self.epochs, "batches_per_epoch": self.batches_per_epoch,
            "lambda1": 0.0, "lambda2": self.lambda2, "valid_ratio": self.valid_ratio,
            "early_stop_patience": self.early_stop_patience, "eval_every": self.eval_every, "seed": self.seed,
            "dcl": {"lambda_icl": 0.0, "lambda_iicl": 0.0},
        })


__all__ = ["IHGCLRecommender", "LightGCNRecommender", "NotFittedError"]
