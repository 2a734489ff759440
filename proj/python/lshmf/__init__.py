"""Matrix factorization with neighborhood terms and simLSH Top-K."""

from ._core import (
    DivergenceError,
    Model,
    ParseError,
    Ratings,
    gsm_topk,
    learning_rate,
    mean_overlap,
    minhash_topk,
    pearson,
    planted_clusters,
    random_sparse,
    random_topk,
    rpcos_topk,
    shrunk_similarity,
    simlsh_topk,
    split_holdout,
)
from ._core import run as _run

__all__ = [
    "DivergenceError",
    "Model",
    "ParseError",
    "Ratings",
    "gsm_topk",
    "learning_rate",
    "mean_overlap",
    "minhash_topk",
    "pearson",
    "planted_clusters",
    "random_sparse",
    "random_topk",
    "rpcos_topk",
    "run",
    "shrunk_similarity",
    "simlsh_topk",
    "split_holdout",
]


def run(train, test=(), **settings):
    """Train on `train` and score `test` (a (rows, cols, values) tuple).

    Keyword arguments are config keys, e.g. ``run(tr, te, preset="ml100k-full", epochs=20)``.
    """
    return _run(train, tuple(test), {k: str(v) for k, v in settings.items()})
