"""Sequential grid search: tune one parameter group at a time, fix the winner, move on."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .config import TrainConfig


@dataclass
class SearchResult:
    config: TrainConfig
    trace: list[tuple[dict, float]] = field(default_factory=list)


def _candidates(grid: Mapping[str, Sequence]) -> list[dict]:
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]


def sequential_grid_search(family: str, param_plan: Sequence[Mapping[str, Sequence]], train, val,
                           base: TrainConfig | None = None, beta: float = 1.0,
                           fit: Callable | None = None, score: Callable | None = None) -> SearchResult:
    """Walk ``param_plan`` in order; each grid is a mapping of parameter -> candidate values.

    ``train`` and ``val`` are ``(X, Y)`` pairs.  ``fit(cfg, train, val)`` returns a
    model and ``score(model, val, cfg)`` a number to maximise; by default the
    model is trained with :func:`dorclass.models.fit` and scored by validation
    macro f-beta.  Ties go to the earlier candidate.
    """
    if not param_plan:
        raise ValueError("param_plan is empty")
    from ..evaluate import confusion, macro_scores
    from . import fit as default_fit
    from . import predict

    cfg = base.replace(family=family) if base is not None else TrainConfig(family=family)
    if fit is None:
        def fit(c, tr, va):
            return default_fit(tr[0], tr[1], c, val=va)
    if score is None:
        def score(model, va, c):
            return macro_scores(confusion(np.asarray(va[1]), predict(model, va[0], c.threshold)), beta)[1]

    trace: list[tuple[dict, float]] = []
    for grid in param_plan:
        best_params, best_score = None, -np.inf
        for params in _candidates(grid):
            candidate = cfg.replace(**params)
            value = float(score(fit(candidate, train, val), val, candidate))
            trace.append((candidate.to_json(), value))
            if value > best_score:
                best_params, best_score = params, value
        cfg = cfg.replace(**best_params)
    return SearchResult(cfg, trace)
