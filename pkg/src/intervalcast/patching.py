"""Inference-time composition of per-cell predictions for an arbitrary interval.

Two strategies over the partition cells that intersect the query: a
confidence-weighted average of the cells' regression outputs, and the single
output of the most confident cell. A cell's scalar confidence is the mean of
its tau x n probability head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfidenceError, UnsupportedQueryError
from .intervals import DiscretePartition, FULL_DOMAIN, Interval, intersecting
from .models import ModelParams, forward, forward_batch
from .training import PolicyConfig

STRATEGY_AVERAGE = "avg"
STRATEGY_MAXCONF = "max"
STRATEGIES = (STRATEGY_AVERAGE, STRATEGY_MAXCONF)

CONFIDENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class PatchRequest:
    """One patched-forecast request over a trained partition."""

    history: np.ndarray
    query: Interval
    partition: DiscretePartition
    strategy: str = STRATEGY_AVERAGE

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UnsupportedQueryError(
                f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}"
            )


@dataclass
class PatchTrace:
    """Diagnostic record of one patching call."""

    cells: list[Interval]
    confidences: list[float]
    predictions: list[np.ndarray]
    final: np.ndarray


def _cell_outputs(
    params: ModelParams, history: np.ndarray, cells: list[Interval]
) -> tuple[np.ndarray, np.ndarray]:
    """Regression outputs (L, tau, n) and scalar confidences (L,) per cell."""
    h = np.asarray(history, dtype=np.float64)
    reg, prob = forward_batch(params, np.repeat(h[None, ...], len(cells), axis=0), cells)
    return reg, prob.mean(axis=(1, 2))


def patch_average(
    params: ModelParams, request: PatchRequest
) -> tuple[np.ndarray, PatchTrace]:
    """Confidence-weighted average of the intersecting cells' predictions.

    The result is clamped to the contributing cells' per-entry min/max
    envelope, which the exact weighted mean lies in; the clamp only guards
    against float rounding at the envelope boundary.
    """
    cells = intersecting(request.partition, request.query)
    reg, conf = _cell_outputs(params, request.history, cells)
    if conf.max() <= CONFIDENCE_FLOOR:
        raise DegenerateConfidenceError(
            f"no cell claims the input for query {request.query}: "
            f"all confidences <= {CONFIDENCE_FLOOR}"
        )
    weights = conf / conf.sum()
    pred = (weights[:, None, None] * reg).sum(axis=0)
    pred = np.clip(pred, reg.min(axis=0), reg.max(axis=0))
    trace = PatchTrace(cells, [float(c) for c in conf], list(reg), pred)
    return pred, trace


def patch_maxconf(
    params: ModelParams, request: PatchRequest
) -> tuple[np.ndarray, PatchTrace]:
    """Prediction of the single highest-confidence cell; ties go to the lower cell."""
    cells = intersecting(request.partition, request.query)
    reg, conf = _cell_outputs(params, request.history, cells)
    if conf.max() <= CONFIDENCE_FLOOR:
        raise DegenerateConfidenceError(
            f"no cell claims the input for query {request.query}: "
            f"all confidences <= {CONFIDENCE_FLOOR}"
        )
    idx = int(np.argmax(conf))  # argmax returns the first (lowest) cell on ties
    pred = reg[idx].copy()
    trace = PatchTrace(cells, [float(c) for c in conf], list(reg), pred)
    return pred, trace


def forecast(
    params: ModelParams,
    policy: PolicyConfig,
    history: np.ndarray,
    query: Interval,
    strategy: str = STRATEGY_AVERAGE,
) -> np.ndarray:
    """Policy-aware dispatch from a query interval to a tau x n forecast.

    The baseline ignores the query; the task-specific policy serves only its
    training interval; the continuous policy conditions directly on the
    query; the discretized policy serves exact partition cells only; the
    patching-augmented policy composes cells with the requested strategy.
    """
    kind = policy.kind
    if kind == "b":
        return forward(params, history, FULL_DOMAIN).regression
    if kind == "e2e":
        if query != policy.task_interval:
            raise UnsupportedQueryError(
                f"task-specific model trained for {policy.task_interval} "
                f"cannot serve query {query}"
            )
        return forward(params, history, query).regression
    if kind == "c":
        return forward(params, history, query).regression
    if kind == "d":
        for cell in policy.partition.intervals:
            if cell == query:
                return forward(params, history, cell).regression
        raise UnsupportedQueryError(
            f"query {query} is not a training cell of the L={policy.partition.L} "
            f"partition; train the dstar policy for arbitrary intervals"
        )
    request = PatchRequest(history, query, policy.partition, strategy)
    if strategy == STRATEGY_AVERAGE:
        return patch_average(params, request)[0]
    return patch_maxconf(params, request)[0]
