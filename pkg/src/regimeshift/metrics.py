"""Segmentation, forecasting and classification scores."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .probability import ContractError


def _pair(a, b, min_len=0):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ContractError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise ContractError(f"need at least {min_len} labels")
    return a, b


def contingency(a, b) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def aligned_accuracy(pred, truth) -> float:
    """Best one-to-one relabeling of ``pred`` onto ``truth`` (Hungarian on the contingency table)."""
    pred, truth = _pair(pred, truth, 1)
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.size)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    a, b = _pair(a, b)
    n = a.size
    table = contingency(a, b)
    ha, hb = _entropy(table.sum(axis=1), n), _entropy(table.sum(axis=0), n)
    if ha == 0.0 or hb == 0.0:
        return 1.0 if (ha == 0.0 and hb == 0.0) else 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / n ** 2
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return float(np.clip(mi / (0.5 * (ha + hb)), 0.0, 1.0))


def _pairs(counts) -> int:
    return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(counts))


def ari(a, b) -> float:
    """Adjusted Rand index from exact integer pair counts (one rounding at the final division)."""
    a, b = _pair(a, b, 2)
    table = contingency(a, b)
    nz = table > 0
    if np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1):
        return 1.0
    index = _pairs(table)
    sa, sb = _pairs(table.sum(axis=1)), _pairs(table.sum(axis=0))
    n_pairs = _pairs([a.size])
    # (index - sa sb / N) / ((sa + sb) / 2 - sa sb / N), multiplied through by 2N
    num = 2 * (index * n_pairs - sa * sb)
    den = (sa + sb) * n_pairs - 2 * sa * sb
    if den == 0:
        return 0.0
    return num / den


def forecast_scores(pred, target) -> tuple[float, float]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {target.shape}")
    err = pred - target
    return float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err)))


def timeline_accuracy(pred, truth, window: int = 50) -> np.ndarray:
    """Rolling accuracy over the trailing ``window`` steps, one value per step from ``window - 1`` on."""
    if window < 1:
        raise ContractError("window must be at least 1")
    pred, truth = _pair(pred, truth)
    correct = (pred == truth).astype(float)
    if correct.size < window:
        return np.zeros(0)
    c = np.concatenate([[0.0], np.cumsum(correct)])
    return (c[window:] - c[:-window]) / window


@dataclass
class MetricReport:
    accuracy: float | None = None
    nmi: float | None = None
    ari: float | None = None
    rmse: float | None = None
    mae: float | None = None
    timeline: list[float] | None = None
    seed: int | None = None
    config_digest: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("accuracy", "nmi"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if self.ari is not None and not -1.0 <= self.ari <= 1.0:
            raise ContractError("ari must lie in [-1, 1]")
        for name in ("rmse", "mae"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ContractError(f"{name} must be non-negative")

    @classmethod
    def segmentation(cls, pred, truth, **kw) -> "MetricReport":
        return cls(accuracy=aligned_accuracy(pred, truth), nmi=nmi(pred, truth), ari=ari(pred, truth), **kw)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None and v != {}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
