"""
Verification metrics on distance scores (lower distance = more genuine).

AUC is exact: the Mann-Whitney U of the impostor scores over the genuine ones,
with ties counting one half. The Wilcoxon rank-sum p-value tests the one-sided
alternative that impostor distances are larger.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import norm, rankdata, tiecorrect

from behavepass.core.errors import InsufficientDataError

logger = logging.getLogger(__name__)

EXACT_LIMIT = 12
P_FLOOR = np.finfo(np.float64).tiny


def _samples(genuine: Sequence[float], impostor: Sequence[float]):
    g = np.asarray(genuine, dtype=np.float64).ravel()
    i = np.asarray(impostor, dtype=np.float64).ravel()
    if len(g) == 0 or len(i) == 0:
        raise InsufficientDataError(f"need genuine and impostor scores, got {len(g)} and {len(i)}")
    return g, i


def auc(genuine: Sequence[float], impostor: Sequence[float]) -> float:
    """AUC in percent: P(genuine < impostor) + 0.5 * P(tie), times 100."""
    g, i = _samples(genuine, impostor)
    ranks = rankdata(np.concatenate([g, i]))
    u_impostor = ranks[len(g) :].sum() - len(i) * (len(i) + 1) / 2.0
    return float(100.0 * u_impostor / (len(g) * len(i)))


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Acceptance rates at thresholds -inf, every distinct score, +inf (accept when distance <= threshold)."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    @property
    def auc_percent(self) -> float:
        return float(100.0 * np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def rates_at(genuine: Sequence[float], impostor: Sequence[float], thresholds: np.ndarray):
    """(fpr, tpr) when accepting every distance <= each threshold."""
    g, i = _samples(genuine, impostor)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    tpr = np.searchsorted(np.sort(g), thresholds, side="right") / len(g)
    fpr = np.searchsorted(np.sort(i), thresholds, side="right") / len(i)
    return fpr, tpr


def roc_curve(genuine: Sequence[float], impostor: Sequence[float]) -> RocCurve:
    g, i = _samples(genuine, impostor)
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([g, i])), [np.inf]])
    fpr, tpr = rates_at(g, i, thresholds)
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr)


class WilcoxonResult(BaseModel):
    statistic: float = Field(..., description="Rank sum of the impostor sample")
    p_value: float = Field(..., gt=0.0, le=1.0)
    method: str = Field(..., description="exact | normal")
    degenerate: bool = Field(False, description="All values identical, no evidence either way")


def wilcoxon_rank_sum(genuine: Sequence[float], impostor: Sequence[float], method: str = "auto") -> WilcoxonResult:
    """
    One-sided rank-sum test that impostor distances tend to be larger.

    Midranks handle ties. Up to 12 values in total the p-value is the exact
    permutation tail, found by enumerating every assignment of ranks to the
    impostor sample. Larger samples use the normal approximation of U with the
    tie-corrected variance and a 0.5 continuity correction. ``method`` forces
    "exact" or "normal".
    """
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method '{method}'")
    g, i = _samples(genuine, impostor)
    values = np.concatenate([g, i])
    ranks = rankdata(values)
    n1, n2 = len(g), len(i)
    n = n1 + n2
    statistic = float(ranks[n1:].sum())

    exact = method == "exact" or (method == "auto" and n <= EXACT_LIMIT)
    if np.all(values == values[0]):
        logger.warning("Rank-sum test on identical values; reporting p = 1")
        return WilcoxonResult(statistic=statistic, p_value=1.0, method="exact" if exact else "normal", degenerate=True)

    if exact:
        sums = np.array([ranks[list(c)].sum() for c in itertools.combinations(range(n), n2)])
        p = float(np.count_nonzero(sums >= statistic - 1e-9) / len(sums))
        return WilcoxonResult(statistic=statistic, p_value=p, method="exact")

    u = statistic - n2 * (n2 + 1) / 2.0
    mean = n1 * n2 / 2.0
    sigma = np.sqrt(tiecorrect(ranks) * n1 * n2 * (n + 1) / 12.0)
    z = (u - mean - 0.5) / sigma
    p = float(np.clip(norm.sf(z), P_FLOOR, 1.0))
    return WilcoxonResult(statistic=statistic, p_value=p, method="normal")


class EvalResult(BaseModel):
    """AUC and rank-sum p-value of one task, subset and scenario on one split."""

    split: str
    task: str
    subset: str
    scenario: str
    auc_percent: float = Field(..., ge=0.0, le=100.0)
    wilcoxon_p: float = Field(..., gt=0.0, le=1.0)
    wilcoxon_method: str
    degenerate: bool = False
    n_genuine: int
    n_impostor: int
    excluded_users: int = 0


def evaluate(
    genuine: Sequence[float],
    impostor: Sequence[float],
    split: str,
    task: str,
    subset: str,
    scenario: str,
    excluded_users: int = 0,
) -> Optional[EvalResult]:
    """EvalResult of one distribution pair; None when either side is empty."""
    if len(genuine) == 0 or len(impostor) == 0:
        logger.warning(f"{split} {task} {subset} {scenario}: empty distribution, skipped")
        return None
    test = wilcoxon_rank_sum(genuine, impostor)
    return EvalResult(
        split=split,
        task=task,
        subset=subset,
        scenario=scenario,
        auc_percent=auc(genuine, impostor),
        wilcoxon_p=test.p_value,
        wilcoxon_method=test.method,
        degenerate=test.degenerate,
        n_genuine=len(genuine),
        n_impostor=len(impostor),
        excluded_users=excluded_users,
    )
