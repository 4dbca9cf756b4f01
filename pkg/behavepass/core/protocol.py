"""
Evaluation protocol: session-to-session distance scores, score-level fusion
and the genuine / random-impostor / skilled-impostor distributions.

Sessions 1 and 2 of every user form the enrolment; the verification sessions
(3 and 4) of the same user give the genuine scores, those of one other user
the random-impostor scores, and the two impostor sessions recorded on the
user's own device the skilled-impostor scores.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from behavepass.core import rng as streams
from behavepass.core.errors import ProtocolError
from behavepass.core.features import DEFAULT_CAP, scoring_windows
from behavepass.core.metrics import auc
from behavepass.core.net import ModelParams, embed_windows
from behavepass.schemas.config import Scenario
from behavepass.schemas.dataset import (
    MODALITY_CODES,
    SENSOR_MODALITIES,
    Dataset,
    ModalityId,
    Session,
    Split,
    Task,
    UserRecord,
)

logger = logging.getLogger(__name__)

ENROLMENT_SESSIONS = (1, 2)

Subset = Tuple[ModalityId, ...]


class ComparisonKind(str, Enum):
    GENUINE = "genuine"
    RANDOM_IMPOSTOR = "random_impostor"
    SKILLED_IMPOSTOR = "skilled_impostor"


@dataclass(frozen=True)
class Comparison:
    """One enrolment-versus-verification-session comparison."""

    user: UserRecord
    verify_owner: UserRecord
    session: Session
    kind: ComparisonKind

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.user.user_id, self.kind.value, self.session.session_id)


@dataclass(frozen=True)
class SessionScore:
    value: float
    kind: ComparisonKind
    user: str
    verify_session: int
    verify_user: str = ""
    performed_by: str = ""


@dataclass
class ScoreSet:
    task: Task
    subset: Subset
    genuine: List[SessionScore] = field(default_factory=list)
    random_impostor: List[SessionScore] = field(default_factory=list)
    skilled_impostor: List[SessionScore] = field(default_factory=list)
    excluded_users: Set[str] = field(default_factory=set)

    @property
    def label(self) -> str:
        return subset_label(self.subset)

    def add(self, score: SessionScore) -> None:
        {
            ComparisonKind.GENUINE: self.genuine,
            ComparisonKind.RANDOM_IMPOSTOR: self.random_impostor,
            ComparisonKind.SKILLED_IMPOSTOR: self.skilled_impostor,
        }[score.kind].append(score)

    def values(self, scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
        """Genuine and impostor distances of a scenario; mixed concatenates random and skilled."""
        genuine = np.array([s.value for s in self.genuine])
        if scenario is Scenario.RANDOM:
            impostor = self.random_impostor
        elif scenario is Scenario.SKILLED:
            impostor = self.skilled_impostor
        else:
            impostor = self.random_impostor + self.skilled_impostor
        return genuine, np.array([s.value for s in impostor])

    def all_scores(self) -> List[SessionScore]:
        return self.genuine + self.random_impostor + self.skilled_impostor


def subset_label(subset: Sequence[ModalityId]) -> str:
    return "+".join(MODALITY_CODES[m] for m in subset)


def parse_subset_label(label: str) -> Subset:
    by_code = {code: modality for modality, code in MODALITY_CODES.items()}
    try:
        return tuple(by_code[code] for code in label.split("+"))
    except KeyError as error:
        raise ProtocolError(f"unknown modality code {error} in subset '{label}'") from error


# ----------------------------------------------------------------------------
# scores


def mean_pairwise_distance(enrol: np.ndarray, verify: np.ndarray) -> Optional[float]:
    """Mean Euclidean distance over every (enrol, verify) embedding pair; None if either side is empty."""
    if len(enrol) == 0 or len(verify) == 0:
        return None
    return float(np.mean(cdist(enrol, verify, metric="euclidean")))


def session_score(enrol_windows, verify_windows, params: ModelParams) -> Optional[float]:
    """Mean pairwise distance between the embeddings of two window lists."""
    if not enrol_windows or not verify_windows:
        return None
    return mean_pairwise_distance(embed_windows(params, enrol_windows), embed_windows(params, verify_windows))


def fuse_scores(per_modality: Mapping[ModalityId, Optional[float]], subset: Sequence[ModalityId]) -> Optional[float]:
    """Unweighted sum over the subset; None (with a warning) when a member is missing."""
    if not subset:
        raise ProtocolError("cannot fuse an empty modality subset")
    missing = [m.value for m in subset if per_modality.get(m) is None]
    if missing:
        logger.warning(f"Fusion of {subset_label(subset)} skipped: missing {missing}")
        return None
    return float(sum(per_modality[m] for m in subset))


def enumerate_subsets(task: Task) -> List[Subset]:
    """The 63 non-empty subsets of the task's touch modality and the five sensors, by size then position."""
    members = (task.touch_modality, *SENSOR_MODALITIES)
    return [combo for size in range(1, len(members) + 1) for combo in itertools.combinations(members, size)]


# ----------------------------------------------------------------------------
# comparisons


def impostor_partners(user_ids: Sequence[str], pairing: str = "rotation", seed: int = 0) -> Dict[str, str]:
    """
    Random-impostor assignment: every user maps to one other user.

    Ids are sorted first, so the pairing does not depend on file order.
    ``rotation`` pairs user u with user u+1 (mod U); ``shuffle`` uses a seeded
    permutation and pairs consecutive entries cyclically, which is never the
    identity for any user.
    """
    user_ids = sorted(user_ids)
    n = len(user_ids)
    if n < 2:
        raise ProtocolError(f"random-impostor pairing needs at least 2 users, got {n}")
    if pairing == "rotation":
        order = list(range(n))
    elif pairing == "shuffle":
        order = [int(i) for i in streams.stream(seed, streams.PAIRING).permutation(n)]
    else:
        raise ProtocolError(f"unknown pairing '{pairing}'")
    return {user_ids[order[k]]: user_ids[order[(k + 1) % n]] for k in range(n)}


def _verify_sessions(user: UserRecord) -> List[Session]:
    return [s for s in user.genuine_sessions if s.session_id not in ENROLMENT_SESSIONS]


def list_comparisons(dataset: Dataset, pairing: str = "rotation", seed: int = 0) -> List[Comparison]:
    """
    Every comparison of the protocol, in user order.

    Raises:
        ProtocolError: on the train split or with fewer than two users
    """
    if dataset.split is Split.TRAIN:
        raise ProtocolError("the train split has no impostor sessions to evaluate")
    partners = impostor_partners(dataset.user_ids, pairing, seed)
    comparisons = []
    for user in dataset.users:
        other = dataset.user(partners[user.user_id])
        comparisons.extend(Comparison(user, user, s, ComparisonKind.GENUINE) for s in _verify_sessions(user))
        comparisons.extend(Comparison(user, other, s, ComparisonKind.RANDOM_IMPOSTOR) for s in _verify_sessions(other))
        comparisons.extend(Comparison(user, user, s, ComparisonKind.SKILLED_IMPOSTOR) for s in user.impostor_sessions)
    return comparisons


class EmbeddingIndex:
    """Inference embeddings of scoring windows, computed once per session, task and modality."""

    def __init__(self, models: Mapping[ModalityId, ModelParams], cap: int = DEFAULT_CAP):
        self.models = models
        self.cap = cap
        self._cache: Dict[Tuple[str, str, int, Task, ModalityId], np.ndarray] = {}

    def get(self, owner: UserRecord, session: Session, task: Task, modality: ModalityId) -> np.ndarray:
        key = (owner.user_id, session.performed_by, session.session_id, task, modality)
        if key not in self._cache:
            windows = scoring_windows(session, owner.user_id, task, modality, self.cap)
            self._cache[key] = embed_windows(self.models[modality], windows)
        return self._cache[key]

    def prefetch(self, dataset: Dataset, task: Task, modality: ModalityId) -> None:
        """Embed every uncached session of the dataset in one batched pass."""
        keys, counts, windows = [], [], []
        for owner in dataset.users:
            for session in owner.genuine_sessions + owner.impostor_sessions:
                key = (owner.user_id, session.performed_by, session.session_id, task, modality)
                if key in self._cache:
                    continue
                session_windows = scoring_windows(session, owner.user_id, task, modality, self.cap)
                keys.append(key)
                counts.append(len(session_windows))
                windows.extend(session_windows)
        if not keys:
            return
        embeddings = embed_windows(self.models[modality], windows)
        for key, part in zip(keys, np.split(embeddings, np.cumsum(counts)[:-1])):
            self._cache[key] = part

    def enrolment(self, user: UserRecord, task: Task, modality: ModalityId) -> List[np.ndarray]:
        return [
            self.get(user, s, task, modality) for s in user.genuine_sessions if s.session_id in ENROLMENT_SESSIONS
        ]


def _comparison_value(
    index: EmbeddingIndex, comparison: Comparison, task: Task, modality: ModalityId, pool_enrolment: bool
) -> Optional[float]:
    enrol = [e for e in index.enrolment(comparison.user, task, modality) if len(e)]
    verify = index.get(comparison.verify_owner, comparison.session, task, modality)
    if not enrol or len(verify) == 0:
        return None
    if pool_enrolment:
        return mean_pairwise_distance(np.concatenate(enrol), verify)
    return float(np.mean([mean_pairwise_distance(e, verify) for e in enrol]))


def modality_scores(
    index: EmbeddingIndex,
    comparisons: Sequence[Comparison],
    task: Task,
    modality: ModalityId,
    pool_enrolment: bool = True,
) -> Dict[Tuple[str, str, int], float]:
    """Score of every comparison for one modality, keyed by (user, kind, verify session); missing data omitted."""
    scores = {}
    for comparison in comparisons:
        value = _comparison_value(index, comparison, task, modality, pool_enrolment)
        if value is not None:
            scores[comparison.key] = value
    return scores


def _znorm(scores: Dict[Tuple[str, str, int], float]) -> Dict[Tuple[str, str, int], float]:
    if not scores:
        return scores
    values = np.array(list(scores.values()))
    std = float(values.std())
    mean = float(values.mean())
    scale = std if std > 0 else 1.0
    return {k: (v - mean) / scale for k, v in scores.items()}


def fused_score_sets(
    comparisons: Sequence[Comparison],
    per_modality: Mapping[ModalityId, Dict[Tuple[str, str, int], float]],
    task: Task,
    subsets: Sequence[Subset],
    znorm: bool = False,
) -> Dict[Subset, ScoreSet]:
    """
    Fuse per-modality scores into one ScoreSet per subset.

    A user missing any member modality for some comparison is dropped from that
    subset's distributions and recorded in ``excluded_users``.
    """
    tables = {m: (_znorm(s) if znorm else s) for m, s in per_modality.items()}
    sets: Dict[Subset, ScoreSet] = {}
    for subset in subsets:
        score_set = ScoreSet(task=task, subset=subset)
        staged: Dict[str, List[SessionScore]] = {}
        for comparison in comparisons:
            user = comparison.user.user_id
            if user in score_set.excluded_users:
                continue
            values = [tables.get(m, {}).get(comparison.key) for m in subset]
            if any(v is None for v in values):
                score_set.excluded_users.add(user)
                staged.pop(user, None)
                continue
            staged.setdefault(user, []).append(
                SessionScore(
                    value=float(sum(values)),
                    kind=comparison.kind,
                    user=user,
                    verify_session=comparison.session.session_id,
                    verify_user=comparison.verify_owner.user_id,
                    performed_by=comparison.session.performed_by,
                )
            )
        for scores in staged.values():
            for score in scores:
                score_set.add(score)
        if score_set.excluded_users:
            logger.warning(
                f"{task.value} {score_set.label}: {len(score_set.excluded_users)} user(s) excluded for missing modalities"
            )
        sets[subset] = score_set
    return sets


def build_distributions(
    dataset: Dataset,
    models: Mapping[ModalityId, ModelParams],
    task: Task,
    subset: Sequence[ModalityId],
    pairing: str = "rotation",
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    pool_enrolment: bool = True,
    znorm: bool = False,
    index: Optional[EmbeddingIndex] = None,
) -> ScoreSet:
    """
    Genuine, random-impostor and skilled-impostor scores of one task and subset.

    Raises:
        ProtocolError: on the train split, fewer than two users or a subset
            member without a model
    """
    subset = tuple(subset)
    absent = [m.value for m in subset if m not in models]
    if absent:
        raise ProtocolError(f"no model for {absent}")
    comparisons = list_comparisons(dataset, pairing, seed)
    index = index or EmbeddingIndex(models, cap)
    for m in subset:
        index.prefetch(dataset, task, m)
    per_modality = {m: modality_scores(index, comparisons, task, m, pool_enrolment) for m in subset}
    return fused_score_sets(comparisons, per_modality, task, [subset], znorm)[subset]


def score_task(
    dataset: Dataset,
    models: Mapping[ModalityId, ModelParams],
    task: Task,
    pairing: str = "rotation",
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    pool_enrolment: bool = True,
    znorm: bool = False,
    modalities: Optional[Sequence[ModalityId]] = None,
    index: Optional[EmbeddingIndex] = None,
) -> Dict[Subset, ScoreSet]:
    """ScoreSets of every subset of the task's modalities that have a model (and pass the filter)."""
    comparisons = list_comparisons(dataset, pairing, seed)
    index = index or EmbeddingIndex(models, cap)
    available = {m for m in models if modalities is None or m in modalities}
    subsets = [s for s in enumerate_subsets(task) if set(s) <= available]
    members = sorted({m for s in subsets for m in s}, key=list(ModalityId).index)
    for m in members:
        index.prefetch(dataset, task, m)
    per_modality = {m: modality_scores(index, comparisons, task, m, pool_enrolment) for m in members}
    logger.info(f"Scored {task.value}: {len(members)} modalities, {len(subsets)} subsets")
    return fused_score_sets(comparisons, per_modality, task, subsets, znorm)


def best_subset_search(
    score_sets: Mapping[Subset, Union[ScoreSet, float]], scenario: Scenario
) -> Tuple[Subset, float]:
    """
    Subset with the highest AUC for a scenario.

    Values are ScoreSets, or AUCs already computed for the scenario.
    Candidates are examined smallest first in canonical order and only a
    strictly higher AUC replaces the incumbent.
    """
    if not score_sets:
        raise ProtocolError("no scored subsets to search")
    order = list(ModalityId).index
    best: Optional[Tuple[Subset, float]] = None
    for subset in sorted(score_sets, key=lambda s: (len(s), [order(m) for m in s])):
        candidate = score_sets[subset]
        if isinstance(candidate, ScoreSet):
            genuine, impostor = candidate.values(scenario)
            if len(genuine) == 0 or len(impostor) == 0:
                continue
            value = auc(genuine, impostor)
        else:
            value = float(candidate)
        if best is None or value > best[1]:
            best = (subset, value)
    if best is None:
        raise ProtocolError(f"no subset has scores for the {scenario.value} scenario")
    return best


# ----------------------------------------------------------------------------
# scores file

SCORE_COLUMNS = ["task", "subset", "user", "verify_session", "kind", "value"]


def scores_frame(score_sets: Sequence[ScoreSet]) -> pd.DataFrame:
    rows = [
        (s.task.value, s.label, score.user, score.verify_session, score.kind.value, score.value)
        for s in score_sets
        for score in s.all_scores()
    ]
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def write_scores(score_sets: Sequence[ScoreSet], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scores_frame(score_sets).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {sum(len(s.all_scores()) for s in score_sets)} scores to {path}")
    return path


def read_scores(path: Union[str, Path]) -> Dict[Tuple[Task, Subset], ScoreSet]:
    frame = pd.read_csv(path, keep_default_na=False, float_precision="round_trip")
    missing = [c for c in SCORE_COLUMNS if c not in frame.columns]
    if missing:
        raise ProtocolError(f"{path}: scores file lacks columns {missing}")
    frame = frame.astype({"task": str, "subset": str, "user": str, "kind": str})
    sets: Dict[Tuple[Task, Subset], ScoreSet] = {}
    for row in frame.itertuples(index=False):
        task, subset = Task(row.task), parse_subset_label(row.subset)
        score_set = sets.setdefault((task, subset), ScoreSet(task=task, subset=subset))
        score_set.add(
            SessionScore(
                value=float(row.value), kind=ComparisonKind(row.kind), user=row.user, verify_session=int(row.verify_session)
            )
        )
    return sets
