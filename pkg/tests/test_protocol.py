import logging

import numpy as np
import pytest
from scipy.spatial.distance import euclidean

from behavepass.core.errors import ProtocolError
from behavepass.core.metrics import auc
from behavepass.core.net import init_model
from behavepass.core.protocol import (
    ComparisonKind,
    EmbeddingIndex,
    ScoreSet,
    SessionScore,
    best_subset_search,
    build_distributions,
    enumerate_subsets,
    fuse_scores,
    fused_score_sets,
    impostor_partners,
    list_comparisons,
    mean_pairwise_distance,
    parse_subset_label,
    read_scores,
    score_task,
    subset_label,
    write_scores,
)
from behavepass.schemas.config import ModelSpec, Scenario
from behavepass.schemas.dataset import SENSOR_MODALITIES, Dataset, ModalityId, Split, Task

A, GR, GY, L, M = SENSOR_MODALITIES


@pytest.fixture(scope="module")
def untrained_models():
    return {
        m: init_model(ModelSpec(input_dim=m.feature_dim, hidden_units=4, embedding_dim=4), seed=i)
        for i, m in enumerate(ModalityId)
    }


def _score_set(genuine, random, skilled, subset=(A,)):
    score_set = ScoreSet(task=Task.TAPPING, subset=subset)
    for kind, values in (
        (ComparisonKind.GENUINE, genuine),
        (ComparisonKind.RANDOM_IMPOSTOR, random),
        (ComparisonKind.SKILLED_IMPOSTOR, skilled),
    ):
        for k, value in enumerate(values):
            score_set.add(SessionScore(value=value, kind=kind, user=f"u{k // 2}", verify_session=3 + k % 2))
    return score_set


class TestPairwiseDistance:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        enrol, verify = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
        expected = np.mean([euclidean(e, v) for e in enrol for v in verify])
        assert mean_pairwise_distance(enrol, verify) == pytest.approx(expected)

    def test_empty_side(self):
        assert mean_pairwise_distance(np.zeros((0, 3)), np.ones((2, 3))) is None

    def test_scales_with_embeddings(self):
        rng = np.random.default_rng(1)
        enrol, verify = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        assert mean_pairwise_distance(3.0 * enrol, 3.0 * verify) == pytest.approx(
            3.0 * mean_pairwise_distance(enrol, verify)
        )


class TestFusion:
    def test_sum(self):
        assert fuse_scores({A: 1.5, GY: 2.0, M: 10.0}, (A, GY)) == pytest.approx(3.5)

    def test_missing_member_skips_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="behavepass.core.protocol"):
            assert fuse_scores({A: 1.0, GY: None}, (A, GY)) is None
        assert "missing" in caplog.text

    def test_empty_subset(self):
        with pytest.raises(ProtocolError):
            fuse_scores({A: 1.0}, ())

    def test_subset_enumeration(self):
        subsets = enumerate_subsets(Task.KEYSTROKE)
        assert len(subsets) == 63
        assert len(set(subsets)) == 63
        assert subsets[:6] == [(ModalityId.KEYSTROKE,), (A,), (GR,), (GY,), (L,), (M,)]
        assert subsets[6] == (ModalityId.KEYSTROKE, A)
        assert subsets[-1] == (ModalityId.KEYSTROKE, A, GR, GY, L, M)
        assert [len(s) for s in subsets] == sorted(len(s) for s in subsets)

    def test_labels(self):
        subset = (ModalityId.GALLERY_SWIPING, GY, M)
        assert subset_label(subset) == "GS+Gy+M"
        assert parse_subset_label("GS+Gy+M") == subset
        with pytest.raises(ProtocolError):
            parse_subset_label("GS+Q")

    def test_user_missing_a_member_is_excluded(self, handmade_dataset):
        comparisons = list_comparisons(handmade_dataset)
        full = {c.key: 1.0 for c in comparisons}
        partial = {c.key: 2.0 for c in comparisons if c.user.user_id != "u002"}
        sets = fused_score_sets(comparisons, {A: full, GY: partial}, Task.TAPPING, [(A,), (A, GY)])
        assert sets[(A,)].excluded_users == set()
        assert len(sets[(A,)].genuine) == 4
        fused = sets[(A, GY)]
        assert fused.excluded_users == {"u002"}
        assert {s.user for s in fused.all_scores()} == {"u001"}
        assert all(s.value == pytest.approx(3.0) for s in fused.all_scores())

    def test_znorm_standardizes_each_modality(self, handmade_dataset):
        comparisons = list_comparisons(handmade_dataset)
        rng = np.random.default_rng(2)
        scores = {c.key: float(v) for c, v in zip(comparisons, rng.normal(50.0, 7.0, size=len(comparisons)))}
        sets = fused_score_sets(comparisons, {A: scores}, Task.TAPPING, [(A,)], znorm=True)
        values = np.array([s.value for s in sets[(A,)].all_scores()])
        assert values.mean() == pytest.approx(0.0, abs=1e-12)
        assert values.std() == pytest.approx(1.0)


class TestPairing:
    def test_rotation(self):
        assert impostor_partners(["a", "b", "c"]) == {"a": "b", "b": "c", "c": "a"}

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_shuffle_is_a_derangement(self, seed):
        users = [f"u{k}" for k in range(7)]
        partners = impostor_partners(users, "shuffle", seed)
        assert sorted(partners) == users
        assert sorted(partners.values()) == users
        assert all(user != partner for user, partner in partners.items())
        assert partners == impostor_partners(users, "shuffle", seed)

    def test_pairing_ignores_file_order(self):
        assert impostor_partners(["c", "a", "b"]) == {"a": "b", "b": "c", "c": "a"}
        users = [f"u{k}" for k in range(6)]
        assert impostor_partners(users[::-1], "shuffle", 5) == impostor_partners(users, "shuffle", 5)

    def test_single_user(self):
        with pytest.raises(ProtocolError):
            impostor_partners(["u1"])

    def test_unknown_pairing(self):
        with pytest.raises(ProtocolError):
            impostor_partners(["u1", "u2"], "random")


class TestComparisons:
    def test_counts(self, handmade_dataset):
        comparisons = list_comparisons(handmade_dataset)
        kinds = [c.kind for c in comparisons]
        assert kinds.count(ComparisonKind.GENUINE) == 4
        assert kinds.count(ComparisonKind.RANDOM_IMPOSTOR) == 4
        assert kinds.count(ComparisonKind.SKILLED_IMPOSTOR) == 4
        assert len({c.key for c in comparisons}) == len(comparisons)
        for c in comparisons:
            if c.kind is ComparisonKind.RANDOM_IMPOSTOR:
                assert c.verify_owner.user_id != c.user.user_id
                assert c.session.performed_by == c.verify_owner.user_id
            if c.kind is ComparisonKind.SKILLED_IMPOSTOR:
                assert c.session.performed_by != c.user.user_id
                assert c.session.device_id == c.user.device_id

    def test_train_split_rejected(self, tiny_train_dataset):
        with pytest.raises(ProtocolError):
            list_comparisons(tiny_train_dataset)

    def test_single_user_rejected(self, handmade_dataset):
        lonely = Dataset(split=Split.EVALUATION, users=handmade_dataset.users[:1])
        with pytest.raises(ProtocolError):
            list_comparisons(lonely)


class TestDistributions:
    def test_two_scores_per_user_and_kind(self, tiny_eval_dataset, untrained_models):
        users = len(tiny_eval_dataset)
        for subset in [(ModalityId.TAPPING,), (A, M), (ModalityId.TAPPING, GY, L)]:
            score_set = build_distributions(tiny_eval_dataset, untrained_models, Task.TAPPING, subset)
            assert len(score_set.genuine) == 2 * users
            assert len(score_set.random_impostor) == 2 * users
            assert len(score_set.skilled_impostor) == 2 * users
            assert all(s.value >= 0.0 for s in score_set.all_scores())

    def test_fused_equals_sum_of_members(self, tiny_eval_dataset, untrained_models):
        index = EmbeddingIndex(untrained_models)
        parts = [build_distributions(tiny_eval_dataset, untrained_models, Task.TAPPING, (m,), index=index) for m in (A, L)]
        fused = build_distributions(tiny_eval_dataset, untrained_models, Task.TAPPING, (A, L), index=index)
        expected = [a.value + b.value for a, b in zip(parts[0].all_scores(), parts[1].all_scores())]
        np.testing.assert_allclose([s.value for s in fused.all_scores()], expected)

    def test_separate_enrolment_option(self, tiny_eval_dataset, untrained_models):
        pooled = build_distributions(tiny_eval_dataset, untrained_models, Task.KEYSTROKE, (GR,))
        separate = build_distributions(tiny_eval_dataset, untrained_models, Task.KEYSTROKE, (GR,), pool_enrolment=False)
        assert len(separate.genuine) == len(pooled.genuine)
        # equal-sized enrolment sessions make both averages coincide
        np.testing.assert_allclose(
            [s.value for s in separate.all_scores()], [s.value for s in pooled.all_scores()], rtol=1e-10
        )

    def test_missing_model(self, tiny_eval_dataset, untrained_models):
        models = {m: p for m, p in untrained_models.items() if m is not M}
        with pytest.raises(ProtocolError, match="no model"):
            build_distributions(tiny_eval_dataset, models, Task.TAPPING, (A, M))

    def test_embedding_index_caches(self, tiny_eval_dataset, untrained_models):
        index = EmbeddingIndex(untrained_models, cap=5)
        user = tiny_eval_dataset.users[0]
        session = user.session(1)
        first = index.get(user, session, Task.TAPPING, A)
        assert index.get(user, session, Task.TAPPING, A) is first
        assert 0 < len(first) <= 5

    @pytest.mark.parametrize("modality", [A, ModalityId.TAPPING])
    def test_prefetch_matches_per_session_embeddings(self, tiny_eval_dataset, untrained_models, modality):
        batched = EmbeddingIndex(untrained_models, cap=5)
        batched.prefetch(tiny_eval_dataset, Task.TAPPING, modality)
        single = EmbeddingIndex(untrained_models, cap=5)
        for user in tiny_eval_dataset.users:
            for session in user.genuine_sessions + user.impostor_sessions:
                np.testing.assert_allclose(
                    batched.get(user, session, Task.TAPPING, modality),
                    single.get(user, session, Task.TAPPING, modality),
                    atol=1e-12,
                )

    def test_score_task_covers_every_subset(self, tiny_eval_dataset, untrained_models):
        sets = score_task(tiny_eval_dataset, untrained_models, Task.TEXT_READING)
        assert len(sets) == 63
        filtered = score_task(tiny_eval_dataset, untrained_models, Task.TEXT_READING, modalities=[A, GY])
        assert sorted(filtered, key=len) == [(A,), (GY,), (A, GY)]


class TestBestSubset:
    def test_picks_highest_auc(self):
        sets = {
            (A,): _score_set([1, 2, 3, 4], [2, 3, 4, 5], [2, 3, 4, 5]),
            (GY,): _score_set([1, 1, 1, 1], [5, 5, 5, 5], [5, 5, 5, 5], subset=(GY,)),
            (A, GY): _score_set([1, 2, 3, 4], [1, 2, 3, 4], [1, 2, 3, 4], subset=(A, GY)),
        }
        subset, value = best_subset_search(sets, Scenario.RANDOM)
        assert subset == (GY,)
        assert value == pytest.approx(100.0)

    def test_ties_keep_smallest_subset(self):
        perfect = ([1, 1, 1, 1], [5, 5, 5, 5], [5, 5, 5, 5])
        sets = {
            (A, GY): _score_set(*perfect, subset=(A, GY)),
            (GY,): _score_set(*perfect, subset=(GY,)),
            (A,): _score_set(*perfect),
        }
        assert best_subset_search(sets, Scenario.MIXED)[0] == (A,)

    def test_monotone_rescaling_keeps_choice(self):
        rng = np.random.default_rng(3)
        sets, scaled = {}, {}
        for subset in [(A,), (GY,), (A, GY)]:
            genuine, random, skilled = rng.normal(1.0, 1.0, 8), rng.normal(2.0, 1.0, 8), rng.normal(1.5, 1.0, 8)
            sets[subset] = _score_set(genuine, random, skilled, subset=subset)
            scaled[subset] = _score_set(4.0 * genuine, 4.0 * random, 4.0 * skilled, subset=subset)
        for scenario in Scenario:
            best, value = best_subset_search(sets, scenario)
            assert best_subset_search(scaled, scenario) == (best, pytest.approx(value))
            assert value == pytest.approx(auc(*sets[best].values(scenario)))

    def test_precomputed_aucs(self):
        aucs = {(A, GY): 90.0, (GY,): 90.0, (A,): 80.0}
        assert best_subset_search(aucs, Scenario.RANDOM) == ((GY,), 90.0)

    def test_nothing_to_search(self):
        with pytest.raises(ProtocolError):
            best_subset_search({}, Scenario.RANDOM)


class TestScoresFile:
    def test_written_and_read_back(self, tmp_path):
        sets = [
            _score_set([0.5, 0.25], [1.5, 2.125], [0.75, 1.0]),
            _score_set([1.0, 2.0], [3.0, 4.0], [5.0, 6.0], subset=(ModalityId.TAPPING, GY)),
        ]
        path = write_scores(sets, tmp_path / "scores.csv")
        assert path.read_text().splitlines()[0] == "task,subset,user,verify_session,kind,value"
        loaded = read_scores(path)
        assert set(loaded) == {(Task.TAPPING, (A,)), (Task.TAPPING, (ModalityId.TAPPING, GY))}
        again = loaded[(Task.TAPPING, (A,))]
        for scenario in Scenario:
            for mine, theirs in zip(sets[0].values(scenario), again.values(scenario)):
                np.testing.assert_allclose(mine, theirs)

    def test_values_keep_full_precision(self, tmp_path):
        values = [0.1 + 0.2, 1.0 / 3.0, np.pi * 1e-7, 2.0 / 7.0]
        score_set = _score_set(values[:2], values[2:], values[1:3])
        loaded = read_scores(write_scores([score_set], tmp_path / "scores.csv"))[(Task.TAPPING, (A,))]
        assert [s.value for s in loaded.all_scores()] == [s.value for s in score_set.all_scores()]

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("task,subset,value\ntapping,A,1.0\n")
        with pytest.raises(ProtocolError, match="lacks columns"):
            read_scores(path)
