import numpy as np
import pytest

from casehash import CbrEngine, HashIndex, Hyperparams, LshPlanes, init_params
from casehash.cbr import Suggestion

from conftest import make_case, random_cases


def one_bucket_index(cases):
    """Index where every case lands in the same bucket (constant features)."""
    planes = LshPlanes.sample(4, cases[0].features.dim, seed=0)
    return HashIndex.build(cases, planes), planes


class TestSuggest:
    def test_majority_vote(self):
        # 2 cases labeled 1 at distance ~0, 1 case labeled 0 further away
        cases = [make_case(3, [(0, 1.0)], label=1, case_id=0),
                 make_case(3, [(0, 1.0)], label=1, case_id=1),
                 make_case(3, [(0, 1.0), (1, 2.0)], label=0, case_id=2)]
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=3)
        sug = eng.suggest(make_case(3, [(0, 1.0)], case_id=9))
        assert sug.label == 1
        assert sug.votes == {1: 2, 0: 1}
        assert sug.scores[1] > sug.scores[0]

    def test_vote_tie_broken_by_distance(self):
        # one vote each; label 7's case is nearer
        cases = [make_case(3, [(0, 1.0)], label=7, case_id=0),
                 make_case(3, [(0, 1.0), (1, 3.0)], label=4, case_id=1)]
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=2)
        sug = eng.suggest(make_case(3, [(0, 1.0)], case_id=9))
        assert sug.votes == {7: 1, 4: 1}
        assert sug.label == 7
        assert sug.scores[7] > sug.scores[4]

    def test_full_tie_broken_by_label_id(self):
        cases = [make_case(3, [(0, 1.0)], label=5, case_id=0),
                 make_case(3, [(0, 1.0)], label=2, case_id=1)]
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=2)
        sug = eng.suggest(make_case(3, [(0, 1.0)], case_id=9))
        assert sug.label == 2

    def test_empty_retrieval_gives_none(self, rng):
        cases = [make_case(3, [(0, 1.0)], label=1, case_id=0)]
        planes = LshPlanes.sample(16, 3, seed=1)
        idx = HashIndex.build(cases, planes)
        eng = CbrEngine(idx, planes, top_n=1, max_radius=0)

        class FarCoder:
            r = 16

            def code(self, case):
                return idx.code(0).flip(*range(16))

        eng.coder = FarCoder()
        sug = eng.suggest(make_case(3, [(1, 1.0)], case_id=9))
        assert sug.label is None
        assert sug.scores == {}

    def test_revise(self):
        sug = Suggestion(query_id=0, label=3)
        assert CbrEngine.revise(sug, 3) is True
        assert CbrEngine.revise(sug, 4) is False


class TestRetain:
    def test_insert_and_buffer(self, rng):
        cases = random_cases(rng, 10, dim=6, nnz=3)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=3, update_interval=100)
        new = make_case(6, [(0, 1.0)], label=0, case_id=50)
        retained, updated = eng.retain(new)
        assert retained and not updated
        assert 50 in idx
        assert [c.id for c in eng.buffer] == [50]

    def test_no_update_engine_is_frozen(self, rng):
        cases = random_cases(rng, 10, dim=6, nnz=3)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=3, no_update=True)
        new = make_case(6, [(0, 1.0)], label=0, case_id=50)
        retained, updated = eng.retain(new)
        assert not retained and not updated
        assert 50 not in idx
        assert eng.buffer == []

    def test_lsh_engine_drops_buffer_without_update(self, rng):
        cases = random_cases(rng, 10, dim=6, nnz=3)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=3, update_interval=2)
        eng.retain(make_case(6, [(0, 1.0)], label=0, case_id=50))
        retained, updated = eng.retain(make_case(6, [(1, 1.0)], label=1, case_id=51))
        assert retained and not updated  # planes are not trainable
        assert eng.buffer == []
        assert 50 in idx and 51 in idx

    def test_update_triggered_at_interval(self, rng):
        cases = random_cases(rng, 30, dim=8, nnz=3)
        hyper = Hyperparams(k_w=4, k_v=4, r=8, l=2, hidden=4, n_u=5)
        params = init_params(hyper, d=8, seed=1)
        idx = HashIndex.build(cases, params)
        eng = CbrEngine(idx, params, top_n=3, seed=2)
        assert eng.update_interval == 5
        extra = random_cases(rng, 5, dim=8, nnz=3, id_start=100)
        updates = [eng.retain(c)[1] for c in extra]
        assert updates == [False, False, False, False, True]
        assert eng.n_updates == 1
        assert eng.buffer == []

    def test_update_changes_codes_when_loss_positive(self, rng):
        cases = random_cases(rng, 40, dim=8, nnz=3)
        hyper = Hyperparams(k_w=4, k_v=4, r=8, l=2, hidden=4, n_u=10)
        params = init_params(hyper, d=8, seed=1)
        idx = HashIndex.build(cases, params)
        before = {n: a.copy() for n, a in params.arrays()}
        eng = CbrEngine(idx, params, top_n=3, seed=2, update_lr=0.05)
        for c in random_cases(rng, 10, dim=8, nnz=3, id_start=100):
            eng.retain(c)
        assert eng.n_updates == 1
        changed = any(not np.array_equal(a, before[n]) for n, a in params.arrays())
        assert changed

    def test_zero_loss_update_is_bitwise_noop(self, rng):
        # saturate the last layer so every output is exactly +-1; a
        # single-label buffer then has s_hat = r >= margin for every pair,
        # the adaptive loss is exactly 0.0, and no step may be applied
        hyper = Hyperparams(k_w=4, k_v=4, r=8, l=2, hidden=4, n_u=4, beta=0.5)
        params = init_params(hyper, d=6, seed=3)
        params.layers[-1].b[:] = 60.0  # squash(+-60) == -1.0 exactly in floats
        params.layers[-1].w[:] = 0.0
        cases = random_cases(rng, 12, dim=6, nnz=3, n_labels=1)
        idx = HashIndex.build(cases, params)
        before = {n: a.copy() for n, a in params.arrays()}
        codes_before = {cid: idx.code(cid) for cid in idx.ids()}

        eng = CbrEngine(idx, params, top_n=2, seed=4)
        for c in random_cases(rng, 4, dim=6, nnz=3, n_labels=1, id_start=100):
            eng.retain(c)
        assert eng.n_updates == 1
        for n, a in params.arrays():
            assert np.array_equal(a, before[n]), f"{n} changed on zero loss"
        for cid, code in codes_before.items():
            assert idx.code(cid) == code


class TestSolve:
    def test_full_cycle(self, rng):
        cases = random_cases(rng, 20, dim=6, nnz=3)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=5, update_interval=100)
        q = make_case(6, [(0, 0.4)], label=cases[0].label, case_id=77)
        rec = eng.solve(q, true_label=q.label)
        assert rec.correct in (True, False)
        assert rec.retained
        assert 77 in idx
        assert rec.total_us > 0.0

    def test_solve_without_truth_only_suggests(self, rng):
        cases = random_cases(rng, 10, dim=6, nnz=3)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=3)
        rec = eng.solve(make_case(6, [(1, 1.0)], case_id=88))
        assert rec.correct is None
        assert not rec.retained
        assert 88 not in idx

    def test_revealed_label_overrides_placeholder(self, rng):
        cases = random_cases(rng, 10, dim=6, nnz=3)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes, top_n=3, update_interval=100)
        q = make_case(6, [(1, 1.0)], label=0, case_id=88)
        eng.solve(q, true_label=1)
        assert idx.case(88).label == 1


class TestConstruction:
    def test_bad_args(self, rng):
        cases = random_cases(rng, 5, dim=6, nnz=2)
        idx, planes = one_bucket_index(cases)
        with pytest.raises(ValueError):
            CbrEngine(idx, planes, top_n=0)
        with pytest.raises(ValueError):
            CbrEngine(idx, planes, update_interval=0)

    def test_update_interval_defaults_to_hyper(self, rng):
        cases = random_cases(rng, 5, dim=6, nnz=2)
        hyper = Hyperparams(k_w=4, k_v=4, r=8, l=2, hidden=4, n_u=37)
        params = init_params(hyper, d=6, seed=0)
        idx = HashIndex.build(cases, params)
        eng = CbrEngine(idx, params)
        assert eng.update_interval == 37

    def test_update_model_requires_trainable(self, rng):
        cases = random_cases(rng, 5, dim=6, nnz=2)
        idx, planes = one_bucket_index(cases)
        eng = CbrEngine(idx, planes)
        with pytest.raises(RuntimeError):
            eng.update_model()
