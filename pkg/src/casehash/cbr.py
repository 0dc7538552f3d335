"""Case-based reasoning engine over the hash index.

solve() runs the full cycle for one query: retrieve nearest stored cases,
reuse their labels by weighted majority vote, revise against the true label
when it is revealed, and retain the solved case. Retained cases accumulate
in a buffer; every update_interval retentions the hash network is refreshed
on buffer x buffer and buffer x reservoir pairs under the hinge-gated
retention loss, after which every stored code is recomputed and the buckets
rebuilt. A retention round whose loss is exactly zero leaves the parameters
and codes bitwise unchanged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .index import HashIndex, RetrievalResult
from .network import NetworkParams
from .sparse import SparseCase, similarity_label
from .training import OptimizerState, PairBatch, adaptive_objective_and_grad

VOTE_TIEBREAK = 1e-9


@dataclass
class Suggestion:
    """Reuse outcome for one query: the voted label plus per-label evidence.

    scores hold vote fraction + a distance tiebreak small enough to never
    reorder distinct vote counts; label is None when retrieval came up empty.
    """

    query_id: int
    label: int | None
    votes: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    retrieval: RetrievalResult | None = None
    hash_us: float = 0.0
    retrieve_us: float = 0.0
    reuse_us: float = 0.0


@dataclass
class SolveRecord:
    suggestion: Suggestion
    true_label: int | None = None
    correct: bool | None = None
    retained: bool = False
    updated: bool = False
    retain_us: float = 0.0
    update_us: float = 0.0

    @property
    def total_us(self) -> float:
        s = self.suggestion
        return s.hash_us + s.retrieve_us + s.reuse_us + self.retain_us + self.update_us


class CbrEngine:
    """Stateful solve loop binding a coder (learned network or LSH) to an index."""

    def __init__(self, index: HashIndex, coder, top_n: int = 10, max_radius: int = 2,
                 update_interval: int | None = None, update_epochs: int = 5,
                 update_lr: float = 1e-3, no_update: bool = False, seed: int = 0):
        if top_n < 1:
            raise ValueError("top_n must be >= 1")
        self.index = index
        self.coder = coder
        self.top_n = top_n
        self.max_radius = max_radius
        self.trainable = isinstance(coder, NetworkParams)
        if update_interval is None:
            update_interval = coder.hyper.n_u if self.trainable else 100
        if update_interval < 1:
            raise ValueError("update_interval must be >= 1")
        self.update_interval = update_interval
        self.update_epochs = update_epochs
        self.update_lr = update_lr
        self.no_update = no_update
        self.buffer: list[SparseCase] = []
        self.n_updates = 0
        self._rng = np.random.default_rng(seed)

    # retrieval / reuse

    def suggest(self, query: SparseCase) -> Suggestion:
        """Retrieve neighbors and vote a label.

        Ranking of candidate labels: most votes first, then smaller summed
        rerank distance, then smaller label id. The float scores reproduce
        that order for vote ties via a bounded distance bonus.
        """
        t0 = time.perf_counter_ns()
        code = self.coder.code(query)
        hash_us = (time.perf_counter_ns() - t0) / 1e3

        result = self.index.retrieve(query, code, self.top_n,
                                     max_radius=self.max_radius)
        retrieve_us = result.gather_us + result.rerank_us

        t1 = time.perf_counter_ns()
        votes: dict[int, int] = {}
        dist_sum: dict[int, float] = {}
        for cid, dist in zip(result.ids, result.distances):
            lab = self.index.case(cid).label
            votes[lab] = votes.get(lab, 0) + 1
            dist_sum[lab] = dist_sum.get(lab, 0.0) + float(dist)
        if votes:
            ranked = sorted(votes, key=lambda l: (-votes[l], dist_sum[l], l))
            label = ranked[0]
            n_ret = len(result.ids)
            scores = {l: votes[l] / n_ret
                      + VOTE_TIEBREAK / (1.0 + dist_sum[l] / votes[l])
                      for l in votes}
        else:
            label, scores = None, {}
        reuse_us = (time.perf_counter_ns() - t1) / 1e3
        return Suggestion(query_id=query.id, label=label, votes=votes, scores=scores,
                          retrieval=result, hash_us=hash_us,
                          retrieve_us=retrieve_us, reuse_us=reuse_us)

    @staticmethod
    def revise(suggestion: Suggestion, true_label: int) -> bool:
        """Compare the suggestion against the revealed label."""
        return suggestion.label == true_label

    # retention

    def retain(self, case: SparseCase) -> tuple[bool, bool]:
        """Insert a solved case and maybe refresh the model.

        Returns (retained, updated). A no_update engine retains nothing and
        never updates, preserving its initial case base and codes.
        """
        if self.no_update:
            return False, False
        self.index.insert(case, self.coder.code(case))
        self.buffer.append(case)
        updated = False
        if len(self.buffer) >= self.update_interval and self.trainable:
            self.update_model()
            updated = True
        elif len(self.buffer) >= self.update_interval:
            self.buffer.clear()  # nothing trainable; just drop the buffer
        return True, updated

    def _reservoir(self, exclude: set) -> list[SparseCase]:
        pool = [i for i in self.index.ids() if i not in exclude]
        if not pool:
            return []
        k = min(self.update_interval, len(pool))
        picks = self._rng.choice(len(pool), size=k, replace=False)
        return [self.index.case(pool[int(p)]) for p in sorted(picks)]

    def update_model(self) -> float:
        """Adapt the network to the buffered cases, then recode the index.

        Pairs: every unordered buffer pair plus each buffer case against a
        reservoir sample of stored cases. Runs update_epochs full-batch
        steps of the retention loss; steps with exactly zero loss apply no
        parameter change, so a fully satisfied margin is a no-op.
        """
        if not self.trainable:
            raise RuntimeError("coder has no trainable parameters")
        if not self.buffer:
            return 0.0
        buffered = list(self.buffer)
        others = self._reservoir({c.id for c in buffered})
        cases = buffered + others
        i_list, j_list, s_list = [], [], []
        for a in range(len(buffered)):
            for b in range(a + 1, len(cases)):
                i_list.append(a)
                j_list.append(b)
                s_list.append(similarity_label(cases[a], cases[b]))
        self.buffer.clear()
        if not i_list:
            return 0.0
        batch = PairBatch(cases=cases, i=np.array(i_list), j=np.array(j_list),
                          s=np.array(s_list, dtype=float))

        opt = OptimizerState(kind="adam", lr=self.update_lr)
        last = 0.0
        stepped = False
        for _ in range(self.update_epochs):
            value, grads = adaptive_objective_and_grad(batch, self.coder)
            last = value
            if value == 0.0:
                break
            opt.apply(self.coder, grads)
            stepped = True
        if stepped:
            self.index.replace_codes(self.coder)
        self.n_updates += 1
        return last

    # full cycle

    def solve(self, query: SparseCase, true_label: int | None = None) -> SolveRecord:
        """Suggest a label; when the truth is revealed, revise and retain."""
        suggestion = self.suggest(query)
        record = SolveRecord(suggestion=suggestion)
        if true_label is None:
            return record
        record.true_label = true_label
        record.correct = self.revise(suggestion, true_label)
        solved = (query if query.label == true_label
                  else SparseCase(id=query.id, features=query.features,
                                  label=true_label))
        t0 = time.perf_counter_ns()
        retained, updated = self.retain(solved)
        elapsed_us = (time.perf_counter_ns() - t0) / 1e3
        record.retained = retained
        record.updated = updated
        if updated:
            record.update_us = elapsed_us
        else:
            record.retain_us = elapsed_us
        return record
