"""Greedy packing, materialization, and load-balance accounting."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slidelm import corpus as C
from slidelm import packer as P


def test_greedy_hand_case():
    packs = P.pack([("a", 5), ("b", 5), ("c", 5)], budget=10)
    assert [p.member_ids for p in packs] == [["a", "b"], ["c"]]


def test_exact_budget_single_pack():
    packs = P.pack([("a", 10)], budget=10)
    assert len(packs) == 1 and packs[0].total == 10


def test_oversized_sequence_rejected():
    with pytest.raises(ValueError, match="never split"):
        P.pack([("a", 11)], budget=10)


def test_invalid_budget_and_lengths():
    with pytest.raises(ValueError):
        P.pack([("a", 1)], budget=0)
    with pytest.raises(ValueError):
        P.pack([("a", 0)], budget=4)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=0, max_size=60),
       st.integers(50, 200))
def test_partition_budget_and_greedy_prefix(lengths, budget):
    seqs = [(f"s{i}", n) for i, n in enumerate(lengths)]
    packs = P.pack(seqs, budget)
    # partition: every sequence exactly once, in order
    flat = [(sid, n) for p in packs for sid, n in zip(p.member_ids, p.lengths)]
    assert flat == seqs
    assert sum(p.total for p in packs) == sum(lengths)
    for p in packs:
        assert p.total <= budget
    # greedy prefix optimality: sealing only when the next member cannot fit
    for p, nxt in zip(packs, packs[1:]):
        assert p.total + nxt.lengths[0] > budget


def test_concat_offsets_and_round_trip():
    spec = C.CorpusSpec(n_specimens=6, n_classes=2, d=16,
                        tiles_per_slide=(2, 6), slides_per_specimen=(1, 2))
    corpus = C.generate_corpus(spec, 3)
    queue = [(r.specimen_id, r.tiles.total_tiles) for r in corpus.records]
    packs = P.pack(queue, budget=30)
    for skel in packs:
        batch = P.concat(skel, corpus)
        batch.validate(budget=30)
        assert list(np.diff(batch.offsets)) == skel.lengths
        for i, sid in enumerate(skel.member_ids):
            assert np.array_equal(batch.member(i), corpus.by_id(sid).tiles.stacked())


def test_concat_mismatch_errors():
    spec = C.CorpusSpec(n_specimens=2, n_classes=2, d=16,
                        tiles_per_slide=(2, 4), slides_per_specimen=(1, 1))
    corpus = C.generate_corpus(spec, 0)
    sid = corpus.records[0].specimen_id
    with pytest.raises(ValueError, match="skeleton length"):
        P.concat(P.PackSkeleton([sid], [999]), corpus)
    with pytest.raises(KeyError):
        P.concat(P.PackSkeleton(["nope"], [2]), corpus)


def test_two_member_offsets():
    data = np.zeros((5, 3), np.float32)
    batch = P.PackedBatch(data, np.array([0, 3, 5]), ["a", "b"])
    batch.validate()
    assert batch.member(0).shape == (3, 3)
    assert batch.member(1).shape == (2, 3)


def test_balance_hand_case():
    packs = [P.PackSkeleton(["a"], [10]), P.PackSkeleton(["b"], [2])]
    stats = P.balance_report(packs, 2)
    assert stats.per_worker_tokens == [10, 2]
    assert stats.idle_fraction == pytest.approx(1 - 6 / 10)


def test_balance_equal_packs_zero_idle():
    packs = [P.PackSkeleton([f"p{i}"], [7]) for i in range(6)]
    stats = P.balance_report(packs, 3)
    assert stats.idle_fraction == 0.0


def test_balance_single_worker_zero_idle():
    packs = [P.PackSkeleton([f"p{i}"], [n]) for i, n in enumerate((3, 9, 1))]
    assert P.balance_report(packs, 1).idle_fraction == 0.0


def test_balance_csv(tmp_path):
    packs = [P.PackSkeleton([f"p{i}"], [n]) for i, n in enumerate((4, 5, 6))]
    stats = P.balance_report(packs, 2)
    out = tmp_path / "balance.csv"
    P.write_balance_csv(stats, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "worker,step,tokens"
    assert lines[1:] == ["0,0,4", "1,0,5", "0,1,6"]
