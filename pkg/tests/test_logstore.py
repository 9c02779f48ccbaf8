import json
import logging

import numpy as np
import pytest

from ragslo.control import ACTIONS
from ragslo.generation import BackendError, SimulatedBackend
from ragslo.logstore import (
    LogIntegrityError,
    LogVersionError,
    SplitError,
    SweepAbortedError,
    read_log,
    run_sweep,
    split_log,
    strip_timestamps,
    write_log,
)
from ragslo.slo import QUALITY_FIRST, compute_reward

SIM = SimulatedBackend()


def lines(path):
    return path.read_text(encoding="utf-8").splitlines()


def test_three_questions_fifteen_records(tmp_path, desk):
    paragraphs, questions, index = desk
    path = tmp_path / "log.jsonl"
    summary = run_sweep(questions, index, paragraphs, SIM, 3, 0, path)
    rows = lines(path)
    assert len(rows) == 16
    header = json.loads(rows[0])
    assert header["kind"] == "header" and header["schema_version"] == 1
    assert header["feature_dim"] == 261 and header["backend"] == "sim" and header["seed"] == 0
    assert summary.completed == 3 and summary.failed_qids == []
    actions = [json.loads(r)["action"] for r in rows[1:]]
    assert actions == [0, 1, 2, 3, 4] * 3


def test_sweep_deterministic_apart_from_timestamps(tmp_path, desk):
    paragraphs, questions, index = desk
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_sweep(questions, index, paragraphs, SIM, 10, 5, a, clock=lambda: "t1")
    run_sweep(questions, index, paragraphs, SIM, 10, 5, b, clock=lambda: "t2")
    assert a.read_bytes() != b.read_bytes()
    assert [strip_timestamps(x) for x in lines(a)] == [strip_timestamps(x) for x in lines(b)]


def test_sample_size_zero_writes_header_only(tmp_path, desk, caplog):
    paragraphs, questions, index = desk
    path = tmp_path / "empty.jsonl"
    with caplog.at_level(logging.WARNING):
        run_sweep(questions, index, paragraphs, SIM, 0, 0, path)
    assert len(lines(path)) == 1
    assert "header-only" in caplog.text
    assert len(read_log(path)) == 0


def test_sample_size_too_large(tmp_path, desk):
    paragraphs, questions, index = desk
    with pytest.raises(ValueError):
        run_sweep(questions, index, paragraphs, SIM, len(questions) + 1, 0, tmp_path / "x.jsonl")


class FlakyBackend:
    """Fails every action of selected questions."""

    name = "flaky"
    max_in_flight = 3

    def __init__(self, bad_qids):
        self.bad = set(bad_qids)

    def generate(self, mode, passages, example):
        if example.qid in self.bad:
            raise BackendError("unavailable")
        return SIM.generate(mode, passages, example)


def test_failed_questions_dropped_and_counted(tmp_path, desk):
    paragraphs, questions, index = desk
    path = tmp_path / "log.jsonl"
    from ragslo.logstore import sample_examples

    chosen = sample_examples(questions, 20, 1)
    summary = run_sweep(questions, index, paragraphs, FlakyBackend([chosen[4].qid]), 20, 1, path)
    assert summary.failed_qids == [chosen[4].qid]
    ds = read_log(path)
    assert len(ds) == 19 and chosen[4].qid not in ds.records
    # thread-pooled sweep keeps sample order
    assert ds.qids == [q.qid for q in chosen if q.qid != chosen[4].qid]


def test_sweep_aborts_over_failure_budget(tmp_path, desk):
    paragraphs, questions, index = desk
    from ragslo.logstore import sample_examples

    chosen = sample_examples(questions, 10, 2)
    path = tmp_path / "log.jsonl"
    with pytest.raises(SweepAbortedError):
        run_sweep(questions, index, paragraphs, FlakyBackend([c.qid for c in chosen[:2]]), 10, 2, path)
    assert not path.exists()


def test_round_trip(tmp_path, desk_log):
    path, ds = desk_log
    again = tmp_path / "again.jsonl"
    write_log(ds, again)
    assert again.read_bytes() == path.read_bytes()
    ds2 = read_log(again)
    assert ds2.qids == ds.qids and ds2.records == ds.records
    for q in ds.qids:
        np.testing.assert_array_equal(ds2.features[q], ds.features[q])


def test_features_stored_once_per_qid(desk_log):
    path, ds = desk_log
    for row in map(json.loads, lines(path)[1:]):
        assert (row["features"] is not None) == (row["action"] == 0)


def test_missing_line_is_integrity_error(tmp_path, desk_log):
    path, ds = desk_log
    rows = lines(path)
    victim = json.loads(rows[8])
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(rows[:8] + rows[9:]) + "\n")
    with pytest.raises(LogIntegrityError, match=victim["qid"]) as err:
        read_log(broken)
    assert err.value.qid == victim["qid"]


def test_schema_version_mismatch(tmp_path, desk_log):
    path, _ = desk_log
    rows = lines(path)
    header = json.loads(rows[0])
    header["schema_version"] = 99
    bad = tmp_path / "v.jsonl"
    bad.write_text("\n".join([json.dumps(header)] + rows[1:]) + "\n")
    with pytest.raises(LogVersionError):
        read_log(bad)


def test_rewards_recomputed_from_file(desk_log):
    path, ds = desk_log
    R = read_log(path).reward_matrix(QUALITY_FIRST)
    q = ds.qids[0]
    assert R[0].tolist() == [compute_reward(r.flags, QUALITY_FIRST) for r in ds.records[q]]
    np.testing.assert_array_equal(R, ds.reward_matrix(QUALITY_FIRST))


def test_split_partition_and_determinism(desk_log):
    _, ds = desk_log
    sub = ds.subset(ds.qids[:10])
    train, ev = split_log(sub, 0.2, seed=3)
    assert len(train) == 8 and len(ev) == 2
    assert not set(train.qids) & set(ev.qids)
    assert set(train.qids) | set(ev.qids) == set(sub.qids)
    again = split_log(sub, 0.2, seed=3)
    assert again[0].qids == train.qids and again[1].qids == ev.qids


def test_default_split_sizes(desk_log):
    _, ds = desk_log
    train, ev = split_log(ds)
    assert len(ev) == 60 and len(train) == 60


def test_split_errors(desk_log):
    _, ds = desk_log
    with pytest.raises(SplitError):
        split_log(ds.subset(ds.qids[:1]), 0.5)
    with pytest.raises(SplitError):
        split_log(ds, 1.0)
