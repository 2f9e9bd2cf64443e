from datetime import date, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camtrap.datamodel import ImageRecord, SequenceStatus, Trigger, ValidationError
from camtrap.ingest import (
    FlagDecision,
    SegmentationPolicy,
    append_decisions,
    apply_decisions,
    parse_manifest,
    read_decisions,
    resolve_flagged,
    segment_sequences,
    segment_store,
    write_manifest,
)
from conftest import START, build_store

HEADER = "deployment_id,timestamp,trigger,frame_ref\n"


def imgs(offsets, dep="D0"):
    return [ImageRecord(dep, START + timedelta(seconds=s), Trigger.MOTION, f"m{i}")
            for i, s in enumerate(offsets)]


# -- policy ------------------------------------------------------------------


def test_policy_classification_ties_go_to_flag():
    p = SegmentationPolicy()
    assert p.classify(29.9) == "merge"
    assert p.classify(30) == "flag"
    assert p.classify(2400) == "flag"
    assert p.classify(2400.5) == "split"
    with pytest.raises(ValueError):
        SegmentationPolicy(100, 50)
    with pytest.raises(ValueError):
        SegmentationPolicy(0, 50)


# -- manifest ------------------------------------------------------------------


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER)
    assert parse_manifest(p) == []


def test_manifest_sorted_and_trigger_normalised(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + "D0,2008-03-01T10:00:05Z,Motion ,b\n"
                 "D0,2008-03-01T10:00:00Z,motion,a\nD0,2008-03-01T12:00:00Z,TIMELAPSE,c\n")
    recs = parse_manifest(p, build_store(1))
    assert [r.frame_ref for r in recs] == ["a", "b", "c"]
    assert recs[1].trigger is Trigger.MOTION and recs[2].trigger is Trigger.TIMELAPSE


@pytest.mark.parametrize("body, message", [
    ("D0,2008-03-01T10:00:00Z,motion,a,extra\n", "expected 4 fields"),
    ("D0,yesterday,motion,a\n", "line 2: unparseable timestamp"),
    ("D0,2008-03-01T10:00:00Z,video,a\n", "trigger"),
    ("D0,2007-03-01T10:00:00Z,motion,a\n", "outside deployment D0"),
    ("D7,2008-03-01T10:00:00Z,motion,a\n", "unknown deployment"),
])
def test_manifest_errors(tmp_path, body, message):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + body)
    with pytest.raises(ValidationError, match=message):
        parse_manifest(p, build_store(1))


def test_manifest_unknown_column(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("deployment_id,timestamp,trigger,frame_ref,camera\n")
    with pytest.raises(ValidationError, match="unknown column"):
        parse_manifest(p)


def test_manifest_round_trip(tmp_path):
    images = imgs([0, 5, 99])
    write_manifest(tmp_path / "m.csv", images)
    assert parse_manifest(tmp_path / "m.csv") == images


# -- segmentation -------------------------------------------------------------


def test_three_gap_rules():
    one = segment_sequences(imgs([0, 10, 20]))
    assert len(one) == 1 and one[0].image_count == 3
    two = segment_sequences(imgs([0, 45 * 60]))
    assert [s.status for s in two] == [SequenceStatus.AUTO] * 2
    flagged = segment_sequences(imgs([0, 5 * 60]))
    assert [s.status for s in flagged] == [SequenceStatus.FLAGGED] * 2


def test_segmentation_errors():
    with pytest.raises(ValidationError, match="sorted"):
        segment_sequences(imgs([10, 0]))
    with pytest.raises(ValidationError, match="several deployments"):
        segment_sequences(imgs([0]) + imgs([5], dep="D1"))
    with pytest.raises(ValidationError, match="motion"):
        segment_sequences([ImageRecord("D0", START, Trigger.TIMELAPSE)])
    assert segment_sequences([]) == []


gap_lists = st.lists(st.sampled_from([0, 1, 10, 29, 30, 31, 600, 2399, 2400, 2401, 9000])
                     | st.integers(0, 20_000), max_size=60)


def _offsets(gaps):
    out, t = [0], 0
    for g in gaps:
        t += g
        out.append(t)
    return out


@settings(max_examples=150, deadline=None)
@given(gaps=gap_lists)
def test_partition_property(gaps):
    images = imgs(_offsets(gaps))
    seqs = segment_sequences(images)
    assert sum(s.image_count for s in seqs) == len(images)
    owned = [sum(1 for s in seqs if s.start <= im.timestamp <= s.end) for im in images]
    assert all(n == 1 for n in owned)
    assert all(a.end < b.start for a, b in zip(seqs, seqs[1:]))


@settings(max_examples=100, deadline=None)
@given(gaps=gap_lists, lo=st.floats(31, 5000), extra=st.floats(0, 5000))
def test_raising_split_never_adds_sequences(gaps, lo, extra):
    images = imgs(_offsets(gaps))
    a = segment_sequences(images, SegmentationPolicy(30, lo))
    b = segment_sequences(images, SegmentationPolicy(30, lo + extra))
    assert len(b) <= len(a)


@settings(max_examples=60, deadline=None)
@given(gaps=gap_lists, data=st.data())
def test_shuffled_manifest_gives_same_sequences(tmp_path_factory, gaps, data):
    images = imgs(_offsets(gaps))
    shuffled = data.draw(st.permutations(images))
    p = tmp_path_factory.mktemp("m") / "m.csv"
    write_manifest(p, shuffled)
    assert segment_sequences(parse_manifest(p)) == segment_sequences(images)


# -- resolution ------------------------------------------------------------------


def test_resolve_merge_and_split():
    a, b = segment_sequences(imgs([0, 1, 300, 301]))
    (m,) = resolve_flagged(a, b, "merge")
    assert (m.start, m.end, m.image_count, m.status) == (a.start, b.end, 4,
                                                          SequenceStatus.RESOLVED_MERGE)
    s = resolve_flagged(a, b, "split")
    assert [x.status for x in s] == [SequenceStatus.RESOLVED_SPLIT] * 2


def test_resolve_errors():
    a, b = segment_sequences(imgs([0, 300]))
    sa, sb = resolve_flagged(a, b, "split")
    with pytest.raises(ValidationError, match="boundary not flagged"):
        resolve_flagged(sa, sb, "merge")
    with pytest.raises(ValidationError, match="not adjacent"):
        resolve_flagged(b, a, "merge")
    auto = segment_sequences(imgs([0, 9000]))
    with pytest.raises(ValidationError, match="boundary not flagged"):
        resolve_flagged(*auto, "merge")


def test_decision_log_replay_is_idempotent(tmp_path):
    seqs = segment_sequences(imgs([0, 300, 600, 5000]))
    ids = [s.sequence_id for s in seqs]
    log = [FlagDecision(ids[0], ids[1], "merge", "op", date(2008, 3, 2)),
           FlagDecision(ids[0], ids[2], "split", "op", date(2008, 3, 2))]
    once = apply_decisions(seqs, log)
    assert [(s.image_count, s.status.value) for s in once] == [
        (2, "resolved_merge"), (1, "resolved_split"), (1, "auto")]
    assert apply_decisions(seqs, log + log) == once

    path = tmp_path / "decisions.csv"
    append_decisions(path, log[:1])
    append_decisions(path, log[1:])
    assert read_decisions(path) == log


def test_decision_on_unflagged_boundary_rejected():
    seqs = segment_sequences(imgs([0, 9000]))
    with pytest.raises(ValidationError, match="not flagged"):
        apply_decisions(seqs, [FlagDecision(seqs[0].sequence_id, seqs[1].sequence_id, "merge")])


def test_segment_store_with_log():
    store = build_store(1)
    store.extend(imgs([0, 5, 400, 405, 9000]))
    first = segment_store(store)
    assert [s.status.value for s in first] == ["flagged", "flagged", "auto"]
    log = [FlagDecision(first[0].sequence_id, first[1].sequence_id, "split")]
    again = segment_store(store, decisions=log)
    assert [s.status.value for s in again] == ["resolved_split", "resolved_split", "auto"]
    assert segment_store(store, decisions=log) == again
