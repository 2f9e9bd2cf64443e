"""Image-manifest parsing and segmentation of trigger images into passages.

Motion-trigger images taken less than ``merge_below_s`` apart belong to the
same passage; gaps longer than ``split_above_s`` always separate passages.
Everything in between is flagged for a human to lump or split, and those
decisions are kept in an append-only log so segmentation can be re-run
without losing curation.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

from camtrap.datamodel import (
    Deployment,
    ImageRecord,
    ProjectStore,
    Sequence,
    SequenceStatus,
    Trigger,
    ValidationError,
    format_timestamp,
    parse_timestamp,
)

MANIFEST_COLUMNS = ["deployment_id", "timestamp", "trigger", "frame_ref"]
DECISION_COLUMNS = ["sequence_a", "sequence_b", "decision", "operator", "date"]


@dataclass(frozen=True)
class SegmentationPolicy:
    merge_below_s: float = 30.0
    split_above_s: float = 2400.0

    def __post_init__(self):
        if not 0 < self.merge_below_s < self.split_above_s:
            raise ValueError("need 0 < merge_below_s < split_above_s")

    def classify(self, gap_s: float) -> str:
        """``'merge'``, ``'split'`` or ``'flag'``; exact ties go to ``'flag'``."""
        if gap_s < self.merge_below_s:
            return "merge"
        if gap_s > self.split_above_s:
            return "split"
        return "flag"


@dataclass(frozen=True)
class FlagDecision:
    sequence_a: str
    sequence_b: str
    decision: str
    operator: str = ""
    date: date | None = None

    def __post_init__(self):
        if self.decision not in ("merge", "split"):
            raise ValueError(f"decision must be 'merge' or 'split', not {self.decision!r}")


# --------------------------------------------------------------------------
# manifests


def parse_manifest(
    path: Path | str,
    deployments: Mapping[str, Deployment] | ProjectStore | None = None,
) -> list[ImageRecord]:
    """Read a manifest CSV into image records sorted by deployment and time.

    When ``deployments`` is given, every row must reference a known
    deployment and fall inside its interval.
    """
    if isinstance(deployments, ProjectStore):
        deployments = {d.deployment_id: d for d in deployments.deployments}
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty manifest, no header") from None
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in MANIFEST_COLUMNS]
        if unknown:
            raise ValidationError(f"{path}: unknown column(s) {unknown}")
        if header != MANIFEST_COLUMNS:
            raise ValidationError(f"{path}: header must be {','.join(MANIFEST_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ValidationError(f"{path} line {lineno}: expected 4 fields, got {len(row)}")
            dep_id, ts_text, trigger_text, frame_ref = row
            try:
                ts = parse_timestamp(ts_text)
            except ValueError:
                raise ValidationError(
                    f"{path} line {lineno}: unparseable timestamp {ts_text!r}"
                ) from None
            trigger_text = trigger_text.strip().casefold()
            try:
                trigger = Trigger(trigger_text)
            except ValueError:
                raise ValidationError(
                    f"{path} line {lineno}: trigger must be motion or timelapse, got {row[2]!r}"
                ) from None
            dep_id = dep_id.strip()
            if deployments is not None:
                dep = deployments.get(dep_id)
                if dep is None:
                    raise ValidationError(f"{path} line {lineno}: unknown deployment {dep_id!r}")
                if not dep.contains(ts):
                    raise ValidationError(
                        f"{path} line {lineno}: timestamp {format_timestamp(ts)} outside "
                        f"deployment {dep_id}"
                    )
            records.append(ImageRecord(dep_id, ts, trigger, frame_ref.strip()))
    records.sort(key=lambda r: (r.deployment_id, r.timestamp))
    return records


def write_manifest(path: Path | str, images: Iterable[ImageRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for img in images:
            w.writerow([img.deployment_id, format_timestamp(img.timestamp),
                        img.trigger.value, img.frame_ref])


# --------------------------------------------------------------------------
# segmentation


def segment_sequences(
    images: list[ImageRecord],
    policy: SegmentationPolicy = SegmentationPolicy(),
) -> list[Sequence]:
    """Group the motion images of one deployment into passage sequences.

    Sequences on either side of a gap that is neither clearly short nor
    clearly long get status ``flagged``; the rest are ``auto``. Ids are
    ``<deployment_id>-<n>`` numbered from 1 in time order.
    """
    if not images:
        return []
    dep_ids = {img.deployment_id for img in images}
    if len(dep_ids) > 1:
        raise ValidationError(f"images from several deployments: {sorted(dep_ids)}")
    if any(img.trigger is not Trigger.MOTION for img in images):
        raise ValidationError("segment_sequences takes motion-trigger images only")
    for a, b in zip(images, images[1:]):
        if b.timestamp < a.timestamp:
            raise ValidationError(
                f"images not time-sorted at {format_timestamp(b.timestamp)}"
            )
    dep_id = images[0].deployment_id

    runs: list[list[ImageRecord]] = [[images[0]]]
    flagged_after: list[bool] = []
    for prev, img in zip(images, images[1:]):
        kind = policy.classify((img.timestamp - prev.timestamp).total_seconds())
        if kind == "merge":
            runs[-1].append(img)
        else:
            flagged_after.append(kind == "flag")
            runs.append([img])

    out = []
    for i, run in enumerate(runs):
        flagged = (i > 0 and flagged_after[i - 1]) or (i < len(runs) - 1 and flagged_after[i])
        out.append(
            Sequence(
                sequence_id=f"{dep_id}-{i + 1:04d}",
                deployment_id=dep_id,
                start=run[0].timestamp,
                end=run[-1].timestamp,
                image_count=len(run),
                status=SequenceStatus.FLAGGED if flagged else SequenceStatus.AUTO,
            )
        )
    return out


def _gap_s(a: Sequence, b: Sequence) -> float:
    return (b.start - a.end).total_seconds()


def resolve_flagged(
    seq_a: Sequence,
    seq_b: Sequence,
    decision: str,
    policy: SegmentationPolicy = SegmentationPolicy(),
) -> list[Sequence]:
    """Lump or split two neighbouring sequences across a flagged boundary."""
    if decision not in ("merge", "split"):
        raise ValueError(f"decision must be 'merge' or 'split', not {decision!r}")
    if seq_a.deployment_id != seq_b.deployment_id or not seq_a.end < seq_b.start:
        raise ValidationError(
            f"sequences {seq_a.sequence_id} and {seq_b.sequence_id} are not adjacent"
        )
    if policy.classify(_gap_s(seq_a, seq_b)) == "merge":
        raise ValidationError(
            f"sequences {seq_a.sequence_id} and {seq_b.sequence_id} are not adjacent"
        )
    if (
        seq_a.status is not SequenceStatus.FLAGGED
        or seq_b.status is not SequenceStatus.FLAGGED
        or policy.classify(_gap_s(seq_a, seq_b)) != "flag"
    ):
        raise ValidationError("boundary not flagged")
    if decision == "merge":
        return [
            Sequence(
                sequence_id=seq_a.sequence_id,
                deployment_id=seq_a.deployment_id,
                start=seq_a.start,
                end=seq_b.end,
                image_count=seq_a.image_count + seq_b.image_count,
                status=SequenceStatus.RESOLVED_MERGE,
            )
        ]
    return [
        replace(seq_a, status=SequenceStatus.RESOLVED_SPLIT),
        replace(seq_b, status=SequenceStatus.RESOLVED_SPLIT),
    ]


def apply_decisions(
    sequences: Iterable[Sequence],
    decisions: Iterable[FlagDecision],
    policy: SegmentationPolicy = SegmentationPolicy(),
) -> list[Sequence]:
    """Replay a decision log over an automatic segmentation.

    Decisions are applied in log order. A decision that repeats one already
    in effect is skipped, so replaying a log (or a log containing duplicate
    entries) is idempotent. Contradicting an earlier decision, or deciding
    a boundary that was never flagged, raises.
    """
    by_dep: dict[str, list[Sequence]] = defaultdict(list)
    owner: dict[str, str] = {}
    for s in sequences:
        by_dep[s.deployment_id].append(s)
        owner[s.sequence_id] = s.deployment_id

    # groups[dep] = list of member lists; state[dep][i] is the boundary after group i
    groups: dict[str, list[list[Sequence]]] = {}
    state: dict[str, list[str]] = {}
    absorbed: dict[str, str] = {}
    for dep, seqs in by_dep.items():
        seqs.sort(key=lambda s: s.start)
        groups[dep] = [[s] for s in seqs]
        state[dep] = [
            "flag" if policy.classify(_gap_s(a, b)) == "flag" else "auto"
            for a, b in zip(seqs, seqs[1:])
        ]

    for d in decisions:
        dep = owner.get(d.sequence_a)
        if dep is None or owner.get(d.sequence_b) != dep:
            raise ValidationError(
                f"decision {d.sequence_a}/{d.sequence_b}: sequences unknown or in different deployments"
            )
        if absorbed.get(d.sequence_b) == d.sequence_a and d.decision == "merge":
            continue
        ids = [g[0].sequence_id for g in groups[dep]]
        try:
            i = ids.index(d.sequence_a)
        except ValueError:
            raise ValidationError(f"decision references merged-away sequence {d.sequence_a}") from None
        if i + 1 >= len(ids) or ids[i + 1] != d.sequence_b:
            raise ValidationError(f"sequences {d.sequence_a} and {d.sequence_b} are not adjacent")
        current = state[dep][i]
        if current == "split" and d.decision == "split":
            continue
        if current != "flag":
            raise ValidationError(
                f"boundary not flagged between {d.sequence_a} and {d.sequence_b}"
            )
        if d.decision == "split":
            state[dep][i] = "split"
        else:
            for s in groups[dep][i + 1]:
                absorbed[s.sequence_id] = d.sequence_a
            groups[dep][i] = groups[dep][i] + groups[dep].pop(i + 1)
            state[dep].pop(i)

    out = []
    for dep in sorted(groups):
        g, st = groups[dep], state[dep]
        for i, members in enumerate(g):
            near = [st[i - 1]] if i > 0 else []
            if i < len(st):
                near.append(st[i])
            if "flag" in near:
                status = SequenceStatus.FLAGGED
            elif len(members) > 1:
                status = SequenceStatus.RESOLVED_MERGE
            elif "split" in near:
                status = SequenceStatus.RESOLVED_SPLIT
            else:
                status = SequenceStatus.AUTO
            first, last = members[0], members[-1]
            out.append(
                Sequence(
                    sequence_id=first.sequence_id,
                    deployment_id=dep,
                    start=first.start,
                    end=last.end,
                    image_count=sum(m.image_count for m in members),
                    status=status,
                )
            )
    return out


def segment_store(
    store: ProjectStore,
    policy: SegmentationPolicy = SegmentationPolicy(),
    decisions: Iterable[FlagDecision] = (),
) -> list[Sequence]:
    """Segment every deployment's motion images and replay the decision log."""
    auto = []
    for dep in store.deployments:
        auto.extend(segment_sequences(store.images_of(dep.deployment_id, Trigger.MOTION), policy))
    return apply_decisions(auto, list(decisions), policy)


# --------------------------------------------------------------------------
# decision log


def read_decisions(path: Path | str) -> list[FlagDecision]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DECISION_COLUMNS:
            raise ValidationError(f"{path}: header must be {','.join(DECISION_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    FlagDecision(
                        row["sequence_a"],
                        row["sequence_b"],
                        row["decision"].strip().casefold(),
                        row["operator"],
                        date.fromisoformat(row["date"]) if row["date"] else None,
                    )
                )
            except ValueError as exc:
                raise ValidationError(f"{path} line {lineno}: {exc}") from None
    return out


def append_decisions(path: Path | str, decisions: Iterable[FlagDecision]) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(DECISION_COLUMNS)
        for d in decisions:
            w.writerow([d.sequence_a, d.sequence_b, d.decision, d.operator,
                        d.date.isoformat() if d.date else ""])
