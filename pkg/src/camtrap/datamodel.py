"""Entity schema and the file-backed project store.

A project is a directory holding one CSV table per entity plus a versioned
``project.json`` manifest::

    project/
      project.json
      plots.csv  locations.csv  cameras.csv  deployments.csv
      images.csv  sequences.csv  detections.csv  walktests.csv
      decisions.csv          (flag-resolution log, see :mod:`camtrap.ingest`)

Column names are exactly the dataclass field names below. Timestamps are
ISO-8601 UTC strings at 1 s resolution.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import logging
import math
import re
import typing
import warnings
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Optional

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HEARTBEAT_GRACE = timedelta(hours=24)
DEFAULT_IDENTIFIABLE = ("ocelot", "paca")
SECONDS_PER_DAY = 86400.0


class ValidationError(ValueError):
    """An entity or a table violates a schema invariant."""


class StoreError(ValidationError):
    """A store file cannot be read; carries the offending table and row."""

    def __init__(self, table: str, row: int | None, message: str):
        self.table = table
        self.row = row
        where = f"{table}.csv" if row is None else f"{table}.csv row {row}"
        super().__init__(f"{where}: {message}")


class EffortWarning(UserWarning):
    """Effort could not be established from heartbeat images."""


class FruitClass(str, enum.Enum):
    LOW = "low"
    HIGH = "high"


class Placement(str, enum.Enum):
    RANDOM = "random"
    TRAIL = "trail"


class Trigger(str, enum.Enum):
    MOTION = "motion"
    TIMELAPSE = "timelapse"


class SequenceStatus(str, enum.Enum):
    AUTO = "auto"
    FLAGGED = "flagged"
    RESOLVED_MERGE = "resolved_merge"
    RESOLVED_SPLIT = "resolved_split"


class FailureCategory(str, enum.Enum):
    LENS_BLUR = "lens_blur"
    HUMIDITY_CIRCUIT = "humidity_circuit"
    OTHER = "other"
    NONE = "none"


# --------------------------------------------------------------------------
# timestamps


_FRACTION = re.compile(r"(?<=:\d\d)\.\d+")


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime.

    Naive values are taken as UTC; sub-second precision is dropped.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(_FRACTION.sub("", text))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def days_between(start: datetime, end: datetime) -> float:
    return (end - start).total_seconds() / SECONDS_PER_DAY


# --------------------------------------------------------------------------
# entities


@dataclass(frozen=True)
class Plot:
    plot_id: str
    fruit_class: FruitClass
    area_ha: float

    def __post_init__(self):
        object.__setattr__(self, "fruit_class", FruitClass(self.fruit_class))
        if not self.area_ha > 0:
            raise ValidationError(f"plot {self.plot_id}: area_ha must be > 0")


@dataclass(frozen=True)
class CameraLocation:
    location_id: str
    plot_id: Optional[str]
    easting_m: float
    northing_m: float
    placement: Placement
    mount_height_cm: float

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement(self.placement))
        if not (math.isfinite(self.easting_m) and math.isfinite(self.northing_m)):
            raise ValidationError(f"location {self.location_id}: coordinates must be finite")


@dataclass(frozen=True)
class FailureEvent:
    date: date
    category: FailureCategory

    def __post_init__(self):
        object.__setattr__(self, "category", FailureCategory(self.category))


@dataclass(frozen=True)
class Camera:
    """A camera unit and its failure log.

    Each event opens a failure that is closed by the next event (cameras
    went back to the manufacturer between failures), so event dates must be
    strictly increasing. Category ``none`` records an inspection that found
    nothing wrong.
    """

    camera_id: str
    model: str
    failure_events: tuple[FailureEvent, ...] = ()

    def __post_init__(self):
        events = tuple(self.failure_events)
        object.__setattr__(self, "failure_events", events)
        for a, b in zip(events, events[1:]):
            if not a.date < b.date:
                raise ValidationError(
                    f"camera {self.camera_id}: overlapping open failures on {a.date} and {b.date}"
                )

    @property
    def failures(self) -> tuple[FailureEvent, ...]:
        return tuple(e for e in self.failure_events if e.category is not FailureCategory.NONE)


@dataclass(frozen=True)
class Deployment:
    deployment_id: str
    camera_id: str
    location_id: str
    start: datetime
    end: datetime
    nominal_days: float = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "start", utc(self.start))
        object.__setattr__(self, "end", utc(self.end))
        if not self.end > self.start:
            raise ValidationError(f"deployment {self.deployment_id}: end must be after start")
        span = days_between(self.start, self.end)
        if self.nominal_days is None:
            object.__setattr__(self, "nominal_days", span)
        elif abs(self.nominal_days - span) > 1e-9:
            raise ValidationError(
                f"deployment {self.deployment_id}: nominal_days {self.nominal_days} != {span}"
            )

    def contains(self, ts: datetime) -> bool:
        return self.start <= ts <= self.end

    def overlaps(self, other: Deployment) -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class ImageRecord:
    deployment_id: str
    timestamp: datetime
    trigger: Trigger
    frame_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "timestamp", utc(self.timestamp))
        object.__setattr__(self, "trigger", Trigger(self.trigger))


@dataclass(frozen=True)
class Sequence:
    sequence_id: str
    deployment_id: str
    start: datetime
    end: datetime
    image_count: int
    status: SequenceStatus = SequenceStatus.AUTO

    def __post_init__(self):
        object.__setattr__(self, "start", utc(self.start))
        object.__setattr__(self, "end", utc(self.end))
        object.__setattr__(self, "status", SequenceStatus(self.status))
        if self.image_count < 1:
            raise ValidationError(f"sequence {self.sequence_id}: image_count must be >= 1")
        if self.start > self.end:
            raise ValidationError(f"sequence {self.sequence_id}: start after end")

    @property
    def resolved(self) -> bool:
        return self.status is not SequenceStatus.FLAGGED


@dataclass(frozen=True)
class Detection:
    sequence_id: str
    species_code: str
    group_count: int = 1
    individual_id: Optional[str] = None

    def __post_init__(self):
        if self.group_count < 1:
            raise ValidationError(
                f"detection {self.sequence_id}/{self.species_code}: group_count must be >= 1"
            )


@dataclass(frozen=True)
class WalkTest:
    deployment_id: str
    date: date
    detection_distance_m: float

    def __post_init__(self):
        if not self.detection_distance_m >= 0:
            raise ValidationError(f"walk test {self.deployment_id}: distance must be >= 0")


TABLES: dict[str, type] = {
    "plots": Plot,
    "locations": CameraLocation,
    "cameras": Camera,
    "deployments": Deployment,
    "images": ImageRecord,
    "sequences": Sequence,
    "detections": Detection,
    "walktests": WalkTest,
}
TABLE_OF = {cls: name for name, cls in TABLES.items()}


# --------------------------------------------------------------------------
# CSV codec


def _encode(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, datetime):
        return format_timestamp(value)
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):  # failure events
        return ";".join(f"{e.date.isoformat()}:{e.category.value}" for e in value)
    return str(value)


def _decoder(hint: Any):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        inner = [a for a in typing.get_args(hint) if a is not type(None)][0]
        dec = _decoder(inner)
        return lambda s: None if s == "" else dec(s)
    if origin is tuple:
        def events(s: str):
            out = []
            for item in filter(None, s.split(";")):
                d, _, cat = item.partition(":")
                out.append(FailureEvent(date.fromisoformat(d), FailureCategory(cat)))
            return tuple(out)
        return events
    if hint is datetime:
        return parse_timestamp
    if hint is date:
        return date.fromisoformat
    if hint is float:
        return float
    if hint is int:
        return int
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        return hint
    return str


def _codec(cls: type) -> list[tuple[str, Any]]:
    hints = typing.get_type_hints(cls)
    return [(f.name, _decoder(hints[f.name])) for f in dataclasses.fields(cls)]


_CODECS = {name: _codec(cls) for name, cls in TABLES.items()}


def to_row(entity: Any) -> list[str]:
    return [_encode(getattr(entity, f.name)) for f in dataclasses.fields(entity)]


def columns(table: str) -> list[str]:
    return [name for name, _ in _CODECS[table]]


def write_table(path: Path, table: str, entities: Iterable[Any]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns(table))
        for e in entities:
            writer.writerow(to_row(e))


def read_table(path: Path, table: str) -> Iterable[tuple[int, Any]]:
    """Yield ``(row_number, entity)``; row numbers count the header as row 1."""
    codec = _CODECS[table]
    cls = TABLES[table]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise StoreError(table, None, "missing header") from None
        expected = [name for name, _ in codec]
        if header != expected:
            raise StoreError(table, 1, f"header {header} != {expected}")
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(codec):
                raise StoreError(table, lineno, f"expected {len(codec)} fields, got {len(raw)}")
            try:
                kwargs = {name: dec(value) for (name, dec), value in zip(codec, raw)}
                yield lineno, cls(**kwargs)
            except StoreError:
                raise
            except (ValueError, KeyError) as exc:
                raise StoreError(table, lineno, str(exc)) from None


# --------------------------------------------------------------------------
# effort


def downtime_intervals(
    deployment: Deployment, heartbeats: Iterable[ImageRecord]
) -> list[tuple[datetime, datetime]]:
    """Intervals during which the camera is not known to be working.

    Deployment start and end act as anchors; any gap between consecutive
    anchors/heartbeats longer than 24 h loses everything past the first 24 h.
    With no heartbeats at all the whole deployment is down.
    """
    times = sorted(
        hb.timestamp
        for hb in heartbeats
        if hb.trigger is Trigger.TIMELAPSE
        and hb.deployment_id == deployment.deployment_id
        and deployment.contains(hb.timestamp)
    )
    if not times:
        return [(deployment.start, deployment.end)]
    anchors = [deployment.start, *times, deployment.end]
    down = []
    for a, b in zip(anchors, anchors[1:]):
        if b - a > HEARTBEAT_GRACE:
            down.append((a + HEARTBEAT_GRACE, b))
    return down


def effective_days(deployment: Deployment, heartbeats: Iterable[ImageRecord]) -> float:
    """Camera-days of confirmed operation for one deployment.

    Examples
    --------
    An 8-day deployment with a single 72 h gap between heartbeats loses the
    48 h beyond the grace period and is credited with 6.0 days.
    """
    heartbeats = [
        hb
        for hb in heartbeats
        if hb.trigger is Trigger.TIMELAPSE
        and hb.deployment_id == deployment.deployment_id
        and deployment.contains(hb.timestamp)
    ]
    if not heartbeats:
        warnings.warn(
            f"deployment {deployment.deployment_id} has no heartbeat images; effective days = 0",
            EffortWarning,
            stacklevel=2,
        )
        return 0.0
    lost = sum(days_between(a, b) for a, b in downtime_intervals(deployment, heartbeats))
    return min(deployment.nominal_days, max(0.0, deployment.nominal_days - lost))


# --------------------------------------------------------------------------
# store


@dataclass
class ProjectStore:
    """In-memory view of a project; ``root`` is ``None`` for scratch stores.

    Inserts are validated against everything already present, so table
    order matters: plots, locations and cameras before deployments, and
    deployments before images, sequences and walk tests. Single writer.
    """

    root: Optional[Path] = None
    identifiable_species: tuple[str, ...] = DEFAULT_IDENTIFIABLE
    settings: dict = field(default_factory=dict)
    _rows: dict[str, list] = field(default_factory=lambda: {t: [] for t in TABLES})

    def __post_init__(self):
        self._index: dict[str, dict[Any, Any]] = {t: {} for t in TABLES}
        self._by_camera: dict[str, list[Deployment]] = defaultdict(list)
        self._seq_by_dep: dict[str, list[Sequence]] = defaultdict(list)
        self._img_by_dep: dict[str, list[ImageRecord]] = defaultdict(list)
        self._det_by_seq: dict[str, list[Detection]] = defaultdict(list)
        self._walk_by_dep: dict[str, WalkTest] = {}
        self._eff_cache: dict[str, float] = {}

    # -- table views -------------------------------------------------------

    @property
    def plots(self) -> list[Plot]:
        return list(self._rows["plots"])

    @property
    def locations(self) -> list[CameraLocation]:
        return list(self._rows["locations"])

    @property
    def cameras(self) -> list[Camera]:
        return list(self._rows["cameras"])

    @property
    def deployments(self) -> list[Deployment]:
        return list(self._rows["deployments"])

    @property
    def images(self) -> list[ImageRecord]:
        return list(self._rows["images"])

    @property
    def sequences(self) -> list[Sequence]:
        return list(self._rows["sequences"])

    @property
    def detections(self) -> list[Detection]:
        return list(self._rows["detections"])

    @property
    def walktests(self) -> list[WalkTest]:
        return list(self._rows["walktests"])

    def count(self, table: str) -> int:
        return len(self._rows[table])

    def get(self, table: str, key: str) -> Any:
        return self._index[table][key]

    def deployment(self, deployment_id: str) -> Deployment:
        return self._index["deployments"][deployment_id]

    def location(self, location_id: str) -> CameraLocation:
        return self._index["locations"][location_id]

    def sequence(self, sequence_id: str) -> Sequence:
        return self._index["sequences"][sequence_id]

    def sequences_of(self, deployment_id: str) -> list[Sequence]:
        return sorted(self._seq_by_dep.get(deployment_id, []), key=lambda s: s.start)

    def detections_of(self, sequence_id: str) -> list[Detection]:
        return list(self._det_by_seq.get(sequence_id, []))

    def images_of(self, deployment_id: str, trigger: Trigger | None = None) -> list[ImageRecord]:
        imgs = self._img_by_dep.get(deployment_id, [])
        if trigger is not None:
            imgs = [i for i in imgs if i.trigger is trigger]
        return sorted(imgs, key=lambda i: i.timestamp)

    def walktest_of(self, deployment_id: str) -> WalkTest | None:
        return self._walk_by_dep.get(deployment_id)

    def species(self) -> list[str]:
        return sorted({d.species_code for d in self._rows["detections"]})

    # -- effort ------------------------------------------------------------

    def effective_days(self, deployment_id: str) -> float:
        if deployment_id not in self._eff_cache:
            dep = self.deployment(deployment_id)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EffortWarning)
                self._eff_cache[deployment_id] = effective_days(
                    dep, self.images_of(deployment_id, Trigger.TIMELAPSE)
                )
        return self._eff_cache[deployment_id]

    def downtime(self, deployment_id: str) -> list[tuple[datetime, datetime]]:
        return downtime_intervals(
            self.deployment(deployment_id), self.images_of(deployment_id, Trigger.TIMELAPSE)
        )

    def effort_days(self, deployment_id: str, effort: str = "effective") -> float:
        if effort == "effective":
            return self.effective_days(deployment_id)
        if effort == "nominal":
            return self.deployment(deployment_id).nominal_days
        raise ValueError(f"effort must be 'effective' or 'nominal', not {effort!r}")

    # -- inserts -----------------------------------------------------------

    def add(self, *entities: Any) -> None:
        """Validate and append entities; a failure leaves earlier ones in place."""
        for e in entities:
            table = TABLE_OF.get(type(e))
            if table is None:
                raise TypeError(f"not a store entity: {type(e).__name__}")
            getattr(self, f"_check_{table}")(e)
            self._append(table, e)

    def extend(self, entities: Iterable[Any]) -> None:
        self.add(*entities)

    def _append(self, table: str, e: Any) -> None:
        self._rows[table].append(e)
        if table == "plots":
            self._index[table][e.plot_id] = e
        elif table == "locations":
            self._index[table][e.location_id] = e
        elif table == "cameras":
            self._index[table][e.camera_id] = e
        elif table == "deployments":
            self._index[table][e.deployment_id] = e
            self._by_camera[e.camera_id].append(e)
        elif table == "images":
            self._img_by_dep[e.deployment_id].append(e)
            self._eff_cache.pop(e.deployment_id, None)
        elif table == "sequences":
            self._index[table][e.sequence_id] = e
            self._seq_by_dep[e.deployment_id].append(e)
        elif table == "detections":
            self._index[table][(e.sequence_id, e.species_code)] = e
            self._det_by_seq[e.sequence_id].append(e)
        elif table == "walktests":
            self._walk_by_dep[e.deployment_id] = e

    def _require(self, table: str, key: str, what: str) -> None:
        if key not in self._index[table]:
            raise ValidationError(f"{what} references unknown {table[:-1]} {key!r}")

    def _check_plots(self, p: Plot) -> None:
        if p.plot_id in self._index["plots"]:
            raise ValidationError(f"duplicate plot_id {p.plot_id!r}")

    def _check_locations(self, loc: CameraLocation) -> None:
        if loc.location_id in self._index["locations"]:
            raise ValidationError(f"duplicate location_id {loc.location_id!r}")
        if loc.plot_id is not None:
            self._require("plots", loc.plot_id, f"location {loc.location_id}")

    def _check_cameras(self, cam: Camera) -> None:
        if cam.camera_id in self._index["cameras"]:
            raise ValidationError(f"duplicate camera_id {cam.camera_id!r}")

    def _check_deployments(self, dep: Deployment) -> None:
        if dep.deployment_id in self._index["deployments"]:
            raise ValidationError(f"duplicate deployment_id {dep.deployment_id!r}")
        self._require("cameras", dep.camera_id, f"deployment {dep.deployment_id}")
        self._require("locations", dep.location_id, f"deployment {dep.deployment_id}")
        for other in self._by_camera.get(dep.camera_id, []):
            if dep.overlaps(other):
                raise ValidationError(
                    f"deployments {other.deployment_id} and {dep.deployment_id} of camera "
                    f"{dep.camera_id} overlap in time"
                )

    def _check_images(self, img: ImageRecord) -> None:
        self._require("deployments", img.deployment_id, "image")
        dep = self.deployment(img.deployment_id)
        if not dep.contains(img.timestamp):
            raise ValidationError(
                f"image {img.frame_ref or format_timestamp(img.timestamp)} lies outside "
                f"deployment {dep.deployment_id} [{format_timestamp(dep.start)}, "
                f"{format_timestamp(dep.end)}]"
            )

    def _check_sequences(self, seq: Sequence) -> None:
        if seq.sequence_id in self._index["sequences"]:
            raise ValidationError(f"duplicate sequence_id {seq.sequence_id!r}")
        self._require("deployments", seq.deployment_id, f"sequence {seq.sequence_id}")
        dep = self.deployment(seq.deployment_id)
        if not (dep.contains(seq.start) and dep.contains(seq.end)):
            raise ValidationError(
                f"sequence {seq.sequence_id} lies outside deployment {dep.deployment_id}"
            )
        for other in self._seq_by_dep.get(seq.deployment_id, []):
            if seq.start <= other.end and other.start <= seq.end:
                raise ValidationError(
                    f"sequences {other.sequence_id} and {seq.sequence_id} overlap"
                )

    def _check_detections(self, det: Detection) -> None:
        self._require("sequences", det.sequence_id, f"detection of {det.species_code}")
        if (det.sequence_id, det.species_code) in self._index["detections"]:
            raise ValidationError(
                f"duplicate detection ({det.sequence_id}, {det.species_code})"
            )
        if det.individual_id is not None and det.species_code not in self.identifiable_species:
            raise ValidationError(
                f"individual_id given for {det.species_code!r}, which is not pattern-identifiable"
            )

    def _check_walktests(self, wt: WalkTest) -> None:
        self._require("deployments", wt.deployment_id, "walk test")
        if wt.deployment_id in self._walk_by_dep:
            raise ValidationError(f"second walk test for deployment {wt.deployment_id}")

    def replace_sequences(
        self, sequences: Iterable[Sequence], detections: Iterable[Detection] | None = None
    ) -> None:
        """Swap in a new segmentation.

        Existing detections are kept when their sequence survives; ones whose
        sequence disappeared raise unless ``detections`` replaces them all.
        """
        old_dets = self._rows["detections"] if detections is None else list(detections)
        self._rows["sequences"] = []
        self._rows["detections"] = []
        self._index["sequences"] = {}
        self._index["detections"] = {}
        self._seq_by_dep = defaultdict(list)
        self._det_by_seq = defaultdict(list)
        self.extend(sequences)
        self.extend(old_dets)

    # -- persistence -------------------------------------------------------

    def save(self, root: Path | str | None = None) -> None:
        if root is not None:
            self.root = Path(root)
        if self.root is None:
            raise ValueError("scratch store has no root; pass one to save()")
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "identifiable_species": list(self.identifiable_species),
            "settings": self.settings,
        }
        (self.root / "project.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for table in TABLES:
            rows = self._rows[table]
            if table in _ROW_ORDER:
                rows = sorted(rows, key=_ROW_ORDER[table])
            write_table(self.root / f"{table}.csv", table, rows)


# Derived tables are written in a canonical order so that the bytes on disk
# depend only on their content, not on the order rows were produced in.
_ROW_ORDER = {
    "images": lambda e: (e.deployment_id, e.timestamp, e.frame_ref),
    "sequences": lambda e: (e.deployment_id, e.start),
    "detections": lambda e: (e.sequence_id, e.species_code),
}


def open_project(root_path: Path | str) -> ProjectStore:
    """Open (or create) the project store at ``root_path``."""
    root = Path(root_path)
    if root.exists() and not root.is_dir():
        raise StoreError("project", None, f"{root} is not a directory")
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StoreError("project", None, f"cannot create {root}: {exc}") from None
    manifest_path = root / "project.json"
    if not manifest_path.exists():
        store = ProjectStore(root=root)
        store.save()
        log.info("created empty project at %s", root)
        return store
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StoreError("project", None, f"unreadable project.json: {exc}") from None
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise StoreError("project", None, f"unsupported schema_version {version!r}")
    store = ProjectStore(
        root=root,
        identifiable_species=tuple(manifest.get("identifiable_species", DEFAULT_IDENTIFIABLE)),
        settings=dict(manifest.get("settings", {})),
    )
    for table in TABLES:
        path = root / f"{table}.csv"
        if not path.exists():
            continue
        try:
            for lineno, entity in read_table(path, table):
                try:
                    store.add(entity)
                except ValidationError as exc:
                    raise StoreError(table, lineno, str(exc)) from None
        except OSError as exc:
            raise StoreError(table, None, str(exc)) from None
    return store
