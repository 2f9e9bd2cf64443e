import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


# --------------------------------------------------------------------------
# small hand-built project used across module tests

from datetime import datetime, timedelta, timezone  # noqa: E402

from camtrap.datamodel import (  # noqa: E402
    Camera,
    CameraLocation,
    Deployment,
    Detection,
    ImageRecord,
    Plot,
    ProjectStore,
    Sequence,
    Trigger,
)

START = datetime(2008, 3, 1, tzinfo=timezone.utc)


def heartbeats(dep_id: str, start: datetime, days: float, every_h: float = 12.0, skip=()):
    """Time-lapse images every ``every_h`` hours, omitting hours in ``skip``."""
    out = []
    h = every_h
    while h <= days * 24 + 1e-9:
        if not any(lo < h < hi for lo, hi in skip):
            out.append(ImageRecord(dep_id, start + timedelta(hours=h), Trigger.TIMELAPSE,
                                   f"{dep_id}/T{int(h)}.jpg"))
        h += every_h
    return out


def build_store(n_deployments: int = 2, days: float = 8.0, trail=(False,)) -> ProjectStore:
    store = ProjectStore()
    store.add(Plot("P1", "low", 1.0))
    for i in range(n_deployments):
        store.add(CameraLocation(f"L{i}", "P1", 10.0 * i, 0.0,
                                 "trail" if trail[i % len(trail)] else "random", 20.0))
        store.add(Camera(f"C{i}", "RC55"))
        dep = Deployment(f"D{i}", f"C{i}", f"L{i}", START, START + timedelta(days=days))
        store.add(dep)
        store.extend(heartbeats(dep.deployment_id, START, days))
    return store


def add_sequence(store, dep_id, seq_id, at_hours, species, n_images=3, **det):
    t = START + timedelta(hours=at_hours)
    store.add(Sequence(seq_id, dep_id, t, t + timedelta(seconds=n_images - 1), n_images))
    if species:
        store.add(Detection(seq_id, species, **det))


@pytest.fixture
def small_store():
    return build_store()
