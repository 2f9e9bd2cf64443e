"""Detection frequencies, detection histories, species accumulation,
sampling-effort bands, activity patterns and the equipment summaries."""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from collections.abc import Callable, Iterable, Sequence as Seq
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from camtrap._parallel import pmap, task_rng
from camtrap.datamodel import (
    SECONDS_PER_DAY,
    Camera,
    Deployment,
    FailureCategory,
    ProjectStore,
    WalkTest,
)

EXHAUSTIVE_LIMIT = 5040  # 7!

DeploymentFilter = Callable[[Deployment], bool]


# --------------------------------------------------------------------------
# detection rates


@dataclass(frozen=True)
class RateEstimate:
    species_code: str
    y: int
    t: float
    rate: float


def _species_sequences(store: ProjectStore, species: str, deployment_id: str):
    for seq in store.sequences_of(deployment_id):
        if not seq.resolved:
            continue
        if any(d.species_code == species for d in store.detections_of(seq.sequence_id)):
            yield seq


def deployment_counts(
    store: ProjectStore,
    species: str,
    deployment_filter: DeploymentFilter | None = None,
    effort: str = "effective",
) -> list[tuple[Deployment, int, float]]:
    """``(deployment, sequences of species, camera-days)`` per filtered deployment."""
    out = []
    for dep in store.deployments:
        if deployment_filter is not None and not deployment_filter(dep):
            continue
        y = sum(1 for _ in _species_sequences(store, species, dep.deployment_id))
        out.append((dep, y, store.effort_days(dep.deployment_id, effort)))
    return out


def detection_rate(
    store: ProjectStore,
    species: str,
    deployment_filter: DeploymentFilter | None = None,
    effort: str = "effective",
) -> RateEstimate:
    """Sequences of ``species`` per camera-day over the filtered deployments.

    Only resolved sequences count; flagged ones wait for curation.
    ``effort='nominal'`` uses scheduled rather than heartbeat-confirmed days.
    """
    rows = deployment_counts(store, species, deployment_filter, effort)
    y = sum(r[1] for r in rows)
    t = sum(r[2] for r in rows)
    if not t > 0:
        raise ValueError(f"zero total effort for {species!r} under this filter")
    return RateEstimate(species, y, t, y / t)


def species_rates(
    store: ProjectStore,
    deployment_filter: DeploymentFilter | None = None,
    effort: str = "effective",
) -> list[RateEstimate]:
    """Rates for every detected species, most frequent first."""
    rates = [detection_rate(store, sp, deployment_filter, effort) for sp in store.species()]
    return sorted(rates, key=lambda r: (-r.rate, r.species_code))


# --------------------------------------------------------------------------
# incidence and detection histories


@dataclass(frozen=True)
class IncidenceMatrix:
    """Deployment x species presence; ``cells`` is boolean."""

    deployments: list[str]
    species: list[str]
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool).reshape(len(self.deployments), len(self.species))
        object.__setattr__(self, "cells", cells)

    @property
    def n(self) -> int:
        return len(self.deployments)

    @classmethod
    def from_sets(cls, presence: dict[str, Iterable[str]]) -> IncidenceMatrix:
        deps = list(presence)
        species = sorted({s for v in presence.values() for s in v})
        cells = np.zeros((len(deps), len(species)), dtype=bool)
        col = {s: j for j, s in enumerate(species)}
        for i, d in enumerate(deps):
            for s in presence[d]:
                cells[i, col[s]] = True
        return cls(deps, species, cells)


def incidence_matrix(
    store: ProjectStore, deployment_filter: DeploymentFilter | None = None
) -> IncidenceMatrix:
    presence: dict[str, set[str]] = {}
    for dep in store.deployments:
        if deployment_filter is not None and not deployment_filter(dep):
            continue
        found = set()
        for seq in store.sequences_of(dep.deployment_id):
            if seq.resolved:
                found.update(d.species_code for d in store.detections_of(seq.sequence_id))
        presence[dep.deployment_id] = found
    return IncidenceMatrix.from_sets(presence)


@dataclass(frozen=True)
class DetectionHistory:
    """Deployment x occasion record: 1 detected, 0 not detected, NaN missing."""

    species_code: str
    granularity_days: int
    deployments: list[str]
    cells: np.ndarray

    @property
    def n_occasions(self) -> int:
        return self.cells.shape[1] if self.cells.ndim == 2 else 0


def detection_history(
    store: ProjectStore, species: str, granularity: int = 1
) -> DetectionHistory:
    """Per-occasion detection record for each deployment.

    Occasions are ``granularity``-day blocks counted from deployment start.
    An occasion overlapping camera downtime is missing unless the species
    was seen in it anyway.
    """
    if granularity < 1:
        raise ValueError("granularity must be >= 1 day")
    deps = store.deployments
    if not deps:
        return DetectionHistory(species, granularity, [], np.zeros((0, 0)))
    width = max(math.ceil(d.nominal_days / granularity - 1e-9) for d in deps)
    cells = np.full((len(deps), width), np.nan)
    step = timedelta(days=granularity)
    for i, dep in enumerate(deps):
        down = store.downtime(dep.deployment_id)
        k_max = math.ceil(dep.nominal_days / granularity - 1e-9)
        for k in range(k_max):
            lo = dep.start + k * step
            hi = min(dep.start + (k + 1) * step, dep.end)
            cells[i, k] = np.nan if any(a < hi and lo < b for a, b in down) else 0.0
        for seq in _species_sequences(store, species, dep.deployment_id):
            k = int((seq.start - dep.start).total_seconds() // (granularity * SECONDS_PER_DAY))
            cells[i, min(k, k_max - 1)] = 1.0
    return DetectionHistory(species, granularity, [d.deployment_id for d in deps], cells)


# --------------------------------------------------------------------------
# species accumulation


@dataclass(frozen=True)
class AccumulationCurve:
    effort: list[int]
    sobs_mean: np.ndarray
    sobs_sd: np.ndarray
    jack1_mean: np.ndarray
    jack1_sd: np.ndarray
    n_resamples: int
    seed: int
    exhaustive: bool = False


def jackknife1(inc: IncidenceMatrix) -> float:
    """First-order jackknife richness, ``Sobs + Q1 (n-1)/n``.

    ``Q1`` is the number of species found in exactly one deployment.
    """
    n = inc.n
    if n < 1:
        raise ValueError("jackknife needs at least one deployment")
    occ = inc.cells.sum(axis=0)
    sobs = int((occ > 0).sum())
    q1 = int((occ == 1).sum())
    return sobs + q1 * (n - 1) / n


def _accumulate(cells: np.ndarray, order: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = np.cumsum(cells[order], axis=0, dtype=np.int64)
    sobs = (counts > 0).sum(axis=1)
    q1 = (counts == 1).sum(axis=1)
    k = np.arange(1, len(order) + 1)
    return sobs, sobs + q1 * (k - 1) / k


def rarefaction(
    inc: IncidenceMatrix,
    n_resamples: int = 100,
    seed: int = 0,
    efforts: Seq[int] | None = None,
    threads: int | None = 1,
) -> AccumulationCurve:
    """Sample-based accumulation curve of observed (and Jack1) richness.

    Averages over random orderings of the deployments. When there are at
    most 5040 orderings they are all enumerated instead and the result is
    exact; ``n_resamples`` is then ignored.
    """
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    n = inc.n
    if n < 1:
        raise ValueError("no deployments")
    efforts = list(range(1, n + 1)) if efforts is None else [int(k) for k in efforts]
    bad = [k for k in efforts if not 1 <= k <= n]
    if bad:
        raise ValueError(f"effort {bad[0]} outside 1..{n} deployments")
    cells = inc.cells.astype(np.int64)

    exhaustive = math.factorial(n) <= EXHAUSTIVE_LIMIT
    if exhaustive:
        orders = [np.array(p) for p in itertools.permutations(range(n))]
        results = [_accumulate(cells, o) for o in orders]
    else:
        def one(i: int):
            return _accumulate(cells, task_rng(seed, i).permutation(n))

        results = pmap(one, range(n_resamples), threads)
    sobs = np.array([r[0] for r in results], dtype=float)
    jack = np.array([r[1] for r in results], dtype=float)
    idx = np.array(efforts) - 1
    return AccumulationCurve(
        effort=efforts,
        sobs_mean=sobs.mean(axis=0)[idx],
        sobs_sd=sobs.std(axis=0)[idx],
        jack1_mean=jack.mean(axis=0)[idx],
        jack1_sd=jack.std(axis=0)[idx],
        n_resamples=len(results),
        seed=seed,
        exhaustive=exhaustive,
    )


# --------------------------------------------------------------------------
# effort bands


@dataclass(frozen=True)
class EffortBands:
    effort: list[int]
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    n_resamples: int
    seed: int

    @property
    def width95(self) -> np.ndarray:
        return self.hi95 - self.lo95


def effort_bands(
    per_deployment_rates: Seq[float],
    effort_grid: Seq[int],
    n_resamples: int = 1000,
    seed: int = 0,
    threads: int | None = 1,
) -> EffortBands:
    """Spread of the mean detection rate when only ``k`` deployments are run.

    For each effort ``k``, ``k`` deployments are drawn with replacement
    ``n_resamples`` times and the mean rate of each draw recorded.
    """
    rates = np.asarray(per_deployment_rates, dtype=float)
    if rates.size == 0:
        raise ValueError("empty rate list")
    grid = [int(k) for k in effort_grid]
    if any(k < 1 for k in grid):
        raise ValueError("effort values must be >= 1")

    def one(k: int):
        idx = task_rng(seed, k).integers(0, rates.size, size=(n_resamples, k))
        means = rates[idx].mean(axis=1)
        lo, hi = np.percentile(means, [2.5, 97.5])
        return means.mean(), means.min(), means.max(), lo, hi

    stats = np.array(pmap(one, grid, threads)).reshape(len(grid), 5)
    return EffortBands(grid, *stats.T, n_resamples=n_resamples, seed=seed)


# --------------------------------------------------------------------------
# activity


@dataclass(frozen=True)
class ActivityHistogram:
    species_code: str
    bin_minutes: int
    counts: np.ndarray

    @property
    def bin_starts(self) -> np.ndarray:
        return np.arange(len(self.counts)) * self.bin_minutes


def activity_histogram(
    store: ProjectStore, species: str, bin_minutes: int = 60, utc_offset_hours: float = 0.0
) -> ActivityHistogram:
    """Time-of-day histogram of sequence start times (local clock via offset)."""
    if bin_minutes < 1 or 1440 % bin_minutes:
        raise ValueError("bin_minutes must divide 1440")
    counts = np.zeros(1440 // bin_minutes, dtype=int)
    shift = timedelta(hours=utc_offset_hours)
    for dep in store.deployments:
        for seq in _species_sequences(store, species, dep.deployment_id):
            local = seq.start + shift
            counts[(local.hour * 60 + local.minute) // bin_minutes] += 1
    return ActivityHistogram(species, bin_minutes, counts)


# --------------------------------------------------------------------------
# capture histories


@dataclass(frozen=True)
class CaptureHistory:
    species_code: str
    individuals: list[str]
    occasion_starts: list
    matrix: np.ndarray
    n_unidentified: int

    def strings(self) -> list[str]:
        return ["".join(str(int(v)) for v in row) for row in self.matrix]


def capture_history_export(
    store: ProjectStore, species: str, occasion_days: float = 8.0
) -> CaptureHistory:
    """Individual x occasion encounter matrix for external capture-recapture tools.

    Occasions are consecutive ``occasion_days`` blocks from the earliest
    deployment start, matching the camera rotation interval. Detections of
    the species without an individual id are left out and counted.
    """
    deps = store.deployments
    hits: dict[str, set[int]] = defaultdict(set)
    unidentified = 0
    if deps:
        t0 = min(d.start for d in deps)
        span = (max(d.end for d in deps) - t0).total_seconds() / SECONDS_PER_DAY
        n_occ = max(1, math.ceil(span / occasion_days - 1e-9))
        for dep in deps:
            for seq in store.sequences_of(dep.deployment_id):
                if not seq.resolved:
                    continue
                for det in store.detections_of(seq.sequence_id):
                    if det.species_code != species:
                        continue
                    if det.individual_id is None:
                        unidentified += 1
                        continue
                    k = int((seq.start - t0).total_seconds() // (occasion_days * SECONDS_PER_DAY))
                    hits[det.individual_id].add(min(k, n_occ - 1))
    if not hits:
        raise ValueError(f"no individual ids recorded for {species!r}")
    ids = sorted(hits)
    matrix = np.zeros((len(ids), n_occ), dtype=int)
    for i, ind in enumerate(ids):
        matrix[i, sorted(hits[ind])] = 1
    starts = [t0 + timedelta(days=occasion_days * k) for k in range(n_occ)]
    return CaptureHistory(species, ids, starts, matrix, unidentified)


# --------------------------------------------------------------------------
# equipment


FAILURE_CATEGORIES = (
    FailureCategory.LENS_BLUR,
    FailureCategory.HUMIDITY_CIRCUIT,
    FailureCategory.OTHER,
)


@dataclass(frozen=True)
class FailureSummary:
    n_cameras: int
    n_failures: int
    never_failed: float
    category_share: dict[str, float] = field(default_factory=dict)

    @property
    def ever_failed(self) -> float:
        return 1.0 - self.never_failed


def failure_summary(cameras: Iterable[Camera]) -> FailureSummary:
    """Share of cameras that never failed and the mix of failure causes.

    Category shares are over failure events and sum to 1 whenever there is
    at least one failure; with none they are all 0.
    """
    cameras = list(cameras)
    if not cameras:
        raise ValueError("empty camera list")
    never = sum(1 for c in cameras if not c.failures)
    tally = Counter(e.category for c in cameras for e in c.failures)
    total = sum(tally.values())
    share = {cat.value: (tally[cat] / total if total else 0.0) for cat in FAILURE_CATEGORIES}
    return FailureSummary(len(cameras), total, never / len(cameras), share)


@dataclass(frozen=True)
class MonthlyDistance:
    month: int
    n: int
    mean_m: float
    se_m: float  # NaN when n == 1


def seasonal_detection_distance(walktests: Iterable[WalkTest]) -> list[MonthlyDistance]:
    """Mean and standard error of walk-test trigger distance per calendar month."""
    by_month: dict[int, list[float]] = defaultdict(list)
    for wt in walktests:
        by_month[wt.date.month].append(wt.detection_distance_m)
    if not by_month:
        raise ValueError("no walk tests")
    out = []
    for month in sorted(by_month):
        x = np.asarray(by_month[month])
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
        out.append(MonthlyDistance(month, int(x.size), float(x.mean()), se))
    return out
