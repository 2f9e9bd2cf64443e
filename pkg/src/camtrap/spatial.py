"""Distance-class semivariograms of per-location detection rates.

For every pair of camera locations the half squared difference of their
rates is assigned to a distance class. Classes whose mean departs from the
sill (the plateau over the far half of the classes) by more than two
standard errors indicate spatial dependence; the first distance beyond
which no class departs is the spacing needed for independent cameras.
"""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Mapping, Sequence as Seq
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from camtrap._parallel import pmap
from camtrap.datamodel import ProjectStore, days_between


@dataclass(frozen=True)
class SemivariogramBin:
    lower_m: float
    upper_m: float
    n_pairs: int
    mean: float
    se: float
    sd: float


@dataclass(frozen=True)
class Semivariogram:
    bins: list[SemivariogramBin]
    n_dropped: int = 0

    def __iter__(self):
        return iter(self.bins)

    def __len__(self):
        return len(self.bins)

    def __getitem__(self, i):
        return self.bins[i]


def default_bins(width_m: float = 25.0, max_m: float = 300.0) -> list[tuple[float, float]]:
    n = int(round(max_m / width_m))
    return [(k * width_m, (k + 1) * width_m) for k in range(n)]


def _check_bins(bins: Seq[tuple[float, float]]) -> None:
    if not bins:
        raise ValueError("no distance classes")
    for lo, hi in bins:
        if not lo < hi:
            raise ValueError(f"distance class [{lo}, {hi}) is empty")
    for (_, hi), (lo, _) in zip(bins, bins[1:]):
        if lo < hi:
            raise ValueError("distance classes must be ordered and non-overlapping")


def semivariogram(
    rates_by_location: Mapping[str, float],
    coords: Mapping[str, tuple[float, float]],
    bins: Seq[tuple[float, float]] | None = None,
) -> Semivariogram:
    """Binned half squared rate differences over all location pairs.

    Classes are lower-inclusive and upper-exclusive. ``sd`` is the sample
    standard deviation of the pair values (NaN for a single pair) and
    ``se = sd / sqrt(n_pairs)``. Pairs farther apart than the last class are
    counted in ``n_dropped``.
    """
    bins = default_bins() if bins is None else [(float(a), float(b)) for a, b in bins]
    _check_bins(bins)
    ids = list(rates_by_location)
    if len(ids) < 2:
        raise ValueError("need at least two locations")
    z = np.array([rates_by_location[i] for i in ids], dtype=float)
    xy = np.array([coords[i] for i in ids], dtype=float)
    iu, ju = np.triu_indices(len(ids), k=1)
    dist = np.hypot(*(xy[iu] - xy[ju]).T)
    gamma = 0.5 * (z[iu] - z[ju]) ** 2

    out = []
    used = 0
    for lo, hi in bins:
        g = gamma[(dist >= lo) & (dist < hi)]
        used += g.size
        if g.size == 0:
            out.append(SemivariogramBin(lo, hi, 0, math.nan, math.nan, math.nan))
            continue
        sd = float(g.std(ddof=1)) if g.size > 1 else math.nan
        out.append(SemivariogramBin(lo, hi, int(g.size), float(g.mean()), sd / math.sqrt(g.size), sd))
    if used == 0:
        raise ValueError("no location pair falls in any distance class")
    return Semivariogram(out, int(gamma.size - used))


def sill(bins: Seq[SemivariogramBin]) -> float:
    """Mean of the class means over the far half of the distance classes."""
    top = [b for b in bins[len(bins) // 2:] if b.n_pairs > 0]
    if not top:
        raise ValueError("no sill estimable: the far half of the distance classes is empty")
    return float(np.mean([b.mean for b in top]))


def independence_threshold(bins: Seq[SemivariogramBin]) -> float:
    """Distance beyond which every class mean is within 2 SE of the sill.

    Classes without a finite SE (fewer than two pairs) carry no evidence
    either way and are skipped. Returns the lower bound of the first class
    of the independent tail, i.e. the upper bound of the last dependent one.
    """
    bins = list(bins)
    if sum(1 for b in bins if b.n_pairs > 0) < 2:
        raise ValueError("need at least two non-empty distance classes")
    s = sill(bins)
    start = 0
    for i, b in enumerate(bins):
        if b.n_pairs < 2 or not math.isfinite(b.se):
            continue
        if abs(b.mean - s) > 2.0 * b.se:
            start = i + 1
    if start >= len(bins):
        return bins[-1].upper_m
    return bins[start].lower_m


# --------------------------------------------------------------------------
# time windows


@dataclass(frozen=True)
class WindowSpec:
    """Consecutive analysis windows of ``window_days`` starting at ``origin``
    (default: the earliest deployment start) shifted by ``offset_days``."""

    window_days: int = 61
    origin: datetime | None = None
    offset_days: float = 0.0

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")

    def windows(self, first: datetime, last: datetime) -> list[tuple[datetime, datetime]]:
        start = (self.origin or first) + timedelta(days=self.offset_days)
        step = timedelta(days=self.window_days)
        out = []
        while start < last:
            out.append((start, start + step))
            start += step
        return out


@dataclass(frozen=True)
class WindowResult:
    window_start: datetime
    window_end: datetime
    semivariogram: Semivariogram | None
    n_locations: int
    note: str = ""
    threshold_m: float | None = None


def _overlap_days(intervals, lo: datetime, hi: datetime) -> float:
    return sum(max(0.0, days_between(max(a, lo), min(b, hi))) for a, b in intervals if a < hi and lo < b)


def window_rates(
    store: ProjectStore, species: str, lo: datetime, hi: datetime, effort: str = "effective"
) -> dict[str, float]:
    """Detection rate per location from sequences and effort inside ``[lo, hi)``."""
    y: dict[str, int] = defaultdict(int)
    t: dict[str, float] = defaultdict(float)
    for dep in store.deployments:
        if not (dep.start < hi and lo < dep.end):
            continue
        if effort == "effective":
            down = store.downtime(dep.deployment_id)
            up = _complement(dep.start, dep.end, down)
        else:
            up = [(dep.start, dep.end)]
        days = _overlap_days(up, lo, hi)
        if days <= 0:
            continue
        t[dep.location_id] += days
        for seq in store.sequences_of(dep.deployment_id):
            if seq.resolved and lo <= seq.start < hi and any(
                d.species_code == species for d in store.detections_of(seq.sequence_id)
            ):
                y[dep.location_id] += 1
    return {loc: y[loc] / t[loc] for loc in sorted(t)}


def _complement(start, end, down):
    up, cur = [], start
    for a, b in sorted(down):
        if a > cur:
            up.append((cur, a))
        cur = max(cur, b)
    if cur < end:
        up.append((cur, end))
    return up


def windowed_semivariogram(
    store: ProjectStore,
    species: str,
    window: WindowSpec = WindowSpec(),
    bins: Seq[tuple[float, float]] | None = None,
    threads: int | None = 1,
) -> list[WindowResult]:
    """Semivariogram per time window; windows that cannot support one are noted."""
    deps = store.deployments
    if not deps:
        return []
    coords = {loc.location_id: (loc.easting_m, loc.northing_m) for loc in store.locations}
    spans = window.windows(min(d.start for d in deps), max(d.end for d in deps))

    def one(span):
        lo, hi = span
        rates = window_rates(store, species, lo, hi)
        if len(rates) < 2:
            return WindowResult(lo, hi, None, len(rates), "fewer than 2 active locations")
        if not any(r > 0 for r in rates.values()):
            return WindowResult(lo, hi, None, len(rates), f"{species} not detected")
        try:
            sv = semivariogram(rates, coords, bins)
        except ValueError as exc:
            return WindowResult(lo, hi, None, len(rates), str(exc))
        try:
            thr = independence_threshold(sv.bins)
        except ValueError:
            thr = None
        return WindowResult(lo, hi, sv, len(rates), "", thr)

    return pmap(one, spans, threads)
