"""``camtrap`` command line.

Every subcommand works on a project directory (``--project``, or the
``CAMTRAP_PROJECT`` environment variable, default ``.``) and writes its
tables to ``--out`` (default ``<project>/analysis``) together with a
``<command>.manifest.json`` run manifest. Diagnostics go to stderr.

Exit status: 0 success, 2 invalid input, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from camtrap import __version__
from camtrap._parallel import default_threads
from camtrap.datamodel import (
    TABLES,
    Placement,
    ProjectStore,
    ValidationError,
    format_timestamp,
    open_project,
    read_table,
)

log = logging.getLogger("camtrap")

ENV_PROJECT = "CAMTRAP_PROJECT"
STORE_FILES = [f"{t}.csv" for t in TABLES] + ["project.json", "decisions.csv"]


class InputError(Exception):
    """Bad or missing user input; reported with exit status 2."""


@dataclass
class Run:
    command: str
    project: Path
    out: Path
    threads: int
    parameters: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    seed: int | None = None

    # -- output helpers ----------------------------------------------------

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.outputs.append(p)
        return p

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return p

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return p

    def hash_input(self, path: Path, key: str | None = None) -> None:
        if path.exists():
            self.inputs[key or path.name] = _sha256(path)

    def hash_store(self) -> None:
        for name in STORE_FILES:
            self.hash_input(self.project / name)

    def manifest(self) -> dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "input_hashes": dict(sorted(self.inputs.items())),
            "seed": self.seed,
            "tool_version": __version__,
            "output_files": {
                _rel(p, self.out): _sha256(p) for p in sorted(set(self.outputs)) if p.is_file()
            },
        }


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, datetime):
        return format_timestamp(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, datetime):
        return format_timestamp(v)
    if isinstance(v, (date, Path)):
        return str(v)
    raise TypeError(type(v).__name__)


def _nan_to_none(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _rel(p: Path, base: Path) -> str:
    try:
        return str(p.relative_to(base))
    except ValueError:
        return p.name


def _existing(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise InputError(f"missing {what}: {p}")
    return p


def _store(run: Run) -> ProjectStore:
    if not (run.project / "project.json").exists():
        raise InputError(f"no project at {run.project} (run `camtrap init` first)")
    store = open_project(run.project)
    run.hash_store()
    return store


def _require_species(store: ProjectStore, species: str) -> None:
    if species not in store.species():
        raise InputError(f"species {species!r} has no detections in this project")


def _policy(store: ProjectStore, args=None):
    from camtrap.ingest import SegmentationPolicy

    saved = store.settings.get("segmentation", {})
    merge = getattr(args, "merge_s", None) or saved.get("merge_below_s", 30.0)
    split = getattr(args, "split_s", None) or saved.get("split_above_s", 2400.0)
    return SegmentationPolicy(float(merge), float(split))


# --------------------------------------------------------------------------
# commands


def cmd_init(args, run: Run):
    store = open_project(run.project)
    if args.identifiable:
        store.identifiable_species = tuple(args.identifiable)
        store.save()
    log.info("project ready at %s", run.project)


def cmd_ingest(args, run: Run):
    from camtrap.ingest import parse_manifest

    store = _store(run)
    for table in ("plots", "locations", "cameras", "deployments", "walktests", "detections"):
        src = getattr(args, table)
        if src is None:
            continue
        p = _existing(src, f"{table} table")
        run.hash_input(p, f"{table}:{p.name}")
        n = 0
        for lineno, entity in read_table(p, table):
            try:
                store.add(entity)
            except ValidationError as exc:
                raise ValidationError(f"{p} row {lineno}: {exc}") from None
            n += 1
        log.info("ingested %d %s", n, table)
    if args.manifest:
        p = _existing(args.manifest, "image manifest")
        run.hash_input(p, f"manifest:{p.name}")
        images = parse_manifest(p, store)
        store.extend(images)
        log.info("ingested %d images", len(images))
    store.save()


def cmd_sequences(args, run: Run):
    from camtrap.ingest import read_decisions, segment_store

    store = _store(run)
    policy = _policy(store, args)
    run.parameters.update(merge_s=policy.merge_below_s, split_s=policy.split_above_s)
    seqs = segment_store(store, policy, read_decisions(run.project / "decisions.csv"))
    store.replace_sequences(seqs)
    store.settings["segmentation"] = {
        "merge_below_s": policy.merge_below_s,
        "split_above_s": policy.split_above_s,
    }
    store.save()
    flagged = sum(1 for s in seqs if not s.resolved)
    log.info("%d sequences, %d flagged for review", len(seqs), flagged)
    run.write_csv(
        "flagged.csv",
        ["sequence_id", "deployment_id", "start", "end", "image_count"],
        [(s.sequence_id, s.deployment_id, s.start, s.end, s.image_count)
         for s in seqs if not s.resolved],
    )


def cmd_resolve(args, run: Run):
    from camtrap.ingest import (
        FlagDecision,
        append_decisions,
        read_decisions,
        resolve_flagged,
        segment_store,
    )

    store = _store(run)
    policy = _policy(store)
    try:
        a, b = store.sequence(args.sequence_a), store.sequence(args.sequence_b)
    except KeyError as exc:
        raise InputError(f"unknown sequence {exc.args[0]}") from None
    resolve_flagged(a, b, args.decision, policy)
    when = date.fromisoformat(args.date) if args.date else datetime.now(timezone.utc).date()
    dec = FlagDecision(a.sequence_id, b.sequence_id, args.decision, args.operator, when)
    log_path = run.project / "decisions.csv"
    decisions = read_decisions(log_path) + [dec]
    seqs = segment_store(store, policy, decisions)
    store.replace_sequences(seqs)
    append_decisions(log_path, [dec])
    store.save()
    log.info("%s %s/%s", args.decision, a.sequence_id, b.sequence_id)


def _placement_filter(store: ProjectStore, placement: str):
    if placement == "all":
        return None
    want = Placement(placement)
    return lambda d: store.location(d.location_id).placement is want


def cmd_rates(args, run: Run):
    from camtrap.estimators import species_rates

    store = _store(run)
    run.parameters.update(effort=args.effort, placement=args.placement)
    rates = species_rates(store, _placement_filter(store, args.placement), args.effort)
    run.write_csv("rates.csv", ["species", "y", "t", "rate"],
                  [(r.species_code, r.y, r.t, r.rate) for r in rates])


def cmd_history(args, run: Run):
    from camtrap.estimators import detection_history

    store = _store(run)
    _require_species(store, args.species)
    run.parameters.update(species=args.species, granularity=args.granularity)
    h = detection_history(store, args.species, args.granularity)
    rows = []
    for dep, row in zip(h.deployments, h.cells):
        for k, v in enumerate(row):
            if k < math.ceil(store.deployment(dep).nominal_days / args.granularity - 1e-9):
                rows.append((dep, k + 1, "" if math.isnan(v) else int(v)))
    run.write_csv(f"history_{args.species}.csv", ["deployment_id", "occasion", "detected"], rows)


def cmd_accumulation(args, run: Run):
    from camtrap.estimators import incidence_matrix, jackknife1, rarefaction

    store = _store(run)
    run.seed = args.seed
    run.parameters.update(n_resamples=args.n_resamples, seed=args.seed)
    inc = incidence_matrix(store)
    curve = rarefaction(inc, args.n_resamples, args.seed, threads=run.threads)
    run.write_csv(
        "accumulation.csv",
        ["effort", "sobs_mean", "sobs_sd", "jack1_mean", "jack1_sd"],
        zip(curve.effort, curve.sobs_mean, curve.sobs_sd, curve.jack1_mean, curve.jack1_sd),
    )
    run.write_json("accumulation.json", {
        "n_deployments": inc.n,
        "sobs": int(inc.cells.any(axis=0).sum()),
        "jack1": jackknife1(inc),
        "n_resamples": curve.n_resamples,
        "exhaustive": curve.exhaustive,
        "seed": args.seed,
    })


def _parse_grid(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if ":" in part:
            lo, hi = part.split(":")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def cmd_effort(args, run: Run):
    from camtrap.estimators import deployment_counts, effort_bands

    store = _store(run)
    _require_species(store, args.species)
    grid = _parse_grid(args.grid)
    run.seed = args.seed
    run.parameters.update(species=args.species, grid=args.grid, n_resamples=args.n_resamples,
                          seed=args.seed, plot=args.plot, effort=args.effort)
    filt = None
    if args.plot:
        filt = lambda d: store.location(d.location_id).plot_id == args.plot  # noqa: E731
    rows = deployment_counts(store, args.species, filt, args.effort)
    rates = [y / t for _, y, t in rows if t > 0]
    if not rates:
        raise InputError("no deployment with positive effort")
    bands = effort_bands(rates, grid, args.n_resamples, args.seed, threads=run.threads)
    run.write_csv("effort.csv", ["effort", "mean", "min", "max", "lo95", "hi95"],
                  zip(bands.effort, bands.mean, bands.min, bands.max, bands.lo95, bands.hi95))


def cmd_activity(args, run: Run):
    from camtrap.estimators import activity_histogram

    store = _store(run)
    species = args.species or [r for r in store.species()]
    run.parameters.update(species=species, bin_minutes=args.bin_minutes,
                          utc_offset_hours=args.utc_offset)
    rows = []
    for sp in species:
        _require_species(store, sp)
        h = activity_histogram(store, sp, args.bin_minutes, args.utc_offset)
        for start, c in zip(h.bin_starts, h.counts):
            rows.append((sp, int(start), int(start) + args.bin_minutes, int(c)))
    run.write_csv("activity.csv", ["species", "bin_start_min", "bin_end_min", "count"], rows)


def cmd_trailbias(args, run: Run):
    from camtrap.glm import trail_bias

    store = _store(run)
    run.parameters.update(min_detections=args.min_detections, effort=args.effort)
    tests = trail_bias(store, args.min_detections, args.effort)
    run.write_csv(
        "trailbias.csv",
        ["species", "n_random", "n_trail", "rate_ratio", "F", "p"],
        [(t.species, t.n_random, t.n_trail, t.rate_ratio, t.F, t.p) for t in tests],
    )


def cmd_semivariogram(args, run: Run):
    from camtrap.spatial import WindowSpec, default_bins, windowed_semivariogram

    store = _store(run)
    species = args.species or []
    for sp in species:
        _require_species(store, sp)
    run.parameters.update(species=species, window_days=args.window_days,
                          bin_width_m=args.bin_width, max_distance_m=args.max_distance)
    bins = default_bins(args.bin_width, args.max_distance)
    rows, summary = [], []
    for sp in species:
        for w in windowed_semivariogram(store, sp, WindowSpec(args.window_days), bins,
                                        threads=run.threads):
            summary.append({
                "species": sp,
                "window_start": w.window_start,
                "window_end": w.window_end,
                "n_locations": w.n_locations,
                "threshold_m": w.threshold_m,
                "n_dropped_pairs": w.semivariogram.n_dropped if w.semivariogram else None,
                "note": w.note,
            })
            if w.semivariogram is None:
                log.info("%s window %s skipped: %s", sp, w.window_start.date(), w.note)
                continue
            for b in w.semivariogram:
                rows.append((sp, w.window_start, w.window_end, b.lower_m, b.upper_m,
                             b.n_pairs, b.mean, b.se, b.sd))
    run.write_csv(
        "semivariogram.csv",
        ["species", "window_start", "window_end", "bin_lower_m", "bin_upper_m",
         "n_pairs", "mean", "se", "sd"],
        rows,
    )
    run.write_json("semivariogram.json", summary)


def _read_csv(path: Path, required: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: missing column(s) {missing}")
        return list(reader)


def cmd_calibrate(args, run: Run):
    from camtrap.geometry import fit_homography

    p = _existing(args.points, "calibration points file")
    run.hash_input(p)
    rows = _read_csv(p, ["u", "v", "X_m", "Y_m"])
    model = fit_homography([(float(r["u"]), float(r["v"]), float(r["X_m"]), float(r["Y_m"]))
                            for r in rows])
    log.info("calibration rmse %.4f m over %d points", model.rmse_m, model.n_points)
    run.write_json(args.output, model.to_dict())


def _load_json(path: str, what: str) -> dict:
    p = _existing(path, what)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: not valid JSON ({exc})") from None


def cmd_speed(args, run: Run):
    from camtrap.geometry import CalibrationModel, TrackPoint, estimate_speed

    model = CalibrationModel.from_dict(_load_json(args.calibration, "calibration file"))
    p = _existing(args.tracks, "tracks file")
    run.hash_input(p)
    run.hash_input(Path(args.calibration))
    tracks: dict[str, list] = {}
    for r in _read_csv(p, ["track_id", "time_s", "u", "v"]):
        tracks.setdefault(r["track_id"], []).append(
            TrackPoint(float(r["time_s"]), float(r["u"]), float(r["v"])))
    rows = []
    for tid, pts in tracks.items():
        s = estimate_speed(sorted(pts, key=lambda q: q.time_s), model)
        rows.append((tid, s.avg_speed_m_s, s.max_speed_m_s, s.path_length_m, s.entry_angle_rad))
    run.write_csv("speed.csv", ["track_id", "avg_speed_m_s", "max_speed_m_s", "path_length_m",
                                "entry_angle_rad"], rows)


def cmd_zone(args, run: Run):
    from camtrap.geometry import fit_detection_zone

    p = _existing(args.firstdetect, "first-detection file")
    run.hash_input(p)
    run.parameters.update(min_points=args.min_points)
    rows = _read_csv(p, ["r_m", "a_rad"])
    zone = fit_detection_zone([(float(r["r_m"]), float(r["a_rad"])) for r in rows],
                              args.min_points)
    out = zone.to_dict() | {"n": len(rows)}
    run.write_json(args.output, out)


def cmd_rem(args, run: Run):
    from camtrap.estimators import detection_rate
    from camtrap.geometry import DetectionZone, RemInputs, rem_density

    zone = DetectionZone.from_dict(_load_json(args.zone, "zone file"))
    run.hash_input(Path(args.zone))
    run.parameters.update(v_m_per_day=args.v_m_per_day, species=args.species, effort=args.effort)
    if args.species:
        store = _store(run)
        _require_species(store, args.species)
        est = detection_rate(store, args.species, effort=args.effort)
        y, t = est.y, est.t
    elif args.y is not None and args.t is not None:
        y, t = args.y, args.t
        run.parameters.update(y=y, t=t)
    else:
        raise InputError("give --species (counts from the project) or both --y and --t")
    d = rem_density(RemInputs(y, t, args.v_m_per_day, zone))
    run.write_csv("rem.csv",
                  ["species", "y", "t", "v_m_per_day", "r_eff_m", "theta_eff_rad", "density_per_km2"],
                  [(args.species or "", y, t, args.v_m_per_day, zone.r_eff_m, zone.theta_eff_rad, d)])


def cmd_walktests(args, run: Run):
    from camtrap.estimators import seasonal_detection_distance

    store = _store(run)
    if not store.walktests:
        raise InputError("project has no walk tests")
    rows = seasonal_detection_distance(store.walktests)
    run.write_csv("walktests.csv", ["month", "n", "mean_m", "se_m"],
                  [(m.month, m.n, m.mean_m, m.se_m) for m in rows])


def cmd_failures(args, run: Run):
    from camtrap.estimators import failure_summary

    store = _store(run)
    if not store.cameras:
        raise InputError("project has no cameras")
    s = failure_summary(store.cameras)
    rows = [("cameras", "never_failed", s.never_failed), ("cameras", "ever_failed", s.ever_failed)]
    rows += [("category", k, v) for k, v in s.category_share.items()]
    run.write_csv("failures.csv", ["breakdown", "category", "fraction"], rows)
    run.write_json("failures.json", {"n_cameras": s.n_cameras, "n_failures": s.n_failures})


def cmd_simulate(args, run: Run):
    from camtrap import simulator as sim

    run.seed = args.seed
    run.parameters.update(kind=args.kind, seed=args.seed, rounds=args.rounds, cameras=args.cameras,
                          density=args.density)
    cfg = replace(sim.FIELD_STUDY, seed=args.seed)
    if args.rounds is not None:
        cfg = replace(cfg, n_rounds=args.rounds)
    if args.cameras is not None:
        cfg = replace(cfg, n_cameras=args.cameras)
    if args.density is not None:
        cfg = replace(cfg, density_per_km2=args.density)
    if args.kind == "community":
        res = sim.simulate_community(sim.default_community(), cfg.n_cameras * cfg.n_rounds, cfg)
    else:
        res = sim.simulate_passages(cfg, "target")
    if (run.project / "project.json").exists() and any(run.project.glob("*.csv")) and not args.force:
        raise InputError(f"{run.project} already holds a project (use --force to overwrite)")
    res.save(run.project)
    for name in STORE_FILES + ["truth.json"]:
        p = run.project / name
        if p.exists():
            run.outputs.append(p)
    log.info("simulated %d deployments, %d sequences into %s", res.store.count("deployments"),
             res.store.count("sequences"), run.project)


def cmd_report(args, run: Run):
    from camtrap import plotting

    if not run.out.is_dir():
        raise InputError(f"no analysis outputs in {run.out}")
    sources = sorted(p for p in run.out.glob("*.csv") if p.name != "summary.csv")
    rows = []
    for p in sources:
        run.hash_input(p)
        with open(p, newline="") as fh:
            for i, rec in enumerate(csv.DictReader(fh), start=1):
                for k, v in rec.items():
                    rows.append((p.stem, i, k, v))
    run.write_csv("summary.csv", ["analysis", "row", "field", "value"], rows)
    if args.no_figures:
        return
    fig_dir = run.out / "figures"
    fig_dir.mkdir(exist_ok=True)
    for p in sources:
        draw = plotting.FIGURES.get(p.stem)
        if draw is None:
            continue
        with open(p, newline="") as fh:
            recs = list(csv.DictReader(fh))
        if recs:
            run.outputs.append(draw(recs, fig_dir / f"{p.stem}.svg"))


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--project", default=None,
                        help=f"project directory (default ${ENV_PROJECT} or .)")
    common.add_argument("--out", default=None, help="output directory (default <project>/analysis)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores; results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="camtrap", description="Camera-trap network analysis.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    s = add("init", "create an empty project")
    s.add_argument("--identifiable", nargs="*", help="species with individually recognisable coats")

    s = add("ingest", "import entity tables and an image manifest")
    s.add_argument("manifest", nargs="?", help="CSV: deployment_id,timestamp,trigger,frame_ref")
    for t in ("plots", "locations", "cameras", "deployments", "walktests", "detections"):
        s.add_argument(f"--{t}", metavar="CSV")

    s = add("sequences", "segment motion images into passage sequences")
    s.add_argument("--merge-s", type=float, default=None, help="merge gaps below this (default 30)")
    s.add_argument("--split-s", type=float, default=None, help="split gaps above this (default 2400)")

    s = add("resolve", "lump or split two sequences across a flagged gap")
    s.add_argument("sequence_a")
    s.add_argument("sequence_b")
    s.add_argument("decision", choices=["merge", "split"])
    s.add_argument("--operator", default="")
    s.add_argument("--date", default=None, help="decision date YYYY-MM-DD (default today)")

    s = add("rates", "detection rate per species")
    s.add_argument("--effort", choices=["effective", "nominal"], default="effective")
    s.add_argument("--placement", choices=["all", "random", "trail"], default="all")

    s = add("history", "per-day detection history of one species")
    s.add_argument("--species", required=True)
    s.add_argument("--granularity", type=int, default=1, help="days per occasion")

    s = add("accumulation", "species accumulation (Sobs, Jack1) against effort")
    s.add_argument("--n-resamples", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)

    s = add("effort", "bootstrap bands of the mean detection rate against effort")
    s.add_argument("--species", required=True)
    s.add_argument("--grid", default="1:40", help="efforts, e.g. 1:40 or 5,10,20")
    s.add_argument("--n-resamples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--plot", default=None, help="restrict to one study plot")
    s.add_argument("--effort", choices=["effective", "nominal"], default="effective")

    s = add("activity", "time-of-day activity histogram")
    s.add_argument("--species", action="append", help="repeatable (default: all)")
    s.add_argument("--bin-minutes", type=int, default=60)
    s.add_argument("--utc-offset", type=float, default=0.0, help="local clock offset in hours")

    s = add("trailbias", "trail vs random placement quasi-Poisson F-tests")
    s.add_argument("--min-detections", type=int, default=10)
    s.add_argument("--effort", choices=["effective", "nominal"], default="effective")

    s = add("semivariogram", "windowed distance-class semivariograms of detection rates")
    s.add_argument("--species", action="append", required=True, help="repeatable")
    s.add_argument("--window-days", type=int, default=61)
    s.add_argument("--bin-width", type=float, default=25.0)
    s.add_argument("--max-distance", type=float, default=300.0)

    s = add("calibrate", "fit image-to-ground homography")
    s.add_argument("points", help="CSV: u,v,X_m,Y_m")
    s.add_argument("--output", default="calibration.json")

    s = add("speed", "track speeds from pixel tracks")
    s.add_argument("tracks", help="CSV: track_id,time_s,u,v")
    s.add_argument("--calibration", required=True)

    s = add("zone", "fit detection zone from first-detection positions")
    s.add_argument("firstdetect", help="CSV: r_m,a_rad")
    s.add_argument("--min-points", type=int, default=5)
    s.add_argument("--output", default="zone.json")

    s = add("rem", "random encounter model density")
    s.add_argument("--zone", required=True, help="zone JSON from `camtrap zone`")
    s.add_argument("--v-m-per-day", type=float, required=True, help="day range in m/day")
    s.add_argument("--species", default=None)
    s.add_argument("--y", type=int, default=None)
    s.add_argument("--t", type=float, default=None)
    s.add_argument("--effort", choices=["effective", "nominal"], default="effective")

    add("walktests", "seasonal walk-test detection distance")
    add("failures", "camera failure summary")

    s = add("simulate", "write a synthetic project")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--kind", choices=["community", "passages"], default="community")
    s.add_argument("--rounds", type=int, default=None, help="8-day rounds (default 46)")
    s.add_argument("--cameras", type=int, default=None, help="cameras per round (default 20)")
    s.add_argument("--density", type=float, default=None, help="total animals per km2")
    s.add_argument("--force", action="store_true")

    s = add("report", "collect analysis CSVs into summary.csv and draw figures")
    s.add_argument("--no-figures", action="store_true")
    return p


COMMANDS = {name[4:]: fn for name, fn in globals().items() if name.startswith("cmd_")}
PATH_PARAMS = {"project", "out", "threads", "verbose", "command"}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    project = Path(args.project or os.environ.get(ENV_PROJECT, ".")).resolve()
    out = Path(args.out).resolve() if args.out else project / "analysis"
    threads = args.threads if args.threads else default_threads()
    r = Run(args.command, project, out, threads)
    try:
        COMMANDS[args.command](args, r)
        if args.command not in ("init",):
            r.outputs = [p for p in r.outputs if p.exists()]
            manifest = r.manifest()
            for k, v in sorted(vars(args).items()):
                if k not in PATH_PARAMS and k not in manifest["parameters"] and k not in (
                    "manifest", "points", "tracks", "firstdetect", "calibration", "zone",
                    "plots", "locations", "cameras", "deployments", "walktests", "detections",
                    "output",
                ):
                    manifest["parameters"][k] = v
            manifest["parameters"] = dict(sorted(manifest["parameters"].items()))
            dest = out if args.command != "simulate" else project
            dest.mkdir(parents=True, exist_ok=True)
            (dest / f"{args.command}.manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    except (InputError, ValidationError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"camtrap {args.command}: error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"camtrap {args.command}: internal error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
