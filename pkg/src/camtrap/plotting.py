"""Static figures for the ``report`` command.

Every function takes the rows of an analysis CSV (as written by the CLI)
and saves one SVG; nothing is recomputed. Output is byte-stable for a
given input: the SVG hash salt is fixed and no creation date is embedded.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "camtrap",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (5.0, 3.4),
}


def _f(x: str) -> float:
    return float(x) if x not in ("", None) else math.nan


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def accumulation(rows: list[dict], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k = [int(r["effort"]) for r in rows]
        for key, label, style in (("sobs", "Sobs", "-"), ("jack1", "Jack1", "--")):
            m = [_f(r[f"{key}_mean"]) for r in rows]
            sd = [_f(r[f"{key}_sd"]) for r in rows]
            ax.plot(k, m, style, color="k", label=label)
            ax.fill_between(k, [a - b for a, b in zip(m, sd)], [a + b for a, b in zip(m, sd)],
                            color="0.85")
        ax.set_xlabel("camera deployments")
        ax.set_ylabel("species")
        ax.legend(frameon=False)
        return _save(fig, path)


def effort(rows: list[dict], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k = [int(r["effort"]) for r in rows]
        ax.plot(k, [_f(r["mean"]) for r in rows], color="k", lw=1.5, label="mean")
        for key, lw in (("lo95", 2.0), ("hi95", 2.0), ("min", 0.7), ("max", 0.7)):
            ax.plot(k, [_f(r[key]) for r in rows], color="tab:red", lw=lw)
        ax.set_xlabel("camera deployments")
        ax.set_ylabel("detections per camera-day")
        return _save(fig, path)


def activity(rows: list[dict], path: Path) -> Path:
    by_species = defaultdict(list)
    for r in rows:
        by_species[r["species"]].append(r)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for sp, rs in sorted(by_species.items()):
            total = sum(int(r["count"]) for r in rs) or 1
            x = [(int(r["bin_start_min"]) + int(r["bin_end_min"])) / 120 for r in rs]
            ax.plot(x, [int(r["count"]) / total for r in rs], marker="o", ms=3, label=sp)
        ax.set_xlim(0, 24)
        ax.set_xlabel("hour of day")
        ax.set_ylabel("share of sequences")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def rates(rows: list[dict], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 0.18 * len(rows) + 1.0))
        names = [r["species"] for r in rows][::-1]
        ax.barh(names, [int(r["y"]) for r in rows][::-1], color="0.4")
        ax.set_xscale("symlog")
        ax.set_xlabel("sequences")
        return _save(fig, path)


def trailbias(rows: list[dict], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 0.25 * len(rows) + 1.0))
        names = [r["species"] for r in rows]
        rr = [_f(r["rate_ratio"]) for r in rows]
        colors = ["tab:red" if _f(r["p"]) < 0.05 else "0.5" for r in rows]
        ax.barh(names, [math.log(x) for x in rr], color=colors)
        ax.axvline(0, color="k", lw=0.8)
        ax.set_xlabel("log rate ratio (trail / random)")
        return _save(fig, path)


def semivariogram(rows: list[dict], path: Path) -> Path:
    by_window = defaultdict(list)
    for r in rows:
        by_window[r["window_start"]].append(r)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for w, rs in sorted(by_window.items()):
            rs = [r for r in rs if int(r["n_pairs"]) > 0]
            x = [(_f(r["bin_lower_m"]) + _f(r["bin_upper_m"])) / 2 for r in rs]
            ax.errorbar(x, [_f(r["mean"]) for r in rs], yerr=[_f(r["se"]) for r in rs],
                        marker="s", ms=3, capsize=2, lw=0.8, label=w[:10])
        ax.set_xlabel("distance class (m)")
        ax.set_ylabel("semivariance of detection rate")
        ax.legend(frameon=False, fontsize=6)
        return _save(fig, path)


def walktests(rows: list[dict], path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        m = [int(r["month"]) for r in rows]
        se = [0.0 if math.isnan(_f(r["se_m"])) else _f(r["se_m"]) for r in rows]
        ax.errorbar(m, [_f(r["mean_m"]) for r in rows], yerr=se, marker="o", color="k", capsize=2)
        ax.set_xticks(range(1, 13))
        ax.set_xlabel("month")
        ax.set_ylabel("walk-test detection distance (m)")
        return _save(fig, path)


def failures(rows: list[dict], path: Path) -> Path:
    cats = [r for r in rows if r["breakdown"] == "category"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar([r["category"] for r in cats], [_f(r["fraction"]) for r in cats], color="0.4")
        ax.set_ylabel("share of failures")
        return _save(fig, path)


FIGURES = {
    "accumulation": accumulation,
    "effort": effort,
    "activity": activity,
    "rates": rates,
    "trailbias": trailbias,
    "semivariogram": semivariogram,
    "walktests": walktests,
    "failures": failures,
}
