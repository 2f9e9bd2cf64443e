import filecmp
import math

import numpy as np
import pytest

from camtrap.estimators import activity_histogram, deployment_counts, failure_summary, rarefaction
from camtrap.geometry import DetectionZone, encounter_rate
from camtrap.simulator import (
    CommunitySpec,
    SimConfig,
    SpeciesSpec,
    annual_hazard,
    gaussian_field,
    microsim_encounter_rate,
    simulate_community,
    simulate_failures,
    simulate_passages,
)

ZONE = DetectionZone.from_effective(5.0, 0.2)


def _totals(cfg):
    rows = deployment_counts(simulate_passages(cfg).store, "target", effort="nominal")
    return sum(y for _, y, _ in rows), sum(t for _, _, t in rows)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(density_per_km2=-1)
    with pytest.raises(ValueError):
        SimConfig(seasonal_decay=(1.0,) * 11)
    with pytest.raises(ValueError):
        SimConfig(failure_rates={"none": 0.1})
    with pytest.raises(ValueError):
        SpeciesSpec("x", weight=0)


def test_zero_density_no_detections():
    res = simulate_passages(SimConfig(density_per_km2=0, n_rounds=3))
    assert not res.store.sequences and res.truth["species"]["target"]["expected_rate_per_day"] == 0


def test_analytic_rate_over_1e5_camera_days():
    cfg = SimConfig(density_per_km2=10, zone=ZONE, n_cameras=125, n_rounds=100, seed=2)
    y, t = _totals(cfg)
    expected = encounter_rate(10, 1.0, ZONE)
    assert expected == pytest.approx(0.035, abs=5e-5)
    assert t == pytest.approx(1e5)
    assert abs(y / t - expected) < 3 * math.sqrt(expected * t) / t


def test_doubling_density_doubles_rate():
    base = SimConfig(density_per_km2=200, n_cameras=50, n_rounds=10, seed=6)
    y1, t1 = _totals(base)
    y2, t2 = _totals(SimConfig(density_per_km2=400, n_cameras=50, n_rounds=10, seed=7))
    ratio = (y2 / t2) / (y1 / t1)
    se = ratio * math.sqrt(1 / y1 + 1 / y2)
    assert abs(ratio - 2) < 3 * se


def test_microsim_agrees_with_analytic_rate():
    zone = DetectionZone.from_effective(20.0, 0.6)
    rate, hits = microsim_encounter_rate(2000, 1.0, zone, camera_days=0.1, n_reps=400, seed=1)
    expected = encounter_rate(2000, 1.0, zone)
    assert hits > 1000
    assert rate == pytest.approx(expected, rel=0.05)


def test_seed_determinism(tmp_path):
    cfg = SimConfig(density_per_km2=300, n_rounds=2, seed=9, failure_rates={"lens_blur": 0.2})
    simulate_passages(cfg).save(tmp_path / "a")
    simulate_passages(cfg).save(tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for name in cmp.common_files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    simulate_passages(SimConfig(density_per_km2=300, n_rounds=2, seed=10)).save(tmp_path / "c")
    assert (tmp_path / "a" / "images.csv").read_bytes() != (tmp_path / "c" / "images.csv").read_bytes()


def test_zero_hazards_never_fail():
    store = simulate_failures(SimConfig(n_rounds=5, failure_rates={"lens_blur": 0.0}))
    assert failure_summary(store.cameras).never_failed == 1.0


def test_failure_mix_recovered():
    cfg = SimConfig(
        n_cameras=400, n_rounds=46,
        failure_rates={k: s * annual_hazard(0.7, 46) for k, s in
                       (("lens_blur", 0.4), ("humidity_circuit", 0.2), ("other", 0.4))},
    )
    store = simulate_failures(cfg)
    summary = failure_summary(store.cameras)
    n = summary.n_failures
    for cat, p in (("lens_blur", 0.4), ("humidity_circuit", 0.2), ("other", 0.4)):
        assert abs(summary.category_share[cat] - p) < 3 * math.sqrt(p * (1 - p) / n)
    failed = {dep for dep in store.deployments
              if store.effort_days(dep.deployment_id) < dep.nominal_days - 1e-9}
    assert failed
    assert {d.camera_id for d in failed} <= {c.camera_id for c in store.cameras if c.failures}


def test_nocturnal_activity_concentrated_at_night():
    spec = CommunitySpec((SpeciesSpec("paca", 1.0, "nocturnal"),))
    res = simulate_community(spec, 40, SimConfig(density_per_km2=1500, seed=3))
    counts = activity_histogram(res.store, "paca").counts
    night = counts[list(range(0, 6)) + list(range(18, 24))].sum()
    assert counts.sum() > 100 and night > 0.75 * counts.sum()


def test_single_species_curve_flat():
    spec = CommunitySpec((SpeciesSpec("agouti"),))
    res = simulate_community(spec, 10, SimConfig(density_per_km2=5000, seed=1))
    curve = rarefaction(res.incidence, n_resamples=20)
    assert np.all(curve.sobs_mean == 1)


def test_community_rates_follow_weights():
    spec = CommunitySpec.geometric(3, 0.5)
    res = simulate_community(spec, 200, SimConfig(density_per_km2=600, seed=5))
    n = [len([s for s in res.store.sequences
              if any(d.species_code == sp.code for d in res.store.detections_of(s.sequence_id))])
         for sp in spec.species]
    assert n[0] > n[1] > n[2] > 0
    assert n[0] / n[1] == pytest.approx(2, rel=0.25)


def test_gaussian_field_covariance():
    xy = np.array([[0.0, 0.0], [10.0, 0.0], [500.0, 0.0]])
    draws = np.array([gaussian_field(xy, 50.0, 1.0, seed=s) for s in range(4000)])
    c = np.cov(draws.T)
    # spherical covariance at h=10, range 50: 1 - 1.5*0.2 + 0.5*0.008 = 0.704
    assert c[0, 1] == pytest.approx(0.704, abs=0.06)
    assert abs(c[0, 2]) < 0.06
    assert np.diag(c) == pytest.approx([1, 1, 1], abs=0.08)
