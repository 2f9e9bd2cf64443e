import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camtrap.geometry import (
    CalibrationModel,
    DetectionZone,
    OutOfDomainError,
    RemInputs,
    TrackPoint,
    apply_homography,
    encounter_rate,
    estimate_speed,
    fit_detection_zone,
    fit_homography,
    ground_to_image,
    project_to_ground,
    rem_density,
)
from camtrap.simulator import CommunitySpec, SimConfig, SpeciesSpec, simulate_community

CAM = dict(height_m=1.0, tilt_rad=0.35, focal_px=800.0, cx=960.0, cy=540.0)


def _synthetic(ground):
    G = ground_to_image(**CAM)
    img = apply_homography(G, ground)
    return [(u, v, X, Y) for (u, v), (X, Y) in zip(img, ground)]


GROUND = np.array([[0, 2], [1, 2], [1, 3], [0, 3], [-1, 4], [2, 5], [-2, 6], [0.5, 8]], dtype=float)


# -- homography ---------------------------------------------------------------------


def test_identity_map():
    pts = [(u, v, u, v) for u, v in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 3)]]
    m = fit_homography(pts)
    assert np.allclose(m.H, np.eye(3), atol=1e-12) and m.rmse_m < 1e-12
    assert project_to_ground(m, 3, 4) == pytest.approx((3, 4))


def test_synthetic_round_trip():
    m = fit_homography(_synthetic(GROUND))
    assert m.H[2, 2] == 1.0 and m.n_points == len(GROUND)
    probe = np.random.default_rng(1).random((50, 2)) * [6, 8] + [-3, 1.5]
    img = apply_homography(ground_to_image(**CAM), probe)
    back = np.array([project_to_ground(m, u, v) for u, v in img])
    assert np.max(np.abs(back - probe)) < 1e-9
    assert CalibrationModel.from_dict(m.to_dict()).H.tolist() == m.H.tolist()


def _stick_error(seed, noise_px):
    rng = np.random.default_rng(seed)
    ends = []
    for angle, centre in [(0.0, (0, 3)), (math.pi / 3, (1, 4)), (2 * math.pi / 3, (-1, 5))]:
        d = 0.5 * np.array([math.cos(angle), math.sin(angle)])
        ends += [np.add(centre, -d), np.add(centre, d)]
    ground = np.array([[0.0, 1.5]] + ends)
    corr = [(u + rng.normal(0, noise_px), v + rng.normal(0, noise_px), X, Y) for u, v, X, Y in _synthetic(ground)]
    m = fit_homography(corr)
    worst = 0.0
    for k in range(3):
        (u0, v0, *_), (u1, v1, *_) = corr[1 + 2 * k], corr[2 + 2 * k]
        a, b = np.array(project_to_ground(m, u0, v0)), np.array(project_to_ground(m, u1, v1))
        worst = max(worst, abs(np.hypot(*(a - b)) - 1.0))
    return worst


def test_stick_protocol():
    assert _stick_error(0, 0.0) < 1e-9
    # endpoints clicked with sub-pixel (0.1 px) precision: the typical calibration meets 5 mm
    errs = [_stick_error(seed, 0.1) for seed in range(200)]
    assert np.median(errs) < 0.005


def test_principal_axis_and_horizon():
    m = fit_homography(_synthetic(GROUND))
    X, Y = project_to_ground(m, CAM["cx"], CAM["cy"])
    assert abs(X) < 1e-9 and Y == pytest.approx(1.0 / math.tan(CAM["tilt_rad"]))
    with pytest.raises(OutOfDomainError):
        project_to_ground(m, CAM["cx"], 0.0)  # far above the horizon


def test_degenerate_inputs():
    with pytest.raises(ValueError, match="at least 4"):
        fit_homography([(0, 0, 0, 0)] * 3)
    with pytest.raises(ValueError, match="collinear"):
        fit_homography([(i, 2 * i, i, 0) for i in range(5)])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), s=st.floats(0.2, 5), angle=st.floats(0, 2 * math.pi))
def test_homography_relabel_and_similarity(seed, s, angle):
    corr = np.array(_synthetic(GROUND))
    corr[:, :2] += np.random.default_rng(seed).normal(0, 0.5, (len(corr), 2))
    base = fit_homography(corr)
    perm = fit_homography(corr[np.random.default_rng(seed).permutation(len(corr))])
    assert perm.rmse_m == pytest.approx(base.rmse_m, abs=1e-9)
    R = s * np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved = corr.copy()
    moved[:, :2] = corr[:, :2] @ R.T + [13.0, -7.0]
    sim = fit_homography(moved)
    assert sim.rmse_m == pytest.approx(base.rmse_m, rel=1e-6, abs=1e-9)


# -- speed --------------------------------------------------------------------------


def _track(xy, t):
    return [TrackPoint(ti, ground=tuple(p)) for ti, p in zip(t, xy)]


def test_speed_hand_example():
    est = estimate_speed(_track([(0, 0), (0, 2), (0, 6)], [0, 1, 2]))
    assert (est.avg_speed_m_s, est.max_speed_m_s, est.path_length_m) == (3.0, 4.0, 6.0)
    assert est.entry_angle_rad == 0.0


def test_speed_stationary_and_errors():
    est = estimate_speed(_track([(1, 1)] * 3, [0, 1, 2]))
    assert est.avg_speed_m_s == est.max_speed_m_s == 0
    with pytest.raises(ValueError, match="duplicate"):
        estimate_speed(_track([(0, 0), (1, 1)], [1, 1]))
    with pytest.raises(ValueError):
        estimate_speed(_track([(0, 0)], [0]))
    with pytest.raises(ValueError, match="calibration"):
        estimate_speed([TrackPoint(0, 1, 1), TrackPoint(1, 2, 2)])


def test_speed_through_synthetic_camera():
    m = fit_homography(_synthetic(GROUND))
    t = np.linspace(0, 4, 25)
    ground = np.column_stack([-2 + 1.0 * t, 3 + 0.5 * t])
    img = apply_homography(ground_to_image(**CAM), ground)
    est = estimate_speed([TrackPoint(ti, u, v) for ti, (u, v) in zip(t, img)], m)
    assert est.avg_speed_m_s == pytest.approx(math.hypot(1.0, 0.5), rel=0.01)


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    shift=st.floats(-1e4, 1e4),
    angle=st.floats(-math.pi / 2, math.pi / 2),
)
def test_speed_invariances(seed, shift, angle):
    rng = np.random.default_rng(seed)
    xy = np.cumsum(rng.normal(0, 1, (6, 2)), axis=0)
    t = np.cumsum(rng.uniform(0.1, 1, 6))
    a = estimate_speed(_track(xy, t))
    b = estimate_speed(_track(xy, t + shift))
    R = np.array([[math.cos(angle), math.sin(angle)], [-math.sin(angle), math.cos(angle)]])
    c = estimate_speed(_track(xy @ R.T, t))  # clockwise rotation adds ``angle`` to bearings
    for other in (b, c):
        assert other.avg_speed_m_s == pytest.approx(a.avg_speed_m_s, rel=1e-9)
        assert other.max_speed_m_s == pytest.approx(a.max_speed_m_s, rel=1e-6)
    diff = (c.entry_angle_rad - a.entry_angle_rad - angle + math.pi) % (2 * math.pi) - math.pi
    assert abs(diff) < 1e-9


# -- detection zone -----------------------------------------------------------------


def test_zone_closed_form():
    z = fit_detection_zone([(1, 0.1), (2, -0.1)], min_points=2)
    assert z.sigma_r_m**2 == pytest.approx(1.25)
    assert z.r_eff_m == pytest.approx(math.sqrt(2.5))
    assert z.theta_eff_rad == pytest.approx(2 * 0.1 * math.sqrt(math.pi / 2))
    assert DetectionZone.from_dict(z.to_dict()) == z


def test_zone_errors_and_degenerate_angles():
    with pytest.raises(ValueError, match="at least 5"):
        fit_detection_zone([(1, 0)] * 4)
    with pytest.raises(ValueError, match="zero"):
        fit_detection_zone([(0, 0.1)] * 5)
    with pytest.warns(UserWarning, match="zero-width"):
        z = fit_detection_zone([(1, 0)] * 5)
    assert z.theta_eff_rad == 0


def test_zone_recovers_sigma():
    rng = np.random.default_rng(8)
    r = rng.rayleigh(3.0, 10_000)
    a = rng.normal(0, 0.4, 10_000)
    z = fit_detection_zone(np.column_stack([r, a]))
    assert z.sigma_r_m == pytest.approx(3.0, rel=0.05)
    assert z.sigma_a_rad == pytest.approx(0.4, rel=0.05)


def test_small_species_has_smaller_zone():
    spec = CommunitySpec((
        SpeciesSpec("spiny_rat", 1.0, "nocturnal", zone=DetectionZone.from_effective(2.0, 0.25)),
        SpeciesSpec("collared_peccary", 1.0, "diurnal", zone=DetectionZone.from_effective(6.0, 0.6)),
    ))
    res = simulate_community(spec, 20, SimConfig(density_per_km2=300, seed=4))
    rat = fit_detection_zone(res.first_detections["spiny_rat"])
    pec = fit_detection_zone(res.first_detections["collared_peccary"])
    assert rat.r_eff_m < pec.r_eff_m and rat.theta_eff_rad < pec.theta_eff_rad


# -- REM ----------------------------------------------------------------------------


def test_rem_hand_example():
    zone = DetectionZone.from_effective(5.0, 0.2)
    assert rem_density(RemInputs(10, 10.0, 1000.0, zone)) == pytest.approx(math.pi / 0.011)
    assert rem_density(RemInputs(10, 20.0, 1000.0, zone)) == pytest.approx(math.pi / 0.022)
    with pytest.raises(ValueError):
        RemInputs(1, 0.0, 1.0, zone)
    with pytest.raises(ValueError, match="zero radius"):
        rem_density(RemInputs(1, 1.0, 1.0, DetectionZone(0.0, 0.1)))


@settings(max_examples=50, deadline=None)
@given(
    y=st.integers(1, 10_000), t=st.floats(1, 1e4), v=st.floats(10, 1e4),
    r=st.floats(0.5, 20), th=st.floats(0.05, 3), k=st.floats(0.1, 10),
)
def test_rem_homogeneity(y, t, v, r, th, k):
    zone = DetectionZone.from_effective(r, th)
    d = rem_density(RemInputs(y, t, v, zone))
    assert rem_density(RemInputs(y, t, v * k, zone)) == pytest.approx(d / k, rel=1e-9)
    assert rem_density(RemInputs(y, t, v, DetectionZone.from_effective(r * k, th))) == pytest.approx(d / k, rel=1e-9)
    assert rem_density(RemInputs(2 * y, t, v, zone)) == pytest.approx(2 * d, rel=1e-12)
    # the encounter rate inverts the estimator
    assert encounter_rate(d, v / 1000, zone) == pytest.approx(y / t, rel=1e-9)
