import math

import numpy as np
import pytest

import swingby as sw
from swingby.ephemeris import CartesianState
from swingby.model import PENALTY, ProblemError

from conftest import MU_SUN


# ----------------------------------------------------------------------
# launch asymptote
# ----------------------------------------------------------------------
def test_launch_asymptote_components():
    assert np.allclose(sw.launch_asymptote(3.0, 0.0, math.pi / 2),
                       [3.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(sw.launch_asymptote(0.0, 1.2, 0.7),
                       [0.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(sw.launch_asymptote(3.0, math.pi / 2, math.pi / 2),
                       [0.0, 3.0, 0.0], atol=1e-14)
    with pytest.raises(ValueError):
        sw.launch_asymptote(-1.0, 0.0, 0.0)


# ----------------------------------------------------------------------
# problem construction and validation
# ----------------------------------------------------------------------
def test_all_shipped_problems_load(catalog):
    sizes = {"cassini": 22, "rosetta": 22, "eveej_2009": 14,
             "asteroid_1989ml": 14, "earth_jupiter_free": 17,
             "earth_mars": 6}
    for name, n in sizes.items():
        prob = sw.load_problem(name, catalog=catalog)
        assert prob.n_vars == n
        assert np.all(prob.lower <= prob.upper)


def test_vector_length_matches_four_np_minus_two(cassini):
    assert cassini.n_vars == 4 * cassini.n_bodies - 2


def test_unknown_problem_file():
    with pytest.raises(ProblemError, match="not found"):
        sw.load_problem("no_such_problem")


def _problem_dict(**over):
    base = {
        "catalog": "solar_system",
        "sequence": [3, 4],
        "launch_mode": "parameterized-asymptote",
        "objective_mode": "total-with-launch",
        "bounds": {
            "vinf": [0.0, 5.0], "t0": [7300.0, 8400.0],
            "tof": [[120, 500]], "eps": [[0.01, 0.9]],
        },
    }
    base.update(over)
    return base


def test_reversed_bounds_rejected():
    bad = _problem_dict()
    bad["bounds"] = dict(bad["bounds"], t0=[8400.0, 7300.0])
    with pytest.raises(ProblemError, match="reversed"):
        sw.load_problem(bad)


def test_altitude_floor_enforced():
    bad = _problem_dict(sequence=[3, 2, 4])
    bad["bounds"] = {
        "vinf": [0.0, 5.0], "t0": [7300.0, 8400.0],
        "tof": [[120, 500], [120, 500]], "eps": [[0.01, 0.9]] * 2,
        "h": [[1e-4, 5.0]],
    }
    with pytest.raises(ProblemError, match="altitude"):
        sw.load_problem(bad)


def test_eps_outside_unit_interval_rejected():
    bad = _problem_dict()
    bad["bounds"] = dict(bad["bounds"], eps=[[0.01, 1.4]])
    with pytest.raises(ProblemError, match="eps"):
        sw.load_problem(bad)


def test_fixed_launch_requires_vinf():
    with pytest.raises(ProblemError, match="fixed_vinf"):
        sw.load_problem(_problem_dict(objective_mode="fixed-launch"))


def test_free_slot_range_must_be_contiguous():
    bad = _problem_dict(sequence={"free": {
        "departure": 3, "arrival": 5, "slots": 1, "id_bounds": [[2, 12]]}})
    bad["bounds"]["tof"] = [[120, 500], [120, 500]]
    bad["bounds"]["eps"] = [[0.01, 0.9]] * 2
    bad["bounds"]["h"] = [[0.1, 5.0]]
    with pytest.raises(ProblemError, match="contiguous"):
        sw.load_problem(bad)


def test_free_sequence_layout(catalog):
    prob = sw.load_problem("earth_jupiter_free", catalog=catalog)
    assert prob.n_head == 3
    assert prob.integer_mask[:3].all()
    assert not prob.integer_mask[3:].any()
    assert prob.names[:3] == ["p1", "p2", "p3"]
    y = (prob.lower + prob.upper) / 2
    ids = prob.resolve_sequence(y)
    assert ids[0] == 3 and ids[-1] == 5
    assert np.isfinite(prob.objective(y))


# ----------------------------------------------------------------------
# decode
# ----------------------------------------------------------------------
def lambert_matched_vector(problem, t0=7400.0, tof=200.0, eps=0.5):
    """Vector whose launch asymptote reproduces the Lambert first leg,
    so the mid-course burn vanishes."""
    cat = problem.catalog
    s1 = sw.body_state(cat, 3, t0)
    s2 = sw.body_state(cat, 4, t0 + tof)
    v1, _ = sw.lambert(s1.r, s2.r, tof, cat.central_mu)
    rel = v1 - s1.v
    vinf = np.linalg.norm(rel)
    delta = math.acos(rel[2] / vinf)
    alpha = math.atan2(rel[1], rel[0])
    return np.array([vinf, alpha, delta, t0, tof, eps])


def test_decode_self_consistent_conic_has_zero_dsm(earth_mars):
    y = lambert_matched_vector(earth_mars)
    traj = earth_mars.decode(y)
    assert traj.feasible
    assert traj.legs[0].dsm_kms < 1e-6
    # objective reduces to launch plus arrival when no burns remain
    assert traj.total_objective == pytest.approx(
        traj.dv_launch + traj.dv_arrival, abs=1e-6)


def test_decode_zero_coast_when_eps_tiny(catalog):
    raw = _problem_dict()
    raw["bounds"] = dict(raw["bounds"], eps=[[1e-13, 0.9]])
    prob = sw.load_problem(raw, catalog=catalog)
    y = lambert_matched_vector(prob, eps=1e-13)
    traj = prob.decode(y)
    assert np.linalg.norm(traj.legs[0].dsm_pos - traj.legs[0].r_start) < 1e-3


def test_random_cassini_decodes_hold_invariants(cassini):
    rng = np.random.default_rng(2024)
    ys = rng.uniform(cassini.lower, cassini.upper, (1000, cassini.n_vars))
    fs = cassini.evaluate_many(ys)
    assert np.all(np.isfinite(fs))
    mu = cassini.catalog.central_mu
    checked = 0
    legs_verified = 0
    grazers = 0
    for y, f in zip(ys[:120], fs[:120]):
        traj = cassini.decode(y)
        assert traj.total_objective == f
        epochs = [leg.t_start for leg in traj.legs]
        assert all(b > a for a, b in zip(epochs, epochs[1:]))
        if not traj.feasible:
            continue
        checked += 1
        for leg in traj.legs:
            if leg.dsm_kms > 50.0:
                # sun-skimming garbage legs (maneuvers of hundreds of
                # km/s, perihelia of a few earth radii) re-propagate
                # with amplification beyond any fixed tolerance; the
                # search never retains them
                grazers += 1
                continue
            # re-propagate: coast, burn, coast onto the target body
            try:
                st = sw.propagate_kepler(
                    CartesianState(leg.r_start, leg.v_start, leg.t_start),
                    mu, leg.eps * leg.tof_days)
                assert np.linalg.norm(st.r - leg.dsm_pos) \
                    <= 1e-6 * np.linalg.norm(leg.dsm_pos)
                st = CartesianState(st.r, st.v + leg.dsm_dv, st.epoch)
                st = sw.propagate_kepler(st, mu,
                                         (1.0 - leg.eps) * leg.tof_days)
            except sw.PropagationError:
                grazers += 1
                continue
            tgt = sw.body_state(cassini.catalog, leg.body_to,
                                leg.t_start + leg.tof_days)
            assert np.linalg.norm(st.r - tgt.r) \
                <= 1e-6 * np.linalg.norm(tgt.r)
            legs_verified += 1
        for fb in traj.flybys:
            vin = np.linalg.norm(fb.geometry.v_in_rel)
            vout = np.linalg.norm(fb.geometry.v_out_rel)
            assert abs(vout - vin) <= 1e-12 * vin
    assert checked > 50
    assert legs_verified > 150


def test_decode_is_deterministic(cassini):
    rng = np.random.default_rng(7)
    y = rng.uniform(cassini.lower, cassini.upper)
    f1 = cassini.objective(y)
    f2 = cassini.objective(y)
    assert f1 == f2
    batch = cassini.evaluate_many(np.stack([y, cassini.lower * 0.5
                                            + cassini.upper * 0.5, y]))
    assert batch[0] == f1
    assert batch[2] == f1


def test_fixed_launch_objective_drops_launch_term(catalog):
    raw = _problem_dict()
    prob13 = sw.load_problem(raw, catalog=catalog)
    raw14 = _problem_dict(objective_mode="fixed-launch", fixed_vinf_kms=3.0)
    del raw14["bounds"]["vinf"]
    prob14 = sw.load_problem(raw14, catalog=catalog)
    rng = np.random.default_rng(5)
    for _ in range(20):
        y = rng.uniform(prob14.lower, prob14.upper)
        y[0] = 3.0
        assert prob13.objective(y) - prob14.objective(y) \
            == pytest.approx(3.0, abs=1e-12)


def test_objective_penalizes_arrival_constraint(catalog):
    raw = _problem_dict(arrival_constraint={"min_vinf": 50.0})
    prob = sw.load_problem(raw, catalog=catalog)
    y = lambert_matched_vector(prob)
    traj = prob.decode(y)
    f = prob.objective(y)
    # impactor objective: launch + burns + shortfall penalty
    assert f > PENALTY
    shortfall = 50.0 - traj.dv_arrival
    assert f == pytest.approx(
        traj.dv_launch + traj.dv_deterministic + PENALTY
        + 100.0 * shortfall, rel=1e-9)


def test_summarize_mirrors_decode(cassini):
    rng = np.random.default_rng(9)
    y = rng.uniform(cassini.lower, cassini.upper)
    s = cassini.summarize(y)
    traj = cassini.decode(y)
    assert s["vinf0_kms"] == traj.dv_launch
    assert len(s["legs"]) == len(traj.legs)
    assert s["sequence"] == traj.sequence
    assert "/" in s["launch_date"]


# ----------------------------------------------------------------------
# two- and three-impulse sub-models
# ----------------------------------------------------------------------
def test_two_impulse_self_transfer(frozen_catalog):
    period = frozen_catalog.period_days(3)
    # just under one period: the transfer is the orbit itself; exactly
    # one period is the 0/2pi transfer-angle singularity
    total = sw.two_impulse_cost(frozen_catalog, 1000.0, 0.99 * period,
                                3, 3)
    assert total < 1e-6


def test_two_impulse_rejects_bad_tof(catalog):
    with pytest.raises(ValueError):
        sw.two_impulse_cost(catalog, 1000.0, -1.0, 3, 4)


def test_three_impulse_degenerates_to_two(catalog):
    t0, tof = 7420.0, 240.0
    two = sw.two_impulse_cost(catalog, t0, tof, 3, 4)
    three = sw.three_impulse_cost(catalog, t0, 1e-9, tof, 3, 4,
                                  dv1_kms=0.0)
    assert three == pytest.approx(two, abs=1e-6)


def test_three_impulse_self_transfer_mid_course(frozen_catalog):
    # propagating 40% of a period along the orbit and re-targeting the
    # start point costs nothing (eps = 0.5 would sit exactly on the
    # 180-degree Lambert singularity)
    period = frozen_catalog.period_days(3)
    total = sw.three_impulse_cost(frozen_catalog, 2000.0, 0.4, period,
                                  3, 3, dv1_kms=0.0)
    assert total < 1e-6


def test_three_impulse_sweep_does_not_beat_two_impulse(catalog):
    # frozen expected relation: the eps sweep includes the degenerate
    # eps -> 0 point, so its minimum can never exceed the two-impulse
    # cost
    for t0, tof in ((7350.0, 220.0), (7700.0, 300.0), (8050.0, 180.0)):
        two = sw.two_impulse_cost(catalog, t0, tof, 3, 4)
        sweep = [sw.three_impulse_cost(catalog, t0, eps, tof, 3, 4)
                 for eps in [0.0] + list(np.linspace(0.05, 0.95, 19))]
        assert min(sweep) <= two + 1e-9


def test_grid_scan_matches_direct_calls(catalog):
    t0s, tofs, grid = sw.grid_scan(catalog, 3, 4, (7300, 7800),
                                   (150, 400), 2, 2)
    assert grid.shape == (2, 2)
    assert np.all(np.isfinite(grid))
    for i in range(2):
        for j in range(2):
            assert grid[i, j] == sw.two_impulse_cost(
                catalog, t0s[i], tofs[j], 3, 4)


def test_grid_scan_three_impulse_mode(catalog):
    eps_sweep = np.array([1e-9, 0.3, 0.6])
    t0s, tofs, grid = sw.grid_scan(catalog, 3, 4, (7300, 7500),
                                   (180, 320), 2, 2,
                                   mode="three-optimal-eps",
                                   eps_sweep=eps_sweep)
    for i in range(2):
        for j in range(2):
            direct = min(sw.three_impulse_cost(catalog, t0s[i], e,
                                               tofs[j], 3, 4)
                         for e in eps_sweep)
            assert grid[i, j] == direct


def test_grid_scan_validates_resolution(catalog):
    with pytest.raises(ValueError):
        sw.grid_scan(catalog, 3, 4, (7300, 7800), (150, 400), 1, 5)
