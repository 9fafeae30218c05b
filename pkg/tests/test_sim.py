"""Monte Carlo engine: trajectory law, decision matching, estimators,
replication protocol, and the trajectory dump."""

import csv
import io
import math

import numpy as np
import pytest

import audkit as ak
from audkit import queue_core as qc
from audkit import sim
from audkit.errors import InputError, InsufficientDataError

SVC2 = ak.ServiceModel(2.0)

FAMILY_CONFIGS = {
    "exp": ak.Exponential(1.0),
    "uniform": ak.Uniform(2.0),
    "lomax": ak.Lomax(3.0, 2.0),
    "fnorm": ak.FoldedNormal(1.0, 0.3),
    "det": ak.Deterministic(1.0),
}


def poisson_cfg(arrival, nu=2.0, mu=2.0):
    return ak.SystemConfig(arrival, ak.ServiceModel(mu), ak.PoissonDecisions(nu))


def exact_offset_aud(lam, mu, delta):
    """Independent law of the offset system derived from the system-time
    recursion: the age at a decision is delta plus one period per consecutive
    predecessor whose system time overshot its slot, a geometric count."""
    rho1 = qc.rho1_deterministic(lam / mu)
    u1 = math.exp(-mu * (1.0 - rho1) * delta)
    return delta + u1 / (lam * (1.0 - rho1))


# --- trajectory law -----------------------------------------------------------


@pytest.mark.parametrize("family", sorted(FAMILY_CONFIGS))
def test_lindley_invariants(family):
    cfg = poisson_cfg(FAMILY_CONFIGS[family])
    rec, dec = sim.run_trajectory(cfg, 200_000, seed=7)
    assert np.allclose(rec.system, rec.waiting + rec.service, rtol=0, atol=1e-9)
    assert np.allclose(rec.departure, rec.arrival + rec.system, rtol=0, atol=1e-6)
    assert np.all(rec.waiting >= 0.0)
    assert np.all(rec.interdeparture >= -1e-9)
    # busy arrivals depart one service after the previous departure; the
    # epoch arithmetic carries ~t_end * eps of representation error
    tol = float(rec.departure[-1]) * 4e-16 + 1e-12
    busy = rec.interarrival[1:] < rec.system[:-1]
    assert np.allclose(
        rec.interdeparture[1:][busy], rec.service[1:][busy], rtol=0, atol=tol
    )
    # idle arrivals: Y = X + S - T_prev
    idle = ~busy
    assert np.allclose(
        rec.interdeparture[1:][idle],
        rec.interarrival[1:][idle] + rec.service[1:][idle] - rec.system[:-1][idle],
        rtol=0,
        atol=tol,
    )


def test_deterministic_replay():
    cfg = poisson_cfg(ak.Exponential(1.0))
    r1, d1 = sim.run_trajectory(cfg, 50_000, seed=123)
    r2, d2 = sim.run_trajectory(cfg, 50_000, seed=123)
    assert np.array_equal(r1.arrival, r2.arrival)
    assert np.array_equal(r1.departure, r2.departure)
    assert np.array_equal(d1.epoch, d2.epoch)
    assert np.array_equal(d1.age, d2.age)
    r3, _ = sim.run_trajectory(cfg, 50_000, seed=124)
    assert not np.array_equal(r1.departure, r3.departure)


def test_decision_assignment_ties_and_skips():
    arrivals = np.array([1.0, 2.0, 3.0])
    departures = np.array([1.5, 2.5, 3.5])
    epochs = np.array([0.5, 1.5, 2.4, 2.5, 3.6])
    out = sim.assign_decisions(arrivals, departures, epochs)
    assert out.n_before_first_departure == 1  # 0.5 precedes every departure
    # a decision exactly at a departure epoch sees the just-departed update
    assert list(out.used_update) == [0, 0, 1, 2]
    assert out.age == pytest.approx([0.5, 1.4, 0.5, 0.6])


def test_offset_decisions_with_instant_service():
    cfg = ak.SystemConfig(
        ak.Deterministic(1.0), ak.ServiceModel(1e6), ak.PeriodicOffsetDecisions(0.25)
    )
    _, dec = sim.run_trajectory(cfg, 20_000, seed=5)
    assert np.all(np.abs(dec.age - 0.25) <= 2e-6)


def test_horizon_validated():
    with pytest.raises(InputError):
        sim.run_trajectory(poisson_cfg(ak.Exponential(1.0)), 0, seed=1)


# --- estimators against closed forms ----------------------------------------------


def test_mean_aud_matches_markovian_value():
    cfg = poisson_cfg(ak.Exponential(1.0), nu=3.0)
    rec, dec = sim.run_trajectory(cfg, 1_000_000, seed=42)
    kept = dec.epoch >= rec.departure[len(rec) // 10]
    assert dec.age[kept].mean() == pytest.approx(1.75, rel=0.01)


def test_missing_prob_markovian():
    cfg = poisson_cfg(ak.Exponential(1.0), nu=1.0)
    rec, dec = sim.run_trajectory(cfg, 1_000_000, seed=43)
    p = sim.estimate_missing_prob(rec, dec, skip=len(rec) // 10)
    assert p == pytest.approx(0.5, abs=0.005)


def test_missing_prob_high_decision_rate():
    cfg = poisson_cfg(ak.Exponential(1.0), nu=100.0)
    rec, dec = sim.run_trajectory(cfg, 100_000, seed=44)
    assert sim.estimate_missing_prob(rec, dec, skip=10_000) < 0.02


def test_missing_prob_requires_data():
    cfg = poisson_cfg(ak.Exponential(1.0))
    rec, dec = sim.run_trajectory(cfg, 100, seed=1)
    with pytest.raises(InsufficientDataError):
        sim.estimate_missing_prob(rec, dec, skip=100)


@pytest.mark.parametrize("family", sorted(FAMILY_CONFIGS))
def test_busy_probability_and_system_time(family):
    arrival = FAMILY_CONFIGS[family]
    mu = 2.0
    cfg = poisson_cfg(arrival, mu=mu)
    rho1 = qc.rho1_value(arrival, mu)
    reps = []
    for seed in range(5):
        rec, _ = sim.run_trajectory(cfg, 400_000, seed=900 + seed)
        skip = len(rec) // 10
        busy = rec.interarrival[skip:] < rec.system[skip - 1:-1]
        reps.append((busy.mean(), rec.system[skip:].mean()))
    busy_means = np.array([r[0] for r in reps])
    t_means = np.array([r[1] for r in reps])
    se = busy_means.std(ddof=1) / math.sqrt(len(reps))
    assert abs(busy_means.mean() - rho1) <= max(3.0 * se, 1e-3)
    assert t_means.mean() == pytest.approx(1.0 / (mu * (1.0 - rho1)), rel=0.01)


@pytest.mark.parametrize("family", sorted(FAMILY_CONFIGS))
def test_departure_moments_match_prop_formulas(family):
    arrival = FAMILY_CONFIGS[family]
    mu = 2.0
    mean_y, second_y, cross = qc.departure_moments(arrival, mu)
    rec, _ = sim.run_trajectory(poisson_cfg(arrival, mu=mu), 2_000_000, seed=77)
    skip = len(rec) // 10
    y = rec.interdeparture[skip:]
    ty = rec.system[skip - 1:-1] * rec.interdeparture[skip:]
    assert y.mean() == pytest.approx(mean_y, rel=0.01)
    assert (y * y).mean() == pytest.approx(second_y, rel=0.01)
    assert ty.mean() == pytest.approx(cross, rel=0.01)


def test_sync_aud_matches_closed_form():
    cfg = ak.SystemConfig(ak.Deterministic(1.0), SVC2, ak.PeriodicSyncDecisions(1))
    rep = sim.run_replications(cfg, horizon=500_000, n_reps=5, base_seed=21)
    assert rep.mean_aud == pytest.approx(qc.average_aud_dm1d_sync(1.0, 2.0, 1), rel=0.01)


def test_sync_short_interdeparture_matches_formula():
    # the formula predicts the short-window event, reported separately from
    # the raw unused-update fraction
    for m0 in (1, 2, 5):
        cfg = ak.SystemConfig(ak.Deterministic(1.0), SVC2, ak.PeriodicSyncDecisions(m0))
        rep = sim.run_replications(cfg, horizon=500_000, n_reps=5, base_seed=31 + m0)
        assert rep.p_short_interdeparture == pytest.approx(
            qc.missing_prob_dm1d_sync(1.0, 2.0, m0), rel=0.01
        )


def test_offset_aud_matches_recursion_law():
    # oracle: exact_offset_aud above, an independent derivation of the
    # offset system's mean age
    for delta, seed in ((0.25, 61), (0.5, 62), (0.75, 63)):
        cfg = ak.SystemConfig(
            ak.Deterministic(1.0), SVC2, ak.PeriodicOffsetDecisions(delta)
        )
        rep = sim.run_replications(cfg, horizon=500_000, n_reps=5, base_seed=seed)
        assert rep.mean_aud == pytest.approx(exact_offset_aud(1.0, 2.0, delta), rel=0.01)


# --- replication protocol -----------------------------------------------------------


def test_replication_report_deterministic():
    cfg = poisson_cfg(ak.Exponential(1.0))
    r1 = sim.run_replications(cfg, horizon=100_000, n_reps=4, base_seed=9)
    r2 = sim.run_replications(cfg, horizon=100_000, n_reps=4, base_seed=9)
    assert r1 == r2
    r3 = sim.run_replications(cfg, horizon=100_000, n_reps=4, base_seed=9, threads=4)
    assert r1 == r3  # thread count must not leak into results
    r4 = sim.run_replications(cfg, horizon=100_000, n_reps=4, base_seed=10)
    assert r1.mean_aud != r4.mean_aud


def test_replication_report_fields():
    cfg = poisson_cfg(ak.Exponential(1.0))
    rep = sim.run_replications(cfg, horizon=100_000, n_reps=4, base_seed=9)
    assert rep.n_replications == 4
    assert rep.updates_discarded == 4 * 10_000
    assert rep.aud_std_error > 0
    assert rep.ci95[0] < rep.mean_aud < rep.ci95[1]
    assert 0.0 <= rep.p_mis_hat <= 1.0
    assert rep.p_short_interdeparture is None  # Poisson decisions
    assert len(rep.replication_means) == 4
    assert rep.config["arrival"] == "exp:rate=1"
    with pytest.raises(InputError):
        sim.run_replications(cfg, horizon=100, n_reps=1)


def test_ci_coverage_meta_trial():
    cfg = poisson_cfg(ak.Exponential(1.0), nu=1.0)
    hits = 0
    for meta in range(20):
        rep = sim.run_replications(cfg, horizon=50_000, n_reps=20, base_seed=1000 + meta)
        lo, hi = rep.ci95
        hits += lo <= 1.75 <= hi
    assert hits >= 18


def test_std_error_scaling_with_horizon():
    cfg = poisson_cfg(ak.Exponential(1.0))
    se_short = sim.run_replications(cfg, horizon=100_000, n_reps=24, base_seed=3).aud_std_error
    se_long = sim.run_replications(cfg, horizon=200_000, n_reps=24, base_seed=3).aud_std_error
    ratio = se_short / se_long
    assert math.sqrt(2.0) / 1.5 <= ratio <= math.sqrt(2.0) * 1.5


# --- trajectory dump -----------------------------------------------------------------


def test_dump_trajectory_csv(tmp_path):
    cfg = poisson_cfg(ak.Exponential(1.0))
    rec, dec = sim.run_trajectory(cfg, 500, seed=77)
    path = str(tmp_path / "trajectory.csv")
    written = sim.dump_trajectory_csv(rec, dec, path)
    assert written == path
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "t_k", "X_k", "S_k", "W_k", "T_k", "t_dep_k", "Y_k"]
    update_rows = rows[1 : 1 + len(rec)]
    assert len(update_rows) == 500
    # shortest round-trip formatting reparses to the exact double
    assert float(update_rows[3][1]) == rec.arrival[3]
    header2 = rows[1 + len(rec)]
    assert header2 == ["j", "tau_j", "used_update", "aud"]
    decision_rows = rows[2 + len(rec) :]
    assert len(decision_rows) == len(dec)
    assert float(decision_rows[0][3]) == dec.age[0]
