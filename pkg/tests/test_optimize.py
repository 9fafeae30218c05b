"""Simplex wrapper, penalized feasibility objective, threshold bisection, and
the adaptive offset search."""

import math

import numpy as np
import pytest

import audkit as ak
from audkit import optimize as op
from audkit import queue_core as qc
from audkit.errors import ConvergenceError, InputError


def golden_section(f, lo, hi, tol=1e-10):
    """Independent 1-D minimizer used as an oracle for the bisection."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b), f(0.5 * (a + b))


# --- simplex wrapper -------------------------------------------------------------


def test_simplex_quadratic_bowl():
    res = op.simplex_minimize(lambda x: (x[0] - 3.0) ** 2, [0.0])
    assert res.x[0] == pytest.approx(3.0, abs=1e-6)
    assert res.fun <= 1e-12


def test_simplex_rosenbrock():
    res = op.simplex_minimize(
        lambda x: 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2, [-1.2, 1.0]
    )
    assert res.fun <= 1e-8
    assert res.x[0] == pytest.approx(1.0, abs=1e-3)


def test_simplex_inner_problem_smoke():
    spec = op.ObjectiveSpec("exp", 2.0, 2.0)
    res = op.simplex_minimize(lambda k: op.penalized_objective(spec, k), [1.0])
    lam = res.x[0]
    assert 0.0 < lam < 2.0  # interior, stable minimizer
    assert res.fun < 0.0  # c0 = 2 is above the optimum, so feasible


def test_simplex_budget_exhaustion_carries_best():
    with pytest.raises(ConvergenceError) as err:
        op.simplex_minimize(
            lambda x: (x[0] - 3.0) ** 2 + (x[1] + 1.0) ** 2, [50.0, 50.0], max_evals=10
        )
    best = err.value.best
    assert best is not None and best.n_evals <= 10
    assert math.isfinite(best.fun)


def test_simplex_rejects_nonfinite_start():
    with pytest.raises(InputError):
        op.simplex_minimize(lambda x: float("nan"), [0.0])


# --- penalized objective -----------------------------------------------------------


def test_penalized_objective_tight_threshold():
    # lam = 1, mu = 2 puts the decision-rate-free mean age exactly at 1.75,
    # so the feasibility margin vanishes
    spec = op.ObjectiveSpec("exp", 2.0, 1.75)
    assert abs(op.penalized_objective(spec, [1.0])) <= 1e-8


def test_penalized_objective_penalty_branches():
    spec = op.ObjectiveSpec("exp", 2.0, 1.75)
    assert op.penalized_objective(spec, [3.0]) >= spec.penalty  # rho = 1.5
    assert op.penalized_objective(spec, [-1.0]) >= spec.penalty  # invalid rate
    lomax = op.ObjectiveSpec("lomax", 2.0, 5.0)
    assert op.penalized_objective(lomax, [1.5, 1.0]) >= lomax.penalty  # shape <= 2


def test_penalized_objective_negative_when_loose():
    spec = op.ObjectiveSpec("uniform", 2.0, 10.0)
    assert op.penalized_objective(spec, [2.0]) < 0.0


def test_penalized_objective_arity_checked():
    with pytest.raises(InputError):
        op.penalized_objective(op.ObjectiveSpec("exp", 2.0, 1.0), [1.0, 2.0])
    with pytest.raises(InputError):
        op.ObjectiveSpec("weibull", 2.0, 1.0)


def test_default_starts_sit_at_half_load():
    for family in ("exp", "uniform", "lomax", "fnorm"):
        for mu in (1.0, 2.0, 4.0):
            kappa = op.default_start(family, mu)
            model_rho = {
                "exp": lambda k: k[0] / mu,
                "uniform": lambda k: 2.0 / (k[0] * mu),
                "lomax": lambda k: (k[0] - 1.0) / (k[1] * mu),
                "fnorm": lambda k: 1.0 / (mu * ak.FoldedNormal(*k).mean()),
            }[family](kappa)
            assert model_rho == pytest.approx(0.5, abs=0.01)


# --- bisection ------------------------------------------------------------------------


def test_bisection_exponential_matches_golden_section():
    res = op.bisection_optimal_arrival("exp", 2.0)
    lam_star, aud_star = golden_section(
        lambda lam: qc.average_aud_mm1m(lam, 2.0), 1e-6, 2.0 - 1e-9
    )
    assert res.converged
    assert res.bracket_width <= 1e-6 / 2.0
    assert res.c0 == pytest.approx(aud_star, abs=1e-4)
    assert res.kappa[0] == pytest.approx(lam_star, abs=1e-3)
    assert res.arrival_rate() / 2.0 == pytest.approx(0.5, abs=0.1)


def test_bisection_feasibility_monotone_at_result():
    res = op.bisection_optimal_arrival("exp", 2.0)
    model = res.arrival_model()
    aud = qc.average_aud_from_moments(*qc.departure_moments(model, 2.0))
    # achieved mean age certifies feasibility of c0*, and raising the
    # threshold can only keep it feasible
    assert aud <= res.c0 + 1e-9
    for bump in (0.01, 0.1, 1.0):
        spec = op.ObjectiveSpec("exp", 2.0, res.c0 + bump)
        assert op.penalized_objective(spec, list(res.kappa)) < 0.0


def test_bisection_no_penalty_leak():
    for family in ("exp", "uniform"):
        res = op.bisection_optimal_arrival(family, 2.0)
        model = res.arrival_model()  # construction invariants hold
        rho = 1.0 / (2.0 * model.mean())
        assert rho < 1.0


def test_bisection_uniform_beats_exponential():
    uni = op.bisection_optimal_arrival("uniform", 2.0)
    exp = op.bisection_optimal_arrival("exp", 2.0)
    assert uni.c0 < exp.c0


def test_bisection_folded_normal_collapses_to_periodic():
    res = op.bisection_optimal_arrival("fnorm", 2.0)
    assert res.kappa[1] ** 2 <= 1e-5
    # sigma -> 0 turns the arrivals periodic, so the optimum must match the
    # deterministic-arrival curve minimized over its rate
    lam_star, aud_star = golden_section(
        lambda lam: qc.average_aud_dm1m(lam, 2.0), 1e-3, 2.0 - 1e-9
    )
    assert res.c0 == pytest.approx(aud_star, abs=1e-4)
    assert res.arrival_rate() == pytest.approx(lam_star, abs=1e-2)


def test_bisection_rejects_bad_input():
    with pytest.raises(InputError):
        op.bisection_optimal_arrival("weibull", 2.0)
    with pytest.raises(InputError):
        op.bisection_optimal_arrival("exp", 2.0, eps=0.0)
    with pytest.raises(InputError):
        op.bisection_optimal_arrival("exp", 2.0, upper=1e-6)  # infeasible bound


# --- offset search ----------------------------------------------------------------------


def test_optimize_offset_converges():
    res = op.optimize_offset(1.0, 2.0)
    assert abs(res.phi_residual) <= 1e-9
    assert 0.0 < res.delta < 1.0
    rho1 = qc.rho1_deterministic(0.5)
    assert res.delta == pytest.approx(-math.log(res.u1) / (2.0 * (1.0 - rho1)), rel=1e-12)
    # at least as good as the midpoint offset evaluated on the same curve
    assert qc.average_aud_dm1d_offset(1.0, 2.0, res.delta) <= qc.average_aud_dm1d_offset(
        1.0, 2.0, 0.5
    )


def test_optimize_offset_not_half_period():
    res = op.optimize_offset(1.0, 2.0)
    assert abs(res.delta - 0.5) > 1e-6


def test_optimize_offset_matches_grid_oracle():
    lam, mu = 1.0, 2.0
    res = op.optimize_offset(lam, mu)
    grid = np.linspace(0.0, 1.0 / lam, 10_002)[1:-1]
    vals = np.array([qc.average_aud_dm1d_offset(lam, mu, d) for d in grid])
    best = grid[int(np.argmin(vals))]
    assert abs(res.delta - best) <= grid[1] - grid[0]


def test_optimize_offset_local_minimum_certificate():
    for lam, mu in ((1.0, 2.0), (1.035, 2.0), (0.6, 1.5)):
        res = op.optimize_offset(lam, mu)
        h = 1e-4 / lam
        mid = qc.average_aud_dm1d_offset(lam, mu, res.delta)
        assert qc.average_aud_dm1d_offset(lam, mu, res.delta - h) >= mid
        assert qc.average_aud_dm1d_offset(lam, mu, res.delta + h) >= mid


def test_optimize_offset_rejects_bad_input():
    with pytest.raises(InputError):
        op.optimize_offset(2.0, 2.0)
    with pytest.raises(InputError):
        op.optimize_offset(1.0, 2.0, eps=-1.0)


def test_optimize_offset_iteration_budget():
    with pytest.raises(ConvergenceError):
        op.optimize_offset(1.0, 2.0, eps=1e-9, max_iter=3)
