import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apex_rl.gradcheck import (
    LQToy, closed_form_grad, mc_policy_gradient, per_sample_gradients, unbiasedness_grid, variance_report,
    write_grid_csv, write_variance_csv,
)


def analytic_variance(toy, baseline):
    # Gaussian moments E[e^2]=1, E[e^4]=3, E[e^6]=15 applied to the per-sample term
    d, s = toy.theta + toy.c * toy.beta - toy.goal, toy.sigma
    if baseline == "none":
        return d**4 / s**2 + 14 * d**2 + 15 * s**2
    return 8 * d**2 + 10 * s**2


@pytest.mark.parametrize("toy,grad", [
    (LQToy(goal=1.0, beta=0.0, c=0.0, theta=0.5), 1.0),
    (LQToy(goal=1.0, beta=1.0, c=1.0, theta=0.0), 0.0),
    (LQToy(goal=1.0, beta=0.0, c=0.0, theta=0.0), 2.0),
])
def test_closed_form_examples(toy, grad):
    assert closed_form_grad(toy) == grad


def test_closed_form_matches_objective_slope():
    toy = LQToy(goal=0.3, beta=-1.2, c=0.7, theta=0.4, sigma=0.8)
    h = 1e-6
    up = LQToy(toy.goal, toy.beta, toy.c, toy.theta + h, toy.sigma).objective()
    dn = LQToy(toy.goal, toy.beta, toy.c, toy.theta - h, toy.sigma).objective()
    assert (up - dn) / (2 * h) == pytest.approx(closed_form_grad(toy), abs=1e-8)


def test_mc_estimate_example():
    est, se = mc_policy_gradient(LQToy(theta=0.5), 100_000, rng=np.random.default_rng(0))
    assert abs(est - 1.0) < 4 * se


def test_mc_within_four_se_with_prior():
    toy = LQToy(goal=1.0, beta=1.0, c=1.0, theta=0.0)
    est, se = mc_policy_gradient(toy, 100_000, rng=np.random.default_rng(1))
    assert abs(est) < 4 * se


def test_prior_off_equals_vanilla_reinforce():
    eps = np.random.default_rng(2).standard_normal(1000)
    vanilla = per_sample_gradients(LQToy(theta=0.3), eps)
    assert np.array_equal(per_sample_gradients(LQToy(theta=0.3, beta=0.0, c=0.7), eps), vanilla)
    assert np.array_equal(per_sample_gradients(LQToy(theta=0.3, beta=2.0, c=0.0), eps), vanilla)


@pytest.mark.parametrize("baseline", ["none", "value"])
@pytest.mark.parametrize("theta,c,beta", [(0.0, 0.0, 1.0), (0.0, 1.0, 1.0), (1.0, 0.5, -1.0)])
def test_empirical_variance_matches_gaussian_moments(baseline, theta, c, beta):
    toy = LQToy(goal=1.0, beta=beta, c=c, theta=theta)
    g = per_sample_gradients(toy, np.random.default_rng(3).standard_normal(400_000), baseline)
    assert np.var(g, ddof=1) == pytest.approx(analytic_variance(toy, baseline), rel=0.08)


@settings(max_examples=30, deadline=None)
@given(b_shift=st.floats(-5, 5), theta=st.floats(-1, 1), seed=st.integers(0, 2**31))
def test_baseline_does_not_move_mean(b_shift, theta, seed):
    toy = LQToy(theta=theta, beta=0.5, c=0.5)
    eps = np.random.default_rng(seed).standard_normal(20_000)
    plain = per_sample_gradients(toy, eps)
    shifted = plain - eps / toy.sigma * b_shift  # any constant baseline b
    se = np.sqrt(np.var(plain, ddof=1) / eps.size + np.var(shifted, ddof=1) / eps.size)
    assert abs(plain.mean() - shifted.mean()) < 4 * se


def test_value_baseline_agrees_in_mean():
    toy = LQToy(theta=-0.5, beta=2.0, c=0.5)
    a, sa = mc_policy_gradient(toy, 100_000, "none", np.random.default_rng(4))
    b, sb = mc_policy_gradient(toy, 100_000, "value", np.random.default_rng(5))
    assert abs(a - b) < 4 * np.hypot(sa, sb)


def test_unknown_baseline():
    with pytest.raises(ValueError):
        per_sample_gradients(LQToy(), [0.0], "critic")


def test_sigma_must_be_positive():
    with pytest.raises(ValueError):
        LQToy(sigma=0.0)


def test_variance_report_basics():
    rows = variance_report(LQToy(goal=1.0, beta=1.0), 10_000, [0.0, 0.5, 1.0], np.random.default_rng(6))
    assert [r.c for r in rows] == [0.0, 0.5, 1.0]
    assert all(r.variance > 0 for r in rows)
    assert rows[2].variance < rows[0].variance
    with pytest.raises(ValueError):
        variance_report(LQToy(), 999, [0.0])


def test_variance_independent_of_c_without_prior():
    rows = variance_report(LQToy(beta=0.0), 5_000, [0.0, 0.3, 1.0], np.random.default_rng(7))
    assert rows[0].variance == rows[1].variance == rows[2].variance


def test_unbiasedness_grid_small():
    cells = unbiasedness_grid(20_000, np.random.default_rng(8))
    assert len(cells) == 27
    assert sum(c.within for c in cells) >= 26
    assert {(c.theta, c.c, c.beta) for c in cells} == {
        (t, c, b) for t in (-1.0, 0.0, 1.0) for c in (0.0, 0.5, 1.0) for b in (-1.0, 0.5, 2.0)
    }


def test_csv_outputs(tmp_path):
    cells = unbiasedness_grid(2_000, np.random.default_rng(9), thetas=(0.0,), cs=(0.0, 1.0), betas=(1.0,))
    write_grid_csv(cells, tmp_path / "g.csv")
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert len(rows) == 2
    assert float(rows[1]["closed_form"]) == 0.0
    assert float(rows[0]["residual"]) == cells[0].estimate - cells[0].closed_form

    vr = variance_report(LQToy(beta=1.0), 1000, [0.0, 1.0], np.random.default_rng(10))
    write_variance_csv(vr, tmp_path / "v.csv")
    rows = list(csv.DictReader(open(tmp_path / "v.csv")))
    assert [float(r["c"]) for r in rows] == [0.0, 1.0]
    assert float(rows[0]["variance"]) == vr[0].variance
