"""Blended-action policy gradient on a one-step linear-quadratic toy.

The policy samples ``a ~ N(theta, sigma^2)``, the environment executes
``u = a + c * beta`` and pays ``r(u) = -(u - g)^2``. The score-function
estimator uses the likelihood of ``a`` (never ``u``), so its expectation is
the exact gradient

    J(theta)      = -((theta + c*beta - g)^2 + sigma^2)
    dJ/dtheta     = -2 (theta + c*beta - g)

which makes the toy a closed-form oracle for the estimator.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BASELINES = ("none", "value")


@dataclass(frozen=True)
class LQToy:
    goal: float = 1.0
    beta: float = 0.0
    c: float = 0.0
    theta: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    def reward(self, u):
        return -((np.asarray(u) - self.goal) ** 2)

    def objective(self) -> float:
        return -((self.theta + self.c * self.beta - self.goal) ** 2 + self.sigma**2)


def closed_form_grad(toy: LQToy) -> float:
    return -2.0 * (toy.theta + toy.c * toy.beta - toy.goal)


def per_sample_gradients(toy: LQToy, eps, baseline: str = "none") -> np.ndarray:
    """Score-function terms for standard-normal draws ``eps`` (one per sample)."""
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}, got {baseline!r}")
    eps = np.asarray(eps, dtype=np.float64)
    a = toy.theta + toy.sigma * eps
    score = (a - toy.theta) / toy.sigma**2
    b = toy.objective() if baseline == "value" else 0.0
    return score * (toy.reward(a + toy.c * toy.beta) - b)


def mc_policy_gradient(toy: LQToy, n: int, baseline: str = "none",
                       rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Monte Carlo estimate of dJ/dtheta and its standard error."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    g = per_sample_gradients(toy, rng.standard_normal(n), baseline)
    stderr = float(np.std(g, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return float(np.mean(g)), stderr


@dataclass(frozen=True)
class VarianceRow:
    c: float
    mean: float
    variance: float
    closed_form: float


def variance_report(toy: LQToy, n: int, c_values, rng: np.random.Generator | None = None,
                    baseline: str = "none") -> list[VarianceRow]:
    """Per-sample estimator variance for each ``c``, all on the same draws."""
    if n < 1000:
        raise ValueError("variance_report needs n >= 1000")
    rng = rng if rng is not None else np.random.default_rng()
    eps = rng.standard_normal(n)
    rows = []
    for c in c_values:
        t = LQToy(toy.goal, toy.beta, float(c), toy.theta, toy.sigma)
        g = per_sample_gradients(t, eps, baseline)
        rows.append(VarianceRow(float(c), float(np.mean(g)), float(np.var(g, ddof=1)), closed_form_grad(t)))
    return rows


@dataclass(frozen=True)
class GridCell:
    theta: float
    c: float
    beta: float
    estimate: float
    stderr: float
    closed_form: float

    @property
    def z(self) -> float:
        return (self.estimate - self.closed_form) / self.stderr

    @property
    def within(self) -> bool:
        return abs(self.estimate - self.closed_form) < 4.0 * self.stderr


DEFAULT_THETAS = (-1.0, 0.0, 1.0)
DEFAULT_CS = (0.0, 0.5, 1.0)
DEFAULT_BETAS = (-1.0, 0.5, 2.0)


def unbiasedness_grid(n: int, rng: np.random.Generator, goal: float = 1.0, sigma: float = 1.0,
                      thetas=DEFAULT_THETAS, cs=DEFAULT_CS, betas=DEFAULT_BETAS,
                      baseline: str = "none") -> list[GridCell]:
    cells = []
    for theta, c, beta in itertools.product(thetas, cs, betas):
        toy = LQToy(goal, beta, c, theta, sigma)
        est, se = mc_policy_gradient(toy, n, baseline, rng)
        cells.append(GridCell(theta, c, beta, est, se, closed_form_grad(toy)))
    return cells


def write_grid_csv(cells: list[GridCell], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "c", "beta", "estimate", "stderr", "closed_form", "residual", "z", "within_4se"])
        for cell in cells:
            w.writerow([repr(cell.theta), repr(cell.c), repr(cell.beta), repr(cell.estimate), repr(cell.stderr),
                        repr(cell.closed_form), repr(cell.estimate - cell.closed_form), repr(cell.z),
                        int(cell.within)])


def write_variance_csv(rows: list[VarianceRow], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["c", "mean", "variance", "closed_form"])
        for r in rows:
            w.writerow([repr(r.c), repr(r.mean), repr(r.variance), repr(r.closed_form)])
