"""Weighted time-average diagnostics for squared-norm sample paths.

Membership of a process in the weighted ergodic null class means its
rho-weighted mean-square time average over [-r, r] vanishes as r grows.
A limit is not decidable from finite data, so these diagnostics replace
it with trend tests over a doubling radius grid, plus the finite-radius
level-set inequalities that characterize the class: for samples bounded
by B and any eps > 0,

    average >= eps * levelset_fraction
    average <= B * levelset_fraction + eps

with the level set {t in [-r, r] : value(t) >= eps}.  Both inequalities
hold exactly for the discrete quadrature used here (identical weights on
both sides), so violations always indicate a real defect.

Shift-compare diagnostics report sup differences between shifted and
reference sample paths on finite grids.  They are descriptive only: the
underlying recurrence notions quantify over all real sequences and admit
no finite decision procedure, so no verdict is attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "WeightFunction",
    "ErgodicReport",
    "LevelsetCheck",
    "weighted_average",
    "levelset_fraction",
    "check_levelset_bounds",
    "shift_compare",
    "compute_ergodic_report",
    "validate_weight",
    "trend_verdict",
]

DECAY_FACTOR = 0.7  # per radius doubling, past the settling radius
SETTLE_RADIUS = 10.0


@dataclass(frozen=True)
class WeightFunction:
    """Positive locally integrable weight on the time axis."""

    eval: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"

    @staticmethod
    def constant_one() -> "WeightFunction":
        return WeightFunction(eval=lambda t: np.ones_like(np.asarray(t, dtype=float)), kind="constant_one")

    @staticmethod
    def exp_decay() -> "WeightFunction":
        return WeightFunction(eval=lambda t: np.exp(-np.asarray(t, dtype=float)), kind="exp_decay")


def _window(times, values, weight, r):
    """Samples and trapezoid x weight masses restricted to [-r, r]."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    dt = np.diff(times).max()
    if times[0] > -r + dt + 1e-12 or times[-1] < r - dt - 1e-12:
        raise ValueError(f"samples do not cover [-{r}, {r}]")
    mask = (times >= -r - 1e-12) & (times <= r + 1e-12)
    t = times[mask]
    v = values[mask]
    w = np.empty_like(t)
    w[1:-1] = 0.5 * (t[2:] - t[:-2])
    w[0] = 0.5 * (t[1] - t[0])
    w[-1] = 0.5 * (t[-1] - t[-2])
    rho = np.asarray(weight.eval(t), dtype=float)
    if np.any(rho <= 0):
        raise ValueError("weight must be positive on the sampled grid")
    return t, v, w * rho


def weighted_average(times, values, weight: WeightFunction, r: float) -> float:
    """Weighted time average of the samples over [-r, r].

    Numerator and normalizing mass use the same quadrature weights, so a
    constant sample path averages to that constant for every radius.
    """
    _, v, wr = _window(times, values, weight, r)
    return float(np.dot(wr, v) / wr.sum())


def weight_mass(times, weight: WeightFunction, r: float) -> float:
    """Quadrature value of the weight mass over [-r, r]."""
    _, _, wr = _window(times, np.zeros_like(times), weight, r)
    return float(wr.sum())


def levelset_fraction(times, values, weight: WeightFunction, r: float, eps: float) -> float:
    """Weighted measure fraction of {t in [-r,r] : value >= eps}."""
    _, v, wr = _window(times, values, weight, r)
    return float(np.dot(wr, (v >= eps).astype(float)) / wr.sum())


@dataclass(frozen=True)
class LevelsetCheck:
    r: float
    eps: float
    average: float
    fraction: float
    lower_ok: bool
    upper_ok: bool


def check_levelset_bounds(
    times, values, weight: WeightFunction, r_grid, eps_grid, bound: float
) -> list[LevelsetCheck]:
    """Verify the level-set inequality pair on an (r, eps) grid.

    ``bound`` must dominate every sample.  Raises on the first violated
    inequality, naming the offending (r, eps) pair.
    """
    values = np.asarray(values, dtype=float)
    if values.max(initial=0.0) > bound + 1e-12:
        raise ValueError("samples exceed the declared bound")
    out = []
    for r in r_grid:
        for eps in eps_grid:
            avg = weighted_average(times, values, weight, r)
            frac = levelset_fraction(times, values, weight, r, eps)
            lower = avg >= eps * frac - 1e-12
            upper = avg <= bound * frac + eps + 1e-12
            out.append(LevelsetCheck(r, eps, avg, frac, lower, upper))
            if not (lower and upper):
                raise AssertionError(
                    f"level-set inequality violated at (r={r}, eps={eps}): "
                    f"average={avg}, fraction={frac}, bound={bound}"
                )
    return out


def shift_compare(times, values, shifts, reference=None) -> list[tuple]:
    """Sup difference between shifted samples and a reference, per shift.

    Interpolates value(t + s) on the overlap with the reference grid and
    reports sup_t |value(t+s) - reference(t)|.  Diagnostic table only; no
    verdict is attached.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    ref = values if reference is None else np.asarray(reference, dtype=float)
    rows = []
    for s in shifts:
        lo = max(times[0], times[0] - s)
        hi = min(times[-1], times[-1] - s)
        if hi <= lo:
            raise ValueError(f"shift {s} leaves no overlap with the sample window")
        mask = (times >= lo) & (times <= hi)
        shifted = np.interp(times[mask] + s, times, values)
        rows.append((float(s), float(np.abs(shifted - ref[mask]).max())))
    return rows


def trend_verdict(r_grid, averages) -> str:
    """Classify the average sequence along the doubling radius grid.

    "decaying" means every doubling past the settling radius shrinks the
    average by at least the decay factor; "growing" means the last
    average exceeds the first beyond slack; otherwise "flat".
    """
    r_grid = np.asarray(r_grid, dtype=float)
    averages = np.asarray(averages, dtype=float)
    judged = [
        (a_prev, a_next)
        for r_prev, a_prev, a_next in zip(r_grid[:-1], averages[:-1], averages[1:])
        if r_prev >= SETTLE_RADIUS - 1e-12
    ]
    if judged and all(a_next <= DECAY_FACTOR * a_prev + 1e-300 for a_prev, a_next in judged):
        return "decaying"
    if averages[-1] > 1.05 * averages[0]:
        return "growing"
    return "flat"


@dataclass
class ErgodicReport:
    """Weighted-average statistics of a sampled squared-norm path."""

    r_grid: np.ndarray
    averages: np.ndarray
    stderrs: np.ndarray
    fractions: dict  # eps -> array over r_grid
    verdict_trend: str


def compute_ergodic_report(
    times,
    values,
    weight: WeightFunction,
    r_grid,
    eps_grid=(),
    stderr=None,
) -> ErgodicReport:
    """Averages, propagated standard errors, level-set fractions, trend.

    ``stderr`` carries per-time Monte Carlo standard errors of the
    values; propagation treats times as independent, which overstates
    precision for autocorrelated trajectories and is reported as-is.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    averages = np.array([weighted_average(times, values, weight, r) for r in r_grid])
    if averages.min(initial=0.0) < 0:
        raise ValueError("squared-norm averages must be nonnegative")
    if stderr is None:
        stderrs = np.zeros_like(averages)
    else:
        stderr = np.asarray(stderr, dtype=float)
        stderrs = np.empty_like(averages)
        for i, r in enumerate(r_grid):
            _, se_w, wr = _window(times, stderr, weight, r)
            stderrs[i] = np.sqrt(np.sum((wr * se_w) ** 2)) / wr.sum()
    fractions = {
        float(eps): np.array(
            [levelset_fraction(times, values, weight, r, eps) for r in r_grid]
        )
        for eps in eps_grid
    }
    return ErgodicReport(
        r_grid=r_grid,
        averages=averages,
        stderrs=stderrs,
        fractions=fractions,
        verdict_trend=trend_verdict(r_grid, averages),
    )


def validate_weight(weight: WeightFunction, r_grid) -> list[str]:
    """Positivity on the sampled grid and unbounded growth of the mass.

    The mass must grow without plateau along the doubling radius grid; a
    plateau is evidence the weight is not admissible.
    """
    problems = []
    r_grid = sorted(float(r) for r in r_grid)
    probe = np.linspace(-r_grid[-1], r_grid[-1], 4097)
    rho = np.asarray(weight.eval(probe), dtype=float)
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        problems.append("weight not positive and finite on the probe grid")
        return problems
    masses = []
    for r in r_grid:
        grid = np.linspace(-r, r, 8193)
        rr = np.asarray(weight.eval(grid), dtype=float)
        masses.append(np.trapezoid(rr, grid))
    for r_prev, r_next, m_prev, m_next in zip(r_grid[:-1], r_grid[1:], masses[:-1], masses[1:]):
        if m_next <= m_prev * (1 + 1e-9):
            problems.append(
                f"weight mass plateaus between r={r_prev} and r={r_next}: "
                f"{m_prev} -> {m_next}"
            )
    return problems
