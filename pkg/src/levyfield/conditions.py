"""Closed-form hypothesis constants and empirical Lipschitz verification.

Every solvability and stability guarantee used by the solver reduces to
an inequality in four constants: the dissipation envelope (M, delta) of
the evolution family, the large-jump rate c, and a squared-norm Lipschitz
constant L of the nonlinearities (globally, or L_r on a ball of radius
r).  The checkers evaluate those inequalities exactly and report the
margin (rhs - lhs) / rhs; fixed-point rate tests ask for a margin of at
least 2x before asserting contraction.

The local checker shares the existence inequality shape with the global
one (same left-hand side with L_r in place of L), so one parametrized
evaluation serves both.  Note the local stability statement inherits its
hypothesis list from the global existence theorem while using the
ball-local constant; the formulas below follow the constants.

``empirical_lipschitz`` probes declared constants by sampling state
pairs: each structural form (drift, trace-weighted Wiener factor,
measure-integrated jump kernels) is tested on its own integral
inequality, and the max observed squared-norm ratio must stay within
slack of the declared constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .noise import IntensityMeasure, WienerSpec
from .spectral import SineBasis

__all__ = [
    "ConstantSet",
    "ConditionReport",
    "LipschitzForm",
    "check_existence",
    "check_global_stability",
    "check_local_stability",
    "lipschitz_from_amplitudes",
    "empirical_lipschitz",
]


@dataclass(frozen=True)
class ConstantSet:
    """Constants entering the solvability/stability inequalities."""

    M: float
    delta: float
    c: float
    L: float
    ball_r: float | None = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("dissipation prefactor M must be >= 1")
        if self.delta <= 0:
            raise ValueError("dissipation rate delta must be positive")
        if self.c < 0 or self.L < 0:
            raise ValueError("c and L must be nonnegative")


@dataclass(frozen=True)
class ConditionReport:
    name: str
    lhs: float
    rhs: float
    passed: bool
    margin: float
    r1_bound: float | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "pass": self.passed,
            "margin": self.margin,
            "r1_bound": self.r1_bound,
        }


def _report(name, lhs, rhs, r1_bound=None) -> ConditionReport:
    return ConditionReport(
        name=name,
        lhs=float(lhs),
        rhs=float(rhs),
        passed=bool(lhs < rhs),
        margin=float((rhs - lhs) / rhs),
        r1_bound=r1_bound,
    )


def check_existence(cs: ConstantSet) -> ConditionReport:
    """Fixed-point (existence/uniqueness) condition on the constants.

    lhs = (1 + 2c)/delta^2 + 2/delta must stay below 1/(4 M^2 L); the
    same inequality with the ball-local constant gates the local result.
    """
    if cs.L <= 0:
        return _report("existence", 0.0, np.inf)
    lhs = (1 + 2 * cs.c) / cs.delta**2 + 2 / cs.delta
    rhs = 1.0 / (4 * cs.M**2 * cs.L)
    name = "existence" if cs.ball_r is None else "existence_local"
    return _report(name, lhs, rhs)


def contraction_ratio(cs: ConstantSet) -> float:
    """Fixed-point contraction constant 4 M^2 L ((1+2c)/delta^2 + 2/delta)."""
    return 4 * cs.M**2 * cs.L * ((1 + 2 * cs.c) / cs.delta**2 + 2 / cs.delta)


def check_global_stability(cs: ConstantSet) -> ConditionReport:
    """Global exponential mean-square stability condition.

    lhs = 5 M^2 L (1+2c)/delta^2 + 10 M^2 L / delta must stay below 1.
    """
    lhs = 5 * cs.M**2 * cs.L * (1 + 2 * cs.c) / cs.delta**2 + 10 * cs.M**2 * cs.L / cs.delta
    return _report("stability_global", lhs, 1.0)


def check_local_stability(cs: ConstantSet) -> ConditionReport:
    """Local stability condition with the attraction-radius bound.

    Requires ball_r.  Passing mirrors the global-stability inequality
    with the ball-local constant; on pass the report carries

        r1_bound = min(r, r/(sqrt(5) M) * sqrt(1 - 5 M^2 L (2/delta + (1+2c)/delta^2)))

    and a negative square-root argument is a structured failure with no
    bound.
    """
    if cs.ball_r is None:
        raise ValueError("local stability check requires ball_r")
    lhs = 5 * cs.M**2 * cs.L * (1 + 2 * cs.c) / cs.delta**2 + 10 * cs.M**2 * cs.L / cs.delta
    disc = 1.0 - 5 * cs.M**2 * cs.L * (2 / cs.delta + (1 + 2 * cs.c) / cs.delta**2)
    if disc <= 0:
        return ConditionReport(
            name="stability_local", lhs=float(lhs), rhs=1.0, passed=False,
            margin=float(1.0 - lhs), r1_bound=None,
        )
    r1 = min(cs.ball_r, cs.ball_r / (np.sqrt(5) * cs.M) * np.sqrt(disc))
    return _report("stability_local", lhs, 1.0, r1_bound=float(r1))


def lipschitz_from_amplitudes(a) -> float:
    """Squared-norm Lipschitz constant of the heat-example nonlinearities.

    For amplitudes (a1..a6) of the three two-term coefficients the
    constant is max(2 a1^2 + 2 a2^2, 2 a3^2 + 2 a4^2, 2 a5^2 + 2 a6^2).
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (6,) or np.any(a <= 0):
        raise ValueError("need six positive amplitudes")
    return float(
        max(
            2 * a[0] ** 2 + 2 * a[1] ** 2,
            2 * a[2] ** 2 + 2 * a[3] ** 2,
            2 * a[4] ** 2 + 2 * a[5] ** 2,
        )
    )


@dataclass(frozen=True)
class LipschitzForm:
    """One integral inequality form to probe empirically.

    kind "state":      fn(t, states) -> coefficient arrays; plain ratio
                       of squared norms.
    kind "wiener":     fn(t, states) -> grid multiplier; ratio of the
                       trace-weighted injected variance rate.
    kind "jump_small"/"jump_large": fn(t, states, marks) -> coefficient
                       arrays; ratio of the measure-integrated squared
                       difference (Monte Carlo over frozen mark samples
                       scaled by the regime mass).
    """

    label: str
    kind: str
    fn: Callable


def empirical_lipschitz(
    forms,
    basis: SineBasis,
    measure: IntensityMeasure | None = None,
    wiener: WienerSpec | None = None,
    declared_L: float | None = None,
    n_pairs: int = 1024,
    n_times: int = 16,
    n_mark_samples: int = 64,
    ball_radius: float = 1.0,
    time_range: tuple = (-12.0, 12.0),
    seed: int = 2024,
    slack: float = 0.05,
):
    """Max observed squared-norm ratio across all declared forms.

    Draws random state pairs in a coefficient ball and random times, and
    evaluates each form's own inequality.  With ``declared_L`` given,
    raises when the max ratio exceeds declared_L * (1 + slack), naming
    the violating form.

    Returns (max_ratio, per_form_ratios).
    """
    rng = np.random.default_rng(seed)
    per_form = {}
    pairs_per_time = max(4, n_pairs // n_times)
    nu_small = nu_large = None
    if measure is not None:
        if measure.mass_small > 0:
            nu_small = measure.sampler_small(rng, n_mark_samples)
        if measure.mass_large > 0:
            nu_large = measure.sampler_large(rng, n_mark_samples)

    for form in forms:
        worst = 0.0
        for _ in range(n_times):
            t = float(rng.uniform(*time_range))
            y = rng.standard_normal((pairs_per_time, basis.n_modes))
            y *= ball_radius * rng.uniform(0, 1, (pairs_per_time, 1)) / np.linalg.norm(
                y, axis=1, keepdims=True
            )
            z = rng.standard_normal((pairs_per_time, basis.n_modes))
            z *= ball_radius * rng.uniform(0, 1, (pairs_per_time, 1)) / np.linalg.norm(
                z, axis=1, keepdims=True
            )
            denom = np.sum((y - z) ** 2, axis=1)
            keep = denom > 1e-20
            if not keep.any():
                continue
            y, z, denom = y[keep], z[keep], denom[keep]
            if form.kind == "state":
                num = np.sum((form.fn(t, y) - form.fn(t, z)) ** 2, axis=1)
            elif form.kind == "wiener":
                if wiener is None:
                    raise ValueError("wiener form needs a WienerSpec")
                gdiff = form.fn(t, y) - form.fn(t, z)  # (m, n_quad)
                k = wiener.eigenvalues.size
                modes = basis.eval_matrix[:, :k].T  # (k, n_quad)
                prod = gdiff[:, None, :] * modes[None, :, :]
                coeffs = prod @ basis.proj_matrix  # (m, k, n_modes)
                num = np.einsum("mkn,k->m", coeffs**2, wiener.eigenvalues)
            elif form.kind in ("jump_small", "jump_large"):
                marks = nu_small if form.kind == "jump_small" else nu_large
                mass = measure.mass_small if form.kind == "jump_small" else measure.mass_large
                if marks is None or mass == 0:
                    continue
                m = y.shape[0]
                ns = marks.shape[0]
                y_rep = np.repeat(y, ns, axis=0)
                z_rep = np.repeat(z, ns, axis=0)
                marks_rep = np.tile(marks, (m, 1))
                diff = form.fn(t, y_rep, marks_rep) - form.fn(t, z_rep, marks_rep)
                per_mark = np.sum(diff**2, axis=1).reshape(m, ns)
                num = per_mark.mean(axis=1) * mass
            else:
                raise ValueError(f"unknown form kind {form.kind!r}")
            worst = max(worst, float((num / denom).max()))
        per_form[form.label] = worst

    max_ratio = max(per_form.values()) if per_form else 0.0
    if declared_L is not None and max_ratio > declared_L * (1 + slack):
        offender = max(per_form, key=per_form.get)
        raise AssertionError(
            f"form {offender!r} exceeds declared Lipschitz constant: "
            f"observed {per_form[offender]:.6g} > {declared_L} * (1 + {slack})"
        )
    return max_ratio, per_form
