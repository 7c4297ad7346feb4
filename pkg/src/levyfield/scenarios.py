"""Scenario definitions: problem bundles the solver and CLI consume.

A scenario packs basis, evolution family, noise laws, nonlinearities,
weight, Monte Carlo plan, and theorem constants.  Scenarios come from a
fixed library of forms keyed by ``kind``:

* ``heat_example``       -- the stochastic heat equation on (0, 1) with
  Dirichlet boundary, almost-periodic potential in the linear part, and
  two-term nonlinearities: a recurrent coefficient a_i * u * sin(1/(2 +
  cos t + cos(sqrt(2 or 3) t))) plus a ramp-gated term a_j * eta(t) *
  (cos u or sin u), with eta(t) = t on [0,1], 1 afterwards, 0 before 0.
  The jump action is pointwise multiplication of the mark field by the
  same two-term coefficient, in both jump regimes.  The weight is
  exp(-t); the declared constants are M = 1, delta = pi^2 - 1, c from
  the finite jump measure, and L = max(2a1^2+2a2^2, 2a3^2+2a4^2,
  2a5^2+2a6^2).
* ``ou_pilot``           -- one mode, family exp(-rate (t-s)), additive
  unit Wiener noise; stationary mean-square norm 1/(2 rate).
* ``linear_jump``        -- jumps only, mark-identity kernels, for
  compensated-integral isometry runs.
* ``deterministic_heat`` -- pure heat semigroup, no noise, no forcing.

Pointwise nonlinearities act pseudospectrally (evaluate on the
quadrature grid, apply, project back).  Scenario configs round-trip
losslessly through JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conditions import ConstantSet, LipschitzForm, empirical_lipschitz, lipschitz_from_amplitudes
from .ergodic import WeightFunction, validate_weight
from .evolution import (
    DiagonalDecayFamily,
    EvolutionFamily,
    HeatSemigroupFamily,
    PotentialHeatFamily,
    PotentialIntegralCache,
    estimate_dissipation,
)
from .noise import Atom, IntensityMeasure, RadialDensity, WienerSpec, build_intensity
from .solver import Nonlinearities
from .spectral import SineBasis

__all__ = [
    "MonteCarloPlan",
    "Scenario",
    "DecompositionSpec",
    "build_heat_example",
    "build_ou_pilot",
    "build_linear_jump",
    "build_deterministic_heat",
    "split_decomposition",
    "freeze_state",
    "validate",
    "scenario_to_config",
    "scenario_from_config",
    "save_scenario",
    "load_scenario",
]

TRUNCATION_TOL = 1e-8


@dataclass(frozen=True)
class MonteCarloPlan:
    n_paths: int = 1000
    dt: float = 0.01
    horizon: float = 5.0
    burn_in: float = 2.1
    root_seed: int = 12345


@dataclass
class Scenario:
    kind: str
    params: dict
    basis: SineBasis
    family: EvolutionFamily
    intensity: IntensityMeasure
    wiener: WienerSpec
    nonlinearities: Nonlinearities
    weight: WeightFunction
    mc: MonteCarloPlan
    constants: ConstantSet
    lipschitz_forms: list = field(default_factory=list)


@dataclass(frozen=True)
class DecompositionSpec:
    """Additive split of the nonlinearities into recurrent + ramp-gated."""

    automorphic_part: Nonlinearities
    pseudo_part: Nonlinearities


def ramp(t) -> float:
    """The gating ramp: 0 before 0, t on [0, 1], 1 afterwards."""
    return float(np.clip(t, 0.0, 1.0))


def recurrent_coefficient(t, irrational: float) -> float:
    """The almost-periodic coefficient sin(1/(2 + cos t + cos(q t)))."""
    return float(np.sin(1.0 / (2.0 + np.cos(t) + np.cos(irrational * t))))


_SQRT2 = float(np.sqrt(2.0))
_SQRT3 = float(np.sqrt(3.0))


def _heat_nonlinearities(a, basis: SineBasis, mean_small: np.ndarray) -> Nonlinearities:
    """Pseudospectral two-term nonlinearities with amplitudes a[0..5].

    Zero amplitudes are allowed here so decomposition parts can reuse the
    same construction; the closed-form constant applies the same formula.
    """
    a1, a2, a3, a4, a5, a6 = (float(x) for x in a)
    bound = max(
        2 * a1**2 + 2 * a2**2, 2 * a3**2 + 2 * a4**2, 2 * a5**2 + 2 * a6**2
    )
    mean_grid = basis.grid_values(mean_small)

    def drift(t, states):
        u = basis.grid_values(states)
        vals = a1 * u * recurrent_coefficient(t, _SQRT2) + a2 * ramp(t) * np.cos(u)
        return basis.project_values(vals)

    def wiener_factor(t, states):
        u = basis.grid_values(states)
        return a3 * u * recurrent_coefficient(t, _SQRT3) + a4 * ramp(t) * np.sin(u)

    def _jump_coefficient(t, states):
        u = basis.grid_values(states)
        return a5 * u * recurrent_coefficient(t, _SQRT2) + a6 * ramp(t) * np.sin(u)

    def jump_kernel(t, states, marks):
        return basis.project_values(_jump_coefficient(t, states) * basis.grid_values(marks))

    def small_jump_mean(t, states):
        return basis.project_values(_jump_coefficient(t, states) * mean_grid)

    return Nonlinearities(
        drift=drift,
        wiener_factor=wiener_factor,
        jump_small=jump_kernel,
        jump_large=jump_kernel,
        small_jump_mean=small_jump_mean,
        lipschitz_bound=bound,
    )


def _heat_intensity(n_modes, large_atom_mass, small_mass, small_mean_square) -> IntensityMeasure:
    direction = np.zeros(n_modes)
    direction[0] = 1.0
    components = []
    if large_atom_mass > 0:
        components.append(Atom(large_atom_mass, direction))
    if small_mass > 0:
        radius = float(np.sqrt(3.0 * small_mean_square / small_mass))
        if radius >= 1.0:
            raise ValueError("small marks would cross the unit radius")
        level = small_mass / radius
        components.append(
            RadialDensity(lambda r, lvl=level: lvl, 0.0, radius, direction=direction)
        )
    return build_intensity(components)


def build_heat_example(
    a=(0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
    mc: MonteCarloPlan | None = None,
    n_modes: int = 32,
    quadrature_points: int = 128,
    large_atom_mass: float = 0.3,
    small_mass: float = 0.7,
    small_mean_square: float = 0.1,
    wiener_mode_decay: float = 2.0,
    time_range=(-24.0, 24.0),
) -> Scenario:
    """The stochastic heat equation scenario with amplitudes a[0..5]."""
    a = tuple(float(x) for x in a)
    if len(a) != 6 or any(x <= 0 for x in a):
        raise ValueError("need six positive amplitudes")
    basis = SineBasis(n_modes, quadrature_points)
    cache = PotentialIntegralCache(t_min=time_range[0], t_max=time_range[1])
    family = PotentialHeatFamily(n_modes=n_modes, cache=cache)
    intensity = _heat_intensity(n_modes, large_atom_mass, small_mass, small_mean_square)
    eigenvalues = 1.0 / np.arange(1, n_modes + 1, dtype=float) ** wiener_mode_decay
    wiener = WienerSpec(eigenvalues)
    nl = _heat_nonlinearities(a, basis, intensity.mean_small)
    mc = mc or MonteCarloPlan()
    mc = replace(mc, burn_in=float(family.burn_in(TRUNCATION_TOL)))
    constants = ConstantSet(
        M=family.M, delta=family.delta, c=intensity.mass_large, L=nl.lipschitz_bound
    )
    params = {
        "a": list(a),
        "large_atom_mass": large_atom_mass,
        "small_mass": small_mass,
        "small_mean_square": small_mean_square,
        "wiener_mode_decay": wiener_mode_decay,
        "time_range": [float(time_range[0]), float(time_range[1])],
    }
    scn = Scenario(
        kind="heat_example",
        params=params,
        basis=basis,
        family=family,
        intensity=intensity,
        wiener=wiener,
        nonlinearities=nl,
        weight=WeightFunction.exp_decay(),
        mc=mc,
        constants=constants,
    )
    scn.lipschitz_forms = _heat_lipschitz_forms(scn)
    return scn


def _heat_lipschitz_forms(scn: Scenario) -> list:
    """The six inequality forms: drift, Wiener factor, both jump regimes,
    and the recurrent (ramp-free) parts of the jump kernels."""
    a = scn.params["a"]
    auto = _heat_nonlinearities(
        (a[0], 1e-12, a[2], 1e-12, a[4], 1e-12), scn.basis, scn.intensity.mean_small
    )
    nl = scn.nonlinearities
    return [
        LipschitzForm("drift", "state", nl.drift),
        LipschitzForm("wiener_factor", "wiener", nl.wiener_factor),
        LipschitzForm("jump_small", "jump_small", nl.jump_small),
        LipschitzForm("jump_small_recurrent", "jump_small", auto.jump_small),
        LipschitzForm("jump_large", "jump_large", nl.jump_large),
        LipschitzForm("jump_large_recurrent", "jump_large", auto.jump_large),
    ]


def build_ou_pilot(
    rate: float = 1.0, mc: MonteCarloPlan | None = None
) -> Scenario:
    """One-mode pilot: exponential decay family plus additive unit noise."""
    if rate <= 0:
        raise ValueError("decay rate must be positive")
    basis = SineBasis(1, 4)
    family = DiagonalDecayFamily(rates=np.array([rate]), kind="custom")
    mc = mc or MonteCarloPlan(n_paths=10000, dt=0.005, horizon=10.0)
    mc = replace(mc, burn_in=float(family.burn_in(TRUNCATION_TOL)))
    return Scenario(
        kind="ou_pilot",
        params={"rate": float(rate)},
        basis=basis,
        family=family,
        intensity=build_intensity([]),
        wiener=WienerSpec([1.0]),
        nonlinearities=Nonlinearities(),
        weight=WeightFunction.constant_one(),
        mc=mc,
        constants=ConstantSet(M=1.0, delta=rate, c=0.0, L=0.0),
    )


def build_linear_jump(
    rate: float = 1.0,
    mc: MonteCarloPlan | None = None,
    large_atom_mass: float = 0.3,
    large_atom_mark: float = 1.5,
    small_mass: float = 0.7,
    small_mean_square: float = 0.1,
) -> Scenario:
    """Scalar jump-driven scenario with mark-identity kernels.

    The state picks up each mark directly (F(t, Y, x) = x in both
    regimes), which makes the compensated-integral isometry exactly
    checkable against the measure moments.
    """
    basis = SineBasis(1, 4)
    family = DiagonalDecayFamily(rates=np.array([rate]), kind="custom")
    components = []
    if large_atom_mass > 0:
        components.append(Atom(large_atom_mass, np.array([large_atom_mark])))
    if small_mass > 0:
        radius = float(np.sqrt(3.0 * small_mean_square / small_mass))
        level = small_mass / radius
        components.append(RadialDensity(lambda r, lvl=level: lvl, 0.0, radius))
    intensity = build_intensity(components)
    mean_small = intensity.mean_small

    def identity_kernel(t, states, marks):
        return np.atleast_2d(marks)

    def small_jump_mean(t, states):
        return np.broadcast_to(mean_small, np.atleast_2d(states).shape)

    nl = Nonlinearities(
        jump_small=identity_kernel,
        jump_large=identity_kernel,
        small_jump_mean=small_jump_mean,
        lipschitz_bound=0.0,
    )
    mc = mc or MonteCarloPlan(n_paths=10000, dt=0.01, horizon=5.0)
    mc = replace(mc, burn_in=float(family.burn_in(TRUNCATION_TOL)))
    return Scenario(
        kind="linear_jump",
        params={
            "rate": float(rate),
            "large_atom_mass": large_atom_mass,
            "large_atom_mark": large_atom_mark,
            "small_mass": small_mass,
            "small_mean_square": small_mean_square,
        },
        basis=basis,
        family=family,
        intensity=intensity,
        wiener=WienerSpec([0.0]),
        nonlinearities=nl,
        weight=WeightFunction.constant_one(),
        mc=mc,
        constants=ConstantSet(M=1.0, delta=rate, c=intensity.mass_large, L=0.0),
    )


def build_deterministic_heat(
    mc: MonteCarloPlan | None = None, n_modes: int = 32, quadrature_points: int = 128
) -> Scenario:
    """Pure heat semigroup: no noise, no forcing."""
    basis = SineBasis(n_modes, quadrature_points)
    family = HeatSemigroupFamily(n_modes)
    mc = mc or MonteCarloPlan(n_paths=1, dt=1e-3, horizon=1.0)
    mc = replace(mc, burn_in=float(family.burn_in(TRUNCATION_TOL)))
    return Scenario(
        kind="deterministic_heat",
        params={},
        basis=basis,
        family=family,
        intensity=build_intensity([]),
        wiener=WienerSpec(np.zeros(1)),
        nonlinearities=Nonlinearities(),
        weight=WeightFunction.constant_one(),
        mc=mc,
        constants=ConstantSet(M=1.0, delta=family.delta, c=0.0, L=0.0),
    )


def split_decomposition(scn: Scenario) -> DecompositionSpec:
    """Split the heat-example nonlinearities into recurrent + ramp-gated.

    The recurrent part carries the a1/a3/a5 terms, the ramp-gated part
    the a2/a4/a6 terms; their pointwise sum reproduces the scenario
    nonlinearities (checked on random probes at build time).
    """
    if scn.kind != "heat_example":
        raise ValueError(f"no declared decomposition for scenario kind {scn.kind!r}")
    a = scn.params["a"]
    tiny = 1e-300  # amplitudes must stay positive; this one is numerically zero
    auto = _heat_nonlinearities(
        (a[0], tiny, a[2], tiny, a[4], tiny), scn.basis, scn.intensity.mean_small
    )
    pseudo = _heat_nonlinearities(
        (tiny, a[1], tiny, a[3], tiny, a[5]), scn.basis, scn.intensity.mean_small
    )
    _check_split(scn, auto, pseudo)
    return DecompositionSpec(automorphic_part=auto, pseudo_part=pseudo)


def _check_split(scn, auto, pseudo, n_probes=1000, tol=1e-10):
    rng = np.random.default_rng(7)
    times = rng.uniform(-5.0, 5.0, n_probes)
    states = rng.standard_normal((n_probes, scn.basis.n_modes))
    marks = scn.intensity.sampler_small(rng, n_probes)
    for t, u, m in zip(times[:32], states[:32], marks[:32]):
        u = u[None, :]
        m = m[None, :]
        whole = scn.nonlinearities
        for fn_whole, fn_a, fn_p, args in (
            (whole.drift, auto.drift, pseudo.drift, (t, u)),
            (whole.wiener_factor, auto.wiener_factor, pseudo.wiener_factor, (t, u)),
            (whole.jump_small, auto.jump_small, pseudo.jump_small, (t, u, m)),
        ):
            gap = np.abs(fn_whole(*args) - fn_a(*args) - fn_p(*args)).max()
            if gap > tol:
                raise AssertionError(f"decomposition parts do not sum to whole: gap {gap}")


def freeze_state(nl: Nonlinearities, ref_coeffs: np.ndarray) -> Nonlinearities:
    """Time-only nonlinearities: the originals evaluated at a fixed state.

    Turns a semilinear coefficient set into the linear forcing functions
    obtained by freezing the state argument at ``ref_coeffs``.
    """
    ref = np.atleast_2d(np.asarray(ref_coeffs, dtype=float))

    def _rows(n):
        return np.repeat(ref, n, axis=0)

    drift = None
    if nl.drift is not None:
        drift = lambda t, states: np.broadcast_to(
            nl.drift(t, ref), (np.atleast_2d(states).shape[0], ref.shape[1])
        )
    wiener_factor = None
    if nl.wiener_factor is not None:
        wiener_factor = lambda t, states: np.broadcast_to(
            nl.wiener_factor(t, ref),
            (np.atleast_2d(states).shape[0], nl.wiener_factor(t, ref).shape[1]),
        )
    jump_small = None
    small_jump_mean = None
    if nl.jump_small is not None:
        jump_small = lambda t, states, marks: nl.jump_small(
            t, _rows(np.atleast_2d(marks).shape[0]), marks
        )
        small_jump_mean = lambda t, states: np.broadcast_to(
            nl.small_jump_mean(t, ref), (np.atleast_2d(states).shape[0], ref.shape[1])
        )
    jump_large = None
    if nl.jump_large is not None:
        jump_large = lambda t, states, marks: nl.jump_large(
            t, _rows(np.atleast_2d(marks).shape[0]), marks
        )
    return Nonlinearities(
        drift=drift,
        wiener_factor=wiener_factor,
        jump_small=jump_small,
        jump_large=jump_large,
        small_jump_mean=small_jump_mean,
        lipschitz_bound=0.0,
    )


def validate(scn: Scenario) -> list[str]:
    """Run every scenario invariant; an empty list means clean."""
    problems = []
    mc = scn.mc
    if mc.dt <= 0:
        problems.append("nonpositive step")
    if mc.horizon < 10 * mc.dt:
        problems.append("horizon shorter than 10 steps")
    if mc.n_paths < 100 and scn.kind != "deterministic_heat":
        problems.append(f"n_paths={mc.n_paths} below the Monte Carlo floor of 100")
    if scn.basis.quadrature_points < 2 * scn.basis.n_modes:
        problems.append("quadrature grid below the anti-aliasing floor")

    cs = scn.constants
    if abs(cs.M - scn.family.M) > 1e-12 or abs(cs.delta - scn.family.delta) > 1e-9:
        problems.append("constants (M, delta) inconsistent with the family")
    if abs(cs.c - scn.intensity.mass_large) > 1e-9:
        problems.append("constant c inconsistent with the large-jump mass")

    problems.extend(validate_weight(scn.weight, (5.0, 10.0, 20.0)))

    if scn.lipschitz_forms:
        try:
            empirical_lipschitz(
                scn.lipschitz_forms,
                scn.basis,
                measure=scn.intensity,
                wiener=scn.wiener,
                declared_L=cs.L,
                n_pairs=512,
            )
        except AssertionError as exc:
            problems.append(str(exc))

    if mc.dt > 0 and scn.family.delta > 0:
        try:
            probes = [
                (s + g, s, np.eye(scn.basis.n_modes)[0])
                for g in np.geomspace(0.01, 5.0, 8)
                for s in (0.0, 1.7)
            ]
            estimate_dissipation(scn.family, probes)
        except (AssertionError, ValueError) as exc:
            problems.append(f"dissipation probe failed: {exc}")
    return problems


# -- config round trip -------------------------------------------------------

_BUILDERS = {
    "heat_example": lambda params, mc, basis: build_heat_example(
        a=params["a"],
        mc=mc,
        n_modes=basis["n_modes"],
        quadrature_points=basis["quadrature_points"],
        large_atom_mass=params["large_atom_mass"],
        small_mass=params["small_mass"],
        small_mean_square=params["small_mean_square"],
        wiener_mode_decay=params["wiener_mode_decay"],
        time_range=tuple(params["time_range"]),
    ),
    "ou_pilot": lambda params, mc, basis: build_ou_pilot(rate=params["rate"], mc=mc),
    "linear_jump": lambda params, mc, basis: build_linear_jump(
        rate=params["rate"],
        mc=mc,
        large_atom_mass=params["large_atom_mass"],
        large_atom_mark=params["large_atom_mark"],
        small_mass=params["small_mass"],
        small_mean_square=params["small_mean_square"],
    ),
    "deterministic_heat": lambda params, mc, basis: build_deterministic_heat(
        mc=mc, n_modes=basis["n_modes"], quadrature_points=basis["quadrature_points"]
    ),
}


def scenario_to_config(scn: Scenario) -> dict:
    return {
        "kind": scn.kind,
        "params": scn.params,
        "basis": {
            "n_modes": scn.basis.n_modes,
            "quadrature_points": scn.basis.quadrature_points,
        },
        "mc": {
            "n_paths": scn.mc.n_paths,
            "dt": scn.mc.dt,
            "horizon": scn.mc.horizon,
            "burn_in": scn.mc.burn_in,
            "root_seed": scn.mc.root_seed,
        },
    }


def scenario_from_config(config: dict) -> Scenario:
    kind = config.get("kind")
    if kind not in _BUILDERS:
        raise ValueError(f"unknown scenario kind {kind!r}")
    mc = MonteCarloPlan(**config["mc"])
    return _BUILDERS[kind](config.get("params", {}), mc, config.get("basis", {}))


def save_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_config(scn), indent=2, sort_keys=True) + "\n")


def load_scenario(path) -> Scenario:
    return scenario_from_config(json.loads(Path(path).read_text()))
