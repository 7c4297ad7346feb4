"""Stochastic drivers: Q-Wiener increments and Poisson jump streams.

A two-sided Levy driver decomposes into a trace-class Wiener part, a
compensated small-jump part (marks with |x| < 1), and a finite-rate
large-jump part (marks with |x| >= 1).  This module builds the jump-size
intensity measure from atom/density descriptions, samples noise paths on a
time grid, and extends one-sided paths to a two-sided axis.

Small jumps are simulated as a finite-activity compound Poisson stream;
the compensator subtraction happens in the integrator, not here.  Marks
are vectors (coefficient vectors of the spectral state space, or scalars
for pilot models).

Path generation is pure given (spec, seed): one root seed per path is
split deterministically into Wiener / small-jump / large-jump substreams,
so paths are reproducible and the three components are independent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "Atom",
    "RadialDensity",
    "IntensityMeasure",
    "WienerSpec",
    "JumpEvent",
    "NoisePath",
    "build_intensity",
    "sample_noise_path",
    "two_sided_extend",
    "jump_sum",
]

_UNIT_RADIUS = 1.0  # small/large split at |mark| = 1


@dataclass(frozen=True)
class Atom:
    """Point mass of the intensity measure at a fixed mark."""

    mass: float
    mark: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mark", np.atleast_1d(np.asarray(self.mark, dtype=float)))
        if not np.isfinite(self.mass) or self.mass < 0:
            raise ValueError("atom mass must be finite and nonnegative")


@dataclass(frozen=True)
class RadialDensity:
    """Scalar density on a bounded interval of radii.

    Marks are ``r * direction`` for radii r drawn from the density; with
    ``direction=None`` the marks are scalars (one-dimensional mark space).
    The direction must be a unit vector so that |mark| = |r| and the
    small/large split stays a split in r.
    """

    density: Callable[[float], float]
    lo: float
    hi: float
    direction: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError("density support must be a bounded interval lo < hi")
        if self.direction is not None:
            d = np.atleast_1d(np.asarray(self.direction, dtype=float))
            if not np.isclose(np.linalg.norm(d), 1.0, atol=1e-12):
                raise ValueError("direction must be a unit vector")
            object.__setattr__(self, "direction", d)


def _quad_strict(f, lo, hi, what):
    """Definite integral that rejects divergence instead of warning."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, lo, hi, limit=200)
        except integrate.IntegrationWarning as exc:
            raise ValueError(f"{what} does not converge on ({lo}, {hi}): {exc}") from exc
    if not np.isfinite(val):
        raise ValueError(f"{what} is not finite on ({lo}, {hi})")
    return val


class _DensityTable:
    """Inverse-CDF sampler for one radial density restricted to [lo, hi]."""

    def __init__(self, density, lo, hi, n_panels=2048):
        edges = np.linspace(lo, hi, n_panels + 1)
        panel = np.empty(n_panels)
        for i in range(n_panels):
            panel[i] = integrate.quad(density, edges[i], edges[i + 1], limit=100)[0]
        cdf = np.concatenate([[0.0], np.cumsum(panel)])
        self.mass = cdf[-1]
        if self.mass <= 0:
            raise ValueError("density has zero mass on its support")
        self.edges = edges
        self.cdf = cdf / self.mass

    def draw(self, rng, n):
        u = rng.uniform(0.0, 1.0, size=n)
        return np.interp(u, self.cdf, self.edges)


@dataclass(frozen=True)
class IntensityMeasure:
    """Jump-size law split at the unit radius.

    ``sampler_small`` / ``sampler_large`` draw normalized marks from the
    measure restricted to {0 < |x| < 1} resp. {|x| >= 1}; the masses are
    the total rates of the two regimes, and ``second_moment_small`` is the
    discretized finiteness witness for the square-integrability of small
    marks.  ``mean_small`` is the vector first moment of the small regime
    (the compensator of a mark-linear integrand per unit time).
    """

    sampler_small: Callable[[np.random.Generator, int], np.ndarray]
    mass_small: float
    sampler_large: Callable[[np.random.Generator, int], np.ndarray]
    mass_large: float
    second_moment_small: float
    mean_small: np.ndarray
    mean_large: np.ndarray
    second_moment_large: float
    mark_dim: int

    def __post_init__(self):
        for name in ("mass_small", "mass_large", "second_moment_small"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    @property
    def large_rate(self) -> float:
        """Rate c of the large-jump Poisson stream."""
        return self.mass_large


@dataclass(frozen=True)
class WienerSpec:
    """Spectrum of the trace-class covariance of the Wiener part."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        if np.any(ev < 0) or not np.all(np.isfinite(ev)):
            raise ValueError("eigenvalues must be finite and nonnegative")
        if np.any(np.diff(ev) > 1e-12):
            raise ValueError("eigenvalues must be nonincreasing")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: np.ndarray
    regime: str  # "small" or "large"

    def __post_init__(self):
        if self.regime not in ("small", "large"):
            raise ValueError(f"unknown regime {self.regime!r}")
        m = np.atleast_1d(np.asarray(self.mark, dtype=float))
        object.__setattr__(self, "mark", m)
        radius = float(np.linalg.norm(m))
        if self.regime == "large" and radius < _UNIT_RADIUS - 1e-12:
            raise ValueError(f"large-regime mark with |mark|={radius} < 1")
        if self.regime == "small" and radius >= _UNIT_RADIUS + 1e-12:
            raise ValueError(f"small-regime mark with |mark|={radius} >= 1")


@dataclass(frozen=True)
class NoisePath:
    """One realization of the driver on a time grid.

    ``wiener_increments[k]`` is the coefficient vector of the Wiener
    increment over (grid[k], grid[k+1]); jumps are time ordered.
    """

    grid: np.ndarray
    wiener_increments: np.ndarray
    jumps: tuple[JumpEvent, ...]
    seed: int

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        w = np.asarray(self.wiener_increments, dtype=float)
        if g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing with >= 2 stamps")
        if w.shape[0] != g.size - 1:
            raise ValueError("one Wiener increment per grid step required")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "wiener_increments", w)
        object.__setattr__(self, "jumps", tuple(self.jumps))


def build_intensity(components: Sequence[Atom | RadialDensity]) -> IntensityMeasure:
    """Assemble an intensity measure from atoms and bounded radial densities.

    Masses and moments are computed by quadrature or directly from atoms;
    a density straddling the unit radius is split there.  Rejects
    non-integrable second moments and infinite large mass.
    """
    mark_dim = None

    def _check_dim(d):
        nonlocal mark_dim
        if mark_dim is None:
            mark_dim = d
        elif mark_dim != d:
            raise ValueError(f"inconsistent mark dimensions {mark_dim} vs {d}")

    # (mass, table-or-atom) per regime; moments accumulated alongside
    small_parts, large_parts = [], []
    mass_small = mass_large = 0.0
    m2_small = m2_large = 0.0
    mean_small_acc = None
    mean_large_acc = None

    def _add_mean(acc, vec):
        return vec.copy() if acc is None else acc + vec

    for comp in components:
        if isinstance(comp, Atom):
            _check_dim(comp.mark.size)
            radius = float(np.linalg.norm(comp.mark))
            if radius < _UNIT_RADIUS:
                mass_small += comp.mass
                m2_small += comp.mass * radius**2
                mean_small_acc = _add_mean(mean_small_acc, comp.mass * comp.mark)
                small_parts.append((comp.mass, comp))
            else:
                mass_large += comp.mass
                m2_large += comp.mass * radius**2
                mean_large_acc = _add_mean(mean_large_acc, comp.mass * comp.mark)
                large_parts.append((comp.mass, comp))
        elif isinstance(comp, RadialDensity):
            dim = 1 if comp.direction is None else comp.direction.size
            _check_dim(dim)
            direction = np.ones(1) if comp.direction is None else comp.direction
            # split the radial support at |r| = 1
            pieces = []
            lo, hi = comp.lo, comp.hi
            cuts = sorted({lo, hi} | {c for c in (-1.0, 1.0) if lo < c < hi})
            for a, b in zip(cuts[:-1], cuts[1:]):
                small = abs(0.5 * (a + b)) < _UNIT_RADIUS
                pieces.append((a, b, small))
            for a, b, small in pieces:
                regime = "small" if small else "large"
                mass = _quad_strict(comp.density, a, b, f"{regime}-regime mass")
                if mass <= 0:
                    continue
                m1 = _quad_strict(lambda r: r * comp.density(r), a, b, "first moment")
                m2 = _quad_strict(lambda r: r * r * comp.density(r), a, b, "second moment")
                table = _DensityTable(comp.density, a, b)
                entry = (mass, (table, direction))
                if small:
                    mass_small += mass
                    m2_small += m2
                    mean_small_acc = _add_mean(mean_small_acc, m1 * direction)
                    small_parts.append(entry)
                else:
                    mass_large += mass
                    m2_large += m2
                    mean_large_acc = _add_mean(mean_large_acc, m1 * direction)
                    large_parts.append(entry)
        else:
            raise TypeError(f"unknown component {comp!r}")

    if mark_dim is None:
        mark_dim = 1
    if not np.isfinite(mass_large):
        raise ValueError("large-jump mass is infinite")
    if not np.isfinite(m2_small):
        raise ValueError("small-jump second moment is infinite")

    zero = np.zeros(mark_dim)
    mean_small = zero if mean_small_acc is None else mean_small_acc
    mean_large = zero if mean_large_acc is None else mean_large_acc

    def _mixture_sampler(parts, total_mass):
        masses = np.array([m for m, _ in parts]) if parts else np.zeros(0)

        def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
            if n == 0 or total_mass == 0:
                return np.zeros((n, mark_dim))
            choice = rng.choice(len(parts), size=n, p=masses / masses.sum())
            out = np.empty((n, mark_dim))
            for idx, (_, payload) in enumerate(parts):
                rows = np.nonzero(choice == idx)[0]
                if rows.size == 0:
                    continue
                if isinstance(payload, Atom):
                    out[rows] = payload.mark
                else:
                    table, direction = payload
                    radii = table.draw(rng, rows.size)
                    out[rows] = np.outer(radii, direction)
            return out

        return sampler

    return IntensityMeasure(
        sampler_small=_mixture_sampler(small_parts, mass_small),
        mass_small=mass_small,
        sampler_large=_mixture_sampler(large_parts, mass_large),
        mass_large=mass_large,
        second_moment_small=m2_small,
        mean_small=mean_small,
        mean_large=mean_large,
        second_moment_large=m2_large,
        mark_dim=mark_dim,
    )


def path_seeds(root_seed: int, n_paths: int) -> np.ndarray:
    """Deterministic per-path seeds derived from one root seed."""
    return np.random.SeedSequence(root_seed).generate_state(n_paths, dtype=np.uint64)


def sample_noise_path(
    measure: IntensityMeasure,
    wiener: WienerSpec,
    grid: np.ndarray,
    seed: int,
) -> NoisePath:
    """Draw one driver realization on the grid, deterministically in seed.

    Large and small jumps are compound Poisson streams with rates
    ``mass_large`` and ``mass_small``; Wiener increments are independent
    Gaussians with per-mode variance eigenvalue * dt.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ValueError("grid needs at least 2 stamps")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")

    children = np.random.SeedSequence(int(seed)).spawn(3)
    gen_w, gen_small, gen_large = (np.random.Generator(np.random.PCG64(c)) for c in children)

    dt = np.diff(grid)
    k = wiener.eigenvalues.size
    normals = gen_w.standard_normal((dt.size, k))
    increments = normals * np.sqrt(wiener.eigenvalues[None, :] * dt[:, None])

    t0, t1 = grid[0], grid[-1]
    horizon = t1 - t0
    jumps = []
    for gen, rate, sampler, regime in (
        (gen_small, measure.mass_small, measure.sampler_small, "small"),
        (gen_large, measure.mass_large, measure.sampler_large, "large"),
    ):
        n = int(gen.poisson(rate * horizon)) if rate > 0 else 0
        if n:
            times = np.sort(gen.uniform(t0, t1, size=n))
            marks = sampler(gen, n)
            jumps.extend(JumpEvent(float(t), m, regime) for t, m in zip(times, marks))
    jumps.sort(key=lambda e: e.time)

    return NoisePath(grid=grid, wiener_increments=increments, jumps=tuple(jumps), seed=int(seed))


def two_sided_extend(forward: NoisePath, backward: NoisePath) -> NoisePath:
    """Concatenate a time-reflected backward path with a forward path.

    Both inputs live on [0, T] grids with common step and mode counts;
    the output covers [-T_b, T_f] with the origin shared.  A backward
    jump at time s lands at -s.
    """
    fg, bg = forward.grid, backward.grid
    if abs(fg[0]) > 1e-12 or abs(bg[0]) > 1e-12:
        raise ValueError("both paths must start at time 0")
    df, db = np.diff(fg), np.diff(bg)
    if not np.isclose(df.mean(), db.mean(), rtol=1e-9) or df.std() > 1e-12 or db.std() > 1e-12:
        raise ValueError("paths must share a uniform grid spacing")
    if forward.wiener_increments.shape[1] != backward.wiener_increments.shape[1]:
        raise ValueError("paths must share the Wiener mode count")

    grid = np.concatenate([-bg[::-1][:-1], fg])
    incr = np.concatenate([backward.wiener_increments[::-1], forward.wiener_increments])
    jumps = [JumpEvent(-e.time, e.mark, e.regime) for e in backward.jumps]
    jumps.extend(forward.jumps)
    jumps.sort(key=lambda e: e.time)
    return NoisePath(grid=grid, wiener_increments=incr, jumps=tuple(jumps), seed=forward.seed)


def jump_sum(
    path: NoisePath, integrand, regime: str, t0=None, t1=None, zero=None
) -> np.ndarray:
    """Sum of integrand(time, mark) over jumps of one regime in (t0, t1].

    The compensator of the small-jump regime is *not* subtracted here;
    callers subtract the measure moment appropriate to their integrand.
    ``zero`` is the value returned when no jump falls in the window
    (defaults to a scalar zero).
    """
    lo = path.grid[0] if t0 is None else t0
    hi = path.grid[-1] if t1 is None else t1
    total = None
    for e in path.jumps:
        if e.regime != regime or not (lo < e.time <= hi):
            continue
        v = np.atleast_1d(np.asarray(integrand(e.time, e.mark), dtype=float))
        total = v.copy() if total is None else total + v
    if total is None:
        return np.zeros(1) if zero is None else np.zeros_like(np.atleast_1d(zero))
    return total
