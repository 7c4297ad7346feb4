"""Exponential-Euler time stepping for the mild form of the equation.

The state solves a semilinear evolution equation with drift, Q-Wiener
diffusion, compensated small jumps and uncompensated large jumps.  The
mild (variation-of-constants) form is discretized by the exponential
Euler scheme: over one step the nonlinearities and noise increments are
frozen at the step's left endpoint (so jump terms see the pre-jump state,
realizing left limits) and the exact linear flow U is applied,

    Y[k+1] = U(t[k+1], t[k]) * (Y[k] + f dt + g dW
             + sum_small F(x_j) - dt * compensator + sum_large G(x_j)).

Exactness of U removes the stiffness of the spectral mode rates, and by
the cocycle law the recursion telescopes to the discrete convolution sum,
so the same core drives plain simulation, windowed stochastic
convolutions, and the fixed-point iteration (which evaluates the
integrands on a frozen previous iterate under common random numbers).

Jump times are snapped to the right endpoint of their step; a jump
exactly at a grid point belongs to the step ending there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evolution import EvolutionFamily
from .noise import IntensityMeasure, NoisePath, WienerSpec, path_seeds, sample_noise_path
from .spectral import SineBasis

__all__ = [
    "Nonlinearities",
    "Trajectory",
    "PicardReport",
    "EnsembleStats",
    "ConvolutionResult",
    "step_exponential_euler",
    "simulate_trajectory",
    "simulate_ensemble",
    "run_coupled_gap",
    "stochastic_convolution",
    "picard_solve",
    "make_grid",
]


@dataclass
class Nonlinearities:
    """State-dependent coefficients of the semilinear equation.

    All callables are batched: ``states`` has shape (batch, n_modes).

    drift(t, states)           -> (batch, n_modes)
    wiener_factor(t, states)   -> (batch, n_quad) multiplier applied
                                  pointwise on the quadrature grid to the
                                  Wiener increment field; None means the
                                  increment enters additively.
    jump_small(t, states, marks) -> (m, n_modes) for m matched rows
    jump_large(t, states, marks) -> (m, n_modes)
    small_jump_mean(t, states) -> (batch, n_modes), the intensity-measure
                                  first moment of jump_small (its
                                  compensator per unit time); required
                                  whenever jump_small is set.
    lipschitz_bound            -> declared squared-norm Lipschitz constant
    """

    drift: Callable | None = None
    wiener_factor: Callable | None = None
    jump_small: Callable | None = None
    jump_large: Callable | None = None
    small_jump_mean: Callable | None = None
    lipschitz_bound: float = 0.0

    def __post_init__(self):
        if self.jump_small is not None and self.small_jump_mean is None:
            raise ValueError("jump_small requires its compensator small_jump_mean")


@dataclass(frozen=True)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray  # (n_times, n_modes)
    seed: int

    def __post_init__(self):
        if self.states.shape[0] != self.grid.size:
            raise ValueError("one state per grid stamp required")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("non-finite state in trajectory")

    def norms_sq(self) -> np.ndarray:
        return np.sum(self.states**2, axis=-1)


@dataclass
class PicardReport:
    iterates: int
    sup_norm_gaps: list
    contraction_rate_hat: float
    converged: bool
    diverged: bool
    truncation_bias_bound: float


@dataclass
class EnsembleStats:
    """Per-time Monte Carlo statistics of the squared state norm."""

    grid: np.ndarray
    mean_sq_norm: np.ndarray
    var_sq_norm: np.ndarray
    n_paths: int

    @property
    def stderr_sq_norm(self) -> np.ndarray:
        return np.sqrt(self.var_sq_norm / self.n_paths)


@dataclass
class ConvolutionResult:
    field_coeffs: np.ndarray
    truncation_bound: float
    window: tuple


def make_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """Uniform grid from t0 to t1 with step (approximately) dt."""
    if dt <= 0 or t1 <= t0:
        raise ValueError("need dt > 0 and t1 > t0")
    n = max(1, int(round((t1 - t0) / dt)))
    return np.linspace(t0, t1, n + 1)


def _pad_modes(arr: np.ndarray, n_modes: int) -> np.ndarray:
    """Pad trailing mode axis with zeros up to n_modes."""
    if arr.shape[-1] == n_modes:
        return arr
    if arr.shape[-1] > n_modes:
        raise ValueError("more noise modes than state modes")
    pad = [(0, 0)] * (arr.ndim - 1) + [(0, n_modes - arr.shape[-1])]
    return np.pad(arr, pad)


class _StepJumps:
    """Jump events of a batch of paths, bucketed by grid step.

    Step k owns jumps with time in (grid[k], grid[k+1]]; ties at grid
    points go to the step ending there.
    """

    def __init__(self, paths: Sequence[NoisePath], grid: np.ndarray):
        small = {}
        large = {}
        for i, p in enumerate(paths):
            for e in p.jumps:
                if not (grid[0] < e.time <= grid[-1]):
                    continue
                k = int(np.searchsorted(grid, e.time, side="left")) - 1
                bucket = small if e.regime == "small" else large
                bucket.setdefault(k, ([], []))
                bucket[k][0].append(i)
                bucket[k][1].append(e.mark)
        self.small = {
            k: (np.asarray(rows), np.asarray(marks)) for k, (rows, marks) in small.items()
        }
        self.large = {
            k: (np.asarray(rows), np.asarray(marks)) for k, (rows, marks) in large.items()
        }


def step_exponential_euler(
    states: np.ndarray,
    t0: float,
    t1: float,
    family: EvolutionFamily,
    nl: Nonlinearities,
    basis: SineBasis,
    wiener_increment: np.ndarray | None = None,
    small_marks: np.ndarray | None = None,
    large_marks: np.ndarray | None = None,
    small_rows: np.ndarray | None = None,
    large_rows: np.ndarray | None = None,
) -> np.ndarray:
    """One exponential-Euler step for a batch of states.

    ``states`` is (batch, n_modes) or (n_modes,).  Jump marks are
    (m, mark_dim) arrays with optional row indices tying each mark to a
    batch row (default row 0).  Evaluations use the step-start state, so
    jump terms act on the pre-jump (left limit) state.
    """
    if t1 < t0:
        raise ValueError("step needs t1 >= t0")
    single = np.ndim(states) == 1
    y = np.atleast_2d(np.asarray(states, dtype=float))
    dt = t1 - t0
    incr = np.zeros_like(y)

    if nl.drift is not None and dt > 0:
        incr += nl.drift(t0, y) * dt

    if wiener_increment is not None:
        dw = _pad_modes(np.atleast_2d(np.asarray(wiener_increment, dtype=float)), y.shape[1])
        if nl.wiener_factor is None:
            incr += dw
        else:
            gvals = nl.wiener_factor(t0, y)
            incr += basis.project_values(gvals * basis.grid_values(dw))

    for marks, rows, kernel in (
        (small_marks, small_rows, nl.jump_small),
        (large_marks, large_rows, nl.jump_large),
    ):
        if marks is None or len(marks) == 0:
            continue
        if kernel is None:
            raise ValueError("jump marks supplied but no jump kernel configured")
        marks = np.atleast_2d(np.asarray(marks, dtype=float))
        rows = np.zeros(marks.shape[0], dtype=int) if rows is None else np.asarray(rows)
        contrib = kernel(t0, y[rows], marks)
        np.add.at(incr, rows, contrib)

    if nl.jump_small is not None and dt > 0:
        incr -= nl.small_jump_mean(t0, y) * dt

    out = family.apply(t1, t0, y + incr)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite state after step ({t0}, {t1})")
    return out[0] if single else out


def _run_steps(
    y0: np.ndarray,
    grid: np.ndarray,
    family: EvolutionFamily,
    nl: Nonlinearities,
    basis: SineBasis,
    wiener: np.ndarray | None,
    jumps: _StepJumps | None,
    frozen: np.ndarray | None = None,
    store_states: bool = True,
    callback=None,
):
    """Drive the stepper over the grid for a batch of paths.

    With ``frozen`` set to a (batch, n_times, n_modes) array, every
    integrand is evaluated on the frozen trajectory instead of the
    running state: one sweep of the fixed-point operator.  ``callback``
    receives (k, states) after each step for streaming reductions.
    """
    y = np.atleast_2d(np.asarray(y0, dtype=float)).copy()
    batch, n_modes = y.shape
    n_steps = grid.size - 1
    states = None
    if store_states:
        states = np.empty((batch, n_steps + 1, n_modes))
        states[:, 0] = y
    if callback is not None:
        callback(0, y)

    for k in range(n_steps):
        t0, t1 = grid[k], grid[k + 1]
        dt = t1 - t0
        ref = frozen[:, k] if frozen is not None else y
        incr = np.zeros_like(y)
        if nl.drift is not None:
            incr += nl.drift(t0, ref) * dt
        if wiener is not None:
            dw = wiener[:, k]
            if nl.wiener_factor is None:
                incr += dw
            else:
                gvals = nl.wiener_factor(t0, ref)
                incr += basis.project_values(gvals * basis.grid_values(dw))
        if jumps is not None:
            pair = jumps.small.get(k)
            if pair is not None and nl.jump_small is not None:
                rows, marks = pair
                np.add.at(incr, rows, nl.jump_small(t0, ref[rows], marks))
            pair = jumps.large.get(k)
            if pair is not None and nl.jump_large is not None:
                rows, marks = pair
                np.add.at(incr, rows, nl.jump_large(t0, ref[rows], marks))
        if nl.jump_small is not None:
            incr -= nl.small_jump_mean(t0, ref) * dt
        y = family.apply(t1, t0, y + incr)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite state after step ending at t={t1}")
        if store_states:
            states[:, k + 1] = y
        if callback is not None:
            callback(k + 1, y)
    return states if store_states else y


def _assemble_wiener(paths: Sequence[NoisePath], n_modes: int) -> np.ndarray | None:
    w = np.stack([p.wiener_increments for p in paths])
    if w.shape[-1] == 0:
        return None
    return _pad_modes(w, n_modes)


def simulate_trajectory(scenario, y0, horizon: float, seed: int) -> Trajectory:
    """Single path of the scenario from state y0 over [0, horizon]."""
    grid = make_grid(0.0, horizon, scenario.mc.dt)
    path = sample_noise_path(scenario.intensity, scenario.wiener, grid, seed)
    states = _run_steps(
        _coeffs(y0),
        grid,
        scenario.family,
        scenario.nonlinearities,
        scenario.basis,
        _assemble_wiener([path], scenario.basis.n_modes),
        _StepJumps([path], grid),
    )
    return Trajectory(grid=grid, states=states[0], seed=int(seed))


def _coeffs(y0) -> np.ndarray:
    return np.asarray(getattr(y0, "coeffs", y0), dtype=float)


class _MomentAccumulator:
    """Streaming per-time mean/variance with compensated cross-chunk merge."""

    def __init__(self, n_times):
        self.n = 0
        self.mean = np.zeros(n_times)
        self.m2 = np.zeros(n_times)
        self._c_mean = np.zeros(n_times)  # Kahan carries
        self._c_m2 = np.zeros(n_times)

    def add_chunk(self, values: np.ndarray):
        """values: (chunk, n_times) per-path statistics."""
        nb = values.shape[0]
        mb = values.mean(axis=0)
        m2b = ((values - mb) ** 2).sum(axis=0)
        na = self.n
        delta = mb - self.mean
        self.n = na + nb
        self._kahan("mean", delta * nb / self.n)
        self._kahan("m2", m2b + delta**2 * na * nb / self.n)

    def _kahan(self, which, term):
        acc = self.mean if which == "mean" else self.m2
        carry = self._c_mean if which == "mean" else self._c_m2
        yv = term - carry
        t = acc + yv
        carry[:] = (t - acc) - yv
        acc[:] = t

    def variance(self) -> np.ndarray:
        return self.m2 / max(self.n - 1, 1)


def simulate_ensemble(
    scenario,
    y0,
    horizon: float,
    n_paths: int | None = None,
    t_start: float = 0.0,
    chunk_size: int = 512,
) -> EnsembleStats:
    """Monte Carlo ensemble of trajectories reduced to squared-norm stats.

    Paths are seeded deterministically from the scenario root seed and
    processed in fixed-order chunks, so results are reproducible
    bit-for-bit for a given plan.
    """
    n_paths = scenario.mc.n_paths if n_paths is None else n_paths
    grid = make_grid(t_start, horizon, scenario.mc.dt)
    seeds = path_seeds(scenario.mc.root_seed, n_paths)
    acc = _MomentAccumulator(grid.size)
    y0c = _coeffs(y0)
    for lo in range(0, n_paths, chunk_size):
        sub = seeds[lo : lo + chunk_size]
        paths = [
            sample_noise_path(scenario.intensity, scenario.wiener, grid, s) for s in sub
        ]
        batch0 = np.repeat(y0c[None, :], len(sub), axis=0)
        sq = np.empty((len(sub), grid.size))

        def _record(k, y, buf=sq):
            buf[:, k] = np.sum(y**2, axis=-1)

        _run_steps(
            batch0,
            grid,
            scenario.family,
            scenario.nonlinearities,
            scenario.basis,
            _assemble_wiener(paths, scenario.basis.n_modes),
            _StepJumps(paths, grid),
            store_states=False,
            callback=_record,
        )
        acc.add_chunk(sq)
    return EnsembleStats(
        grid=grid, mean_sq_norm=acc.mean, var_sq_norm=acc.variance(), n_paths=n_paths
    )


def run_coupled_gap(
    scenario,
    y0_a,
    y0_b,
    horizon: float,
    n_paths: int | None = None,
    chunk_size: int = 128,
) -> EnsembleStats:
    """Squared-norm gap between two solutions under common noise paths.

    The two trajectories share every noise realization (common random
    numbers), so the reported statistic is the mean-square distance of
    solutions started at y0_a and y0_b.
    """
    n_paths = scenario.mc.n_paths if n_paths is None else n_paths
    grid = make_grid(0.0, horizon, scenario.mc.dt)
    seeds = path_seeds(scenario.mc.root_seed, n_paths)
    acc = _MomentAccumulator(grid.size)
    a0, b0 = _coeffs(y0_a), _coeffs(y0_b)
    for lo in range(0, n_paths, chunk_size):
        sub = seeds[lo : lo + chunk_size]
        paths = [
            sample_noise_path(scenario.intensity, scenario.wiener, grid, s) for s in sub
        ]
        wiener = _assemble_wiener(paths, scenario.basis.n_modes)
        jumps = _StepJumps(paths, grid)
        args = (grid, scenario.family, scenario.nonlinearities, scenario.basis, wiener, jumps)
        sa = _run_steps(np.repeat(a0[None, :], len(sub), axis=0), *args)
        sb = _run_steps(np.repeat(b0[None, :], len(sub), axis=0), *args)
        acc.add_chunk(np.sum((sa - sb) ** 2, axis=-1))
    return EnsembleStats(
        grid=grid, mean_sq_norm=acc.mean, var_sq_norm=acc.variance(), n_paths=n_paths
    )


def stochastic_convolution(
    family: EvolutionFamily,
    nl: Nonlinearities,
    basis: SineBasis,
    path: NoisePath,
    window: tuple,
    truncation_tol: float = 1e-8,
    sup_norm: float = 1.0,
) -> ConvolutionResult:
    """Windowed discrete mild convolution against one noise path.

    Approximates the infinite-history mild value at the window's right
    edge by starting from zero at the left edge; the discarded history is
    bounded by M * exp(-delta * window_length) * sup_norm, which is
    reported (and warned about when it exceeds ``truncation_tol``).
    """
    a, t = window
    mask = (path.grid >= a - 1e-12) & (path.grid <= t + 1e-12)
    grid = path.grid[mask]
    if grid.size < 2:
        raise ValueError("noise path does not cover the window")
    first = int(np.nonzero(mask)[0][0])
    wiener = _pad_modes(
        path.wiener_increments[first : first + grid.size - 1][None, :, :], basis.n_modes
    )
    if wiener.shape[-1] == 0:
        wiener = None
    bound = family.M * np.exp(-family.delta * (t - a)) * sup_norm
    if bound > truncation_tol:
        warnings.warn(
            f"window shorter than burn-in: truncation bound {bound:.3e} > {truncation_tol}",
            stacklevel=2,
        )
    states = _run_steps(
        np.zeros((1, basis.n_modes)),
        grid,
        family,
        nl,
        basis,
        wiener,
        _StepJumps([path], grid),
    )
    return ConvolutionResult(field_coeffs=states[0, -1], truncation_bound=float(bound), window=(a, t))


def picard_solve(
    scenario,
    window: tuple,
    n_paths: int | None = None,
    max_iter: int = 20,
    tol: float = 1e-6,
    chunk_size: int = 256,
):
    """Iterate the mild-solution operator to its fixed point.

    Starts from the identically-zero trajectory and repeatedly applies
    the windowed mild operator, evaluating all integrands on the frozen
    previous iterate under common random numbers, so the per-iteration
    sup-norm gap is a faithful pathwise contraction estimate.

    Returns (EnsembleStats of the final iterate, PicardReport).
    """
    a, b = window
    n_paths = scenario.mc.n_paths if n_paths is None else n_paths
    grid = make_grid(a, b, scenario.mc.dt)
    seeds = path_seeds(scenario.mc.root_seed, n_paths)
    n_times = grid.size
    n_modes = scenario.basis.n_modes

    prev = np.zeros((n_paths, n_times, n_modes))
    gaps = []
    converged = diverged = False
    iterates = 0
    for _ in range(max_iter):
        iterates += 1
        new = np.empty_like(prev)
        sq_gap = _MomentAccumulator(n_times)
        for lo in range(0, n_paths, chunk_size):
            sub = seeds[lo : lo + chunk_size]
            paths = [
                sample_noise_path(scenario.intensity, scenario.wiener, grid, s) for s in sub
            ]
            states = _run_steps(
                np.zeros((len(sub), n_modes)),
                grid,
                scenario.family,
                scenario.nonlinearities,
                scenario.basis,
                _assemble_wiener(paths, n_modes),
                _StepJumps(paths, grid),
                frozen=prev[lo : lo + len(sub)],
            )
            new[lo : lo + len(sub)] = states
            sq_gap.add_chunk(np.sum((states - prev[lo : lo + len(sub)]) ** 2, axis=-1))
        gap = float(np.sqrt(sq_gap.mean.max()))
        gaps.append(gap)
        prev = new
        if gap <= tol:
            converged = True
            break
        if len(gaps) >= 4 and all(
            gaps[-i] > gaps[-i - 1] for i in (1, 2, 3)
        ):
            diverged = True
            break

    rate = _fit_geometric_rate(gaps, tol)
    bias = scenario.family.M * np.exp(-scenario.family.delta * (b - a))
    report = PicardReport(
        iterates=iterates,
        sup_norm_gaps=gaps,
        contraction_rate_hat=rate,
        converged=converged,
        diverged=diverged,
        truncation_bias_bound=float(bias),
    )
    acc = _MomentAccumulator(n_times)
    acc.add_chunk(np.sum(prev**2, axis=-1))
    stats = EnsembleStats(
        grid=grid, mean_sq_norm=acc.mean, var_sq_norm=acc.variance(), n_paths=n_paths
    )
    return stats, report


def _fit_geometric_rate(gaps, tol) -> float:
    """Geometric decay ratio fitted to the gap sequence past iteration 1."""
    usable = [(i, g) for i, g in enumerate(gaps) if i >= 1 and g > max(tol * 1e-2, 1e-15)]
    if len(usable) < 2:
        return float("nan")
    idx = np.array([i for i, _ in usable], dtype=float)
    logs = np.log([g for _, g in usable])
    slope = np.polyfit(idx, logs, 1)[0]
    return float(np.exp(slope))
