"""Truncated sine-basis representation of square-integrable fields on [0, 1].

The state space is L2[0,1] with homogeneous Dirichlet boundary, represented
through the first ``n_modes`` eigenfunctions of the Laplacian,

    e_n(r) = sqrt(2) * sin(n*pi*r),    n = 1, 2, ...

which form an orthonormal basis.  A field is a coefficient vector against
this basis; norms are Euclidean norms of the coefficients (Parseval).

Pointwise nonlinearities (sin u, cos u, products) are handled
pseudospectrally: evaluate the field on a quadrature grid, apply the scalar
function, project back.  The projection uses the composite trapezoid rule
on an equispaced grid including both endpoints; for products of basis
functions with combined frequency below the grid's aliasing limit the rule
is exact, and for smooth fields vanishing at the boundary it is high order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SpectralField", "SineBasis", "eval_field", "project_function"]


@dataclass(frozen=True)
class SpectralField:
    """A field on [0,1] stored as coefficients against the sine basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coefficients must be a nonempty 1-d vector")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        """L2 norm of the field; equals the Euclidean coefficient norm."""
        return float(np.linalg.norm(self.coeffs))

    def norm_sq(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    @staticmethod
    def unit(mode: int, n_modes: int) -> "SpectralField":
        """The basis field e_mode (1-indexed) in an n_modes truncation."""
        if not 1 <= mode <= n_modes:
            raise ValueError(f"mode {mode} outside 1..{n_modes}")
        c = np.zeros(n_modes)
        c[mode - 1] = 1.0
        return SpectralField(c)

    @staticmethod
    def zero(n_modes: int) -> "SpectralField":
        return SpectralField(np.zeros(n_modes))


@dataclass(frozen=True)
class SineBasis:
    """Truncated sine basis plus the quadrature grid used for nonlinearities.

    ``quadrature_points`` counts interior panels of the trapezoid rule; the
    grid has quadrature_points + 1 nodes including both endpoints.  The
    anti-aliasing floor quadrature_points >= 2 * n_modes guarantees exact
    projection of products of resolved basis functions.
    """

    n_modes: int
    quadrature_points: int = 0

    # derived arrays, filled in __post_init__
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    eval_matrix: np.ndarray = field(init=False, repr=False, compare=False)
    proj_matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        nq = self.quadrature_points or 4 * self.n_modes
        if nq < 2 * self.n_modes:
            raise ValueError(
                f"quadrature_points={nq} below anti-aliasing floor "
                f"{2 * self.n_modes}"
            )
        object.__setattr__(self, "quadrature_points", nq)
        nodes = np.linspace(0.0, 1.0, nq + 1)
        w = np.full(nq + 1, 1.0 / nq)
        w[0] *= 0.5
        w[-1] *= 0.5
        n = np.arange(1, self.n_modes + 1)
        # eval_matrix[q, m]: e_m at node q
        emat = np.sqrt(2.0) * np.sin(np.pi * np.outer(nodes, n))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "eval_matrix", emat)
        object.__setattr__(self, "proj_matrix", emat * w[:, None])

    def grid_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Field values on the quadrature grid; broadcasts over leading axes."""
        return np.asarray(coeffs) @ self.eval_matrix.T

    def project_values(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of grid samples; adjoint of :meth:`grid_values`."""
        return np.asarray(values) @ self.proj_matrix

    def eval_at(self, coeffs: np.ndarray, r) -> np.ndarray:
        """Evaluate the field with given coefficients at points r in [0,1]."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0) or np.any(r > 1.0):
            raise ValueError("evaluation points must lie in [0, 1]")
        n = np.arange(1, self.n_modes + 1)
        basis = np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(r, n))
        return basis @ np.asarray(coeffs)


def eval_field(u: SpectralField, r) -> float | np.ndarray:
    """Pointwise value sum_n c_n * sqrt(2) sin(n*pi*r); 0 at r in {0, 1}."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0) or np.any(r_arr > 1.0):
        raise ValueError("r outside [0, 1]")
    n = np.arange(1, u.n_modes + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(r_arr, n))
    out = basis @ u.coeffs
    return float(out) if np.isscalar(r) or r_arr.ndim == 0 else out


def project_function(f, basis: SineBasis) -> SpectralField:
    """Project a pointwise function on [0,1] onto the truncated basis.

    coeffs[n] approximates the sine-transform integral of f against e_n by
    the composite trapezoid rule on the basis quadrature grid.
    """
    vals = np.asarray([f(r) for r in basis.nodes], dtype=float)
    return SpectralField(basis.project_values(vals))
