"""Discrete norms, the Robin bilinear form, and its continuity/coercivity constants.

Grid functions live on the uniform nodes x_k = k/N of [0,1].  The L2 norm
uses the composite trapezoid rule, the derivative seminorm uses forward
differences on cells, and the bilinear form integrates mu at cell
midpoints.  Both quadratures are second order and match the element
assembly used by the finite-element side, so the continuum inequalities
(coercivity, continuity, the sup-norm embedding and the norm equivalence)
carry over to the discrete objects up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import evaluate_array, numeric_partial
from .problem import ProblemSpec, coercivity_floor, space_time_lattice

__all__ = [
    "GridFunction",
    "FormConstants",
    "EmbeddingReport",
    "h1_norm",
    "i_norm",
    "l2_norm",
    "lp_norm_p",
    "bilinear_a",
    "da_dt",
    "form_constants",
    "sup_norm_embedding_check",
]


@dataclass(frozen=True)
class GridFunction:
    """Nodal values on the uniform grid x_k = k/N, N >= 2 cells."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 3:
            raise ValueError("grid function needs at least 3 nodes (N >= 2 cells)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.values.size - 1

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.values.size) / self.n_cells

    @classmethod
    def from_expr(cls, expr, n_cells: int, **extra) -> "GridFunction":
        xs = np.arange(n_cells + 1) / n_cells
        return cls(evaluate_array(expr, {"x": xs, **extra}))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if self.n_cells != other.n_cells:
            raise ValueError("grid mismatch")
        return GridFunction(self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if self.n_cells != other.n_cells:
            raise ValueError("grid mismatch")
        return GridFunction(self.values + other.values)


@dataclass(frozen=True)
class FormConstants:
    """mu floor, coercivity constant a0, continuity constant a_T, and the
    continuity constant a_T_tilde of the form's time derivative."""

    mu0: float
    a0: float
    a_T: float
    a_T_tilde: float


def _trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = w[-1] = 0.5 * h
    return w


def l2_norm(v: GridFunction) -> float:
    w = _trapezoid_weights(v.values.size, v.h)
    return float(np.sqrt(np.sum(w * v.values**2)))


def lp_norm_p(v: GridFunction, p: float) -> float:
    """Trapezoid approximation of the integral of |v|^p (the p-th power of the
    L^p norm, which is what the energy functional accumulates)."""
    w = _trapezoid_weights(v.values.size, v.h)
    return float(np.sum(w * np.abs(v.values) ** p))


def _grad_sq(v: GridFunction) -> float:
    dv = np.diff(v.values) / v.h
    return float(np.sum(v.h * dv**2))


def h1_norm(v: GridFunction) -> float:
    return float(np.sqrt(l2_norm(v) ** 2 + _grad_sq(v)))


def i_norm(v: GridFunction, i: int) -> float:
    """Endpoint-anchored norm (v(i)^2 + ||v_x||^2)^(1/2), i in {0, 1}."""
    if i not in (0, 1):
        raise ValueError("endpoint index must be 0 or 1")
    endpoint = v.values[0] if i == 0 else v.values[-1]
    return float(np.sqrt(endpoint**2 + _grad_sq(v)))


def _mu_at_cell_midpoints(spec: ProblemSpec, t: float, n_cells: int) -> np.ndarray:
    mids = (np.arange(n_cells) + 0.5) / n_cells
    return evaluate_array(spec.mu.expr, {"x": mids, "t": float(t)})


def bilinear_a(t: float, u: GridFunction, v: GridFunction, spec: ProblemSpec) -> float:
    """Robin bilinear form <mu u_x, v_x> + h0 mu(0,t) u(0)v(0) + h1 mu(1,t) u(1)v(1).

    The flux integral uses cell-midpoint values of mu; the expression is
    symmetric in (u, v) exactly, term by term.
    """
    if u.n_cells != v.n_cells:
        raise ValueError("grid mismatch")
    h = u.h
    mu_mid = _mu_at_cell_midpoints(spec, t, u.n_cells)
    du = np.diff(u.values) / h
    dv = np.diff(v.values) / h
    flux = float(np.sum(h * mu_mid * du * dv))
    b = spec.boundary
    mu0t = float(evaluate_array(spec.mu.expr, {"x": 0.0, "t": float(t)}))
    mu1t = float(evaluate_array(spec.mu.expr, {"x": 1.0, "t": float(t)}))
    return (
        flux
        + b.h0 * mu0t * u.values[0] * v.values[0]
        + b.h1 * mu1t * u.values[-1] * v.values[-1]
    )


def da_dt(t: float, u: GridFunction, v: GridFunction, spec: ProblemSpec) -> float:
    """Time derivative of the bilinear form: mu replaced by its t-partial."""
    if u.n_cells != v.n_cells:
        raise ValueError("grid mismatch")
    h = u.h
    mids = (np.arange(u.n_cells) + 0.5) / u.n_cells
    if "t" not in spec.mu.expr.free_vars:
        return 0.0
    mu_t = np.array(
        [numeric_partial(spec.mu.expr, "t", {"x": float(x), "t": float(t)}) for x in mids]
    )
    du = np.diff(u.values) / h
    dv = np.diff(v.values) / h
    flux = float(np.sum(h * mu_t * du * dv))
    b = spec.boundary
    mu_t0 = float(numeric_partial(spec.mu.expr, "t", {"x": 0.0, "t": float(t)}))
    mu_t1 = float(numeric_partial(spec.mu.expr, "t", {"x": 1.0, "t": float(t)}))
    return (
        flux
        + b.h0 * mu_t0 * u.values[0] * v.values[0]
        + b.h1 * mu_t1 * u.values[-1] * v.values[-1]
    )


def form_constants(spec: ProblemSpec) -> FormConstants:
    """Coercivity floor a0 = mu0*min{h,1/2} and the continuity constants
    a_T = (1+2h0+2h1) sup mu, a_T_tilde = (1+2h0+2h1) sup |dmu/dt|, with the
    sups taken over the (x,t) sample lattice."""
    b = spec.boundary
    mu0 = spec.mu.mu0
    a0 = coercivity_floor(mu0, b.h0, b.h1)
    weight = 1.0 + 2.0 * b.h0 + 2.0 * b.h1
    xs, ts = space_time_lattice(spec.tmax)
    sup_mu = float(max(evaluate_array(spec.mu.expr, {"x": xs, "t": float(t)}).max() for t in ts))
    if "t" in spec.mu.expr.free_vars:
        sup_mu_t = float(
            max(
                max(abs(numeric_partial(spec.mu.expr, "t", {"x": float(x), "t": float(t)}))
                    for x in xs[:: max(1, len(xs) // 26)])
                for t in ts[:: max(1, len(ts) // 26)]
            )
        )
    else:
        sup_mu_t = 0.0
    return FormConstants(mu0=mu0, a0=a0, a_T=weight * sup_mu, a_T_tilde=weight * sup_mu_t)


@dataclass(frozen=True)
class EmbeddingReport:
    """Margins of the continuous-embedding bounds sqrt(2)*norm - sup|v|."""

    sup_value: float
    margin_h1: float
    margin_0: float
    margin_1: float

    @property
    def worst(self) -> float:
        return min(self.margin_h1, self.margin_0, self.margin_1)


def sup_norm_embedding_check(v: GridFunction) -> EmbeddingReport:
    sup_v = float(np.abs(v.values).max())
    r2 = np.sqrt(2.0)
    return EmbeddingReport(
        sup_value=sup_v,
        margin_h1=r2 * h1_norm(v) - sup_v,
        margin_0=r2 * i_norm(v, 0) - sup_v,
        margin_1=r2 * i_norm(v, 1) - sup_v,
    )
