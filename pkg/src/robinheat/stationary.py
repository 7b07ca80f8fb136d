"""Nonlinear stationary Galerkin solver for the large-time limit problem.

Solves the variational problem: find u with

    a_inf(u, v) + <f(u), v> = <f1_inf, v> - mu_inf(0) g0_inf v(0) - mu_inf(1) g1_inf v(1)

for all v, on the P1 hat basis.  Newton with numerical f' and residual-
monotone step halving, started from zero; a lagged-reaction Picard sweep
takes over if Newton stagnates (the monotone structure makes Picard a
contraction even where f' is rough).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Expr, evaluate_array
from .forms import GridFunction
from .fdm import NewtonError, TriDiag, thomas_solve
from .galerkin import FemBasis
from .problem import (
    AsymptoticLimits,
    HypothesisStatus,
    ScalarNonlinearity,
    _check_semi_monotone,
    coercivity_floor,
)

__all__ = [
    "StationaryProblem",
    "StationarySolution",
    "NewtonConfig",
    "assemble_a_inf",
    "solve_stationary",
    "residual",
]


@dataclass(frozen=True)
class StationaryProblem:
    limits: AsymptoticLimits
    f: ScalarNonlinearity
    h0: float
    h1: float

    def __post_init__(self):
        if self.h0 < 0 or self.h1 < 0 or not self.h0 + self.h1 > 0:
            raise ValueError("Robin weights must be nonnegative with positive sum")
        if self.mu_floor <= 0:
            raise ValueError("limit diffusion coefficient must be strictly positive")

    @property
    def mu_floor(self) -> float:
        xs = np.linspace(0.0, 1.0, 101)
        return float(evaluate_array(self.limits.mu_inf, {"x": xs}).min())


@dataclass(frozen=True)
class StationarySolution:
    values: GridFunction
    residual_sup: float
    newton_iters: int
    uniqueness_certified: bool
    used_picard: bool = False


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iters: int = 100
    max_halvings: int = 30


def assemble_a_inf(basis: FemBasis, prob: StationaryProblem) -> TriDiag:
    """Stiffness of the limit form: Gauss flux integrals of mu_inf plus the
    Robin boundary scalars on the corner entries."""
    xg = basis.gauss_points()
    mug = evaluate_array(prob.limits.mu_inf, {"x": xg})
    elem = 0.5 * basis.h * (mug[0] + mug[1]) / basis.h**2
    diag = np.zeros(basis.n_nodes)
    diag[:-1] += elem
    diag[1:] += elem
    off = -elem
    diag[0] += prob.h0 * float(evaluate_array(prob.limits.mu_inf, {"x": 0.0}))
    diag[-1] += prob.h1 * float(evaluate_array(prob.limits.mu_inf, {"x": 1.0}))
    return TriDiag(sub=off, diag=diag, sup=off.copy())


def _limit_load(basis: FemBasis, prob: StationaryProblem) -> np.ndarray:
    xg = basis.gauss_points()
    load = basis.load_vector(evaluate_array(prob.limits.f1_inf, {"x": xg}))
    load[0] -= float(evaluate_array(prob.limits.mu_inf, {"x": 0.0})) * prob.limits.g0_inf
    load[-1] -= float(evaluate_array(prob.limits.mu_inf, {"x": 1.0})) * prob.limits.g1_inf
    return load


def _reaction_load(basis: FemBasis, f: ScalarNonlinearity, coeffs: np.ndarray) -> np.ndarray:
    return basis.load_vector(evaluate_array(f.expr, {"u": basis.interpolate_at_gauss(coeffs)}))


def residual(prob: StationaryProblem, c: np.ndarray, basis: FemBasis) -> float:
    """Sup over basis functions of the defect of the discrete limit equation."""
    c = np.asarray(c, dtype=float)
    A = assemble_a_inf(basis, prob)
    defect = A.matvec(c) + _reaction_load(basis, prob.f, c) - _limit_load(basis, prob)
    return float(np.abs(defect).max())


def _reaction_jacobian(basis: FemBasis, f: ScalarNonlinearity, coeffs: np.ndarray) -> TriDiag:
    """Gauss-weighted mass-like matrix of f'(u), f' by central differences."""
    from .galerkin import _G_LEFT, _G_RIGHT

    ug = basis.interpolate_at_gauss(coeffs)
    step = 1e-6 * (1.0 + np.abs(ug))
    fp = (
        evaluate_array(f.expr, {"u": ug + step}) - evaluate_array(f.expr, {"u": ug - step})
    ) / (2.0 * step)
    wh = 0.5 * basis.h
    diag = np.zeros(basis.n_nodes)
    diag[:-1] += wh * (fp[0] * _G_LEFT[0] ** 2 + fp[1] * _G_LEFT[1] ** 2)
    diag[1:] += wh * (fp[0] * _G_RIGHT[0] ** 2 + fp[1] * _G_RIGHT[1] ** 2)
    off = wh * (fp[0] * _G_LEFT[0] * _G_RIGHT[0] + fp[1] * _G_LEFT[1] * _G_RIGHT[1])
    return TriDiag(sub=off, diag=diag, sup=off.copy())


def _uniqueness_certificate(prob: StationaryProblem) -> bool:
    """Shifted monotonicity with delta strictly below the coercivity floor;
    sample-based, so a certificate, not a proof."""
    delta = prob.f.growth.delta if prob.f.growth is not None else 1e-6
    a0 = coercivity_floor(prob.mu_floor, prob.h0, prob.h1)
    if not delta < a0:
        return False
    return _check_semi_monotone(prob.f, delta).status is HypothesisStatus.SATISFIED


def solve_stationary(
    prob: StationaryProblem,
    basis: FemBasis,
    cfg: NewtonConfig = NewtonConfig(),
    initial: np.ndarray | None = None,
) -> StationarySolution:
    """Damped Newton from zero (or ``initial``), with a Picard fallback.

    Success means the sup-norm residual of the discrete system is at most
    ``cfg.tol``.  When the shifted-monotonicity certificate fails, the
    returned solution is whichever one the iteration found and
    ``uniqueness_certified`` is False.
    """
    A = assemble_a_inf(basis, prob)
    load = _limit_load(basis, prob)

    def residual_vec(c: np.ndarray) -> np.ndarray:
        return A.matvec(c) + _reaction_load(basis, prob.f, c) - load

    c = np.zeros(basis.n_nodes) if initial is None else np.array(initial, dtype=float)
    r = residual_vec(c)
    rnorm = float(np.abs(r).max())
    stagnated = False
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        if rnorm <= cfg.tol:
            iters -= 1
            break
        J_react = _reaction_jacobian(basis, prob.f, c)
        J = TriDiag(
            sub=A.sub + J_react.sub, diag=A.diag + J_react.diag, sup=A.sup + J_react.sup
        )
        delta_c = thomas_solve(J, -r)
        lam = 1.0
        for _ in range(cfg.max_halvings):
            trial = c + lam * delta_c
            r_trial = residual_vec(trial)
            r_trial_norm = float(np.abs(r_trial).max())
            if r_trial_norm < rnorm:
                c, r, rnorm = trial, r_trial, r_trial_norm
                break
            lam *= 0.5
        else:
            stagnated = True
            break
    else:
        raise NewtonError("stationary Newton did not reach tolerance", rnorm, cfg.max_iters)

    used_picard = False
    if stagnated and rnorm > cfg.tol:
        # Lagged-reaction fallback: solve A c = load - <f(u_lag), w_j>.
        used_picard = True
        for _ in range(cfg.max_iters):
            c_new = thomas_solve(A, load - _reaction_load(basis, prob.f, c))
            if float(np.abs(c_new - c).max()) <= cfg.tol:
                c = c_new
                break
            c = c_new
        r = residual_vec(c)
        rnorm = float(np.abs(r).max())
        if rnorm > cfg.tol:
            raise NewtonError("stationary solve stagnated (Newton and Picard)", rnorm, iters)

    return StationarySolution(
        values=GridFunction(c),
        residual_sup=rnorm,
        newton_iters=iters,
        uniqueness_certified=_uniqueness_certificate(prob),
        used_picard=used_picard,
    )
