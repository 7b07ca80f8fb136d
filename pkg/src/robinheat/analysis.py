"""Verification instruments over computed trajectories.

Four independent audits: manufactured-solution error reports with observed
convergence orders, least-squares exponential decay fitting against a
stationary state, the sup-norm bound audit (initial/boundary data maximum
principle), and the two-run contraction audit behind uniqueness.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import fdm, galerkin
from .expr import BinOp, Expr, evaluate, evaluate_array
from .forms import GridFunction, h1_norm, l2_norm
from .problem import (
    HypothesisReport,
    ProblemSpec,
    space_time_lattice,
    validate_hypotheses,
)

__all__ = [
    "ErrorReport",
    "DecayFit",
    "BoundAudit",
    "ContractionAudit",
    "manufactured_error",
    "observed_order",
    "fit_decay",
    "max_bound_audit",
    "contraction_audit",
]


@dataclass(frozen=True)
class ErrorReport:
    """Per-snapshot deviations from a reference expression over (x, t)."""

    times: np.ndarray
    max_err: np.ndarray
    l2_err: np.ndarray
    h1_err: np.ndarray

    @property
    def final_max(self) -> float:
        return float(self.max_err[-1])

    @property
    def peak_max(self) -> float:
        return float(self.max_err.max())


def manufactured_error(traj: fdm.Trajectory, exact: Expr) -> ErrorReport:
    """Errors of ``traj`` against the expression ``exact`` at every snapshot."""
    xs = traj.states[0].nodes
    max_err = np.empty(traj.times.size)
    l2_err = np.empty(traj.times.size)
    h1_err = np.empty(traj.times.size)
    for i, (t, state) in enumerate(zip(traj.times, traj.states)):
        ref = evaluate_array(exact, {"x": xs, "t": float(t)})
        diff = GridFunction(state.values - ref)
        max_err[i] = float(np.abs(diff.values).max())
        l2_err[i] = l2_norm(diff)
        h1_err[i] = h1_norm(diff)
    return ErrorReport(times=traj.times, max_err=max_err, l2_err=l2_err, h1_err=h1_err)


def observed_order(err_coarse: float, err_fine: float) -> float:
    """Richardson order log2(e_coarse / e_fine) for a halved resolution."""
    if err_coarse <= 0 or err_fine <= 0:
        raise ValueError("orders need strictly positive errors")
    return float(np.log2(err_coarse / err_fine))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential rate of the L2 distance to a steady state."""

    gamma_hat: float
    c_hat: float
    window: tuple[float, float]
    goodness: float
    plateau: bool
    times: np.ndarray
    norms: np.ndarray


def fit_decay(
    traj: fdm.Trajectory, u_inf: GridFunction, window: tuple[float, float] | None = None
) -> DecayFit:
    """Fit log ||u(t) - u_inf|| ~ log C - gamma t on the window.

    The window defaults to the latter half of the trajectory.  The fit
    refuses fewer than three points or a vanishing difference (already
    converged).  ``plateau`` flags a difference curve that flattens inside
    the window (the discrete steady state's accuracy floor was reached, so
    the window should be truncated).
    """
    if u_inf.n_cells != traj.n_cells:
        raise ValueError("steady state grid mismatch")
    if window is None:
        window = (float(traj.times[-1]) / 2.0, float(traj.times[-1]))
    ta, tb = float(window[0]), float(window[1])
    if not (traj.times[0] <= ta < tb <= traj.times[-1] + 1e-12):
        raise ValueError("fit window must lie inside the trajectory times")
    norms = np.array([l2_norm(GridFunction(s.values - u_inf.values)) for s in traj.states])
    mask = (traj.times >= ta - 1e-12) & (traj.times <= tb + 1e-12)
    if int(mask.sum()) < 3:
        raise ValueError("fit window holds fewer than three snapshots")
    if np.any(norms[mask] == 0.0):
        raise ValueError("difference norm vanishes on the window (already converged)")
    ts = traj.times[mask]
    ys = np.log(norms[mask])
    slope, intercept = np.polyfit(ts, ys, 1)
    fitted = slope * ts + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    goodness = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))

    half = ts.size // 2
    plateau = False
    if half >= 3:
        r1 = -np.polyfit(ts[:half], ys[:half], 1)[0]
        r2 = -np.polyfit(ts[half:], ys[half:], 1)[0]
        plateau = bool(r1 > 0 and r2 < 0.25 * r1)
    return DecayFit(
        gamma_hat=float(-slope),
        c_hat=float(np.exp(intercept)),
        window=(ta, tb),
        goodness=goodness,
        plateau=plateau,
        times=ts,
        norms=norms[mask],
    )


@dataclass(frozen=True)
class BoundAudit:
    """Sup-norm bound max{sup|u0|, sup|g0|/h0, sup|g1|/h1} against a trajectory."""

    bound: float | None
    observed_max: float
    report: HypothesisReport
    passed: bool
    verdict: str


def max_bound_audit(traj: fdm.Trajectory, spec: ProblemSpec) -> BoundAudit:
    """Audit the maximum principle: hypotheses first, then every node of
    every snapshot against the data bound (1e-9 slack for rounding)."""
    report = validate_hypotheses(spec, family="boundedness")
    observed = float(max(np.abs(s.values).max() for s in traj.states))
    if not report.all_satisfied:
        names = ", ".join(c.name for c in report.violations) or "not checkable"
        return BoundAudit(
            bound=None,
            observed_max=observed,
            report=report,
            passed=False,
            verdict=f"hypotheses not satisfied: {names}",
        )
    xs, ts = space_time_lattice(spec.tmax)
    b = spec.boundary
    sup_u0 = float(np.abs(evaluate_array(spec.u0, {"x": xs})).max())
    sup_g0 = float(max(abs(evaluate(b.g0, {"t": float(t)})) for t in ts))
    sup_g1 = float(max(abs(evaluate(b.g1, {"t": float(t)})) for t in ts))
    bound = max(sup_u0, sup_g0 / b.h0, sup_g1 / b.h1)
    passed = observed <= bound + 1e-9
    verdict = "bounded" if passed else "bound exceeded"
    return BoundAudit(
        bound=bound, observed_max=observed, report=report, passed=passed, verdict=verdict
    )


@dataclass(frozen=True)
class ContractionAudit:
    """Growth of the L2 distance between two runs with perturbed initial data."""

    times: np.ndarray
    diff_norms: np.ndarray
    delta: float
    passed: bool
    max_ratio: float


def contraction_audit(
    spec: ProblemSpec,
    perturbation: Expr,
    solver: str,
    nx: int,
    cfg: fdm.StepperConfig,
) -> ContractionAudit:
    """Solve twice (initial data u0 and u0 + perturbation) and check the
    L2 distance stays under ||perturbation|| * exp(delta t) * (1 + 1e-6).

    ``delta`` is the monotonicity shift of the nonlinearity (default 1e-6);
    ``max_ratio`` reports sup_t ||diff(t)|| / ||diff(0)|| (0 for a vanishing
    perturbation).
    """
    if solver not in ("fdm", "galerkin"):
        raise ValueError("solver must be 'fdm' or 'galerkin'")
    spec_pert = replace(spec, u0=BinOp("+", spec.u0, perturbation))
    if solver == "fdm":
        base = fdm.solve(spec, nx, cfg)
        pert = fdm.solve(spec_pert, nx, cfg)
    else:
        basis = galerkin.FemBasis(nx)
        base = galerkin.solve(spec, basis, cfg)
        pert = galerkin.solve(spec_pert, basis, cfg)
    diffs = np.array(
        [l2_norm(GridFunction(a.values - b.values)) for a, b in zip(base.states, pert.states)]
    )
    delta = spec.f.growth.delta if spec.f.growth is not None else 1e-6
    d0 = float(diffs[0])
    envelope = d0 * np.exp(delta * base.times) * (1.0 + 1e-6)
    passed = bool(np.all(diffs <= envelope + 1e-15))
    max_ratio = float(np.max(diffs / d0)) if d0 > 0 else 0.0
    return ContractionAudit(
        times=base.times, diff_norms=diffs, delta=delta, passed=passed, max_ratio=max_ratio
    )
