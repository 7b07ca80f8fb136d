"""Problem definitions and sample-based hypothesis audits.

A :class:`ProblemSpec` bundles the diffusion coefficient, the scalar
nonlinearity with its growth metadata, the volume forcing, the Robin
boundary data and the initial state for

    u_t - (mu(x,t) u_x)_x + f(u) = f1(x,t)   on (0,1) x (0,T),
    u_x(0,t) =  h0 u(0,t) + g0(t),
    -u_x(1,t) = h1 u(1,t) + g1(t).

``validate_hypotheses`` audits the structural assumptions each solver or
a-priori bound relies on.  All checks are performed on deterministic
sample grids (a symmetric log-spaced grid in u, a uniform lattice in
(x,t)); a "satisfied" verdict therefore means "no violation found on the
samples", not a proof.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy.integrate import quad

from .expr import EvalError, Expr, evaluate, evaluate_array, numeric_partial

__all__ = [
    "GrowthBounds",
    "CoefficientField",
    "ScalarNonlinearity",
    "BoundaryData",
    "ProblemSpec",
    "AsymptoticLimits",
    "HypothesisStatus",
    "HypothesisCheck",
    "HypothesisReport",
    "AuditResult",
    "QuadratureError",
    "FAMILIES",
    "validate_hypotheses",
    "potential",
    "growth_audit",
    "u_sample_grid",
    "space_time_lattice",
    "coercivity_floor",
]

#: Hypothesis families: the base well-posedness set, the stronger set behind
#: the sup-norm bound, and the steady-limit set behind the decay estimate.
FAMILIES = ("existence", "boundedness", "asymptotic")

_LATTICE_POINTS = 101
_U_GRID_POINTS = 1001  # log-spaced magnitudes in [1e-3, 1e3], mirrored, plus 0


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float, requested: float):
        super().__init__(f"{message} (achieved {achieved:.3e}, requested {requested:.3e})")
        self.achieved = achieved
        self.requested = requested


def u_sample_grid() -> np.ndarray:
    """Deterministic symmetric sample grid for checks quantified over all reals."""
    mags = np.logspace(-3.0, 3.0, _U_GRID_POINTS)
    return np.concatenate([-mags[::-1], [0.0], mags])


def space_time_lattice(tmax: float, nx: int = _LATTICE_POINTS, nt: int = _LATTICE_POINTS):
    """Uniform (x, t) sample lattice on [0,1] x [0,tmax], returned as 1-d axes."""
    return np.linspace(0.0, 1.0, nx), np.linspace(0.0, tmax, nt)


def coercivity_floor(mu0: float, h0: float, h1: float) -> float:
    """Coercivity constant of the Robin bilinear form: mu0*min{h,1/2} with the
    positive boundary weight; requires h0 + h1 > 0."""
    if h0 > 0:
        return mu0 * min(h0, 0.5)
    if h1 > 0:
        return mu0 * min(h1, 0.5)
    raise ValueError("coercivity requires h0 + h1 > 0")


@dataclass(frozen=True)
class GrowthBounds:
    """Constants of the superlinear growth condition and the monotonicity shift.

    The nonlinearity is expected to satisfy u*f(u) >= C1*|u|^p - C1prime and
    |f(u)| <= C2*(1 + |u|^(p-1)), and (y-z)(f(y)-f(z)) >= -delta*|y-z|^2.
    """

    C1: float
    C1prime: float
    C2: float
    p: float
    delta: float = 1e-6

    def __post_init__(self):
        if not (self.C1 > 0 and self.C2 > 0):
            raise ValueError("C1 and C2 must be positive")
        if self.C1prime < 0:
            raise ValueError("C1prime must be nonnegative")
        if not self.p > 1:
            raise ValueError("growth exponent p must exceed 1")
        if not self.delta > 0:
            raise ValueError("monotonicity shift delta must be positive")


@dataclass(frozen=True)
class CoefficientField:
    """Diffusion coefficient mu(x,t) with a cached strictly positive floor."""

    expr: Expr
    mu0: float | None = None

    def floor(self, tmax: float) -> float:
        """Supplied lower bound, or the sampled minimum over the lattice."""
        if self.mu0 is not None:
            return self.mu0
        xs, ts = space_time_lattice(tmax)
        return float(min(evaluate_array(self.expr, {"x": xs, "t": t}).min() for t in ts))


@dataclass(frozen=True)
class ScalarNonlinearity:
    """Reaction term f(u) plus optional growth metadata.

    When growth bounds are present, ``lambda0 = (C1prime/C1)^(1/p)`` and
    ``m0 = integral of |f| over [-lambda0, lambda0]`` are computed eagerly;
    they are reused by the potential sandwich audit and the energy traces.
    """

    expr: Expr
    growth: GrowthBounds | None = None
    lambda0: float | None = field(init=False, default=None)
    m0: float | None = field(init=False, default=None)

    def __post_init__(self):
        if self.growth is not None:
            lam0 = (self.growth.C1prime / self.growth.C1) ** (1.0 / self.growth.p)
            object.__setattr__(self, "lambda0", lam0)
            if lam0 == 0.0:
                object.__setattr__(self, "m0", 0.0)
            else:
                val, err = quad(
                    lambda y: abs(evaluate(self.expr, {"u": y})),
                    -lam0,
                    lam0,
                    epsabs=1e-10,
                    epsrel=1e-10,
                    limit=200,
                )
                object.__setattr__(self, "m0", float(val))

    def __call__(self, u):
        return evaluate_array(self.expr, {"u": np.asarray(u, dtype=float)})


@dataclass(frozen=True)
class BoundaryData:
    """Robin weights h0, h1 >= 0 (not both zero) and boundary sources g0, g1."""

    h0: float
    h1: float
    g0: Expr
    g1: Expr

    def __post_init__(self):
        if self.h0 < 0 or self.h1 < 0:
            raise ValueError("Robin weights must be nonnegative")
        if not self.h0 + self.h1 > 0:
            raise ValueError("Robin weights must not both vanish")


@dataclass(frozen=True)
class ProblemSpec:
    mu: CoefficientField
    f: ScalarNonlinearity
    f1: Expr
    boundary: BoundaryData
    u0: Expr
    tmax: float

    def __post_init__(self):
        if not self.tmax > 0:
            raise ValueError("time horizon must be positive")
        if self.mu.mu0 is None:
            object.__setattr__(self, "mu", replace(self.mu, mu0=self.mu.floor(self.tmax)))
        if self.mu.mu0 <= 0:
            raise ValueError(f"diffusion floor must be positive, got {self.mu.mu0}")


@dataclass(frozen=True)
class AsymptoticLimits:
    """Large-time limit data and the exponential approach envelope.

    ``cexp`` is the shared envelope amplitude: each of g0, g1, mu, f1 is
    assumed within cexp * exp(-gamma1 * t) of its limit.
    """

    mu_inf: Expr
    f1_inf: Expr
    g0_inf: float
    g1_inf: float
    gamma1: float
    cexp: float

    def __post_init__(self):
        if not self.gamma1 > 0 or not self.cexp > 0:
            raise ValueError("envelope constants gamma1 and cexp must be positive")


class HypothesisStatus(enum.Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    NOT_CHECKABLE = "not-checkable-numerically"


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    status: HypothesisStatus
    detail: str = ""
    witness: dict | None = None


@dataclass(frozen=True)
class HypothesisReport:
    family: str
    checks: tuple[HypothesisCheck, ...]

    @property
    def all_satisfied(self) -> bool:
        return all(c.status is HypothesisStatus.SATISFIED for c in self.checks)

    @property
    def violations(self) -> tuple[HypothesisCheck, ...]:
        return tuple(c for c in self.checks if c.status is HypothesisStatus.VIOLATED)

    def __iter__(self) -> Iterator[HypothesisCheck]:
        return iter(self.checks)


@dataclass(frozen=True)
class AuditResult:
    passed: bool
    worst_margin: float
    witness: dict
    detail: str = ""


# -- hypothesis checks ----------------------------------------------------


def _sampled_field_check(name, expr, bindings_iter, predicate, detail_ok, detail_bad):
    """Evaluate ``expr`` over samples; report the first predicate failure."""
    try:
        for bindings in bindings_iter:
            values = evaluate_array(expr, bindings)
            bad = ~predicate(values)
            if np.any(bad):
                idx = int(np.argmax(bad))
                witness = {k: (float(np.asarray(v).flat[idx]) if np.ndim(v) else float(v))
                           for k, v in bindings.items()}
                witness["value"] = float(values.flat[idx])
                return HypothesisCheck(name, HypothesisStatus.VIOLATED, detail_bad, witness)
    except EvalError as exc:
        return HypothesisCheck(
            name,
            HypothesisStatus.VIOLATED,
            f"evaluation failed: {exc}",
            {"position": exc.position},
        )
    return HypothesisCheck(name, HypothesisStatus.SATISFIED, detail_ok)


def _xt_samples(expr_vars, xs, ts):
    if "t" in expr_vars and "x" in expr_vars:
        return ({"x": xs, "t": t} for t in ts)
    if "t" in expr_vars:
        return ({"t": ts},)
    return ({"x": xs},)


def _check_boundary_weights(b: BoundaryData, strict: bool) -> HypothesisCheck:
    name = "boundary_weights_strict" if strict else "boundary_weights"
    if strict:
        ok = b.h0 > 0 and b.h1 > 0
        detail = f"h0={b.h0}, h1={b.h1}; both must be strictly positive"
    else:
        ok = b.h0 >= 0 and b.h1 >= 0 and b.h0 + b.h1 > 0
        detail = f"h0={b.h0}, h1={b.h1}; nonnegative with positive sum"
    status = HypothesisStatus.SATISFIED if ok else HypothesisStatus.VIOLATED
    witness = None if ok else {"h0": b.h0, "h1": b.h1}
    return HypothesisCheck(name, status, detail, witness)


def _check_initial_data(spec: ProblemSpec, bounded: bool) -> HypothesisCheck:
    xs, _ = space_time_lattice(spec.tmax)
    name = "initial_data_bounded" if bounded else "initial_data_square_integrable"
    return _sampled_field_check(
        name,
        spec.u0,
        ({"x": xs},),
        lambda v: np.isfinite(v),
        "u0 finite at all sample points",
        "u0 not finite at a sample point",
    )


def _check_boundary_sources(spec: ProblemSpec, ts: np.ndarray, suffix: str = "") -> HypothesisCheck:
    """g0, g1 and their derivatives must be finite on the time samples."""
    name = "boundary_sources_abs_continuous" + suffix
    try:
        for g in (spec.boundary.g0, spec.boundary.g1):
            vals = evaluate_array(g, {"t": ts})
            derivs = np.array([numeric_partial(g, "t", {"t": float(t)}) for t in ts])
            if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(derivs))):
                bad = int(np.argmax(~(np.isfinite(vals) & np.isfinite(derivs))))
                return HypothesisCheck(
                    name,
                    HypothesisStatus.VIOLATED,
                    "boundary source or its derivative not finite",
                    {"t": float(ts[bad])},
                )
    except EvalError as exc:
        return HypothesisCheck(
            name, HypothesisStatus.VIOLATED, f"evaluation failed: {exc}", {"position": exc.position}
        )
    return HypothesisCheck(name, HypothesisStatus.SATISFIED, "sources and derivatives finite on samples")


def _check_diffusion(spec: ProblemSpec, ts: np.ndarray, suffix: str = "") -> HypothesisCheck:
    name = "diffusion_smooth_positive" + suffix
    mu0 = spec.mu.mu0
    xs, _ = space_time_lattice(spec.tmax)
    try:
        for t in ts:
            vals = evaluate_array(spec.mu.expr, {"x": xs, "t": float(t)})
            if np.any(vals < mu0) or np.any(~np.isfinite(vals)):
                idx = int(np.argmax((vals < mu0) | ~np.isfinite(vals)))
                return HypothesisCheck(
                    name,
                    HypothesisStatus.VIOLATED,
                    f"mu below its floor {mu0}",
                    {"x": float(xs[idx]), "t": float(t), "value": float(vals[idx])},
                )
        # C^1 sampling: partials finite on a thinned lattice
        for t in ts[:: max(1, len(ts) // 11)]:
            for x in xs[:: max(1, len(xs) // 11)]:
                pt = {"x": float(x), "t": float(t)}
                if not (
                    np.isfinite(numeric_partial(spec.mu.expr, "x", pt))
                    if "x" in spec.mu.expr.free_vars
                    else True
                ) or not (
                    np.isfinite(numeric_partial(spec.mu.expr, "t", pt))
                    if "t" in spec.mu.expr.free_vars
                    else True
                ):
                    return HypothesisCheck(
                        name, HypothesisStatus.VIOLATED, "mu partial derivative not finite", pt
                    )
    except EvalError as exc:
        return HypothesisCheck(
            name, HypothesisStatus.VIOLATED, f"evaluation failed: {exc}", {"position": exc.position}
        )
    return HypothesisCheck(
        name, HypothesisStatus.SATISFIED, f"mu >= {mu0} and C^1-sampled finite on the lattice"
    )


def _check_forcing(spec: ProblemSpec, ts: np.ndarray, nonpositive: bool, suffix: str = "") -> HypothesisCheck:
    xs, _ = space_time_lattice(spec.tmax)
    if nonpositive:
        return _sampled_field_check(
            "forcing_nonpositive",
            spec.f1,
            ({"x": xs, "t": float(t)} for t in ts),
            lambda v: np.isfinite(v) & (v <= 0),
            "f1 <= 0 at all sample points",
            "f1 positive at a sample point",
        )
    return _sampled_field_check(
        "forcing_integrable" + suffix,
        spec.f1,
        ({"x": xs, "t": float(t)} for t in ts),
        lambda v: np.isfinite(v),
        "f1 finite at all sample points",
        "f1 not finite at a sample point",
    )


def _check_growth(f: ScalarNonlinearity) -> HypothesisCheck:
    name = "nonlinearity_growth"
    if f.growth is None:
        return HypothesisCheck(
            name, HypothesisStatus.NOT_CHECKABLE, "no growth bounds supplied"
        )
    audit = growth_audit(f)
    if audit.passed:
        return HypothesisCheck(name, HypothesisStatus.SATISFIED, audit.detail)
    return HypothesisCheck(name, HypothesisStatus.VIOLATED, audit.detail, audit.witness)


def _check_semi_monotone(f: ScalarNonlinearity, delta: float | None = None) -> HypothesisCheck:
    name = "nonlinearity_semi_monotone"
    if delta is None:
        delta = f.growth.delta if f.growth is not None else 1e-6
    grid = u_sample_grid()[::10]  # 201 points: pair check is quadratic in grid size
    try:
        fv = f(grid)
    except EvalError as exc:
        return HypothesisCheck(
            name, HypothesisStatus.VIOLATED, f"evaluation failed: {exc}", {"position": exc.position}
        )
    dy = grid[:, None] - grid[None, :]
    df = fv[:, None] - fv[None, :]
    lhs = dy * df + delta * dy * dy
    tol = -1e-9 * np.maximum(1.0, np.abs(dy * df))
    bad = lhs < tol
    if np.any(bad):
        i, j = np.unravel_index(int(np.argmin(lhs - tol)), lhs.shape)
        return HypothesisCheck(
            name,
            HypothesisStatus.VIOLATED,
            f"(y-z)(f(y)-f(z)) < -delta|y-z|^2 with delta={delta}",
            {"y": float(grid[i]), "z": float(grid[j]), "value": float(lhs[i, j])},
        )
    return HypothesisCheck(
        name, HypothesisStatus.SATISFIED, f"pairwise shifted monotonicity holds (delta={delta})"
    )


def _check_envelopes(spec: ProblemSpec, limits: AsymptoticLimits) -> list[HypothesisCheck]:
    """Exponential approach of g0, g1, mu, f1 to their limits, sampled out to
    several envelope e-foldings past the solve horizon."""
    t_far = max(spec.tmax, min(20.0 / limits.gamma1, 1e3))
    ts = np.unique(np.concatenate([np.linspace(0.0, spec.tmax, 41), np.linspace(spec.tmax, t_far, 41)]))
    xs, _ = space_time_lattice(spec.tmax)
    w = np.full(xs.size, xs[1] - xs[0])
    w[0] = w[-1] = 0.5 * (xs[1] - xs[0])
    checks: list[HypothesisCheck] = []

    def envelope(name, deviation_fn):
        try:
            for t in ts:
                dev = deviation_fn(float(t))
                bound = limits.cexp * np.exp(-limits.gamma1 * float(t))
                if dev > bound + 1e-12:
                    return HypothesisCheck(
                        name,
                        HypothesisStatus.VIOLATED,
                        "deviation exceeds exponential envelope",
                        {"t": float(t), "deviation": float(dev), "envelope": float(bound)},
                    )
        except EvalError as exc:
            return HypothesisCheck(
                name, HypothesisStatus.VIOLATED, f"evaluation failed: {exc}", {"position": exc.position}
            )
        return HypothesisCheck(name, HypothesisStatus.SATISFIED, "within envelope on samples")

    g0, g1 = spec.boundary.g0, spec.boundary.g1
    mu_inf_x = evaluate_array(limits.mu_inf, {"x": xs})
    f1_inf_x = evaluate_array(limits.f1_inf, {"x": xs})
    checks.append(envelope("envelope_g0", lambda t: abs(evaluate(g0, {"t": t}) - limits.g0_inf)))
    checks.append(envelope("envelope_g1", lambda t: abs(evaluate(g1, {"t": t}) - limits.g1_inf)))
    checks.append(
        envelope(
            "envelope_mu",
            lambda t: float(
                np.abs(evaluate_array(spec.mu.expr, {"x": xs, "t": t}) - mu_inf_x).max()
            ),
        )
    )
    checks.append(
        envelope(
            "envelope_forcing",
            lambda t: float(
                np.sqrt(np.sum(w * (evaluate_array(spec.f1, {"x": xs, "t": t}) - f1_inf_x) ** 2))
            ),
        )
    )
    return checks


def _check_limit_diffusion(spec: ProblemSpec, limits: AsymptoticLimits) -> HypothesisCheck:
    xs, _ = space_time_lattice(spec.tmax)
    return _sampled_field_check(
        "limit_diffusion_positive",
        limits.mu_inf,
        ({"x": xs},),
        lambda v: np.isfinite(v) & (v >= spec.mu.mu0),
        f"mu_inf >= {spec.mu.mu0} on samples",
        "mu_inf below the diffusion floor",
    )


def _check_shifted_monotone_margin(spec: ProblemSpec) -> HypothesisCheck:
    """f(u) + delta*u nondecreasing with delta strictly below the coercivity floor."""
    name = "shifted_monotone_below_coercivity"
    f = spec.f
    delta = f.growth.delta if f.growth is not None else 1e-6
    a0 = coercivity_floor(spec.mu.mu0, spec.boundary.h0, spec.boundary.h1)
    if not delta < a0:
        return HypothesisCheck(
            name,
            HypothesisStatus.VIOLATED,
            f"delta={delta} is not below the coercivity constant a0={a0}",
            {"delta": delta, "a0": a0},
        )
    mono = _check_semi_monotone(f, delta)
    if mono.status is not HypothesisStatus.SATISFIED:
        return HypothesisCheck(name, mono.status, mono.detail, mono.witness)
    return HypothesisCheck(name, HypothesisStatus.SATISFIED, f"delta={delta} < a0={a0}")


def validate_hypotheses(
    spec: ProblemSpec, limits: AsymptoticLimits | None = None, family: str = "existence"
) -> HypothesisReport:
    """Audit the hypothesis family ``family`` on deterministic sample grids.

    Families: ``existence`` (base well-posedness set), ``boundedness``
    (sup-norm bound set), ``asymptotic`` (steady-limit set; requires
    ``limits`` for the envelope checks, which otherwise report
    not-checkable).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown hypothesis family {family!r}; choose from {FAMILIES}")
    _, ts = space_time_lattice(spec.tmax)
    b = spec.boundary
    checks: list[HypothesisCheck] = []

    if family == "existence":
        checks.append(_check_boundary_weights(b, strict=False))
        checks.append(_check_initial_data(spec, bounded=False))
        checks.append(_check_boundary_sources(spec, ts))
        checks.append(_check_diffusion(spec, ts))
        checks.append(_check_forcing(spec, ts, nonpositive=False))
        checks.append(_check_growth(spec.f))
        checks.append(_check_semi_monotone(spec.f))
    elif family == "boundedness":
        checks.append(_check_boundary_weights(b, strict=True))
        checks.append(_check_initial_data(spec, bounded=True))
        checks.append(_check_boundary_sources(spec, ts))
        checks.append(_check_diffusion(spec, ts))
        checks.append(_check_forcing(spec, ts, nonpositive=True))
        checks.append(_check_growth(spec.f))
        checks.append(_check_semi_monotone(spec.f))
        checks.append(_outward_sign_check(spec))
    else:  # asymptotic
        checks.append(_check_boundary_weights(b, strict=False))
        checks.append(_check_initial_data(spec, bounded=False))
        checks.append(_check_growth(spec.f))
        if limits is None:
            for name in (
                "boundary_sources_abs_continuous_halfline",
                "diffusion_smooth_positive_halfline",
                "forcing_uniformly_square_integrable",
                "envelope_g0",
                "envelope_g1",
                "envelope_mu",
                "envelope_forcing",
                "limit_diffusion_positive",
                "shifted_monotone_below_coercivity",
            ):
                checks.append(
                    HypothesisCheck(name, HypothesisStatus.NOT_CHECKABLE, "no limit data supplied")
                )
        else:
            t_far = max(spec.tmax, min(20.0 / limits.gamma1, 1e3))
            ts_far = np.linspace(0.0, t_far, len(ts))
            checks.append(_check_boundary_sources(spec, ts_far, suffix="_halfline"))
            checks.append(_check_diffusion(spec, ts_far, suffix="_halfline"))
            checks.append(_check_forcing(spec, ts_far, nonpositive=False, suffix="_halfline"))
            checks.extend(_check_envelopes(spec, limits))
            checks.append(_check_limit_diffusion(spec, limits))
            checks.append(_check_shifted_monotone_margin(spec))

    return HypothesisReport(family, tuple(checks))


def _outward_sign_check(spec: ProblemSpec) -> HypothesisCheck:
    name = "nonlinearity_outward_sign"
    xs, _ = space_time_lattice(spec.tmax)
    try:
        u0max = float(np.abs(evaluate_array(spec.u0, {"x": xs})).max())
        grid = u_sample_grid()
        grid = grid[np.abs(grid) >= u0max]
        if grid.size == 0:
            return HypothesisCheck(
                name, HypothesisStatus.SATISFIED, "sample grid exhausted below |u0| bound"
            )
        vals = grid * spec.f(grid)
    except EvalError as exc:
        return HypothesisCheck(
            name, HypothesisStatus.VIOLATED, f"evaluation failed: {exc}", {"position": exc.position}
        )
    bad = vals < -1e-12 * np.maximum(1.0, np.abs(grid))
    if np.any(bad):
        idx = int(np.argmax(bad))
        return HypothesisCheck(
            name,
            HypothesisStatus.VIOLATED,
            f"u*f(u) negative beyond |u| >= {u0max}",
            {"u": float(grid[idx]), "value": float(vals[idx])},
        )
    return HypothesisCheck(
        name, HypothesisStatus.SATISFIED, f"u*f(u) >= 0 for sampled |u| >= {u0max:.6g}"
    )


# -- potential and growth audits ------------------------------------------


def potential(f: ScalarNonlinearity, z: float, tol: float = 1e-10) -> float:
    """Antiderivative of the nonlinearity: integral of f from 0 to z.

    Computed by adaptive quadrature to absolute tolerance ``tol``; raises
    :class:`QuadratureError` carrying the achieved error estimate when the
    integrator cannot do better (an inherent roundoff floor proportional to
    the integral's magnitude is tolerated).
    """
    z = float(z)
    if not np.isfinite(z):
        raise ValueError("potential argument must be finite")
    if z == 0.0:
        return 0.0
    val, err = quad(
        lambda y: evaluate(f.expr, {"u": y}), 0.0, z, epsabs=tol, epsrel=1e-13, limit=200
    )
    if err > max(tol, 64.0 * np.finfo(float).eps * abs(val)):
        raise QuadratureError("potential quadrature did not converge", err, tol)
    return float(val)


def growth_audit(f: ScalarNonlinearity) -> AuditResult:
    """Check the growth inequalities and the potential sandwich on sample grids.

    Audits u*f(u) >= C1|u|^p - C1prime and |f(u)| <= C2(1+|u|^(p-1)) on the
    symmetric u grid, then -m0 <= potential(z) <= C2(|z| + |z|^p / p) on a
    smaller z grid (each z costs one quadrature).  Returns the worst margin
    and its witness point.
    """
    if f.growth is None:
        raise ValueError("growth_audit requires populated growth bounds")
    g = f.growth
    grid = u_sample_grid()
    fv = f(grid)
    tol = 1e-9

    lower = grid * fv - (g.C1 * np.abs(grid) ** g.p - g.C1prime)
    upper = g.C2 * (1.0 + np.abs(grid) ** (g.p - 1.0)) - np.abs(fv)
    margins = [
        ("coercive_growth", lower / np.maximum(1.0, np.abs(grid) ** g.p)),
        ("polynomial_bound", upper / np.maximum(1.0, np.abs(grid) ** (g.p - 1.0))),
    ]

    zs = np.concatenate([-np.logspace(-2, 1, 16)[::-1], [0.0], np.logspace(-2, 1, 16)])
    fbar = np.array([potential(f, z) for z in zs])
    sandwich_lo = fbar - (-f.m0)
    sandwich_hi = g.C2 * (np.abs(zs) + np.abs(zs) ** g.p / g.p) - fbar
    margins.append(("potential_lower", sandwich_lo / np.maximum(1.0, np.abs(fbar))))
    margins.append(("potential_upper", sandwich_hi / np.maximum(1.0, np.abs(fbar))))

    worst_name, worst_margin, worst_u = "", np.inf, 0.0
    for name, m in margins:
        idx = int(np.argmin(m))
        if m[idx] < worst_margin:
            worst_name, worst_margin = name, float(m[idx])
            worst_u = float(grid[idx]) if name.endswith("bound") or name.endswith("growth") else float(zs[idx])
    passed = worst_margin >= -tol
    return AuditResult(
        passed=passed,
        worst_margin=worst_margin,
        witness={"condition": worst_name, "u": worst_u},
        detail=(
            f"worst relative margin {worst_margin:.3e} ({worst_name} at u={worst_u:.6g})"
        ),
    )
