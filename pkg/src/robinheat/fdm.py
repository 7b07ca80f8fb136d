"""Finite-difference solver with Robin boundary elimination.

The spatial scheme keeps the interior nodes u_1..u_{N-1} as unknowns and
eliminates the boundary values through the one-sided discrete Robin
relations

    u_0 = (u_1 - h*g0(t)) / (1 + h*h0),
    u_N = (u_{N-1} - h*g1(t)) / (1 + h*h1),

substituted into conservative flux differences
(mu_{k+1/2}(u_{k+1}-u_k) - mu_{k-1/2}(u_k-u_{k-1})) / h^2.  The reaction
term is lagged: each step iterates linear solves with f evaluated at the
previous iterate until the sup-norm update stalls below a tolerance.

Two linear steppers are provided: an eigendecomposition exponential step
(exact for the frozen-coefficient linear system; data frozen at the step
midpoint) and backward Euler via the Thomas algorithm (data frozen at the
step end).  The boundary elimination is first order; the interior stencil
is second order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .expr import Const, evaluate, evaluate_array
from .forms import GridFunction
from .problem import AsymptoticLimits, ProblemSpec, ScalarNonlinearity

__all__ = [
    "TriDiag",
    "SemiDiscrete",
    "StepperConfig",
    "Trajectory",
    "SolverError",
    "InnerIterationError",
    "NewtonError",
    "thomas_solve",
    "eliminate_boundary",
    "assemble",
    "advance_linear",
    "step_linearized",
    "solve",
    "steady_fd",
]

STEPPERS = ("eigen", "backward_euler")


class SolverError(RuntimeError):
    pass


class InnerIterationError(SolverError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class NewtonError(SolverError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class TriDiag:
    """Tridiagonal matrix stored as sub/main/super diagonals."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        sub = np.array(self.sub, dtype=float)
        diag = np.array(self.diag, dtype=float)
        sup = np.array(self.sup, dtype=float)
        m = diag.size
        if sub.size != max(m - 1, 0) or sup.size != max(m - 1, 0):
            raise ValueError("off-diagonal lengths must be m-1")
        for arr in (sub, diag, sup):
            if not np.all(np.isfinite(arr)):
                raise ValueError("matrix entries must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "sub", sub)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "sup", sup)

    @property
    def m(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        if self.m > 1:
            out[:-1] += self.sup * v[1:]
            out[1:] += self.sub * v[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        out = np.diag(self.diag)
        if self.m > 1:
            out += np.diag(self.sup, 1) + np.diag(self.sub, -1)
        return out


def thomas_solve(tri: TriDiag, rhs: np.ndarray) -> np.ndarray:
    """Solve the tridiagonal system by single-pass elimination + back substitution."""
    m = tri.m
    rhs = np.asarray(rhs, dtype=float)
    d = tri.diag.copy()
    r = rhs.copy()
    sub, sup = tri.sub, tri.sup
    for i in range(1, m):
        if d[i - 1] == 0.0:
            raise SolverError("singular tridiagonal system (zero pivot)")
        w = sub[i - 1] / d[i - 1]
        d[i] -= w * sup[i - 1]
        r[i] -= w * r[i - 1]
    if d[-1] == 0.0:
        raise SolverError("singular tridiagonal system (zero pivot)")
    x = np.empty(m)
    x[-1] = r[-1] / d[-1]
    for i in range(m - 2, -1, -1):
        x[i] = (r[i] - sup[i] * x[i + 1]) / d[i]
    return x


class _ThomasFactor:
    """Reusable elimination multipliers for repeated solves with one matrix."""

    def __init__(self, tri: TriDiag):
        m = tri.m
        d = tri.diag.copy()
        w = np.empty(max(m - 1, 0))
        for i in range(1, m):
            if d[i - 1] == 0.0:
                raise SolverError("singular tridiagonal system (zero pivot)")
            w[i - 1] = tri.sub[i - 1] / d[i - 1]
            d[i] -= w[i - 1] * tri.sup[i - 1]
        if d[-1] == 0.0:
            raise SolverError("singular tridiagonal system (zero pivot)")
        self._d = d
        self._w = w
        self._sup = tri.sup

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        m = self._d.size
        r = np.array(rhs, dtype=float)
        for i in range(1, m):
            r[i] -= self._w[i - 1] * r[i - 1]
        x = np.empty(m)
        x[-1] = r[-1] / self._d[-1]
        for i in range(m - 2, -1, -1):
            x[i] = (r[i] - self._sup[i] * x[i + 1]) / self._d[i]
        return x


class _EigenSystem:
    """Real eigendecomposition of a tridiagonal with positive off-diagonal
    products, via the diagonal similarity that symmetrises it."""

    def __init__(self, tri: TriDiag):
        m = tri.m
        if m == 1:
            self.lam = tri.diag.copy()
            self.w = np.ones((1, 1))
            self.d = np.ones(1)
            return
        prod = tri.sub * tri.sup
        if np.any(prod <= 0):
            raise SolverError(
                "eigendecomposition requires sub*super > 0 (real-diagonalisable tridiagonal)"
            )
        d = np.ones(m)
        for k in range(m - 1):
            d[k + 1] = d[k] * np.sqrt(tri.sup[k] / tri.sub[k])
        off = np.sqrt(prod)
        try:
            lam, w = eigh_tridiagonal(tri.diag, off)
        except Exception as exc:  # pragma: no cover - scipy failure surface
            raise SolverError(f"symmetric eigenvalue solve failed: {exc}") from exc
        self.lam = lam
        self.w = w
        self.d = d

    def propagator(self, dt: float) -> "_EigenPropagator":
        return _EigenPropagator(self, dt)


class _EigenPropagator:
    """Frozen-coefficient exponential step u(dt) = e^{A dt} u + A^{-1}(e^{A dt}-I) b,
    evaluated in the eigenbasis (the inverse appears as expm1(lam dt)/lam)."""

    def __init__(self, sys_: _EigenSystem, dt: float):
        self._sys = sys_
        x = sys_.lam * dt
        self._edt = np.exp(x)
        small = np.abs(x) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.expm1(x) / sys_.lam
        self._phi = np.where(small, dt * (1.0 + 0.5 * x), phi)

    def step(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        s = self._sys
        z = s.w.T @ (s.d * u)
        beta = s.w.T @ (s.d * b)
        return (s.w @ (self._edt * z + self._phi * beta)) / s.d


@dataclass(frozen=True)
class SemiDiscrete:
    """Interior system du/dt = A u + b after boundary elimination."""

    A: TriDiag
    b: np.ndarray


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    stepper: str = "eigen"
    inner_tol: float = 1e-10
    inner_max: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.inner_tol > 0:
            raise ValueError("inner tolerance must be positive")
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}; choose from {STEPPERS}")


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of the full nodal state (boundary values reconstructed)."""

    times: np.ndarray
    states: tuple[GridFunction, ...]
    inner_counts: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))
        counts = np.array(self.inner_counts, dtype=int)
        counts.setflags(write=False)
        object.__setattr__(self, "inner_counts", counts)
        n_cells = {s.n_cells for s in self.states}
        if len(n_cells) != 1:
            raise ValueError("snapshots must share one grid")

    @property
    def n_cells(self) -> int:
        return self.states[0].n_cells

    @property
    def values(self) -> np.ndarray:
        """Snapshot matrix, one row per time."""
        return np.vstack([s.values for s in self.states])

    @property
    def final(self) -> GridFunction:
        return self.states[-1]


# -- assembly --------------------------------------------------------------


def eliminate_boundary(
    u1: float, uNm1: float, t: float, spec: ProblemSpec, h: float
) -> tuple[float, float]:
    """Boundary values implied by the one-sided Robin relations."""
    b = spec.boundary
    g0 = evaluate(b.g0, {"t": float(t)})
    g1 = evaluate(b.g1, {"t": float(t)})
    den0 = 1.0 + h * b.h0
    den1 = 1.0 + h * b.h1
    if den0 <= 0 or den1 <= 0:
        raise SolverError("boundary elimination needs 1 + h*h_i > 0")
    return (u1 - h * g0) / den0, (uNm1 - h * g1) / den1


def _mu_half(spec: ProblemSpec, N: int, t: float) -> np.ndarray:
    """mu at the N cell midpoints x_{k+1/2}."""
    mids = (np.arange(N) + 0.5) / N
    return evaluate_array(spec.mu.expr, {"x": mids, "t": float(t)})


def _matrix(spec: ProblemSpec, N: int, t: float) -> TriDiag:
    h = 1.0 / N
    b = spec.boundary
    mu = _mu_half(spec, N, t)  # mu_{1/2} .. mu_{N-1/2}
    inv_h2 = 1.0 / h**2
    diag = -(mu[:-1] + mu[1:]) * inv_h2
    sub = mu[1:-1] * inv_h2
    sup = mu[1:-1] * inv_h2
    # Robin elimination folds part of the boundary flux back onto the first
    # and last diagonal entries.
    diag[0] = -(mu[1] + mu[0] * h * b.h0 / (1.0 + h * b.h0)) * inv_h2
    diag[-1] = -(mu[-2] + mu[-1] * h * b.h1 / (1.0 + h * b.h1)) * inv_h2
    return TriDiag(sub=sub, diag=diag, sup=sup)


def _rhs_static(spec: ProblemSpec, N: int, t: float) -> np.ndarray:
    """Forcing part of b: volume term plus eliminated-boundary sources."""
    h = 1.0 / N
    b = spec.boundary
    xs = np.arange(1, N) / N
    out = evaluate_array(spec.f1, {"x": xs, "t": float(t)})
    mu = _mu_half(spec, N, t)
    g0 = evaluate(b.g0, {"t": float(t)})
    g1 = evaluate(b.g1, {"t": float(t)})
    out = out.copy()
    out[0] -= mu[0] * g0 / (h * (1.0 + h * b.h0))
    out[-1] -= mu[-1] * g1 / (h * (1.0 + h * b.h1))
    return out


def _f_interior(f: ScalarNonlinearity, u_int: np.ndarray) -> np.ndarray:
    return evaluate_array(f.expr, {"u": u_int})


def assemble(spec: ProblemSpec, N: int, t: float, u_lag) -> SemiDiscrete:
    """Interior system at time ``t`` with the reaction term lagged at ``u_lag``.

    ``u_lag`` may be a :class:`GridFunction` (interior values are used) or an
    array of the N-1 interior values.
    """
    if N < 3:
        raise ValueError("need N >= 3 for at least two interior unknowns")
    if isinstance(u_lag, GridFunction):
        u_int = u_lag.values[1:-1]
    else:
        u_int = np.asarray(u_lag, dtype=float)
        if u_int.size == N + 1:
            u_int = u_int[1:-1]
        elif u_int.size != N - 1:
            raise ValueError("lag state must carry N+1 nodal or N-1 interior values")
    A = _matrix(spec, N, t)
    b = _rhs_static(spec, N, t) - _f_interior(spec.f, u_int)
    return SemiDiscrete(A=A, b=b)


# -- linear stepping -------------------------------------------------------


def advance_linear(
    A: TriDiag, b: np.ndarray, u: np.ndarray, dt: float, stepper: str = "eigen"
) -> np.ndarray:
    """Advance du/dt = A u + b over one step of length dt.

    ``eigen`` applies the exact frozen-coefficient exponential through the
    symmetrised eigendecomposition; ``backward_euler`` solves
    (I - dt A) u+ = u + dt b by the Thomas algorithm.
    """
    u = np.asarray(u, dtype=float)
    b = np.asarray(b, dtype=float)
    if stepper == "eigen":
        return _EigenSystem(A).propagator(dt).step(u, b)
    if stepper == "backward_euler":
        m = A.m
        be = TriDiag(
            sub=-dt * A.sub, diag=1.0 - dt * A.diag, sup=-dt * A.sup
        )
        return thomas_solve(be, u + dt * b)
    raise ValueError(f"unknown stepper {stepper!r}; choose from {STEPPERS}")


class _StepWorkspace:
    """Per-solve cache: operator data is rebuilt only when mu depends on t."""

    def __init__(self, spec: ProblemSpec, N: int, cfg: StepperConfig):
        self.spec = spec
        self.N = N
        self.cfg = cfg
        self.mu_time_dependent = "t" in spec.mu.expr.free_vars
        self._static = None

    def operator(self, t_freeze: float):
        if not self.mu_time_dependent and self._static is not None:
            return self._static
        A = _matrix(self.spec, self.N, t_freeze)
        if self.cfg.stepper == "eigen":
            op = (A, _EigenSystem(A).propagator(self.cfg.dt))
        else:
            be = TriDiag(
                sub=-self.cfg.dt * A.sub,
                diag=1.0 - self.cfg.dt * A.diag,
                sup=-self.cfg.dt * A.sup,
            )
            op = (A, _ThomasFactor(be))
        if not self.mu_time_dependent:
            self._static = op
        return op

    def advance(self, op, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.cfg.stepper == "eigen":
            return op[1].step(u, b)
        return op[1].solve(u + self.cfg.dt * b)


def step_linearized(
    state: GridFunction,
    t: float,
    spec: ProblemSpec,
    cfg: StepperConfig,
    residual_log: list | None = None,
    _ws: _StepWorkspace | None = None,
) -> tuple[GridFunction, int]:
    """One time step of the lagged-reaction scheme.

    The linear data (mu, f1, g0, g1) is frozen at the step midpoint for the
    eigen stepper and at the step end for backward Euler.  Inner iterations
    stop when the sup-norm update falls below ``cfg.inner_tol``, or
    immediately once the lagged reaction values stop changing (the next
    solve would reproduce the iterate exactly; a reaction-free problem
    therefore converges in one iteration).
    """
    N = state.n_cells
    ws = _ws if _ws is not None else _StepWorkspace(spec, N, cfg)
    dt = cfg.dt
    t_freeze = t + 0.5 * dt if cfg.stepper == "eigen" else t + dt
    op = ws.operator(t_freeze)
    b_static = _rhs_static(spec, N, t_freeze)

    u_start = state.values[1:-1]
    u_prev = u_start
    f_prev = _f_interior(spec.f, u_prev)
    iterations = 0
    residual = np.inf
    for iterations in range(1, cfg.inner_max + 1):
        u_new = ws.advance(op, u_start, b_static - f_prev)
        residual = float(np.max(np.abs(u_new - u_prev)))
        if residual_log is not None:
            residual_log.append(residual)
        if residual <= cfg.inner_tol:
            u_prev = u_new
            break
        f_new = _f_interior(spec.f, u_new)
        if np.array_equal(f_new, f_prev):
            u_prev = u_new
            break
        u_prev, f_prev = u_new, f_new
    else:
        raise InnerIterationError(
            f"inner recursion did not converge within {cfg.inner_max} iterations", residual
        )

    t_next = t + dt
    left, right = eliminate_boundary(u_prev[0], u_prev[-1], t_next, spec, state.h)
    full = np.concatenate([[left], u_prev, [right]])
    return GridFunction(full), iterations


def solve(
    spec: ProblemSpec, N: int, cfg: StepperConfig, initial: GridFunction | None = None
) -> Trajectory:
    """March the lagged scheme from t=0 to the problem horizon, snapshotting
    every step.  ``initial`` overrides the sampled initial expression (used
    by perturbation audits and equilibrium tests)."""
    n_steps = round(spec.tmax / cfg.dt)
    if n_steps < 1 or abs(n_steps * cfg.dt - spec.tmax) > 1e-9 * max(1.0, spec.tmax):
        raise ValueError("dt must divide the horizon evenly")
    if initial is None:
        state = GridFunction.from_expr(spec.u0, N)
    else:
        if initial.n_cells != N:
            raise ValueError("initial state grid mismatch")
        state = initial
    ws = _StepWorkspace(spec, N, cfg)
    states = [state]
    counts = []
    for n in range(n_steps):
        state, k = step_linearized(state, n * cfg.dt, spec, cfg, _ws=ws)
        states.append(state)
        counts.append(k)
    times = np.arange(n_steps + 1) * cfg.dt
    return Trajectory(times=times, states=tuple(states), inner_counts=np.array(counts))


# -- stationary finite-difference solve -------------------------------------


def _steady_spec(
    limits: AsymptoticLimits, f: ScalarNonlinearity, h0: float, h1: float
) -> ProblemSpec:
    from .problem import BoundaryData, CoefficientField

    return ProblemSpec(
        mu=CoefficientField(limits.mu_inf),
        f=f,
        f1=limits.f1_inf,
        boundary=BoundaryData(h0=h0, h1=h1, g0=Const(limits.g0_inf), g1=Const(limits.g1_inf)),
        u0=Const(0.0),
        tmax=1.0,
    )


def steady_fd(
    limits: AsymptoticLimits,
    f: ScalarNonlinearity,
    h0: float,
    h1: float,
    N: int,
    tol: float = 1e-10,
    max_iters: int = 100,
) -> GridFunction:
    """Damped-Newton solve of the eliminated-boundary steady system
    -(mu_inf u_x)_x + f(u) = f1_inf; the returned grid shares the transient
    scheme's discretisation, so it is that scheme's exact large-time state
    for frozen limit data."""
    spec = _steady_spec(limits, f, h0, h1)
    A = _matrix(spec, N, 0.0)
    b_static = _rhs_static(spec, N, 0.0)
    h = 1.0 / N

    def residual_vec(u_int: np.ndarray) -> np.ndarray:
        return A.matvec(u_int) + b_static - _f_interior(f, u_int)

    u = np.zeros(N - 1)
    r = residual_vec(u)
    rnorm = float(np.abs(r).max())
    for it in range(1, max_iters + 1):
        if rnorm <= tol:
            break
        step = 1e-6 * (1.0 + np.abs(u))
        fprime = (_f_interior(f, u + step) - _f_interior(f, u - step)) / (2.0 * step)
        J = TriDiag(sub=A.sub, diag=A.diag - fprime, sup=A.sup)
        delta = thomas_solve(J, -r)
        lam = 1.0
        for _ in range(30):
            trial = u + lam * delta
            r_trial = residual_vec(trial)
            r_trial_norm = float(np.abs(r_trial).max())
            if r_trial_norm < rnorm:
                u, r, rnorm = trial, r_trial, r_trial_norm
                break
            lam *= 0.5
        else:
            raise NewtonError("Newton stagnated (no residual decrease)", rnorm, it)
    else:
        raise NewtonError("Newton did not reach tolerance", rnorm, max_iters)

    left, right = eliminate_boundary(u[0], u[-1], 0.0, spec, h)
    return GridFunction(np.concatenate([[left], u, [right]]))
