"""P1 finite-element semidiscretisation with lagged-reaction implicit stepping.

The weak form tested against hat functions w_j reads

    d/dt <u, w_j> + a(t; u, w_j) + <f(u), w_j>
        = <f1(t), w_j> - mu(0,t) g0(t) w_j(0) - mu(1,t) g1(t) w_j(1),

which the hat basis turns into M c' + K(t) c + F(c) = L(t).  Stepping is
implicit Euler in the linear part with the reaction lagged exactly as in
the finite-difference scheme: (M + dt K) c+ = M c + dt L(t+dt, c_lag),
iterated until the update stalls.  Mass and stiffness integrals use exact
hat-product integration and 2-point Gauss quadrature of mu respectively;
the reaction and forcing loads use 2-point Gauss with f composed with the
P1 interpolant.

``energy_traces`` accumulates the two discrete energy functionals of the
a-priori analysis and audits their Gronwall bounds with constants computed
from the problem data alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import evaluate, evaluate_array, numeric_partial
from .forms import GridFunction, form_constants, h1_norm, l2_norm, lp_norm_p
from .problem import GrowthBounds, ProblemSpec, space_time_lattice
from .fdm import InnerIterationError, StepperConfig, Trajectory, TriDiag, _ThomasFactor

__all__ = [
    "FemBasis",
    "GalerkinState",
    "EnergyTrace",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load",
    "step_imex",
    "solve",
    "energy_traces",
]

# 2-point Gauss on a unit element: abscissae as barycentric weights of the
# right node, quadrature weights are both 1/2.
_G_RIGHT = np.array([0.5 * (1.0 - 1.0 / np.sqrt(3.0)), 0.5 * (1.0 + 1.0 / np.sqrt(3.0))])
_G_LEFT = 1.0 - _G_RIGHT


@dataclass(frozen=True)
class FemBasis:
    """Uniform P1 hat basis with m_cells elements (m_cells + 1 nodes)."""

    m_cells: int

    def __post_init__(self):
        if self.m_cells < 2:
            raise ValueError("need at least 2 elements")

    @property
    def h(self) -> float:
        return 1.0 / self.m_cells

    @property
    def n_nodes(self) -> int:
        return self.m_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) / self.m_cells

    def gauss_points(self) -> np.ndarray:
        """Quadrature abscissae, shape (2, m_cells)."""
        left = np.arange(self.m_cells) * self.h
        return left[None, :] + self.h * _G_RIGHT[:, None]

    def interpolate_at_gauss(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        return _G_LEFT[:, None] * c[:-1][None, :] + _G_RIGHT[:, None] * c[1:][None, :]

    def load_vector(self, gauss_values: np.ndarray) -> np.ndarray:
        """Assemble <phi, w_j> from phi sampled at the Gauss points."""
        out = np.zeros(self.n_nodes)
        contrib = 0.5 * self.h * gauss_values
        out[:-1] += contrib[0] * _G_LEFT[0] + contrib[1] * _G_LEFT[1]
        out[1:] += contrib[0] * _G_RIGHT[0] + contrib[1] * _G_RIGHT[1]
        return out


@dataclass(frozen=True)
class GalerkinState:
    coeffs: np.ndarray
    t: float

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def assemble_mass(basis: FemBasis) -> TriDiag:
    """Exact P1 mass matrix: interior row (h/6)[1, 4, 1], end diagonal 2h/6."""
    h = basis.h
    diag = np.full(basis.n_nodes, 4.0 * h / 6.0)
    diag[0] = diag[-1] = 2.0 * h / 6.0
    off = np.full(basis.m_cells, h / 6.0)
    return TriDiag(sub=off, diag=diag, sup=off.copy())


def _element_mu_integrals(spec: ProblemSpec, basis: FemBasis, t: float) -> np.ndarray:
    """Integral of mu over each element by 2-point Gauss."""
    xg = basis.gauss_points()
    mug = evaluate_array(spec.mu.expr, {"x": xg, "t": float(t)})
    return 0.5 * basis.h * (mug[0] + mug[1])


def assemble_stiffness(t: float, spec: ProblemSpec, basis: FemBasis) -> TriDiag:
    """Stiffness of the Robin form: flux integrals plus the boundary scalars
    h0 mu(0,t) and h1 mu(1,t) on the first and last diagonal entries."""
    elem = _element_mu_integrals(spec, basis, t) / basis.h**2
    diag = np.zeros(basis.n_nodes)
    diag[:-1] += elem
    diag[1:] += elem
    off = -elem
    b = spec.boundary
    diag[0] += b.h0 * float(evaluate_array(spec.mu.expr, {"x": 0.0, "t": float(t)}))
    diag[-1] += b.h1 * float(evaluate_array(spec.mu.expr, {"x": 1.0, "t": float(t)}))
    return TriDiag(sub=off, diag=diag, sup=off.copy())


def _reaction_at_gauss(spec: ProblemSpec, basis: FemBasis, coeffs: np.ndarray) -> np.ndarray:
    return evaluate_array(spec.f.expr, {"u": basis.interpolate_at_gauss(coeffs)})


def assemble_load(t: float, spec: ProblemSpec, basis: FemBasis, u_lag) -> np.ndarray:
    """Forcing minus lagged reaction minus weighted boundary sources."""
    coeffs = u_lag.coeffs if isinstance(u_lag, GalerkinState) else np.asarray(u_lag, dtype=float)
    xg = basis.gauss_points()
    f1g = evaluate_array(spec.f1, {"x": xg, "t": float(t)})
    load = basis.load_vector(f1g - _reaction_at_gauss(spec, basis, coeffs))
    b = spec.boundary
    mu0t = float(evaluate_array(spec.mu.expr, {"x": 0.0, "t": float(t)}))
    mu1t = float(evaluate_array(spec.mu.expr, {"x": 1.0, "t": float(t)}))
    load[0] -= mu0t * float(evaluate(b.g0, {"t": float(t)}))
    load[-1] -= mu1t * float(evaluate(b.g1, {"t": float(t)}))
    return load


class _GalWorkspace:
    def __init__(self, spec: ProblemSpec, basis: FemBasis, cfg: StepperConfig):
        self.spec = spec
        self.basis = basis
        self.cfg = cfg
        self.mass = assemble_mass(basis)
        self.mu_time_dependent = "t" in spec.mu.expr.free_vars
        self._static = None

    def system(self, t_freeze: float):
        """(stiffness, factored M + dt K) at the freeze time, cached when static."""
        if not self.mu_time_dependent and self._static is not None:
            return self._static
        K = assemble_stiffness(t_freeze, self.spec, self.basis)
        dt = self.cfg.dt
        sys_ = TriDiag(
            sub=self.mass.sub + dt * K.sub,
            diag=self.mass.diag + dt * K.diag,
            sup=self.mass.sup + dt * K.sup,
        )
        out = (K, _ThomasFactor(sys_))
        if not self.mu_time_dependent:
            self._static = out
        return out


def step_imex(
    state: GalerkinState,
    spec: ProblemSpec,
    basis: FemBasis,
    cfg: StepperConfig,
    residual_log: list | None = None,
    _ws: _GalWorkspace | None = None,
) -> tuple[GalerkinState, int]:
    """One implicit Euler step with the reaction lagged; same stopping rule as
    the finite-difference inner recursion (including the immediate fixed
    point when the lagged reaction values stop changing)."""
    ws = _ws if _ws is not None else _GalWorkspace(spec, basis, cfg)
    dt = cfg.dt
    te = state.t + dt
    _, factor = ws.system(te)
    mass_c = ws.mass.matvec(state.coeffs)

    xg = basis.gauss_points()
    f1g = evaluate_array(spec.f1, {"x": xg, "t": te})
    b = spec.boundary
    bc = np.zeros(basis.n_nodes)
    bc[0] -= float(evaluate_array(spec.mu.expr, {"x": 0.0, "t": te})) * float(
        evaluate(b.g0, {"t": te})
    )
    bc[-1] -= float(evaluate_array(spec.mu.expr, {"x": 1.0, "t": te})) * float(
        evaluate(b.g1, {"t": te})
    )

    c_prev = state.coeffs
    react_prev = _reaction_at_gauss(spec, basis, c_prev)
    iterations = 0
    residual = np.inf
    for iterations in range(1, cfg.inner_max + 1):
        load = basis.load_vector(f1g - react_prev) + bc
        c_new = factor.solve(mass_c + dt * load)
        residual = float(np.max(np.abs(c_new - c_prev)))
        if residual_log is not None:
            residual_log.append(residual)
        if residual <= cfg.inner_tol:
            c_prev = c_new
            break
        react_new = _reaction_at_gauss(spec, basis, c_new)
        if np.array_equal(react_new, react_prev):
            c_prev = c_new
            break
        c_prev, react_prev = c_new, react_new
    else:
        raise InnerIterationError(
            f"inner recursion did not converge within {cfg.inner_max} iterations", residual
        )
    return GalerkinState(coeffs=c_prev, t=te), iterations


def solve(
    spec: ProblemSpec, basis: FemBasis, cfg: StepperConfig, initial: GridFunction | None = None
) -> Trajectory:
    """March the semidiscrete system over the horizon; initial data is the
    nodal interpolant of the initial expression unless overridden."""
    n_steps = round(spec.tmax / cfg.dt)
    if n_steps < 1 or abs(n_steps * cfg.dt - spec.tmax) > 1e-9 * max(1.0, spec.tmax):
        raise ValueError("dt must divide the horizon evenly")
    if initial is None:
        coeffs = evaluate_array(spec.u0, {"x": basis.nodes})
    else:
        if initial.n_cells != basis.m_cells:
            raise ValueError("initial state grid mismatch")
        coeffs = initial.values
    state = GalerkinState(coeffs=coeffs, t=0.0)
    ws = _GalWorkspace(spec, basis, cfg)
    states = [GridFunction(state.coeffs)]
    counts = []
    for _ in range(n_steps):
        state, k = step_imex(state, spec, basis, cfg, _ws=ws)
        states.append(GridFunction(state.coeffs))
        counts.append(k)
    times = np.arange(n_steps + 1) * cfg.dt
    return Trajectory(times=times, states=tuple(states), inner_counts=np.array(counts))


# -- energy traces ----------------------------------------------------------


@dataclass(frozen=True)
class EnergyTrace:
    """Discrete energy functionals and their a-priori Gronwall envelopes.

    ``s_values[n]`` accumulates the squared L2 norm plus the dissipation and
    superlinear-absorption integrals up to snapshot n; ``x_values`` carries
    the t-weighted H1 norm plus the integral of the squared t-weighted time
    derivative.  The envelope constants are computed from the problem data
    alone (not from the realised trajectory); the X audit tolerates 5%
    relative slack because the time derivative is approximated by finite
    differences of the coefficients.
    """

    times: np.ndarray
    s_values: np.ndarray
    x_values: np.ndarray
    s_bound: np.ndarray
    x_bound: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    c_t1: float
    c_t2_integral: float
    cbar_t1: float
    cbar_t2_integral: float
    s_ok: bool
    x_ok: bool


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _mu_c1_norm(spec: ProblemSpec) -> float:
    """Sampled C^1 norm of mu: sup |mu| + sup |mu_x| + sup |mu_t|."""
    xs, ts = space_time_lattice(spec.tmax, nx=26, nt=26)
    sup_mu = 0.0
    sup_mx = 0.0
    sup_mt = 0.0
    has_x = "x" in spec.mu.expr.free_vars
    has_t = "t" in spec.mu.expr.free_vars
    for t in ts:
        vals = evaluate_array(spec.mu.expr, {"x": xs, "t": float(t)})
        sup_mu = max(sup_mu, float(np.abs(vals).max()))
        for x in xs:
            pt = {"x": float(x), "t": float(t)}
            if has_x:
                sup_mx = max(sup_mx, abs(float(numeric_partial(spec.mu.expr, "x", pt))))
            if has_t:
                sup_mt = max(sup_mt, abs(float(numeric_partial(spec.mu.expr, "t", pt))))
    return sup_mu + sup_mx + sup_mt


def energy_traces(traj: Trajectory, spec: ProblemSpec, bounds: GrowthBounds) -> EnergyTrace:
    """Accumulate the two energy functionals along ``traj`` and audit their
    Gronwall envelopes at every snapshot."""
    times = traj.times
    dt = np.diff(times)
    if times.size < 3:
        raise ValueError("need at least three snapshots for the energy audit")
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ValueError("energy audit expects a uniform snapshot spacing")
    consts = form_constants(spec)
    a0, a_t, a_t_tilde = consts.a0, consts.a_T, consts.a_T_tilde
    T = float(times[-1])
    b = spec.boundary

    l2_sq = np.array([l2_norm(s) ** 2 for s in traj.states])
    h1_sq = np.array([h1_norm(s) ** 2 for s in traj.states])
    lp_int = np.array([lp_norm_p(s, bounds.p) for s in traj.states])
    s_values = l2_sq + a0 * _cumtrapz(h1_sq, times) + 2.0 * bounds.C1 * _cumtrapz(lp_int, times)

    # forcing L2(x) norms at snapshot times on the trajectory's grid
    nodes = traj.states[0].nodes
    w = np.full(nodes.size, traj.states[0].h)
    w[0] = w[-1] = 0.5 * traj.states[0].h
    f1_l2 = np.array(
        [
            float(np.sqrt(np.sum(w * evaluate_array(spec.f1, {"x": nodes, "t": float(t)}) ** 2)))
            for t in times
        ]
    )

    _, t_lat = space_time_lattice(spec.tmax)
    sup_g0 = float(max(abs(evaluate(b.g0, {"t": float(t)})) for t in t_lat))
    sup_g1 = float(max(abs(evaluate(b.g1, {"t": float(t)})) for t in t_lat))
    sup_mu = a_t / (1.0 + 2.0 * b.h0 + 2.0 * b.h1)

    c0 = float(l2_sq[0])
    f1_l1l2 = float(np.trapz(f1_l2, times))
    c_t1 = (
        c0
        + 2.0 * T * bounds.C1prime
        + f1_l1l2
        + (4.0 / a0) * T * sup_mu**2 * (sup_g0**2 + sup_g1**2)
    )
    c_t2_cum = _cumtrapz(f1_l2, times)
    s_bound = c_t1 * np.exp(c_t2_cum)
    s_ok = bool(np.all(s_values <= s_bound * (1.0 + 1e-9) + 1e-12))

    # t-weighted estimate
    coeffs = traj.values
    du = np.empty_like(coeffs)
    du[1:-1] = (coeffs[2:] - coeffs[:-2]) / (times[2:, None] - times[:-2, None])
    du[0] = (coeffs[1] - coeffs[0]) / (times[1] - times[0])
    du[-1] = (coeffs[-1] - coeffs[-2]) / (times[-1] - times[-2])
    du_l2_sq = np.array([float(np.sum(w * row**2)) for row in du])
    x_values = times**2 * h1_sq + _cumtrapz(times**2 * du_l2_sq, times)

    psi0 = np.array(
        [1.0 + abs(float(numeric_partial(b.g0, "t", {"t": float(t)}))) for t in times]
    )
    psi1 = np.array(
        [1.0 + abs(float(numeric_partial(b.g1, "t", {"t": float(t)}))) for t in times]
    )

    s_total = float(c_t1 * np.exp(c_t2_cum[-1]))
    mu_c1 = _mu_c1_norm(spec)
    beta = a0 / 4.0
    m0 = spec.f.m0 if spec.f.m0 is not None else 0.0
    k1 = 2.0 * T**2 * m0 + 4.0 * T * bounds.C2 * (
        T * np.sqrt(s_total) + s_total / (2.0 * bounds.p * bounds.C1)
    )
    k2 = 2.0 * T * a_t * s_total / a0
    k3 = T**2 * a_t_tilde * s_total / a0
    k4 = T**2 * float(np.trapz(f1_l2**2, times))
    c_psi0 = mu_c1 * ((2.0 + T) * sup_g0 + T)
    c_psi1 = mu_c1 * ((2.0 + T) * sup_g1 + T)
    b0 = (2.0 / beta) * T**2 * sup_mu**2 * sup_g0**2 + 2.0 * c_psi0**2 * float(
        np.trapz(psi0, times)
    )
    b1 = (2.0 / beta) * T**2 * sup_mu**2 * sup_g1**2 + 2.0 * c_psi1**2 * float(
        np.trapz(psi1, times)
    )
    cbar_t1 = (1.0 + 2.0 / a0) * (k1 + k2 + k3 + k4 + b0 + b1)
    cbar_t2_cum = (1.0 + 2.0 / a0) * _cumtrapz(psi0 + psi1, times)
    x_bound = cbar_t1 * np.exp(cbar_t2_cum)
    x_ok = bool(np.all(x_values <= x_bound * 1.05 + 1e-12))

    return EnergyTrace(
        times=times,
        s_values=s_values,
        x_values=x_values,
        s_bound=s_bound,
        x_bound=x_bound,
        psi0=psi0,
        psi1=psi1,
        c_t1=float(c_t1),
        c_t2_integral=float(c_t2_cum[-1]),
        cbar_t1=float(cbar_t1),
        cbar_t2_integral=float(cbar_t2_cum[-1]),
        s_ok=s_ok,
        x_ok=x_ok,
    )
