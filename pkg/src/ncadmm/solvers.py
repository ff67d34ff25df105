"""Deterministic and mini-batch stochastic ADMM with linearized x-updates.

All four variants share the y-update (blockwise prox), the inexact-Uzawa
x-step and the dual ascent; they differ only in how the smooth gradient
estimate is built. Runs are bitwise reproducible for a fixed seed.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfigError,
    DivergenceError,
    InputError,
    InternalInvariantError,
)
from . import metrics

VARIANTS = ("dete", "stoc", "svrg", "saga")

_DIVERGENCE_NORM = 1e12


@dataclass
class SolverConfig:
    variant: str
    eta: float
    rho: float
    r: float
    M: int
    T: int
    m: int = None  # epoch length, svrg only
    seed: int = 0
    store_saga_points: bool = False
    trace_stride: int = 1
    diagnostics: bool = False
    record_iterates: bool = False
    check_dual_identity: bool = False

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.eta <= 0 or self.rho <= 0:
            raise ConfigError("eta and rho must be > 0")
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if self.M < 1:
            raise ConfigError("mini-batch size M must be >= 1")
        if self.variant == "svrg":
            if self.m is None or self.m < 1:
                raise ConfigError("svrg requires epoch length m >= 1")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride must be >= 1")

    def validate_against(self, problem):
        cs = problem.constraints
        r_min = self.eta * self.rho * cs.norm_AtA + 1.0
        if self.r < r_min * (1.0 - 1e-12):
            raise ConfigError(
                f"r={self.r:g} below the H >= I bound "
                f"eta*rho*||A^T A|| + 1 = {r_min:g}"
            )
        if self.M > problem.n:
            raise ConfigError(f"M={self.M} exceeds sample count n={problem.n}")


@dataclass
class SolverState:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    t: int = 0
    x_prev: np.ndarray = None
    # svrg
    x_snap: np.ndarray = None
    snap_grad: np.ndarray = None
    epoch: int = 0
    # saga
    grad_table: np.ndarray = None
    psi: np.ndarray = None
    point_table: np.ndarray = None


@dataclass
class TraceRecord:
    t: int
    wall_time: float
    objective: float
    feasibility_sq: float
    dual_sq: float
    subgrad_dist_sq: float
    ifo: int
    lyapunov: float = None
    # diagnostics, populated when config.diagnostics is set
    lrho: float = None
    dx_sq: float = None
    snap_sq: float = None
    snap_prev_sq: float = None


@dataclass
class RunResult:
    trace: list
    state: SolverState
    x_rand: np.ndarray
    y_rand: np.ndarray
    t_rand: int
    iterates: list = None
    dual_identity_max: float = 0.0


def y_update(problem, x_t, lambda_t, rho):
    """argmin_y L_rho(x_t, y, lambda_t), blockwise prox (B = -I only)."""
    cs = problem.constraints
    cs.require_neg_identity_B()
    v = cs.A @ x_t - cs.c - lambda_t / rho
    return problem.regularizer.prox(np.asarray(v).ravel(), 1.0 / rho)


def x_update_uzawa(problem, x_t, y_new, lambda_t, g_hat, eta, rho, r):
    """Single inexact-Uzawa step; equals the minimizer of the linearized
    surrogate with H = rI - rho*eta*A^T A."""
    g_hat = np.asarray(g_hat, dtype=float)
    if g_hat.shape != x_t.shape:
        raise InputError("gradient estimate has the wrong dimension")
    cs = problem.constraints
    resid = cs.A @ x_t + cs.B @ y_new - cs.c - lambda_t / rho
    return x_t - (eta / r) * (g_hat + rho * (cs.A.T @ resid))


def lambda_update(x_new, y_new, lambda_t, rho, constraints):
    """lambda_{t+1} = lambda_t - rho * (A x_{t+1} + B y_{t+1} - c)."""
    return lambda_t - rho * constraints.residual(x_new, y_new)


def apply_H_over_eta(constraints, v, eta, rho, r):
    """(H / eta) v with H = rI - rho*eta*A^T A, without forming H."""
    return (r / eta) * v - rho * (constraints.A.T @ (constraints.A @ v))


def dual_identity_residual(problem, g_hat, x_old, x_new, lam_new, eta, rho, r):
    """||A^T lam_{t+1} - g_hat + (H/eta)(x_t - x_{t+1})|| / (1 + ||g_hat||)."""
    cs = problem.constraints
    lhs = cs.A.T @ lam_new - g_hat + apply_H_over_eta(
        cs, x_old - x_new, eta, rho, r
    )
    return float(np.linalg.norm(lhs)) / (1.0 + float(np.linalg.norm(g_hat)))


def stoc_gradient(problem, x, batch):
    """Mini-batch mean gradient over a with-replacement batch."""
    batch = np.asarray(batch, dtype=int)
    if batch.size == 0:
        raise ConfigError("empty mini-batch")
    return problem.grad(x, batch)


def svrg_gradient(problem, x, batch, snapshot_x, snapshot_grad):
    """Snapshot-corrected gradient estimate.

    Grouped as batch-mean + (snapshot - batch-mean-at-snapshot) so the
    correction cancels exactly (bitwise) when the batch is the full set.
    """
    g = problem.grad(x, batch)
    g_snap_batch = problem.grad(snapshot_x, batch)
    return g + (snapshot_grad - g_snap_batch)


def saga_gradient(problem, state, batch):
    """Table-corrected gradient estimate at state.x; does not mutate tables."""
    g = problem.grad(state.x, batch)
    table_mean = state.grad_table[np.asarray(batch, dtype=int)].mean(axis=0)
    return g + (state.psi - table_mean)


def saga_table_update(problem, state, batch, x_new, n):
    """Write grad f_i(x_{t+1}) for deduplicated batch indices, update psi."""
    uniq = np.unique(np.asarray(batch, dtype=int))
    new_grads = problem.grad_matrix(x_new, uniq)
    if uniq.size == n:
        state.grad_table[:] = new_grads
        state.psi = state.grad_table.mean(axis=0)
    else:
        old = state.grad_table[uniq]
        state.psi = state.psi - (old - new_grads).sum(axis=0) / n
        state.grad_table[uniq] = new_grads
    if state.point_table is not None:
        state.point_table[uniq] = x_new


def _check_saga_psi(state, rtol=1e-8):
    recomputed = state.grad_table.mean(axis=0)
    scale = max(1.0, float(np.linalg.norm(recomputed)))
    if np.linalg.norm(state.psi - recomputed) > rtol * scale:
        raise InternalInvariantError("SAGA running mean psi drifted from its table")


def init_state(problem, config):
    """Seeded standard-normal x0, y0 and zero dual start."""
    ss = np.random.SeedSequence(config.seed)
    init_ss, batch_ss, out_ss = ss.spawn(3)
    rng_init = np.random.Generator(np.random.Philox(init_ss))
    x0 = rng_init.standard_normal(problem.d)
    y0 = rng_init.standard_normal(problem.p)
    lam0 = np.zeros(problem.constraints.q)
    state = SolverState(x=x0, y=y0, lam=lam0, x_prev=x0.copy())
    return state, np.random.Generator(np.random.Philox(batch_ss)), \
        np.random.Generator(np.random.Philox(out_ss))


def _draw_batch(rng, n, M):
    # M == n degenerates to the deterministic full index set so that the
    # variance-reduced corrections cancel exactly
    if M == n:
        return np.arange(n)
    return rng.integers(0, n, size=M)


def run(problem, config, callback=None):
    """Execute the configured variant for T effective iterations.

    callback, when given, is invoked as callback(record, state) as each
    TraceRecord is recorded.
    Raises DivergenceError on NaN/Inf state or runaway norms.
    """
    config.validate_against(problem)
    n = problem.n
    cs = problem.constraints
    eta, rho, r = config.eta, config.rho, config.r
    variant = config.variant
    all_idx = problem.full_index_set()

    state, rng_batch, rng_out = init_state(problem, config)
    ifo = 0

    if variant == "saga":
        state.grad_table = problem.grad_matrix(state.x, all_idx)
        state.psi = state.grad_table.mean(axis=0)
        if config.store_saga_points:
            state.point_table = np.tile(state.x, (n, 1))
        ifo += n

    t_rand = int(rng_out.integers(1, config.T + 1)) if config.T > 0 else 0
    x_rand, y_rand = state.x.copy(), state.y.copy()

    trace = []
    iterates = [] if config.record_iterates else None
    dual_identity_max = 0.0
    solver_time = 0.0

    for t in range(config.T):
        tic = time.perf_counter()

        if variant == "svrg" and t % config.m == 0:
            state.x_snap = state.x.copy()
            state.snap_grad = problem.grad(state.x_snap, all_idx)
            state.epoch = t // config.m
            ifo += n

        y_new = y_update(problem, state.x, state.lam, rho)

        if variant == "dete":
            g_hat = problem.grad(state.x, all_idx)
            ifo += n
        elif variant == "stoc":
            batch = _draw_batch(rng_batch, n, config.M)
            g_hat = stoc_gradient(problem, state.x, batch)
            ifo += config.M
        elif variant == "svrg":
            batch = _draw_batch(rng_batch, n, config.M)
            g_hat = svrg_gradient(
                problem, state.x, batch, state.x_snap, state.snap_grad
            )
            ifo += config.M
        else:
            batch = _draw_batch(rng_batch, n, config.M)
            g_hat = saga_gradient(problem, state, batch)
            ifo += config.M

        x_new = x_update_uzawa(
            problem, state.x, y_new, state.lam, g_hat, eta, rho, r
        )
        lam_new = lambda_update(x_new, y_new, state.lam, rho, cs)

        if variant == "saga":
            saga_table_update(problem, state, batch, x_new, n)

        state.x_prev = state.x
        state.x, state.y, state.lam = x_new, y_new, lam_new
        state.t = t + 1
        solver_time += time.perf_counter() - tic

        if not (np.isfinite(x_new).all() and np.isfinite(lam_new).all()):
            raise DivergenceError("non-finite solver state", t + 1)
        if np.linalg.norm(x_new) > _DIVERGENCE_NORM:
            raise DivergenceError("primal iterate norm exceeded 1e12", t + 1)

        if t + 1 == t_rand:
            x_rand, y_rand = state.x.copy(), state.y.copy()

        if config.check_dual_identity:
            dual_identity_max = max(
                dual_identity_max,
                dual_identity_residual(
                    problem, g_hat, state.x_prev, state.x, state.lam, eta, rho, r
                ),
            )

        if iterates is not None:
            iterates.append((state.x.copy(), state.y.copy(), state.lam.copy()))

        if (t + 1) % config.trace_stride == 0 or t + 1 == config.T:
            rec = _record(
                problem, config, state, t + 1, solver_time, ifo, rho
            )
            trace.append(rec)
            if callback is not None:
                callback(rec, state)

    if variant == "saga" and config.T > 0:
        _check_saga_psi(state)

    return RunResult(
        trace=trace,
        state=state,
        x_rand=x_rand,
        y_rand=y_rand,
        t_rand=t_rand,
        iterates=iterates,
        dual_identity_max=dual_identity_max,
    )


def _record(problem, config, state, t, wall_time, ifo, rho):
    cs = problem.constraints
    obj = problem.objective(state.x, state.y)
    report = metrics.stationarity(
        problem, state.x, state.y, state.lam,
        x_prev=state.x_prev, rho=rho,
    )
    rec = TraceRecord(
        t=t,
        wall_time=wall_time,
        objective=obj,
        feasibility_sq=report.feasibility_sq,
        dual_sq=report.dual_sq,
        subgrad_dist_sq=report.subgrad_dist_sq,
        ifo=ifo,
    )
    if config.diagnostics:
        resid = cs.residual(state.x, state.y)
        rec.lrho = (
            obj
            - float(state.lam @ resid)
            + 0.5 * rho * float(resid @ resid)
        )
        dx = state.x - state.x_prev
        rec.dx_sq = float(dx @ dx)
        if config.variant == "svrg" and state.x_snap is not None:
            a = state.x - state.x_snap
            b = state.x_prev - state.x_snap
            rec.snap_sq = float(a @ a)
            rec.snap_prev_sq = float(b @ b)
        if config.variant == "saga" and state.point_table is not None:
            diff = state.x[None, :] - state.point_table
            rec.snap_sq = float(np.einsum("ij,ij->i", diff, diff).mean())
    return rec
