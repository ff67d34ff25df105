"""Stationarity residuals, Lyapunov sequences and convergence diagnostics.

Expectations in the convergence statements are replaced by single-run values
here; decrease assertions on noisy variants belong in seeded Monte-Carlo
tests, not in this module.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import CapabilityError, InputError


@dataclass
class StationarityReport:
    feasibility_sq: float
    dual_sq: float
    subgrad_dist_sq: float

    @property
    def epsilon(self):
        return max(self.feasibility_sq, self.dual_sq, self.subgrad_dist_sq)


def l1_subgrad_dist_sq(v, y, weight):
    """Squared distance of v to the subdifferential of weight*||.||_1 at y.

    Coordinates with y_i != 0 pin the subgradient to weight*sign(y_i);
    zero coordinates allow the full box [-weight, weight].
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    pinned = np.abs(v - weight * np.sign(y))
    boxed = np.maximum(np.abs(v) - weight, 0.0)
    per_coord = np.where(y != 0.0, pinned, boxed)
    return float(per_coord @ per_coord)


def subgrad_dist_sq(problem, y, lam, x=None, x_prev=None, rho=None):
    """dist(B^T lam, subdifferential of g at y)^2, blockwise.

    l1 blocks are exact; nuclear blocks use the proof-side surrogate
    ||rho * B^T A (x - x_prev)||^2 restricted to the block, which needs the
    consecutive iterates and rho.
    """
    cs = problem.constraints
    v = np.asarray(cs.B.T @ lam).ravel()
    total = 0.0
    for blk in problem.regularizer.blocks:
        vb = v[blk.start : blk.stop]
        if blk.kind == "l1":
            total += l1_subgrad_dist_sq(vb, y[blk.start : blk.stop], blk.weight)
        elif blk.kind == "nuclear":
            if x is None or x_prev is None or rho is None:
                raise CapabilityError(
                    "nuclear-norm subgradient surrogate needs x, x_prev and rho"
                )
            w = np.asarray(cs.B.T @ (cs.A @ (x - x_prev))).ravel()
            wb = rho * w[blk.start : blk.stop]
            total += float(wb @ wb)
        else:
            raise InputError(f"unsupported regularizer block kind {blk.kind!r}")
    return total


def stationarity(problem, x, y, lam, x_prev=None, rho=None):
    """Feasibility, dual and subgradient-distance residuals at (x, y, lam)."""
    cs = problem.constraints
    resid = cs.residual(x, y)
    dual = problem.grad(x) - np.asarray(cs.A.T @ lam).ravel()
    return StationarityReport(
        feasibility_sq=float(resid @ resid),
        dual_sq=float(dual @ dual),
        subgrad_dist_sq=subgrad_dist_sq(
            problem, y, lam, x=x, x_prev=x_prev, rho=rho
        ),
    )


def _require_diag(records, *fields):
    for rec in records:
        for f in fields:
            if getattr(rec, f) is None:
                raise CapabilityError(
                    f"trace records lack the {f!r} diagnostic; rerun with "
                    "diagnostics=True (and stride 1)"
                )


def lyapunov_psi(records, zeta, rho):
    """Psi_t = L_rho + (zeta/rho) ||x_t - x_{t-1}||^2 from diagnostic records."""
    _require_diag(records, "lrho", "dx_sq")
    return np.array([rec.lrho + (zeta / rho) * rec.dx_sq for rec in records])


def lyapunov_phi(records, h_schedule, m, zeta, rho):
    """Phi_t^s from svrg diagnostic records (stride-1 traces).

    h_schedule is the forward epoch schedule h_1..h_m; records carry the
    snapshot distances for the current and previous iterate.
    """
    _require_diag(records, "lrho", "dx_sq", "snap_sq", "snap_prev_sq")
    h = np.asarray(h_schedule, dtype=float)
    if h.size != m:
        raise InputError("h schedule length must equal the epoch length m")
    vals = []
    for rec in records:
        inner = (rec.t - 1) % m  # 0-based inner index; h_t uses h[inner]
        vals.append(
            rec.lrho
            + h[inner] * (rec.snap_sq + rec.snap_prev_sq)
            + (zeta / rho) * rec.dx_sq
        )
    return np.array(vals)


def lyapunov_theta(records, alpha_schedule, zeta, rho):
    """Theta_t from saga diagnostic records (stride-1, store_saga_points on).

    alpha_schedule holds alpha_1..alpha_T; snap_sq is the mean squared
    distance of x_t to the stored points at step t, the previous record
    supplies the lagged term (zero before the first step).
    """
    _require_diag(records, "lrho", "dx_sq", "snap_sq")
    alpha = np.asarray(alpha_schedule, dtype=float)
    vals = []
    prev_snap = 0.0
    for rec in records:
        if rec.t - 1 >= alpha.size:
            raise InputError("alpha schedule shorter than the trace")
        vals.append(
            rec.lrho
            + alpha[rec.t - 1] * (rec.snap_sq + prev_snap)
            + (zeta / rho) * rec.dx_sq
        )
        prev_snap = rec.snap_sq
    return np.array(vals)


def variance_diagnostics(problem, variant, x, L, M=1, snapshot_x=None,
                         snapshot_grad=None, grad_table=None, psi=None,
                         point_table=None, n_draws=2000, rng=None):
    """Empirical gradient-estimator variance vs. its closed-form bound.

    Exhaustive enumeration over single-index batches when n <= 8 and M = 1,
    Monte-Carlo with n_draws otherwise.
    """
    from . import solvers

    n = problem.n
    full_grad = problem.grad(x)
    variant = variant.lower()
    if variant == "svrg":
        if snapshot_x is None or snapshot_grad is None:
            raise CapabilityError("svrg variance diagnostics need the snapshot")
        diff = x - snapshot_x
        bound = (L**2 / M) * float(diff @ diff)

        def estimate(batch):
            return solvers.svrg_gradient(
                problem, x, batch, snapshot_x, snapshot_grad
            )
    elif variant == "saga":
        if grad_table is None or psi is None or point_table is None:
            raise CapabilityError(
                "saga variance diagnostics need grad_table, psi and point_table"
            )
        diffs = x[None, :] - point_table
        bound = (L**2 / (M * n)) * float(np.einsum("ij,ij->i", diffs, diffs).sum())
        state = solvers.SolverState(
            x=x, y=None, lam=None, grad_table=grad_table, psi=psi
        )

        def estimate(batch):
            return solvers.saga_gradient(problem, state, batch)
    else:
        raise InputError("variance diagnostics apply to svrg and saga only")

    if n <= 8 and M == 1:
        sq = [
            float(np.sum((estimate(np.array([i])) - full_grad) ** 2))
            for i in range(n)
        ]
        empirical = float(np.mean(sq))
    else:
        rng = rng or np.random.default_rng(0)
        sq = []
        for _ in range(n_draws):
            batch = rng.integers(0, n, size=M)
            d = estimate(batch) - full_grad
            sq.append(float(d @ d))
        empirical = float(np.mean(sq))
    return {"empirical_var": empirical, "bound": bound}


def rate_summary(dx_sq):
    """Running min of theta_t = ||x_{t+1}-x_t||^2 + ||x_t-x_{t-1}||^2 vs T.

    dx_sq[t] is the squared consecutive-step length at effective iteration
    t+1; the slope is a log-log least-squares fit over the tail half.
    """
    dx_sq = np.asarray(dx_sq, dtype=float)
    if dx_sq.size < 4:
        raise InputError("need at least 4 recorded steps for a rate summary")
    theta = dx_sq[1:] + dx_sq[:-1]
    running_min = np.minimum.accumulate(theta)
    tail = running_min[running_min.size // 2 :]
    ts = np.arange(running_min.size // 2, running_min.size) + 2.0
    positive = tail > 0
    if positive.sum() < 2 or np.allclose(tail[positive], tail[positive][0]):
        slope = 0.0
    else:
        slope = float(
            np.polyfit(np.log(ts[positive]), np.log(tail[positive]), 1)[0]
        )
    return {"min_theta_by_T": running_min, "slope_estimate": slope}
