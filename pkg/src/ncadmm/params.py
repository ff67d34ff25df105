"""Theory constants, feasibility certificates and parameter suggestion.

All certificate arithmetic is pure float evaluation of the closed-form
constants; nothing here runs a solver.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError
from .problems import SigmoidLoss, SmoothedMultiTaskLoss

_RHO_STAR_RTOL = 1e-9


def sigmoid_curvature_bound():
    """sup_u |d^2/du^2 1/(1+e^u)|, found by a dense 1-D scan (about 0.0962)."""
    u = np.linspace(-8.0, 8.0, 200001)
    p = expit(-u)
    return float(np.max(p * (1.0 - p) * np.abs(1.0 - 2.0 * p)))


_C_SIG = None


def _c_sig():
    global _C_SIG
    if _C_SIG is None:
        _C_SIG = sigmoid_curvature_bound()
    return _C_SIG


def estimate_lipschitz(problem):
    """Upper bound on the Lipschitz constant of the full smooth gradient."""
    loss = problem.loss
    feats = loss.features
    try:
        sq_norms = np.asarray(feats.multiply(feats).sum(axis=1)).ravel()
    except AttributeError:
        sq_norms = np.einsum("ij,ij->i", feats, feats)
    max_sq = float(sq_norms.max()) if sq_norms.size else 0.0
    if isinstance(loss, SigmoidLoss):
        return max_sq * _c_sig()
    if isinstance(loss, SmoothedMultiTaskLoss):
        # softmax hessian norm <= ||a||^2 / 2; penalty curvature <= nu1*beta/theta^2
        return max_sq * 0.5 + loss.nu1 * loss.beta / loss.theta**2
    raise ConfigError(f"no Lipschitz estimate for loss type {type(loss).__name__}")


@dataclass
class TheoryConstants:
    """All scalar constants the convergence statements are phrased in."""

    L: float
    L_tilde: float
    phi_min_A: float
    norm_AtA: float
    phi_max_H: float
    phi_min_H: float
    zeta: float
    zeta1: float
    phi_H: float
    rho_star: float
    rho_0: float
    delta: float
    gamma: float


@dataclass
class Certificate:
    """Outcome of a feasibility check for one (eta, rho, r) configuration."""

    variant: str
    accepted: bool
    gamma: float
    rho_star: float
    rho_0: float
    delta: float
    case: int
    eta_interval: tuple
    constants: TheoryConstants
    schedule: list = field(default=None)
    gamma_sequence: list = field(default=None)
    reasons: list = field(default_factory=list)

    def to_dict(self):
        out = asdict(self)
        out["eta_interval"] = list(self.eta_interval)
        return out


def _h_spectrum(constraints, eta, rho, r):
    """Eigen-range of H = r I - rho*eta*A^T A."""
    phi_max_H = r - rho * eta * constraints.phi_min_A
    phi_min_H = r - rho * eta * constraints.norm_AtA
    return phi_max_H, phi_min_H


def _base_constants(L, constraints, eta, rho, r):
    if eta <= 0 or rho <= 0 or r <= 0:
        raise ConfigError("eta, rho and r must all be > 0")
    phi_max_H, phi_min_H = _h_spectrum(constraints, eta, rho, r)
    pa = constraints.phi_min_A
    zeta = 5.0 * (L**2 * eta**2 + phi_max_H**2) / (pa * eta**2)
    zeta1 = 5.0 * phi_max_H**2 / (pa * eta**2)
    phi_H = phi_min_H**2 + 20.0 * phi_max_H**2
    return phi_max_H, phi_min_H, zeta, zeta1, phi_H


def _interval_case(L, L_eff, constraints, eta, rho, r, phi_max_H, phi_min_H, phi_H):
    """Evaluate the three-case (eta, rho) admissibility condition.

    L_eff is the shifted smoothness constant (L+1 for the plain stochastic
    case, L+1+2*h_hat / L+1+2*alpha_hat for the variance-reduced ones).
    Returns (in_interval, case, lo, hi, rho_star, rho_0, delta, reasons).
    """
    pa = constraints.phi_min_A
    reasons = []
    rho_star = (L_eff + math.sqrt(40.0 * L**2 + L_eff**2)) / (2.0 * pa)
    varphi = (L_eff + 10.0 * L**2 / (rho * pa)) - pa * rho
    delta = phi_min_H**2 + (20.0 * phi_max_H**2 / (rho * pa)) * (
        pa * rho - (L_eff + 10.0 * L**2 / (rho * pa))
    )
    rho_0 = (
        10.0
        * phi_max_H
        * (L_eff * phi_max_H + math.sqrt(L_eff**2 * phi_max_H**2 + 2.0 * L**2 * phi_H))
        / (pa * phi_H)
    )
    eta_cap = (r - 1.0) / (rho * constraints.norm_AtA)

    if abs(rho - rho_star) <= _RHO_STAR_RTOL * rho_star:
        case = 2
        lo = 10.0 * phi_max_H**2 / (rho * pa * phi_min_H)
        hi = eta_cap
        ok = lo < eta <= hi * (1.0 + 1e-12)
        if not ok:
            reasons.append(f"eta={eta:g} outside ({lo:g}, {hi:g}] at rho=rho*")
    elif rho < rho_star:
        case = 1
        if rho <= rho_0:
            reasons.append(f"rho={rho:g} <= rho_0={rho_0:g} in the rho < rho* case")
            return False, case, math.nan, math.nan, rho_star, rho_0, delta, reasons
        if delta < 0:
            reasons.append("discriminant is negative; no admissible eta exists")
            return False, case, math.nan, math.nan, rho_star, rho_0, delta, reasons
        sd = math.sqrt(delta)
        lo = (phi_min_H - sd) / varphi
        hi = (phi_min_H + sd) / varphi
        ok = lo < eta < hi
        if not ok:
            reasons.append(f"eta={eta:g} outside ({lo:g}, {hi:g})")
    else:
        case = 3
        if delta < 0:
            reasons.append("discriminant is negative; no admissible eta exists")
            return False, case, math.nan, math.nan, rho_star, rho_0, delta, reasons
        sd = math.sqrt(delta)
        lo = (phi_min_H - sd) / varphi
        hi = eta_cap
        ok = lo < eta <= hi * (1.0 + 1e-12)
        if not ok:
            reasons.append(f"eta={eta:g} outside ({lo:g}, {hi:g}]")
    return ok, case, lo, hi, rho_star, rho_0, delta, reasons


def _gamma_base(L, constraints, eta, rho, phi_max_H, phi_min_H):
    pa = constraints.phi_min_A
    return (
        phi_min_H / eta
        + pa * rho / 2.0
        - (L + 1.0) / 2.0
        - 5.0 * (L**2 * eta**2 + 2.0 * phi_max_H**2) / (rho * pa * eta**2)
    )


def _make_constants(L, constraints, eta, rho, r, rho_star, rho_0, delta, gamma):
    phi_max_H, phi_min_H, zeta, zeta1, phi_H = _base_constants(
        L, constraints, eta, rho, r
    )
    return TheoryConstants(
        L=L,
        L_tilde=L + 1.0,
        phi_min_A=constraints.phi_min_A,
        norm_AtA=constraints.norm_AtA,
        phi_max_H=phi_max_H,
        phi_min_H=phi_min_H,
        zeta=zeta,
        zeta1=zeta1,
        phi_H=phi_H,
        rho_star=rho_star,
        rho_0=rho_0,
        delta=delta,
        gamma=gamma,
    )


def stoc_feasible(L, constraints, eta, rho, r):
    """Certificate for the plain mini-batch stochastic (and deterministic) case."""
    phi_max_H, phi_min_H, zeta, zeta1, phi_H = _base_constants(
        L, constraints, eta, rho, r
    )
    ok, case, lo, hi, rho_star, rho_0, delta, reasons = _interval_case(
        L, L + 1.0, constraints, eta, rho, r, phi_max_H, phi_min_H, phi_H
    )
    gamma = _gamma_base(L, constraints, eta, rho, phi_max_H, phi_min_H)
    if gamma <= 0:
        reasons.append(f"gamma={gamma:g} <= 0")
    accepted = ok and gamma > 0
    return Certificate(
        variant="stoc",
        accepted=accepted,
        gamma=gamma,
        rho_star=rho_star,
        rho_0=rho_0,
        delta=delta,
        case=case,
        eta_interval=(lo, hi),
        constants=_make_constants(
            L, constraints, eta, rho, r, rho_star, rho_0, delta, gamma
        ),
        reasons=reasons,
    )


def svrg_h_schedule(L, constraints, rho, M, m, beta):
    """Backward recursion h_m, ..., h_1 (returned in forward order h_1..h_m)."""
    if m < 1:
        raise ConfigError("epoch length m must be >= 1")
    if beta <= 0:
        raise ConfigError("beta must be > 0")
    pa = constraints.phi_min_A
    h = np.empty(m)
    h[m - 1] = 10.0 * L**2 / (pa * rho * M)
    step = (10.0 + pa * rho) * L**2 / (2.0 * rho * pa * M)
    for t in range(m - 2, -1, -1):
        h[t] = (2.0 + beta) * h[t + 1] + step
    return h


def svrg_feasible(L, constraints, eta, rho, r, m, M, beta=1.0):
    """Certificate for mini-batch SVRG (epoch schedule h plus Gamma sequence)."""
    h = svrg_h_schedule(L, constraints, rho, M, m, beta)
    # steady-state schedule: h_1 of the next epoch equals h[0]
    candidates = [(1.0 + 1.0 / beta) * h[t + 1] for t in range(m - 1)]
    candidates.append(float(h[0]))
    h_hat = min(candidates)
    phi_max_H, phi_min_H, zeta, zeta1, phi_H = _base_constants(
        L, constraints, eta, rho, r
    )
    ok, case, lo, hi, rho_star, rho_0, delta, reasons = _interval_case(
        L, L + 1.0 + 2.0 * h_hat, constraints, eta, rho, r,
        phi_max_H, phi_min_H, phi_H,
    )
    pa = constraints.phi_min_A
    base = (
        phi_min_H / eta
        + pa * rho / 2.0
        - (L + 1.0) / 2.0
        - (zeta + zeta1) / rho
    )
    gammas = [base - (1.0 + 1.0 / beta) * h[t + 1] for t in range(m - 1)]
    gammas.append(base - float(h[0]))
    gamma_min = min(gammas)
    if gamma_min <= 0:
        reasons.append(f"min Gamma = {gamma_min:g} <= 0")
    accepted = ok and gamma_min > 0
    return Certificate(
        variant="svrg",
        accepted=accepted,
        gamma=gamma_min,
        rho_star=rho_star,
        rho_0=rho_0,
        delta=delta,
        case=case,
        eta_interval=(lo, hi),
        constants=_make_constants(
            L, constraints, eta, rho, r, rho_star, rho_0, delta, gamma_min
        ),
        schedule=[float(v) for v in h],
        gamma_sequence=[float(v) for v in gammas],
        reasons=reasons,
    )


def saga_alpha_schedule(L, constraints, rho, n, M, T, beta):
    """Backward recursion alpha_T, ..., alpha_1 with alpha_{T+1} = 0."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not 1 <= M <= n:
        raise ConfigError("mini-batch size M must satisfy 1 <= M <= n")
    if beta <= 0:
        raise ConfigError("beta must be > 0")
    pa = constraints.phi_min_A
    const = (10.0 * L**2 + pa * rho * L**2) / (2.0 * rho * pa * M)
    factor = (2.0 * n - M) / n + (n - M) * beta / n
    alpha = np.empty(T + 1)
    alpha[T] = 0.0
    for t in range(T - 1, -1, -1):
        alpha[t] = const + factor * alpha[t + 1]
    return alpha  # alpha[t-1] is the step-t weight; alpha[T] is the zero boundary


def saga_feasible(L, constraints, eta, rho, r, T, n, M, beta=1.0):
    """Certificate for mini-batch SAGA (alpha schedule plus Gamma sequence)."""
    alpha = saga_alpha_schedule(L, constraints, rho, n, M, T, beta)
    frac = (n - M) / n * (1.0 + 1.0 / beta)
    alpha_hat = min(frac * alpha[t] for t in range(1, T + 1))
    phi_max_H, phi_min_H, zeta, zeta1, phi_H = _base_constants(
        L, constraints, eta, rho, r
    )
    ok, case, lo, hi, rho_star, rho_0, delta, reasons = _interval_case(
        L, L + 1.0 + 2.0 * alpha_hat, constraints, eta, rho, r,
        phi_max_H, phi_min_H, phi_H,
    )
    pa = constraints.phi_min_A
    base = (
        phi_min_H / eta
        + pa * rho / 2.0
        - (L + 1.0) / 2.0
        - (zeta + zeta1) / rho
    )
    gammas = [base - frac * alpha[t] for t in range(1, T + 1)]
    gamma_min = min(gammas)
    if gamma_min <= 0:
        reasons.append(f"min Gamma = {gamma_min:g} <= 0")
    accepted = ok and gamma_min > 0
    return Certificate(
        variant="saga",
        accepted=accepted,
        gamma=gamma_min,
        rho_star=rho_star,
        rho_0=rho_0,
        delta=delta,
        case=case,
        eta_interval=(lo, hi),
        constants=_make_constants(
            L, constraints, eta, rho, r, rho_star, rho_0, delta, gamma_min
        ),
        schedule=[float(v) for v in alpha[:T]],
        gamma_sequence=[float(v) for v in gammas],
        reasons=reasons,
    )


def check_feasible(variant, L, constraints, eta, rho, r, *, n=None, M=None,
                   m=None, T=None, beta=1.0):
    """Dispatch to the per-variant certificate."""
    variant = variant.lower()
    if variant in ("dete", "stoc"):
        return stoc_feasible(L, constraints, eta, rho, r)
    if variant == "svrg":
        if m is None or M is None:
            raise ConfigError("svrg certificate needs m and M")
        return svrg_feasible(L, constraints, eta, rho, r, m, M, beta=beta)
    if variant == "saga":
        if T is None or n is None or M is None:
            raise ConfigError("saga certificate needs T, n and M")
        return saga_feasible(L, constraints, eta, rho, r, T, n, M, beta=beta)
    raise ConfigError(f"unknown variant {variant!r}")


def min_admissible_r(constraints, eta, rho):
    """Smallest r with H = rI - rho*eta*A^T A >= I."""
    return eta * rho * constraints.norm_AtA + 1.0


_ETA_GRID = [2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 5e-3, 2e-3, 1e-3]
_RHO_MULTS = [2.0, 3.0, 5.0, 10.0, 1.5, 20.0, 50.0]


def suggest_params(problem, variant, M=None, T=1000, m=None, beta=1.0):
    """Search for a certified (eta, rho, r) and return it with its certificate.

    Starts from rho = 2*rho* (third interval case) with r at its minimum and
    falls back to a log grid over (eta, rho). Raises ConfigError with the
    evaluated grid when nothing certifies.
    """
    from .solvers import SolverConfig  # local import to avoid a cycle

    L = estimate_lipschitz(problem)
    if L <= 0:
        raise ConfigError("estimated Lipschitz constant is 0; nothing to certify")
    cs = problem.constraints
    n = problem.n
    variant = variant.lower()
    if M is None:
        M = n if variant == "dete" else max(1, min(n, 100))
    if variant == "svrg" and m is None:
        m = max(1, n // M)
    rho_star_base = (L + 1.0 + math.sqrt(40.0 * L**2 + (L + 1.0) ** 2)) / (
        2.0 * cs.phi_min_A
    )
    # the svrg epoch schedule grows geometrically in m and the saga schedule
    # in T unless M = n, so fall back to shorter epochs / full batches when
    # the requested sizes never certify
    if variant == "svrg":
        mm, batch_sizes = m, [M]
        epoch_lengths = []
        while mm >= 1:
            epoch_lengths.append(mm)
            mm //= 2
    elif variant == "saga":
        epoch_lengths = [None]
        batch_sizes = [M] if M == n else [M, n]
    else:
        epoch_lengths, batch_sizes = [None], [M]

    tried = []
    for mult in _RHO_MULTS:
        rho = mult * rho_star_base
        for eta in _ETA_GRID:
            r = min_admissible_r(cs, eta, rho)
            for M_try in batch_sizes:
                for m_try in epoch_lengths:
                    cert = check_feasible(
                        variant, L, cs, eta, rho, r,
                        n=n, M=M_try, m=m_try, T=T, beta=beta,
                    )
                    tried.append((eta, rho, cert.accepted))
                    if cert.accepted:
                        cfg = SolverConfig(
                            variant=variant, eta=eta, rho=rho, r=r,
                            M=M_try, T=T,
                            m=m_try if variant == "svrg" else None,
                        )
                        return cfg, cert
    grid = ", ".join(f"(eta={e:g}, rho={p:g})" for e, p, _ in tried)
    raise ConfigError(
        f"no feasible (eta, rho) found for variant {variant!r}; tried {grid}"
    )


def empirical_sigma_sq(problem, x):
    """max_i ||grad f_i(x) - grad f(x)||^2, a surrogate for the oracle variance.

    An estimate only, never a certified bound.
    """
    G = problem.grad_matrix(x, problem.full_index_set())
    g = problem.grad(x)
    diffs = G - g[None, :]
    return float(np.max(np.einsum("ij,ij->i", diffs, diffs)))
