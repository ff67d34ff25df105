"""Losses, regularizers, constraint systems and proximal operators.

Everything here is read-only after construction, so instances can be shared
freely between solver runs and diagnostic code.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, logsumexp

from .exceptions import (
    ConfigError,
    InputError,
    NumericalError,
    UnsupportedConstraintError,
)

_SPARSE_DENSITY_CUTOFF = 0.10


def _as_matrix(A):
    """Return A as csr when it is sparse enough, dense float array otherwise."""
    if sp.issparse(A):
        A = A.tocsr().astype(float)
        density = A.nnz / (A.shape[0] * A.shape[1])
        if density >= _SPARSE_DENSITY_CUTOFF:
            return A.toarray()
        return A
    A = np.asarray(A, dtype=float)
    if A.size >= 4:
        density = np.count_nonzero(A) / A.size
        if density < _SPARSE_DENSITY_CUTOFF:
            return sp.csr_matrix(A)
    return A


class ConstraintSystem:
    """The linear coupling Ax + By = c with cached spectral data of A^T A.

    A must have full column rank; construction fails otherwise because every
    theory constant downstream divides by the smallest eigenvalue of A^T A.
    """

    def __init__(self, A, B, c):
        self.A = _as_matrix(A)
        self.B = _as_matrix(B)
        self.c = np.asarray(c, dtype=float)
        q, d = self.A.shape
        if self.B.shape[0] != q:
            raise ConfigError(
                f"B has {self.B.shape[0]} rows, expected {q} to match A"
            )
        if self.c.shape != (q,):
            raise ConfigError(f"c has shape {self.c.shape}, expected ({q},)")
        self._b_neg_eye = None
        AtA = self.A.T @ self.A
        if sp.issparse(AtA):
            AtA = AtA.toarray()
        self.AtA = np.asarray(AtA)
        evals = np.linalg.eigvalsh(self.AtA)
        self.phi_min_A = float(evals[0])
        self.norm_AtA = float(evals[-1])
        if self.phi_min_A <= 1e-10 * max(1.0, self.norm_AtA):
            raise ConfigError(
                "A is (numerically) column rank deficient: "
                f"smallest eigenvalue of A^T A is {self.phi_min_A:.3e}"
            )

    @property
    def q(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def b_is_neg_identity(self):
        if self._b_neg_eye is None:
            B = self.B
            if B.shape[0] != B.shape[1]:
                self._b_neg_eye = False
            else:
                diff = B + sp.identity(B.shape[0], format="csr")
                if sp.issparse(diff):
                    self._b_neg_eye = diff.nnz == 0 or abs(diff).max() == 0.0
                else:
                    self._b_neg_eye = not np.any(diff)
        return self._b_neg_eye

    def residual(self, x, y):
        """Ax + By - c."""
        return self.A @ x + self.B @ y - self.c

    def require_neg_identity_B(self):
        if not self.b_is_neg_identity:
            raise UnsupportedConstraintError(
                "closed-form y-update requires B = -I"
            )


def _check_index_set(index_set, n):
    idx = np.asarray(index_set, dtype=int)
    if idx.ndim != 1 or idx.size == 0:
        raise InputError("index set must be a non-empty 1-D sequence")
    if idx.min() < 0 or idx.max() >= n:
        raise InputError(f"sample index out of range [0, {n})")
    return idx


class SigmoidLoss:
    """Average of per-sample sigmoid losses 1 / (1 + exp(b_i a_i^T x)).

    Nonconvex and smooth; values lie in (0, 1) for every sample.
    """

    def __init__(self, features, labels):
        self.features = _as_matrix(features)
        self.labels = np.asarray(labels, dtype=float)
        if set(np.unique(self.labels)) - {-1.0, 1.0}:
            raise ConfigError("sigmoid loss labels must be in {-1, +1}")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ConfigError("feature/label count mismatch")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def _margins(self, x, idx):
        return self.labels[idx] * (self.features[idx] @ x)

    def value(self, x, index_set):
        idx = _check_index_set(index_set, self.n)
        # 1/(1+e^u) = expit(-u), overflow safe on both tails
        return float(np.mean(expit(-self._margins(x, idx))))

    def grad(self, x, index_set):
        idx = _check_index_set(index_set, self.n)
        u = self._margins(x, idx)
        p = expit(-u)
        coef = -self.labels[idx] * p * (1.0 - p)
        return np.asarray(self.features[idx].T @ coef).ravel() / idx.size

    def grad_matrix(self, x, index_set):
        """Per-sample gradients stacked as rows (|I| x d)."""
        idx = _check_index_set(index_set, self.n)
        u = self._margins(x, idx)
        p = expit(-u)
        coef = -self.labels[idx] * p * (1.0 - p)
        rows = self.features[idx]
        if sp.issparse(rows):
            return rows.multiply(coef[:, None]).toarray()
        return coef[:, None] * rows


class SmoothedMultiTaskLoss:
    """Multinomial logistic loss plus the smoothed log-sum sparsity penalty.

    Operates on x = vec(X) with X of shape (classes, d_features); the penalty
    nu1 * (sum kappa(|X_ij|) - kappa0 ||X||_1) with kappa(a) = beta*log(1+a/theta)
    is concave, nonpositive, and C^1 with gradient 0 at X = 0.
    """

    def __init__(self, features, labels, classes, nu1, beta=1.0, theta=1.0):
        if beta <= 0 or theta <= 0:
            raise ConfigError("log-sum parameters beta, theta must be > 0")
        if nu1 < 0:
            raise ConfigError("penalty weight nu1 must be >= 0")
        self.features = _as_matrix(features)
        self.labels = np.asarray(labels, dtype=int)
        self.classes = int(classes)
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= classes
        ):
            raise ConfigError("class labels must lie in [0, classes)")
        self.nu1 = float(nu1)
        self.beta = float(beta)
        self.theta = float(theta)

    @property
    def kappa0(self):
        return self.beta / self.theta

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d_features(self):
        return self.features.shape[1]

    @property
    def d(self):
        return self.classes * self.d_features

    def _as_X(self, x):
        return np.asarray(x, dtype=float).reshape(self.classes, self.d_features)

    def penalty_value(self, X):
        absX = np.abs(X)
        kap = self.beta * np.log1p(absX / self.theta)
        return self.nu1 * float(kap.sum() - self.kappa0 * absX.sum())

    def penalty_grad(self, X):
        absX = np.abs(X)
        return self.nu1 * np.sign(X) * (
            self.beta / (self.theta + absX) - self.beta / self.theta
        )

    def _logits(self, X, idx):
        Z = self.features[idx] @ X.T
        return np.asarray(Z)

    def value(self, x, index_set):
        idx = _check_index_set(index_set, self.n)
        X = self._as_X(x)
        Z = self._logits(X, idx)
        lse = logsumexp(Z, axis=1)
        picked = Z[np.arange(idx.size), self.labels[idx]]
        return float(np.mean(lse - picked)) + self.penalty_value(X)

    def _softmax_residual(self, X, idx):
        Z = self._logits(X, idx)
        Z -= Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=1, keepdims=True)
        P[np.arange(idx.size), self.labels[idx]] -= 1.0
        return P

    def grad(self, x, index_set):
        idx = _check_index_set(index_set, self.n)
        X = self._as_X(x)
        P = self._softmax_residual(X, idx)
        G = np.asarray(P.T @ self.features[idx]) / idx.size
        G += self.penalty_grad(X)
        return G.ravel()

    def grad_matrix(self, x, index_set):
        idx = _check_index_set(index_set, self.n)
        X = self._as_X(x)
        P = self._softmax_residual(X, idx)
        feats = self.features[idx]
        if sp.issparse(feats):
            feats = feats.toarray()
        G = np.einsum("ic,ij->icj", P, feats)
        G += self.penalty_grad(X)[None, :, :]
        return G.reshape(idx.size, self.d)


@dataclass(frozen=True)
class L1Block:
    start: int
    stop: int
    weight: float
    kind: str = field(default="l1", init=False)

    def value(self, y):
        return self.weight * float(np.abs(y).sum())

    def prox(self, v, scale):
        return prox_l1(v, self.weight * scale)


@dataclass(frozen=True)
class NuclearNormBlock:
    start: int
    stop: int
    weight: float
    rows: int
    cols: int
    kind: str = field(default="nuclear", init=False)

    def __post_init__(self):
        if self.rows * self.cols != self.stop - self.start:
            raise ConfigError(
                "nuclear-norm block length must equal rows * cols"
            )

    def value(self, y):
        s = np.linalg.svd(y.reshape(self.rows, self.cols), compute_uv=False)
        return self.weight * float(s.sum())

    def prox(self, v, scale):
        V = v.reshape(self.rows, self.cols)
        return prox_nuclear(V, self.weight * scale).ravel()


class BlockSeparableRegularizer:
    """g(y) = sum of per-block l1 / nuclear-norm terms.

    Block row-ranges must partition [0, p) contiguously and in order.
    """

    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise ConfigError("regularizer needs at least one block")
        pos = 0
        for blk in blocks:
            if blk.start != pos or blk.stop <= blk.start:
                raise ConfigError(
                    "block row-ranges must be contiguous and cover [0, p)"
                )
            if blk.weight < 0:
                raise ConfigError("block weights must be >= 0")
            pos = blk.stop
        self.blocks = blocks
        self.p = pos

    @classmethod
    def l1(cls, p, weight):
        return cls([L1Block(0, p, weight)])

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return sum(blk.value(y[blk.start : blk.stop]) for blk in self.blocks)

    def prox(self, v, scale):
        """argmin_y g(y) + (1 / (2*scale)) ||y - v||^2, blockwise."""
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        for blk in self.blocks:
            out[blk.start : blk.stop] = blk.prox(v[blk.start : blk.stop], scale)
        return out


def prox_l1(v, threshold):
    """Coordinatewise soft threshold: sign(v) * max(|v| - t, 0)."""
    if threshold < 0:
        raise InputError("l1 prox threshold must be >= 0")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def prox_nuclear(V, threshold):
    """Singular-value soft threshold from a full SVD of V."""
    if threshold < 0:
        raise InputError("nuclear prox threshold must be >= 0")
    V = np.asarray(V, dtype=float)
    try:
        U, s, Vt = np.linalg.svd(V, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed in nuclear prox: {exc}") from exc
    return (U * np.maximum(s - threshold, 0.0)) @ Vt


@dataclass
class CompositeProblem:
    """Smooth component-wise loss + block-separable regularizer + constraints."""

    loss: object
    regularizer: BlockSeparableRegularizer
    constraints: ConstraintSystem

    def __post_init__(self):
        if self.loss.d != self.constraints.d:
            raise ConfigError(
                f"loss dimension {self.loss.d} != constraint columns "
                f"{self.constraints.d}"
            )
        if self.regularizer.p != self.constraints.p:
            raise ConfigError(
                f"regularizer dimension {self.regularizer.p} != B columns "
                f"{self.constraints.p}"
            )

    @property
    def n(self):
        return self.loss.n

    @property
    def d(self):
        return self.loss.d

    @property
    def p(self):
        return self.regularizer.p

    def full_index_set(self):
        return np.arange(self.n)

    def smooth_value(self, x, index_set=None):
        if index_set is None:
            index_set = self.full_index_set()
        return self.loss.value(x, index_set)

    def grad(self, x, index_set=None):
        if index_set is None:
            index_set = self.full_index_set()
        return self.loss.grad(x, index_set)

    def grad_matrix(self, x, index_set):
        return self.loss.grad_matrix(x, index_set)

    def reg_value(self, y):
        return self.regularizer.value(y)

    def objective(self, x, y):
        """f(x) + g(y), the constrained-form objective."""
        return self.smooth_value(x) + self.reg_value(y)

    def objective_x(self, x):
        """f(x) + g(Ax). Only meaningful for B = -I, c = 0."""
        self.constraints.require_neg_identity_B()
        return self.smooth_value(x) + self.reg_value(self.constraints.A @ x)


def sigmoid_loss_value(problem, x, index_set):
    """Mini-batch mean sigmoid loss (1/|I|) sum_i 1/(1+exp(b_i a_i^T x))."""
    return problem.loss.value(x, index_set)


def sigmoid_loss_grad(problem, x, index_set):
    """Mini-batch mean sigmoid-loss gradient with fixed summation order."""
    return problem.loss.grad(x, index_set)


def multitask_smoothed_grad(problem, X, index_set):
    """Mini-batch mean gradient of the smoothed multi-task loss, as m x d."""
    loss = problem.loss
    g = loss.grad(np.asarray(X, dtype=float).ravel(), index_set)
    return g.reshape(loss.classes, loss.d_features)


def build_graph_guided_A(precision_support):
    """Constraint system for the graph-guided fused lasso.

    One row e_i^T - e_j^T per upper-triangle edge of the support, followed by
    an identity block so A has full column rank even for dense graphs.
    B = -I, c = 0.
    """
    S = np.asarray(precision_support, dtype=bool)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InputError("precision support must be a square matrix")
    if not np.array_equal(S, S.T):
        raise InputError("precision support must be symmetric")
    d = S.shape[0]
    ii, jj = np.nonzero(np.triu(S, k=1))
    n_edges = ii.size
    q = n_edges + d
    rows = np.concatenate(
        [np.arange(n_edges), np.arange(n_edges), n_edges + np.arange(d)]
    )
    cols = np.concatenate([ii, jj, np.arange(d)])
    vals = np.concatenate(
        [np.ones(n_edges), -np.ones(n_edges), np.ones(d)]
    )
    A = sp.csr_matrix((vals, (rows, cols)), shape=(q, d))
    B = -sp.identity(q, format="csr")
    return ConstraintSystem(A, B, np.zeros(q))


def build_overlap_A(d, k):
    """Stacked-identity constraint A = [I; ...; I] (k copies), B = -I, c = 0."""
    if k < 1:
        raise ConfigError("number of overlapping copies k must be >= 1")
    A = sp.vstack([sp.identity(d, format="csr")] * k, format="csr")
    B = -sp.identity(k * d, format="csr")
    return ConstraintSystem(A, B, np.zeros(k * d))


def build_multitask_constraints(m, d, nu1, nu2, kappa0):
    """A = [I; I] on vec(X) plus the l1 / nuclear split regularizer.

    Block 1 is l1 with weight nu1*kappa0 on the first m*d rows of y, block 2
    is the nuclear norm of the (m, d) reshape with weight nu2.
    """
    if m < 1 or d < 1:
        raise ConfigError("m and d must be >= 1")
    md = m * d
    cs = build_overlap_A(md, 2)
    reg = BlockSeparableRegularizer(
        [
            L1Block(0, md, nu1 * kappa0),
            NuclearNormBlock(md, 2 * md, nu2, m, d),
        ]
    )
    return cs, reg
