import numpy as np
import pytest

from ncadmm import metrics, params, problems, solvers
from ncadmm.exceptions import CapabilityError, InputError

from conftest import make_graph_guided_problem


class TestL1SubgradDist:
    def test_zero_inside_subdifferential(self):
        # y != 0 pins v to w*sign(y); y = 0 allows the box [-w, w]
        y = np.array([2.0, -1.0, 0.0, 0.0])
        v = np.array([0.5, -0.5, 0.3, -0.5])
        assert metrics.l1_subgrad_dist_sq(v, y, 0.5) == 0.0

    def test_pinned_distance(self):
        y = np.array([1.0])
        v = np.array([0.0])
        assert np.isclose(metrics.l1_subgrad_dist_sq(v, y, 0.5), 0.25)

    def test_boxed_distance(self):
        y = np.array([0.0])
        v = np.array([0.8])
        assert np.isclose(metrics.l1_subgrad_dist_sq(v, y, 0.5), 0.09)


class TestStationarity:
    def test_report_fields(self, gg_problem, rng):
        x = rng.standard_normal(gg_problem.d)
        y = rng.standard_normal(gg_problem.p)
        lam = rng.standard_normal(gg_problem.constraints.q)
        rep = metrics.stationarity(gg_problem, x, y, lam)
        resid = gg_problem.constraints.residual(x, y)
        assert np.isclose(rep.feasibility_sq, float(resid @ resid))
        dual = gg_problem.grad(x) - np.asarray(
            gg_problem.constraints.A.T @ lam
        ).ravel()
        assert np.isclose(rep.dual_sq, float(dual @ dual))
        assert rep.epsilon == max(
            rep.feasibility_sq, rep.dual_sq, rep.subgrad_dist_sq
        )

    def test_residuals_shrink_along_certified_run(self):
        prob = make_graph_guided_problem(n=200, d=6, empty_support=True)
        cfg, cert = params.suggest_params(prob, "dete", T=800)
        res = solvers.run(prob, cfg)
        first, last = res.trace[0], res.trace[-1]
        assert last.feasibility_sq < 1e-8
        assert last.dual_sq < 1e-4
        assert last.subgrad_dist_sq < first.subgrad_dist_sq

    def test_nuclear_surrogate_needs_iterates(self, rng):
        cs, reg = problems.build_multitask_constraints(2, 3, 1e-3, 1e-2, 1.0)
        feats = rng.standard_normal((10, 3))
        labels = rng.integers(0, 2, size=10)
        loss = problems.SmoothedMultiTaskLoss(feats, labels, 2, 1e-3)
        prob = problems.CompositeProblem(loss=loss, regularizer=reg, constraints=cs)
        y = rng.standard_normal(prob.p)
        lam = rng.standard_normal(cs.q)
        with pytest.raises(CapabilityError):
            metrics.subgrad_dist_sq(prob, y, lam)
        val = metrics.subgrad_dist_sq(
            prob, y, lam, x=rng.standard_normal(6),
            x_prev=rng.standard_normal(6), rho=2.0,
        )
        assert val >= 0.0


class TestLyapunov:
    def run_diag(self, variant="dete", **kw):
        prob = make_graph_guided_problem(n=80, d=5, empty_support=True)
        cfg = solvers.SolverConfig(
            variant=variant, eta=1.0, rho=30.0,
            r=params.min_admissible_r(prob.constraints, 1.0, 30.0),
            M=20, T=30, m=kw.pop("m", 5) if variant == "svrg" else None,
            diagnostics=True, store_saga_points=(variant == "saga"), **kw,
        )
        return prob, cfg, solvers.run(prob, cfg)

    def test_psi_formula(self):
        prob, cfg, res = self.run_diag()
        vals = metrics.lyapunov_psi(res.trace, zeta=7.0, rho=cfg.rho)
        for v, rec in zip(vals, res.trace):
            assert np.isclose(v, rec.lrho + (7.0 / cfg.rho) * rec.dx_sq)

    def test_psi_requires_diagnostics(self):
        prob = make_graph_guided_problem(n=40, d=4)
        cfg = solvers.SolverConfig(
            variant="dete", eta=0.5, rho=2.0,
            r=params.min_admissible_r(prob.constraints, 0.5, 2.0), M=10, T=5,
        )
        res = solvers.run(prob, cfg)
        with pytest.raises(CapabilityError):
            metrics.lyapunov_psi(res.trace, 1.0, 2.0)

    def test_phi_and_theta_shapes(self):
        prob, cfg, res = self.run_diag("svrg", m=5)
        h = params.svrg_h_schedule(2.0, prob.constraints, cfg.rho, cfg.M, 5, 1.0)
        vals = metrics.lyapunov_phi(res.trace, h, 5, zeta=3.0, rho=cfg.rho)
        assert vals.shape == (len(res.trace),)

        prob, cfg, res = self.run_diag("saga")
        alpha = params.saga_alpha_schedule(
            2.0, prob.constraints, cfg.rho, n=prob.n, M=cfg.M, T=cfg.T, beta=1.0
        )
        vals = metrics.lyapunov_theta(res.trace, alpha, zeta=3.0, rho=cfg.rho)
        assert vals.shape == (len(res.trace),)

    def test_phi_schedule_length_checked(self):
        prob, cfg, res = self.run_diag("svrg", m=5)
        with pytest.raises(InputError):
            metrics.lyapunov_phi(res.trace, [1.0, 2.0], 5, 1.0, cfg.rho)


class TestVarianceDiagnostics:
    def test_svrg_bound_holds_by_enumeration(self, rng):
        prob = make_graph_guided_problem(n=6, d=3)
        L = params.estimate_lipschitz(prob)
        x = rng.standard_normal(3)
        snap = x + 0.5 * rng.standard_normal(3)
        out = metrics.variance_diagnostics(
            prob, "svrg", x, L, M=1,
            snapshot_x=snap, snapshot_grad=prob.grad(snap),
        )
        assert out["empirical_var"] <= out["bound"] * (1 + 1e-12)

    def test_saga_bound_holds_by_enumeration(self, rng):
        prob = make_graph_guided_problem(n=6, d=3)
        L = params.estimate_lipschitz(prob)
        x = rng.standard_normal(3)
        pts = x[None, :] + 0.3 * rng.standard_normal((6, 3))
        table = np.vstack(
            [prob.grad_matrix(pts[i], np.array([i])) for i in range(6)]
        )
        out = metrics.variance_diagnostics(
            prob, "saga", x, L, M=1,
            grad_table=table, psi=table.mean(axis=0), point_table=pts,
        )
        assert out["empirical_var"] <= out["bound"] * (1 + 1e-12)

    def test_unsupported_variant_rejected(self, rng):
        prob = make_graph_guided_problem(n=6, d=3)
        with pytest.raises(InputError):
            metrics.variance_diagnostics(prob, "stoc", np.zeros(3), 1.0)


class TestRateSummary:
    def test_power_law_slope_recovered(self):
        t = np.arange(1, 400)
        dx_sq = 1.0 / t**2
        out = metrics.rate_summary(dx_sq)
        assert out["min_theta_by_T"].shape == (398,)
        assert -2.3 < out["slope_estimate"] < -1.7

    def test_too_short_rejected(self):
        with pytest.raises(InputError):
            metrics.rate_summary([1.0, 0.5])
