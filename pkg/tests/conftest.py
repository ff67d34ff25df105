import numpy as np
import pytest

from ncadmm import data, problems


def make_graph_guided_problem(n=120, d=8, seed=0, nu=1e-5, empty_support=False):
    ds, prec, x_star = data.gen_graph_guided(n, d, seed)
    support = np.zeros_like(prec.support) if empty_support else prec.support
    cs = problems.build_graph_guided_A(support)
    loss = problems.SigmoidLoss(ds.features, ds.labels)
    reg = problems.BlockSeparableRegularizer.l1(cs.p, nu)
    return problems.CompositeProblem(loss=loss, regularizer=reg, constraints=cs)


def make_overlap_problem(n=100, grid=4, k=2, seed=1, nu=1e-5):
    ds, x_star = data.gen_overlap(n, seed, grid=grid)
    cs = problems.build_overlap_A(ds.d, k)
    loss = problems.SigmoidLoss(ds.features, ds.labels)
    reg = problems.BlockSeparableRegularizer.l1(cs.p, nu)
    return problems.CompositeProblem(loss=loss, regularizer=reg, constraints=cs)


@pytest.fixture
def gg_problem():
    return make_graph_guided_problem()


@pytest.fixture
def identity_problem():
    # empty support makes A the identity, the certifiable end of the family
    return make_graph_guided_problem(empty_support=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
