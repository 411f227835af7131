import numpy as np
import pytest

from pwlbfgs.experiments.runner import EXAMPLE, load_init, seeded_init, stream
from pwlbfgs.linesearch import LineSearchParams
from pwlbfgs.numerics import make_context


@pytest.fixture(scope="session")
def ctx():
    return make_context()


@pytest.fixture(scope="session")
def example_init(ctx):
    return load_init(EXAMPLE, ctx)


@pytest.fixture(scope="session")
def default_params():
    return LineSearchParams()


@pytest.fixture(scope="session")
def degenerate_params():
    return LineSearchParams(0, 1, allow_degenerate=True)


def seeded(n, i, ctx, root=2024):
    return seeded_init(n, stream(root, 99, n, i), ctx)


def vec(ctx, *vals):
    return ctx.vector([str(v) for v in vals])


def mat(ctx, rows):
    return ctx.matrix([[str(v) for v in r] for r in rows])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
