import itertools
import random

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from subnoether.expr import ZERO, Expr
from subnoether.jet import JetContext

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def jet_atoms_upto(ctx: JetContext, order: int, with_x: bool = True):
    out = []
    for a in ctx.dep:
        for k in range(order + 1):
            for J in itertools.combinations_with_replacement(ctx.indep, k):
                out.append(ctx.u(a, J))
    if with_x:
        out += [ctx.x(i) for i in ctx.indep]
    return out


def random_poly(rng: random.Random, atoms, degree: int, nterms: int) -> Expr:
    e = ZERO
    for _ in range(nterms):
        t = Expr.const(rng.randint(-3, 3))
        for _ in range(rng.randint(0, degree)):
            t = t * Expr.of(rng.choice(atoms))
        e = e + t
    return e


def random_context(rng: random.Random, maxp: int = 3, maxq: int = 3) -> JetContext:
    p, q = rng.randint(1, maxp), rng.randint(1, maxq)
    return JetContext(["x", "y", "z"][:p], ["u", "v", "w"][:q])


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def ctx2():
    return JetContext(["t", "x"], ["u", "v"])
