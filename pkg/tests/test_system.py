import pytest

from subnoether.expr import Expr, FnAtom, normalize
from subnoether.jet import JetContext
from subnoether.system import (
    CertificateMismatch,
    Combination,
    ConservationLaw,
    DifferentialSystem,
    NonTerminatingRanking,
    NoSolvedForm,
    ibp_characteristic,
    on_solutions_zero,
    reduce,
)


@pytest.fixture
def heat():
    ctx = JetContext(["t", "x"], ["u"])
    u = lambda *J: Expr.of(ctx.u("u", J))  # noqa: E731
    return ctx, u, DifferentialSystem(ctx, {"E1": u("t") - u("x", "x")}, solved=[("E1", ctx.u("u", ("x", "x")))])


def test_combination_algebra(heat):
    ctx, u, sys = heat
    c = Combination.single("E1", u()) + Combination.single("E1", 2, ["x"])
    assert c.coeff("E1", ["x"]) == 2
    assert (c - c).is_zero()
    assert c.scale(0).is_zero()
    d = c.derivative(ctx, "x")
    assert normalize(d.evaluate(sys) - ctx.total(c.evaluate(sys), "x")).is_zero()
    assert c.to_json()[0]["eq"] == "E1"


def test_reduce_tracks_certificate(heat):
    ctx, u, sys = heat
    e = u("x", "x", "x") * u() + u("x", "x") ** 2
    red = reduce(sys, e)
    assert red.certified
    assert red.normal_form == u("t", "x") * u() + u("t") ** 2
    assert normalize(e - red.normal_form - red.certificate.evaluate(sys)).is_zero()


def test_reduce_inside_function_argument_is_uncertified(heat):
    ctx, u, sys = heat
    e = Expr.of(FnAtom("f", [0], [u("x", "x")]))
    red = reduce(sys, e)
    assert not red.certified
    assert red.normal_form == Expr.of(FnAtom("f", [0], [u("t")]))


def test_on_solutions_zero(heat):
    ctx, u, sys = heat
    v = on_solutions_zero(sys, u("t", "t") - u("x", "x", "x", "x"))
    assert v.holds and v.certified
    with pytest.raises(CertificateMismatch):
        on_solutions_zero(sys, u("t"), Combination.single("E1", 2))
    assert not on_solutions_zero(sys, u("x", "x")).holds
    assert on_solutions_zero(sys, u("t") - u("x", "x"), Combination.single("E1")).holds


def test_no_solved_forms():
    ctx = JetContext(["t"], ["u"])
    sys = DifferentialSystem(ctx, {"E1": Expr.of(ctx.u("u", ("t",)))})
    with pytest.raises(NoSolvedForm):
        reduce(sys, Expr.of(ctx.u("u")))


def test_solved_form_must_rank_lower():
    ctx = JetContext(["t", "x"], ["u"])
    u = lambda *J: Expr.of(ctx.u("u", J))  # noqa: E731
    with pytest.raises(NonTerminatingRanking):
        DifferentialSystem(ctx, {"E1": u("t") - u("x", "x")}, solved=[("E1", ctx.u("u", ("t",)))])
    with pytest.raises(ValueError):
        DifferentialSystem(ctx, {"E1": u("x") ** 2}, solved=[("E1", ctx.u("u", ("x",)))])


def test_syzygy_must_vanish():
    ctx = JetContext(["t", "x"], ["u"])
    u = lambda *J: Expr.of(ctx.u("u", J))  # noqa: E731
    eqs = {"E1": u("t"), "E2": u("x")}
    ok = Combination({("E1", ("x",)): 1, ("E2", ("t",)): -1})
    assert DifferentialSystem(ctx, eqs, syzygies={"S": ok}).syzygies["S"] == ok
    with pytest.raises(ValueError):
        DifferentialSystem(ctx, eqs, syzygies={"S": Combination.single("E1")})


def test_integration_by_parts_characteristic(heat):
    ctx, u, sys = heat
    cert = Combination({("E1", ("x",)): u()})
    ch = ibp_characteristic(sys, cert)
    assert ch.chars["E1"] == -u("x")
    rebuilt = ch.chars["E1"] * sys.equations["E1"] + ctx.total(ch.trivial_flux[1], "x")
    assert normalize(rebuilt - cert.evaluate(sys)).is_zero()


def test_conservation_law_residual(heat):
    ctx, u, sys = heat
    law = ConservationLaw((u(), -u("x")), Combination.single("E1"))
    assert law.verify(sys)
    bad = ConservationLaw((u(), u("x")), Combination.single("E1"))
    assert not bad.verify(sys)
