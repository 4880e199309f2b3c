import pytest

from subnoether.expr import Expr, FnAtom, normalize
from subnoether.jet import EvolutionaryField, JetContext, canonicalize_field, noether_R
from subnoether.subsym import (
    NotADivergence,
    NotVariationalSymmetry,
    Refutation,
    SubSymmetry,
    Undecided,
    deform_claw,
    equivalent,
    first_noether,
    generate_claw,
    quasi_noether_check,
    subsymmetry_check,
    triviality_classify,
)
from subnoether.system import Combination, ConservationLaw, DifferentialSystem


@pytest.fixture(scope="module")
def vort2d():
    ctx = JetContext(["t", "x", "y"], ["w", "u1", "u2", "p"], functions={"f": 1}, ranking=[["w"]])
    J = lambda a, *i: Expr.of(ctx.u(a, i))  # noqa: E731
    w, u1, u2 = J("w"), J("u1"), J("u2")
    eqs = {
        "E1": J("u1", "t") + u1 * J("u1", "x") + u2 * J("u1", "y") + J("p", "x"),
        "E2": J("u2", "t") + u1 * J("u2", "x") + u2 * J("u2", "y") + J("p", "y"),
        "E3": J("w", "t") + u1 * J("w", "x") + u2 * J("w", "y"),
        "E4": J("u1", "x") + J("u2", "y"),
        "E5": w - (J("u2", "x") - J("u1", "y")),
    }
    solved = [
        ("E5", ctx.u("w")),
        ("E4", ctx.u("u1", ("x",))),
        ("E1", ctx.u("u1", ("t",))),
        ("E2", ctx.u("u2", ("t",))),
    ]
    sys = DifferentialSystem(ctx, eqs, solved)
    f = FnAtom("f", [0], [w])
    X = EvolutionaryField(ctx, {"w": Expr.of(f)})
    G = Combination({("E3", ()): 1, ("E4", ()): w})
    C = Combination({("E3", ()): Expr.of(f.raised(0)), ("E4", ()): Expr.of(f)})
    return ctx, sys, X, G, C, (Expr.of(f), u1 * Expr.of(f), u2 * Expr.of(f))


def test_vorticity_combination_is_quasi_noether(vort2d):
    ctx, sys, X, G, C, _ = vort2d
    q = quasi_noether_check(sys, G)
    assert q.holds
    assert all(r.is_zero() for r in q.residuals.values())


def test_casimir_sub_symmetry(vort2d):
    ctx, sys, X, G, C, _ = vort2d
    sub = subsymmetry_check(sys, X, G, C)
    assert isinstance(sub, SubSymmetry) and sub.certified
    # found by reduction as well
    found = subsymmetry_check(sys, X, G)
    assert isinstance(found, SubSymmetry)


def test_casimir_is_not_a_symmetry(vort2d):
    ctx, sys, X, G, C, _ = vort2d
    ref = subsymmetry_check(sys, X, Combination.single("E5"))
    assert isinstance(ref, Refutation)
    assert ref.residual == Expr.of(FnAtom("f", [0], [Expr.of(ctx.u("w"))]))


def test_generated_law_is_equivalent_to_casimir(vort2d):
    ctx, sys, X, G, C, K = vort2d
    law = generate_claw(sys, subsymmetry_check(sys, X, G, C))
    assert law.verify(sys)
    assert law.flux == K
    assert equivalent(sys, law.flux, K).holds
    # shifting by a multiple of E4 changes the flux only on solutions
    shifted = (K[0], K[1] + sys.equations["E4"], K[2])
    eq = equivalent(sys, shifted, K)
    assert eq.holds and not eq.first_kind[1].is_zero()


def test_deformed_law(vort2d):
    ctx, sys, X, G, C, K = vort2d
    w = Expr.of(ctx.u("w"))
    M = (w, Expr.of(ctx.u("u1")) * w, Expr.of(ctx.u("u2")) * w)
    law = deform_claw(sys, X, M, G, C, weighted=False)
    assert all(normalize(a - b).is_zero() for a, b in zip(law.flux, K))
    with pytest.raises(NotADivergence):
        deform_claw(sys, X, (w, w, w), G, C)


def test_casimir_law_is_nontrivial(vort2d):
    ctx, sys, X, G, C, K = vort2d
    cls = triviality_classify(sys, ConservationLaw(K, C))
    assert cls.kind == "Nontrivial"
    assert cls.characteristics["E4"] == K[0]


def test_trivial_law():
    ctx = JetContext(["t", "x"], ["u"])
    J = lambda *i: Expr.of(ctx.u("u", i))  # noqa: E731
    sys = DifferentialSystem(ctx, {"E1": J("t") - J("x", "x")}, [("E1", ctx.u("u", ("x", "x")))])
    # flux (E1, 0) vanishes on solutions: its certificate D_t E1 integrates away
    law = ConservationLaw((sys.equations["E1"], Expr.const(0)), Combination.single("E1", 1, ["t"]))
    assert law.verify(sys)
    assert triviality_classify(sys, law).kind == "Trivial"


def test_undecided_without_solved_forms():
    ctx = JetContext(["t"], ["u"])
    sys = DifferentialSystem(ctx, {"E1": Expr.of(ctx.u("u", ("t",)))})
    X = EvolutionaryField(ctx, {"u": 1})
    with pytest.raises(Undecided):
        subsymmetry_check(sys, X, Combination.single("E1", Expr.of(ctx.u("u"))))


def test_wave_energy_by_first_noether():
    ctx = JetContext(["t", "x"], ["u"])
    ut, ux = Expr.of(ctx.u("u", ("t",))), Expr.of(ctx.u("u", ("x",)))
    L = (ut**2 - ux**2) / 2
    X = canonicalize_field(ctx, {"t": 1}, {})
    assert noether_R(ctx, X, L) == (-(ut**2), ut * ux)
    law, sys = first_noether(ctx, L, X, (-(ut**2) / 2 + ux**2 / 2, 0))
    assert law.flux == (ut**2 / 2 + ux**2 / 2, -ut * ux)
    assert law.certificate == Combination.single("EL_u", -ut)
    assert law.verify(sys)
    with pytest.raises(NotVariationalSymmetry):
        first_noether(ctx, L, X, (0, 0))
