"""The numeric oracle, and independent sympy cross-checks of hand-derived identities."""

import sympy as sp

from subnoether.dsl import parse_document
from subnoether.expr import Expr, FnAtom
from subnoether.jet import JetContext
from subnoether.oracle import Oracle

CTX = JetContext(["t", "x"], ["u"])
U = Expr.of(CTX.u("u"))
UX = Expr.of(CTX.u("u", ("x",)))
F = FnAtom("f", [0], [U])


def test_true_identity_vanishes_everywhere():
    parts = [CTX.total(Expr.of(F), "x"), -Expr.of(F.raised(0)) * UX]
    res = Oracle(seed=1).vanishes(parts, "chain rule")
    assert (res.points, res.failures, res.skipped) == (20, 0, 0)


def test_false_identity_is_caught():
    res = Oracle(seed=1).vanishes([CTX.total(Expr.of(F), "x"), -UX], "wrong")
    assert res.failures > 10
    assert Oracle(seed=1).differs([CTX.total(Expr.of(F), "x"), -UX], "wrong").failures < 10


def test_parts_are_added_numerically():
    res = Oracle().vanishes([U * U, -(U * U)], "cancel")
    assert res.failures == 0
    # u^2 + 1 never vanishes at a rational point
    assert Oracle().differs([U * U, Expr.const(1)], "positive").failures == 0


def test_seeded_and_label_dependent():
    parts = [Expr.of(F) * UX]
    a = list(Oracle(seed=3).values(parts, "lbl"))
    assert a == list(Oracle(seed=3).values(parts, "lbl"))
    assert a != list(Oracle(seed=4).values(parts, "lbl"))


def test_functions_are_instantiated_consistently():
    # f'(u) must be the derivative of the polynomial chosen for f
    parts = [CTX.total(Expr.of(F) ** 2, "x"), -2 * Expr.of(F) * Expr.of(F.raised(0)) * UX]
    assert Oracle(seed=9, points=30).vanishes(parts, "f^2").failures == 0


# --- sympy cross-checks -----------------------------------------------------

t, x, r, xi = sp.symbols("t x r xi")
a, b = sp.symbols("a b", positive=True)


def test_wave_energy_by_sympy():
    u = sp.Function("u")(t, x)
    ut, ux = u.diff(t), u.diff(x)
    L = (ut**2 - ux**2) / 2
    M = (-(ut**2) / 2 + ux**2 / 2, 0)
    # R^i for X = -u_t d/du and a first-order Lagrangian: phi * dL/du_i
    R = (-ut * L.diff(ut), -ut * L.diff(ux))
    K = [sp.expand(m - q) for m, q in zip(M, R)]
    assert K == [sp.expand(ut**2 / 2 + ux**2 / 2), sp.expand(-ut * ux)]
    div = K[0].diff(t) + K[1].diff(x)
    assert sp.simplify(div - ut * (u.diff(t, 2) - u.diff(x, 2))) == 0


def test_nls_mass_law_factor_by_sympy():
    u, v, k = sp.Function("u")(t, x), sp.Function("v")(t, x), sp.Symbol("k")
    E1 = -v.diff(t) + u.diff(x, 2) - k * u * (u**2 + v**2)
    E2 = u.diff(t) + v.diff(x, 2) - k * v * (u**2 + v**2)
    G = -v * E1 + u * E2
    quoted = (u**2 + v**2).diff(t) + 2 * (u * v.diff(x) - v * u.diff(x)).diff(x)
    assert sp.expand(quoted - 2 * G) == 0
    assert sp.expand(quoted - G) != 0


def test_helical_combination_with_explicit_B():
    B = r / sp.sqrt(a**2 * r**2 + b**2)
    assert sp.simplify(B.diff(r) - b**2 * B**3 / r**3) == 0
    ur, uxi, om = (sp.Function(n)(t, r, xi) for n in ("ur", "uxi", "om"))
    E5 = om.diff(t) + (r * ur * om).diff(r) / r + (uxi * om).diff(xi) / B - a**2 * B**2 * ur * om / r
    w = B * om / r
    rhs = w.diff(t) + (r * ur * w).diff(r) / r + (uxi * w).diff(xi) / B
    assert sp.simplify(B / r * E5 - rhs) == 0


def test_helicity_action_on_polynomial_fields():
    # evaluate both sides of the helicity identity on an explicit velocity and pressure
    doc = parse_document(
        """
        context { indep t, x1, x2, x3; dep u1, u2, u3, p; }
        system {
          E1: u1_t + u1*u1_x1 + u2*u1_x2 + u3*u1_x3 + p_x1 = 0;
          E2: u2_t + u1*u2_x1 + u2*u2_x2 + u3*u2_x3 + p_x2 = 0;
          E3: u3_t + u1*u3_x1 + u2*u3_x2 + u3*u3_x3 + p_x3 = 0;
          E4: u1_x1 + u2_x2 + u3_x3 = 0;
        }
        """
    )
    X1, X2, X3, T = sp.symbols("x1 x2 x3 t")
    fields = {
        "u1": X2 * T + X3**2,
        "u2": X1 * X3 - T**2,
        "u3": X1**2 + X2 * X3 * T,
        "p": X1 * X2 * X3 + T,
    }
    coords = {"t": T, "x1": X1, "x2": X2, "x3": X3}

    def sym(e):
        """Evaluate a jet expression on the explicit fields, with sympy."""
        subs = {}
        for atom in e.deep_atoms():
            f = fields[atom.dep] if hasattr(atom, "dep") else None
            if f is not None:
                for d in atom.index:
                    f = f.diff(coords[d])
                subs[atom.text()] = f
            elif atom.text() in coords:
                subs[atom.text()] = coords[atom.text()]
        return sp.sympify(e.text().replace("^", "**"), locals={k: sp.Symbol(k) for k in subs}).subs(
            {sp.Symbol(k): v for k, v in subs.items()}
        )

    u = [fields[f"u{i}"] for i in (1, 2, 3)]
    grad = lambda f: [f.diff(X1), f.diff(X2), f.diff(X3)]  # noqa: E731
    w = [u[2].diff(X2) - u[1].diff(X3), u[0].diff(X3) - u[2].diff(X1), u[1].diff(X1) - u[0].diff(X2)]
    E = (u[0] ** 2 + u[1] ** 2 + u[2] ** 2) / 2 + fields["p"]
    c = sp.Matrix(w).cross(sp.Matrix(u))
    d = c.cross(sp.Matrix(u))
    flux = sp.Matrix(u).cross(sp.Matrix(grad(E))) + d
    h = sum(ui * wi for ui, wi in zip(u, w))
    lhs = h.diff(T) + flux[0].diff(X1) + flux[1].diff(X2) + flux[2].diff(X3)
    D = [sym(doc.system.equations[f"E{i}"]) for i in (1, 2, 3)]
    curlD = [D[2].diff(X2) - D[1].diff(X3), D[0].diff(X3) - D[2].diff(X1), D[1].diff(X1) - D[0].diff(X2)]
    rhs = sum(wi * Di for wi, Di in zip(w, D)) + sum(ui * ci for ui, ci in zip(u, curlD))
    assert sp.expand(lhs - rhs) == 0
