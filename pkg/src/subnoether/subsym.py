"""Quasi-Noether checks, sub-symmetries, and the conservation laws they generate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .expr import ZERO, Expr, as_expr, normalize
from .jet import (
    EvolutionaryField,
    JetContext,
    divergence,
    euler_op,
    noether_R,
    prolong_apply,
)
from .system import (
    Characteristics,
    Combination,
    ConservationLaw,
    DifferentialSystem,
    NoSolvedForm,
    ibp_characteristic,
    reduce,
)

__all__ = [
    "Undecided",
    "NotADivergence",
    "NotVariationalSymmetry",
    "QuasiNoether",
    "SubSymmetry",
    "Refutation",
    "Classification",
    "Equivalence",
    "quasi_noether_check",
    "subsymmetry_check",
    "generate_claw",
    "deform_claw",
    "first_noether",
    "euler_lagrange_system",
    "triviality_classify",
    "equivalent",
]


class Undecided(RuntimeError):
    """Neither a certificate nor solved forms settle the question."""


class NotADivergence(ValueError):
    """The combination is not the divergence of the supplied flux."""


class NotVariationalSymmetry(ValueError):
    """X L is not the divergence of the supplied flux."""


@dataclass(frozen=True)
class QuasiNoether:
    """E_a(combo) = gammas[a] applied to the equations, for every dependent a."""

    holds: bool
    gammas: dict[str, Combination]
    residuals: dict[str, Expr]


@dataclass(frozen=True)
class SubSymmetry:
    field: EvolutionaryField
    combo: Combination
    certificate: Combination
    certified: bool = True


@dataclass(frozen=True)
class Refutation:
    """X(combo) minus the certificate, raw and reduced on solutions when possible."""

    field: EvolutionaryField
    combo: Combination
    residual: Expr
    reduced: Expr | None


@dataclass(frozen=True)
class Classification:
    kind: str  # "Nontrivial", "Trivial" or "Undecided"
    characteristics: dict[str, Expr]
    trivial_flux: tuple[Expr, ...]
    normal_forms: dict[str, Expr] | None
    certificate: Combination  # after syzygy rewrites


@dataclass(frozen=True)
class Equivalence:
    holds: bool
    first_kind: tuple[Expr, ...]
    residual: Expr


def _decide(system: DifferentialSystem, e: Expr, cert: Combination | None):
    """(holds, certificate or None, residual on solutions)."""
    if cert is not None:
        residual = normalize(e - cert.evaluate(system))
        return residual.is_zero(), cert, residual
    e = normalize(e)
    if e.is_zero():
        return True, Combination(), e
    if not system.solved:
        raise Undecided("no certificate and no solved forms")
    red = reduce(system, e)
    if red.normal_form.is_zero():
        return True, red.certificate if red.certified else None, red.normal_form
    return False, None, red.normal_form


def quasi_noether_check(
    system: DifferentialSystem,
    combo: Combination,
    certs: Mapping[str, Combination] | None = None,
) -> QuasiNoether:
    """E_a(Xi^v Delta_v) = Gamma^{av} Delta_v for each dependent variable a."""
    ctx = system.ctx
    G = combo.evaluate(system)
    gammas: dict[str, Combination] = {}
    residuals: dict[str, Expr] = {}
    ok = True
    for a in ctx.dep:
        Ea = euler_op(ctx, G, a)
        holds, cert, residual = _decide(system, Ea, (certs or {}).get(a))
        residuals[a] = residual
        if holds and cert is not None:
            gammas[a] = cert
        elif holds:
            raise Undecided(f"E_{a} vanishes on solutions only through uncertified substitutions")
        ok = ok and holds
    return QuasiNoether(ok, gammas, residuals)


def subsymmetry_check(
    system: DifferentialSystem,
    X: EvolutionaryField,
    combo: Combination,
    cert: Combination | None = None,
) -> SubSymmetry | Refutation:
    """Check X(combo) = Lambda applied to the equations."""
    XG = prolong_apply(system.ctx, X, combo.evaluate(system))
    if cert is not None:
        residual = normalize(XG - cert.evaluate(system))
        if residual.is_zero():
            return SubSymmetry(X, combo, cert)
        reduced = reduce(system, residual).normal_form if system.solved else None
        return Refutation(X, combo, residual, reduced)
    holds, found, residual = _decide(system, XG, None)
    if holds:
        return SubSymmetry(X, combo, found or Combination(), found is not None)
    return Refutation(X, combo, normalize(XG), residual)


def generate_claw(
    system: DifferentialSystem,
    sub: SubSymmetry,
    quasi: QuasiNoether | None = None,
) -> ConservationLaw:
    """Flux R^i(Xi^v Delta_v) with certificate Lambda - phi^a Gamma^a (flat divergence)."""
    if any(J for _, J in sub.combo.terms):
        raise ValueError("conservation-law generation needs function-valued multipliers")
    ctx = system.ctx
    if quasi is None:
        quasi = quasi_noether_check(system, sub.combo)
    if not quasi.holds:
        raise Undecided("the combination is not quasi-Noether")
    G = sub.combo.evaluate(system)
    flux = tuple(normalize(k) for k in noether_R(ctx, sub.field, G))
    cert = sub.certificate
    for a in ctx.dep:
        gamma = quasi.gammas.get(a)
        if gamma is not None and not gamma.is_zero():
            cert = cert - gamma.scale(sub.field[a])
    law = ConservationLaw(flux, cert, trivial=tuple(ZERO for _ in ctx.indep))
    residual = law.residual(system)
    if not residual.is_zero():
        raise AssertionError(f"generated law fails its certificate: {residual.text()}")
    return law


def deform_claw(
    system: DifferentialSystem,
    X: EvolutionaryField,
    M: Sequence,
    combo: Combination,
    cert: Combination | None = None,
    weighted: bool = True,
) -> ConservationLaw:
    """Deformed flux X M^i for a combination that equals the divergence of M."""
    ctx = system.ctx
    M = tuple(as_expr(m) for m in M)
    G = combo.evaluate(system)
    gap = normalize(G - divergence(ctx, M, weighted))
    if not gap.is_zero():
        raise NotADivergence(f"combination minus div M = {gap.text()}")
    sub = subsymmetry_check(system, X, combo, cert)
    if isinstance(sub, Refutation):
        raise Undecided(f"not a sub-symmetry: residual {sub.residual.text()}")
    flux = tuple(normalize(prolong_apply(ctx, X, m)) for m in M)
    return ConservationLaw(flux, sub.certificate, trivial=tuple(ZERO for _ in ctx.indep), weighted=weighted)


def euler_lagrange_system(ctx: JetContext, L) -> DifferentialSystem:
    """System Delta_a = E_a(L), labelled EL_<dep>."""
    return DifferentialSystem(ctx, {f"EL_{a}": euler_op(ctx, L, a) for a in ctx.dep})


def first_noether(ctx: JetContext, L, X: EvolutionaryField, M: Sequence) -> tuple[ConservationLaw, DifferentialSystem]:
    """Flux M^i - R^i(L) for a variational symmetry with X L = D_i M^i."""
    L = as_expr(L)
    M = tuple(as_expr(m) for m in M)
    gap = normalize(prolong_apply(ctx, X, L) - divergence(ctx, M, weighted=False))
    if not gap.is_zero():
        raise NotVariationalSymmetry(f"X L - div M = {gap.text()}")
    system = euler_lagrange_system(ctx, L)
    R = noether_R(ctx, X, L)
    flux = tuple(normalize(m - r) for m, r in zip(M, R))
    cert = Combination({(f"EL_{a}", ()): X[a] for a in ctx.dep})
    return ConservationLaw(flux, cert), system


def triviality_classify(
    system: DifferentialSystem,
    law: ConservationLaw,
    rewrites: Sequence[tuple[str, object]] = (),
    trades: Sequence[tuple[str, str, object]] = (),
) -> Classification:
    """Nontrivial iff some characteristic has a nonzero normal form on solutions.

    Normal forms are taken modulo the declared solved forms, which are
    assumed to describe the solution manifold completely.
    """
    ch: Characteristics = ibp_characteristic(system, law.certificate, rewrites, trades)
    chars = ch.chars
    if all(v.is_zero() for v in chars.values()):
        return Classification("Trivial", chars, ch.trivial_flux, None, ch.certificate)
    if not system.solved:
        return Classification("Undecided", chars, ch.trivial_flux, None, ch.certificate)
    forms = {k: reduce(system, v).normal_form for k, v in chars.items()}
    kind = "Nontrivial" if any(not v.is_zero() for v in forms.values()) else "Trivial"
    return Classification(kind, chars, ch.trivial_flux, forms, ch.certificate)


def equivalent(
    system: DifferentialSystem,
    K1: Sequence,
    K2: Sequence,
    weighted: bool = False,
) -> Equivalence:
    """K1 - K2 = (part vanishing on solutions) + (identically divergence-free part)."""
    ctx = system.ctx
    diff = [normalize(as_expr(a) - as_expr(b)) for a, b in zip(K1, K2)]
    zero = tuple(ZERO for _ in diff)
    residual = normalize(divergence(ctx, diff, weighted))
    if residual.is_zero():
        return Equivalence(True, zero, residual)
    try:
        reds = [reduce(system, d) for d in diff]
    except NoSolvedForm:
        return Equivalence(False, zero, residual)
    first = tuple(normalize(d - r.normal_form) for d, r in zip(diff, reds))
    residual = normalize(divergence(ctx, [r.normal_form for r in reds], weighted))
    return Equivalence(residual.is_zero(), first, residual)
