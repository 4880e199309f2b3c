"""Jet-space calculus: total derivatives, prolongation, Euler and Noether operators."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .expr import (
    ONE,
    ZERO,
    Atom,
    Expr,
    FieldAtom,
    FnAtom,
    IndependentVar,
    JetCoord,
    Parameter,
    RadicalAtom,
    as_expr,
    derivation,
    diff_atom,
    normalize,
    p_coeffs,
)

__all__ = [
    "JetContext",
    "EvolutionaryField",
    "MissingDerivativeRule",
    "NotFound",
    "total_derivative",
    "total_derivative_multi",
    "prolong_apply",
    "euler_op",
    "noether_R",
    "canonicalize_field",
    "divergence",
    "divergence_verify",
    "find_divergence",
    "jet_atoms",
]


class MissingDerivativeRule(KeyError):
    """A field atom has no derivative rule for the requested direction."""


class NotFound(LookupError):
    """The divergence-inversion heuristic could not construct a flux."""


@dataclass(frozen=True)
class Weight:
    outer: Expr
    inner: Expr


class JetContext:
    """Independent and dependent variables plus everything needed to differentiate.

    ``fields`` maps a field atom to its derivative rules (direction -> Expr);
    differentiating a field in a direction without a rule is an error.
    ``ranking`` lists blocks of dependent names from highest to lowest and
    ``direction_order`` sets the priority used when comparing derivatives.
    """

    def __init__(
        self,
        indep: Sequence[str],
        dep: Sequence[str],
        params: Iterable[str] = (),
        functions: Mapping[str, int] | None = None,
        fields: Mapping[FieldAtom, Mapping[str, object]] | None = None,
        weights: Mapping[str, tuple[object, object]] | None = None,
        ranking: Sequence[Sequence[str]] | None = None,
        direction_order: Sequence[str] | None = None,
    ):
        indep = list(indep)
        dep = list(dep)
        if not indep or not dep:
            raise ValueError("a jet context needs at least one independent and one dependent variable")
        names = indep + dep + list(params)
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        self.indep: tuple[str, ...] = tuple(indep)
        self.dep: tuple[str, ...] = tuple(dep)
        self.params: tuple[str, ...] = tuple(params)
        self.functions: dict[str, int] = dict(functions or {})
        self.fields: dict[FieldAtom, dict[str, Expr]] = {}
        for atom, rules in (fields or {}).items():
            bad = set(rules) - set(self.indep)
            if bad:
                raise ValueError(f"unknown direction {sorted(bad)[0]!r} in rule for {atom.name}")
            self.fields[atom] = {d: normalize(as_expr(v)) for d, v in rules.items()}
        self.weights: dict[str, Weight] = {}
        for d, (outer, inner) in (weights or {}).items():
            if d not in self.indep:
                raise ValueError(f"weight for unknown direction {d!r}")
            self.weights[d] = Weight(normalize(as_expr(outer)), normalize(as_expr(inner)))
        order = list(direction_order) if direction_order else list(self.indep)
        if sorted(order) != sorted(self.indep):
            raise ValueError("direction order must list every independent variable once")
        self.direction_order = tuple(order)
        self._dir_pos = {d: k for k, d in enumerate(order)}
        blocks = [list(b) for b in ranking] if ranking else [list(self.dep)]
        listed = [a for b in blocks for a in b]
        if len(set(listed)) != len(listed) or not set(listed) <= set(self.dep):
            raise ValueError("ranking blocks must list distinct dependent variables")
        rest = [a for a in self.dep if a not in listed]
        if rest:
            blocks.append(rest)
        self._block = {a: len(blocks) - k for k, b in enumerate(blocks) for a in b}
        self._dep_pos = {a: k for k, a in enumerate(self.dep)}
        self._cache: dict[tuple[int, str], Expr] = {}
        self._lock = threading.Lock()

    # atoms ------------------------------------------------------------------
    def x(self, name: str) -> IndependentVar:
        if name not in self.indep:
            raise KeyError(f"unknown independent variable {name!r}")
        return IndependentVar(name)

    def u(self, dep: str, index: Iterable[str] = ()) -> JetCoord:
        if dep not in self.dep:
            raise KeyError(f"unknown dependent variable {dep!r}")
        index = tuple(index)
        for d in index:
            if d not in self.indep:
                raise KeyError(f"unknown direction {d!r}")
        return JetCoord(dep, index)

    def sort_index(self, index: Iterable[str]) -> tuple[str, ...]:
        return tuple(sorted(index, key=self._dir_pos.__getitem__))

    def rank_key(self, atom: JetCoord) -> tuple:
        counts = tuple(atom.index.count(d) for d in self.direction_order)
        return (self._block[atom.dep], atom.order, counts, -self._dep_pos[atom.dep])

    @property
    def p(self) -> int:
        return len(self.indep)

    @property
    def q(self) -> int:
        return len(self.dep)

    # differentiation ----------------------------------------------------------
    def _atom_total(self, atom: Atom, i: str) -> Expr:
        key = (atom.serial, i)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if isinstance(atom, IndependentVar):
            val = ONE if atom.name == i else ZERO
        elif isinstance(atom, Parameter):
            val = ZERO
        elif isinstance(atom, JetCoord):
            val = Expr.of(JetCoord(atom.dep, atom.index + (i,)))
        elif isinstance(atom, FieldAtom):
            rules = self.fields.get(atom)
            if rules is None or i not in rules:
                raise MissingDerivativeRule(f"no derivative rule for field {atom.name} in direction {i}")
            val = rules[i]
        elif isinstance(atom, FnAtom):
            val = ZERO
            for j, arg in enumerate(atom.args):
                d = self.total(arg, i)
                if d:
                    val = val + Expr.of(atom.raised(j)) * d
        elif isinstance(atom, RadicalAtom):
            d = self.total(atom.base, i)
            val = d * Expr.of(atom) / (atom.base * atom.degree) if d else ZERO
        else:
            raise TypeError(f"unsupported atom {atom!r}")
        with self._lock:
            self._cache[key] = val
        return val

    def total(self, e, i: str) -> Expr:
        if i not in self.indep:
            raise KeyError(f"unknown direction {i!r}")
        return derivation(as_expr(e), lambda a: self._atom_total(a, i))


def total_derivative(ctx: JetContext, e, i: str) -> Expr:
    """D_i e."""
    return ctx.total(e, i)


def total_derivative_multi(ctx: JetContext, e, index: Iterable[str], sign: int = 1) -> Expr:
    """D_J e, or (-D)_J e when ``sign`` is -1."""
    e = as_expr(e)
    for i in index:
        if not e:
            break
        e = ctx.total(e, i)
        if sign < 0:
            e = -e
    return e


def jet_atoms(e, dep: str | None = None) -> list[JetCoord]:
    """Jet coordinates occurring in e (also inside function arguments)."""
    out = [a for a in as_expr(e).deep_atoms() if isinstance(a, JetCoord)]
    if dep is not None:
        out = [a for a in out if a.dep == dep]
    return out


@dataclass(frozen=True)
class EvolutionaryField:
    """Characteristics phi^a of X = D_J phi^a d/du^a_J."""

    ctx: JetContext
    chars: Mapping[str, Expr]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        chars = {}
        for a in self.ctx.dep:
            chars[a] = normalize(as_expr(self.chars.get(a, ZERO)))
        unknown = set(self.chars) - set(self.ctx.dep)
        if unknown:
            raise KeyError(f"characteristic for unknown dependent variable {sorted(unknown)[0]!r}")
        object.__setattr__(self, "chars", chars)

    def __getitem__(self, dep: str) -> Expr:
        return self.chars[dep]

    def prolonged(self, dep: str, index: Iterable[str]) -> Expr:
        """D_J phi^dep, memoised on the sorted multi-index."""
        idx = tuple(sorted(index))
        key = (dep, idx)
        hit = self._cache.get(key)
        if hit is None:
            if not idx:
                hit = self.chars[dep]
            else:
                hit = self.ctx.total(self.prolonged(dep, idx[:-1]), idx[-1])
            self._cache[key] = hit
        return hit


def prolong_apply(ctx: JetContext, X: EvolutionaryField, e) -> Expr:
    """Prolonged action X e = sum_{a,J} D_J phi^a * de/du^a_J."""
    e = as_expr(e)
    total = ZERO
    for atom in jet_atoms(e):
        phi = X.chars[atom.dep]
        if not phi:
            continue
        part = diff_atom(e, atom)
        if part:
            total = total + X.prolonged(atom.dep, atom.index) * part
    return total


def euler_op(ctx: JetContext, e, a: str) -> Expr:
    """Euler operator E_a e = sum_J (-D)_J de/du^a_J."""
    e = as_expr(e)
    total = ZERO
    for atom in jet_atoms(e, a):
        part = diff_atom(e, atom)
        if part:
            total = total + total_derivative_multi(ctx, part, ctx.sort_index(atom.index), -1)
    return total


def noether_R(ctx: JetContext, X: EvolutionaryField, e) -> tuple[Expr, ...]:
    """Fluxes R^i with X e = phi^a E_a(e) + D_i R^i(e).

    Each jet atom u^a_M is split along M = (m_1, ..., m_k) sorted by the
    context direction order; step s contributes
    (D_{m_{s+1}..m_k} phi^a) * ((-D)_{m_1..m_{s-1}} de/du^a_M) to R^{m_s}.
    The contributions telescope to D_M phi * P - phi * (-D)_M P.
    """
    e = as_expr(e)
    R = {i: ZERO for i in ctx.indep}
    for atom in jet_atoms(e):
        if not atom.index or not X.chars[atom.dep]:
            continue
        P = diff_atom(e, atom)
        if not P:
            continue
        M = ctx.sort_index(atom.index)
        for s, i in enumerate(M):
            R[i] = R[i] + X.prolonged(atom.dep, M[s + 1 :]) * P
            if s + 1 < len(M):
                P = -ctx.total(P, i)
    return tuple(R[i] for i in ctx.indep)


def canonicalize_field(ctx: JetContext, xi: Mapping[str, object], phi: Mapping[str, object]) -> EvolutionaryField:
    """phi^a - u^a_i xi^i."""
    chars = {}
    for a in ctx.dep:
        c = as_expr(phi.get(a, ZERO))
        for i in ctx.indep:
            x = as_expr(xi.get(i, ZERO))
            if x:
                c = c - Expr.of(ctx.u(a, (i,))) * x
        chars[a] = c
    return EvolutionaryField(ctx, chars)


def divergence(ctx: JetContext, K: Sequence, weighted: bool = True) -> Expr:
    """sum_i s_i D_i(m_i K^i), using the context weights when ``weighted``."""
    if len(K) != ctx.p:
        raise ValueError(f"flux needs {ctx.p} components, got {len(K)}")
    total = ZERO
    for i, k in zip(ctx.indep, K):
        k = as_expr(k)
        w = ctx.weights.get(i) if weighted else None
        if w is None:
            total = total + ctx.total(k, i)
        else:
            total = total + w.outer * ctx.total(w.inner * k, i)
    return total


def divergence_verify(ctx: JetContext, e, M: Sequence, weighted: bool = True) -> bool:
    return (as_expr(e) - divergence(ctx, M, weighted)).is_zero()


def _antiderivative(e: Expr, atom: JetCoord) -> Expr:
    """Polynomial antiderivative in ``atom``; NotFound when e is not polynomial in it."""
    e = normalize(e)
    if not e.denominator().free_of(atom):
        raise NotFound("integrand is not polynomial in the integration variable")
    if any(not Expr.of(a).free_of(atom) for a in e.atoms() if a is not atom):
        raise NotFound("integration variable occurs inside a function argument")
    out = ZERO
    for k, part in p_coeffs(e.num, atom.serial).items():
        out = out + Expr(part, e.den) * Expr.of(atom) ** (k + 1) / (k + 1)
    return out


def find_divergence(ctx: JetContext, e, max_steps: int = 64) -> tuple[Expr, ...]:
    """Try to write e as a flat total divergence by integrating top derivatives.

    Works for expressions linear in their highest-order derivatives; raises
    NotFound instead of guessing.
    """
    rest = normalize(as_expr(e))
    K = {i: ZERO for i in ctx.indep}
    for _ in range(max_steps):
        if rest.is_zero():
            return tuple(normalize(K[i]) for i in ctx.indep)
        atoms = [a for a in jet_atoms(rest) if a.order]
        if not atoms:
            raise NotFound("remainder has no derivatives left to integrate")
        if any(a not in rest.atoms() for a in atoms):
            raise NotFound("derivatives occur inside function arguments")
        top = max(a.order for a in atoms)
        lead = max((a for a in atoms if a.order == top), key=ctx.rank_key)
        c = diff_atom(rest, lead)
        if any(a.order == top for a in jet_atoms(c)):
            raise NotFound("expression is not linear in its highest derivatives")
        M = ctx.sort_index(lead.index)
        i = M[0]
        lower = JetCoord(lead.dep, M[1:])
        F = _antiderivative(c, lower)
        K[i] = K[i] + F
        rest = normalize(rest - ctx.total(F, i))
    raise NotFound("integration by parts did not terminate")
