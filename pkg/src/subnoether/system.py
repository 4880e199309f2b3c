"""Differential systems, reduction on the solution manifold, and certificates."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .expr import (
    ZERO,
    Expr,
    JetCoord,
    as_expr,
    diff_atom,
    normalize,
    p_coeffs,
    substitute,
)
from .jet import JetContext, divergence, jet_atoms

__all__ = [
    "Combination",
    "Certificate",
    "DifferentialSystem",
    "SolvedForm",
    "Reduction",
    "Verdict",
    "ConservationLaw",
    "NoSolvedForm",
    "NonTerminatingRanking",
    "CertificateMismatch",
    "reduce",
    "on_solutions_zero",
    "ibp_characteristic",
]


class NoSolvedForm(LookupError):
    """Reduction was requested but the system declares no solved forms."""


class NonTerminatingRanking(ValueError):
    """A solved form does not strictly lower the ranking."""


class CertificateMismatch(ValueError):
    """A supplied certificate does not reproduce the expression."""

    def __init__(self, message: str, residual: Expr):
        super().__init__(message)
        self.residual = residual


def _label_key(label: str):
    return tuple(int(t) if t.isdigit() else t for t in re.findall(r"\d+|\D+", label))


Key = tuple[str, tuple[str, ...]]


class Combination:
    """Finite sum sum_{v,J} mu^{vJ} D_J Delta_v, keyed by (label, sorted J)."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Key, object] | None = None):
        out: dict[Key, Expr] = {}
        for (label, J), c in (terms or {}).items():
            key = (label, tuple(sorted(J)))
            c = as_expr(c)
            if key in out:
                c = out[key] + c
            out[key] = c
        self.terms = {k: v for k, v in out.items() if not normalize(v).is_zero()}

    @classmethod
    def single(cls, label: str, coeff=1, index: Iterable[str] = ()) -> "Combination":
        return cls({(label, tuple(index)): coeff})

    def items(self) -> list[tuple[Key, Expr]]:
        return sorted(self.terms.items(), key=lambda it: (_label_key(it[0][0]), len(it[0][1]), it[0][1]))

    def labels(self) -> list[str]:
        return sorted({k[0] for k in self.terms}, key=_label_key)

    def coeff(self, label: str, index: Iterable[str] = ()) -> Expr:
        return self.terms.get((label, tuple(sorted(index))), ZERO)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "Combination") -> "Combination":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Combination(terms)

    def __neg__(self) -> "Combination":
        return Combination({k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "Combination") -> "Combination":
        return self + (-other)

    def scale(self, factor) -> "Combination":
        factor = as_expr(factor)
        if factor.is_zero():
            return Combination()
        return Combination({k: v * factor for k, v in self.terms.items()})

    __mul__ = scale
    __rmul__ = scale

    def derivative(self, ctx: JetContext, i: str) -> "Combination":
        """D_i applied to the combination: (D_i mu) D_J Delta + mu D_{J+i} Delta."""
        terms: dict[Key, Expr] = {}
        for (label, J), mu in self.terms.items():
            for key, val in (((label, J), ctx.total(mu, i)), ((label, tuple(sorted(J + (i,)))), mu)):
                if val:
                    terms[key] = terms[key] + val if key in terms else val
        return Combination(terms)

    def evaluate(self, system: "DifferentialSystem") -> Expr:
        total = ZERO
        for (label, J), mu in self.items():
            total = total + mu * system.prolonged(label, J)
        return total

    def __eq__(self, other):
        if not isinstance(other, Combination):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        return hash(frozenset(self.terms))

    def __repr__(self):
        return f"Combination({self.text()})"

    def text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (label, J), mu in self.items():
            target = label if not J else f"D_{{{','.join(J)}}}({label})"
            parts.append(f"({mu.text()})*{target}")
        return " + ".join(parts)

    def to_json(self) -> list[dict]:
        return [{"eq": label, "index": list(J), "coeff": mu.text()} for (label, J), mu in self.items()]


Certificate = Combination


@dataclass(frozen=True)
class SolvedForm:
    """leading = rhs on solutions, with ``leading - rhs = relation`` identically."""

    label: str
    leading: JetCoord
    rhs: Expr
    relation: Combination


@dataclass(frozen=True)
class Reduction:
    normal_form: Expr
    certificate: Combination
    certified: bool


@dataclass(frozen=True)
class Verdict:
    holds: bool
    residual: Expr
    certificate: Combination
    certified: bool = True


class DifferentialSystem:
    """Equations Delta_v with optional solved forms and syzygies.

    ``solved`` lists (label, leading atom) in the order the forms are applied;
    each right-hand side is pre-reduced by the forms listed before it.
    ``syzygies`` are combinations that must vanish identically.
    """

    def __init__(
        self,
        ctx: JetContext,
        equations: Mapping[str, object],
        solved: Sequence[tuple[str, JetCoord]] = (),
        syzygies: Mapping[str, Combination] | None = None,
    ):
        self.ctx = ctx
        self.equations: dict[str, Expr] = {k: normalize(as_expr(v)) for k, v in equations.items()}
        if not self.equations:
            raise ValueError("a system needs at least one equation")
        self.labels = tuple(self.equations)
        self._prolonged: dict[Key, Expr] = {}
        self._forms_cache: dict[tuple[int, tuple[str, ...]], tuple[Expr, Combination]] = {}
        self.syzygies: dict[str, Combination] = {}
        for name, comb in (syzygies or {}).items():
            self._check_labels(comb)
            if not comb.evaluate(self).is_zero():
                raise ValueError(f"syzygy {name} does not vanish identically")
            self.syzygies[name] = comb
        self.solved: list[SolvedForm] = []
        for label, lead in solved:
            self._add_solved(label, lead)

    def _check_labels(self, comb: Combination):
        for label in comb.labels():
            if label not in self.equations:
                raise KeyError(f"unknown equation {label!r}")

    def _add_solved(self, label: str, lead: JetCoord):
        if label not in self.equations:
            raise KeyError(f"unknown equation {label!r}")
        delta = self.equations[label]
        c = diff_atom(delta, lead)
        if c.is_zero() or not c.free_of(lead):
            raise ValueError(f"{label} is not linear in {lead.text()}")
        rest = delta - c * Expr.of(lead)
        if not rest.free_of(lead):
            raise ValueError(f"{label} is not linear in {lead.text()}")
        rhs = -rest / c
        relation = Combination.single(label, 1 / c)
        if self.solved:
            red = reduce(self, rhs)
            if not red.certified:
                raise ValueError(f"pre-reducing the solved form of {label} needs uncertified substitutions")
            relation = relation + red.certificate
            rhs = red.normal_form
        top = self.ctx.rank_key(lead)
        for a in jet_atoms(rhs):
            if self.ctx.rank_key(a) >= top:
                raise NonTerminatingRanking(
                    f"solved form of {label} for {lead.text()} contains {a.text()}, which does not rank lower"
                )
        self.solved.append(SolvedForm(label, lead, normalize(rhs), relation))

    @property
    def n(self) -> int:
        return len(self.equations)

    def prolonged(self, label: str, index: Iterable[str] = ()) -> Expr:
        """D_J Delta_label."""
        J = tuple(sorted(index))
        key = (label, J)
        hit = self._prolonged.get(key)
        if hit is None:
            if not J:
                hit = self.equations[label]
            else:
                hit = self.ctx.total(self.prolonged(label, J[:-1]), J[-1])
            self._prolonged[key] = hit
        return hit

    def combine(self, multipliers: Mapping[str, object]) -> Expr:
        """sum_v Xi^v Delta_v for function multipliers."""
        return Combination({(k, ()): v for k, v in multipliers.items()}).evaluate(self)

    def _match(self, atom: JetCoord) -> tuple[int, tuple[str, ...]] | None:
        for k, form in enumerate(self.solved):
            lead = form.leading
            if lead.dep != atom.dep:
                continue
            rest = list(atom.index)
            ok = True
            for d in lead.index:
                if d in rest:
                    rest.remove(d)
                else:
                    ok = False
                    break
            if ok:
                return k, tuple(sorted(rest))
        return None

    def _form(self, k: int, K: tuple[str, ...]) -> tuple[Expr, Combination]:
        """(D_K rhs, D_K relation) for solved form k."""
        key = (k, K)
        hit = self._forms_cache.get(key)
        if hit is None:
            if not K:
                form = self.solved[k]
                hit = (form.rhs, form.relation)
            else:
                rhs, rel = self._form(k, K[:-1])
                hit = (self.ctx.total(rhs, K[-1]), rel.derivative(self.ctx, K[-1]))
            self._forms_cache[key] = hit
        return hit


def _replace(e: Expr, y: JetCoord, B: Expr) -> tuple[Expr, Expr]:
    """(e with y -> B, Q) such that e - e(B) = (y - B) * Q identically.

    With e = n/d and N(y) = n(y) d(B) - n(B) d(y), N(B) = 0 and
    N(y) = (y - B) * sum_k N_k sum_{j<k} y^j B^(k-1-j).
    """
    e = normalize(e)
    n = Expr(e.num)
    d = e.denominator()
    Y = Expr.of(y)
    nB = substitute(n, {y: B})
    dB = substitute(d, {y: B})
    N = n * dB - nB * d
    Q = ZERO
    if N.num:
        for k, part in p_coeffs(N.num, y.serial).items():
            if not k:
                continue
            Nk = Expr(part, N.den)
            Q = Q + Nk * sum((Y**j * B ** (k - 1 - j) for j in range(k)), ZERO)
        Q = Q / (d * dB)
    return nB / dB, Q


def reduce(system: DifferentialSystem, e) -> Reduction:
    """Normal form of e modulo the solved forms and their prolongations.

    Tracks multipliers so that e = normal_form + certificate identically.  A
    substitution inside a function argument cannot be expressed that way;
    the result is then flagged ``certified=False``.
    """
    if not system.solved:
        raise NoSolvedForm("the system declares no solved forms")
    ctx = system.ctx
    cur = normalize(as_expr(e))
    cert = Combination()
    certified = True
    while True:
        best = None
        for a in jet_atoms(cur):
            m = system._match(a)
            if m is not None:
                key = ctx.rank_key(a)
                if best is None or key > best[0]:
                    best = (key, a, m)
        if best is None:
            break
        _, atom, (k, K) = best
        B, rel = system._form(k, K)
        nested = any(atom is not b and not Expr.of(b).free_of(atom) for b in cur.atoms())
        if nested:
            cur = normalize(substitute(cur, {atom: B}))
            certified = False
            continue
        new, Q = _replace(cur, atom, B)
        cert = cert + rel.scale(Q)
        cur = normalize(new)
    return Reduction(cur, cert, certified)


def on_solutions_zero(system: DifferentialSystem, e, cert: Combination | None = None) -> Verdict:
    """Decide e = 0 on solutions, by certificate or by reduction.

    A supplied certificate that does not reproduce e raises CertificateMismatch.
    """
    e = as_expr(e)
    if cert is not None:
        residual = normalize(e - cert.evaluate(system))
        if not residual.is_zero():
            raise CertificateMismatch("certificate does not reproduce the expression", residual)
        return Verdict(True, residual, cert)
    if e.is_zero():
        return Verdict(True, e, Combination())
    red = reduce(system, e)
    return Verdict(red.normal_form.is_zero(), red.normal_form, red.certificate, red.certified)


@dataclass(frozen=True)
class Characteristics:
    chars: dict[str, Expr]
    trivial_flux: tuple[Expr, ...]
    certificate: Combination


def ibp_characteristic(
    system: DifferentialSystem,
    cert: Combination,
    rewrites: Sequence[tuple[str, object]] = (),
    trades: Sequence[tuple[str, str, object]] = (),
) -> Characteristics:
    """Integrate every D_J term by parts.

    Returns characteristics mu_bar with
    sum_v mu_bar^v Delta_v + div(trivial_flux) = cert identically.
    ``rewrites`` add coeff * syzygy to the certificate first; ``trades`` move
    q*Delta_to out of mu_bar^from and q*Delta_from into mu_bar^to.
    """
    ctx = system.ctx
    for name, c in rewrites:
        if name not in system.syzygies:
            raise KeyError(f"unknown syzygy {name!r}")
        cert = cert + system.syzygies[name].scale(c)
    chars = {label: ZERO for label in system.labels}
    flux = {i: ZERO for i in ctx.indep}
    for (label, J), mu in cert.items():
        J = ctx.sort_index(J)
        m = mu
        for s, i in enumerate(J):
            flux[i] = flux[i] + m * system.prolonged(label, J[s + 1 :])
            m = -ctx.total(m, i)
        chars[label] = chars[label] + m
    for src, dst, q in trades:
        q = as_expr(q)
        chars[src] = chars[src] - q * system.equations[dst]
        chars[dst] = chars[dst] + q * system.equations[src]
    return Characteristics(
        {k: normalize(v) for k, v in chars.items()},
        tuple(normalize(flux[i]) for i in ctx.indep),
        cert,
    )


@dataclass
class ConservationLaw:
    """Flux K with div K = certificate; ``trivial`` is a discarded trivial flux."""

    flux: tuple[Expr, ...]
    certificate: Combination
    trivial: tuple[Expr, ...] | None = None
    weighted: bool = False
    characteristics: dict[str, Expr] | None = field(default=None)

    def residual(self, system: DifferentialSystem) -> Expr:
        return normalize(divergence(system.ctx, self.flux, self.weighted) - self.certificate.evaluate(system))

    def verify(self, system: DifferentialSystem) -> bool:
        return self.residual(system).is_zero()
