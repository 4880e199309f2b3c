"""Exact rational expressions over jet-space atoms.

An :class:`Expr` is stored directly in normal form: a numerator polynomial
with rational coefficients over interned atoms, and a denominator kept as a
product of irreducible primitive factors.  Zero testing never needs a GCD
(an expression is zero iff its numerator is the empty polynomial); full
cancellation of polynomial factors happens lazily in :func:`normalize`.

Algebraic atoms (square roots, or field atoms declared with a relation such
as ``B^2 = r^2/(a^2 r^2 + b^2)``) are reduced eagerly so that their degree in
any numerator stays below the relation degree and they never occur in a
denominator.
"""

from __future__ import annotations

import threading
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

from sympy import QQ
from sympy.polys.polyerrors import ExactQuotientFailed
from sympy.polys.rings import ring

__all__ = [
    "Atom",
    "IndependentVar",
    "Parameter",
    "JetCoord",
    "FnAtom",
    "FieldAtom",
    "RadicalAtom",
    "Expr",
    "ZERO",
    "ONE",
    "as_expr",
    "normalize",
    "diff_atom",
    "substitute",
    "eval_exact",
    "eval_partial",
    "formal_partial",
    "derivation",
    "to_text",
    "to_json",
    "FnInstantiation",
    "UnsupportedRadical",
    "DivisionByZeroAtPoint",
    "IrrationalValue",
]


class UnsupportedRadical(ValueError):
    """A rational power could not be brought into canonical form."""


class DivisionByZeroAtPoint(ZeroDivisionError):
    """A denominator vanished at the evaluation point."""


class IrrationalValue(ValueError):
    """Evaluation left an algebraic atom that has no rational value."""


_LOCK = threading.RLock()
_ATOMS: list["Atom"] = []
_INTERN: dict[tuple, "Atom"] = {}
# atom serial -> (degree, value) for atoms satisfying atom**degree == value
_ALG: dict[int, tuple[int, "Expr"]] = {}


def _c(x):
    if type(x) is Fraction and x.denominator == 1:
        return x.numerator
    return x


def _q(x) -> Fraction:
    return x if type(x) is Fraction else Fraction(x)


# ---------------------------------------------------------------------------
# atoms


class Atom:
    """Interned, immutable symbol.  Subclasses define ``_ident`` and ``key``."""

    __slots__ = ("serial", "ident", "key", "__weakref__")
    rank = 0

    def __new__(cls, *args, **kwargs):
        ident, init = cls._identity(*args, **kwargs)
        ident = (cls.__name__,) + ident
        with _LOCK:
            atom = _INTERN.get(ident)
            if atom is None:
                atom = object.__new__(cls)
                atom.ident = ident
                init(atom)
                atom.serial = len(_ATOMS)
                _ATOMS.append(atom)
                _INTERN[ident] = atom
                alg = atom.algebraic
                if alg is not None:
                    _ALG[atom.serial] = alg
        return atom

    def __hash__(self):
        return self.serial

    def __eq__(self, other):
        return self is other

    def __lt__(self, other):
        return self.key < other.key

    def __reduce__(self):
        return (_rebuild_atom, (type(self), self._args()))

    @property
    def algebraic(self) -> tuple[int, "Expr"] | None:
        return None

    def __repr__(self):
        return self.text()


def _rebuild_atom(cls, args):
    return cls(*args)


class IndependentVar(Atom):
    __slots__ = ("name",)
    rank = 0

    @classmethod
    def _identity(cls, name: str):
        def init(a):
            a.name = name
            a.key = (cls.rank, name)

        return (name,), init

    def _args(self):
        return (self.name,)

    def text(self):
        return self.name


class Parameter(Atom):
    __slots__ = ("name",)
    rank = 1

    @classmethod
    def _identity(cls, name: str):
        def init(a):
            a.name = name
            a.key = (cls.rank, name)

        return (name,), init

    def _args(self):
        return (self.name,)

    def text(self):
        return self.name


class JetCoord(Atom):
    """Derivative coordinate ``u^a_J``; the multi-index is a sorted tuple of names."""

    __slots__ = ("dep", "index")
    rank = 2

    @classmethod
    def _identity(cls, dep: str, index: Iterable[str] = ()):
        idx = tuple(sorted(index))

        def init(a):
            a.dep = dep
            a.index = idx
            a.key = (cls.rank, dep, len(idx), idx)

        return (dep, idx), init

    def _args(self):
        return (self.dep, self.index)

    @property
    def order(self) -> int:
        return len(self.index)

    def text(self):
        if not self.index:
            return self.dep
        if len(self.index) == 1:
            return f"{self.dep}_{self.index[0]}"
        return f"{self.dep}_{{{','.join(self.index)}}}"


class FieldAtom(Atom):
    """Named field with closed-form derivative rules kept in the jet context.

    ``relation=(n, value)`` declares ``atom**n == value``.
    """

    __slots__ = ("name", "relation")
    rank = 3

    @classmethod
    def _identity(cls, name: str, relation: tuple[int, "Expr"] | None = None):
        if relation is not None:
            n, value = relation
            relation = (int(n), normalize(as_expr(value)))
            if relation[0] < 2:
                raise ValueError("relation degree must be at least 2")

        def init(a):
            a.name = name
            a.relation = relation
            extra = () if relation is None else (relation[0], relation[1].text())
            a.key = (cls.rank, name, extra)

        ident = (name,) if relation is None else (name, relation[0], relation[1])
        return ident, init

    def _args(self):
        return (self.name, self.relation)

    @property
    def algebraic(self):
        return self.relation

    def text(self):
        return self.name


class FnAtom(Atom):
    """Arbitrary function ``name`` with per-argument derivative orders."""

    __slots__ = ("name", "orders", "args")
    rank = 4

    @classmethod
    def _identity(cls, name: str, orders: Iterable[int], args: Iterable):
        args = tuple(normalize(as_expr(x)) for x in args)
        orders = tuple(int(k) for k in orders)
        if len(orders) != len(args):
            raise ValueError("one derivative order per argument is required")
        if any(k < 0 for k in orders):
            raise ValueError("derivative orders must be non-negative")

        def init(a):
            a.name = name
            a.orders = orders
            a.args = args
            a.key = (cls.rank, name, orders, tuple(x.text() for x in args))

        return (name, orders, args), init

    def _args(self):
        return (self.name, self.orders, self.args)

    def raised(self, j: int, k: int = 1) -> "FnAtom":
        orders = list(self.orders)
        orders[j] += k
        return FnAtom(self.name, orders, self.args)

    def text(self):
        args = ",".join(x.text() for x in self.args)
        if not any(self.orders):
            return f"{self.name}({args})"
        return f"diff({self.name},{','.join(map(str, self.orders))})({args})"


class RadicalAtom(Atom):
    """``base**(1/degree)`` for a base that is not a perfect power."""

    __slots__ = ("base", "degree")
    rank = 5

    @classmethod
    def _identity(cls, base, degree: int):
        base = normalize(as_expr(base))

        def init(a):
            a.base = base
            a.degree = int(degree)
            a.key = (cls.rank, int(degree), base.text())

        return (base, int(degree)), init

    def _args(self):
        return (self.base, self.degree)

    @property
    def algebraic(self):
        return (self.degree, self.base)

    def text(self):
        return f"({self.base.text()})^(1/{self.degree})"


# ---------------------------------------------------------------------------
# sparse polynomials: dict monomial -> coefficient, monomial = sorted ((serial, exp), ...)


def _mmul(a, b):
    if not a:
        return b
    if not b:
        return a
    out = []
    i = j = 0
    la, lb = len(a), len(b)
    while i < la and j < lb:
        sa, ea = a[i]
        sb, eb = b[j]
        if sa == sb:
            out.append((sa, ea + eb))
            i += 1
            j += 1
        elif sa < sb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    if i < la:
        out.extend(a[i:])
    if j < lb:
        out.extend(b[j:])
    return tuple(out)


def p_add(p, q):
    if len(p) < len(q):
        p, q = q, p
    r = dict(p)
    for m, c in q.items():
        v = r.get(m)
        if v is None:
            r[m] = c
        else:
            v = v + c
            if v:
                r[m] = _c(v)
            else:
                del r[m]
    return r


def p_neg(p):
    return {m: -c for m, c in p.items()}


def p_scale(p, c):
    if not c:
        return {}
    c = _c(c)
    if c == 1:
        return p
    return {m: _c(v * c) for m, v in p.items()}


def p_mul(p, q):
    if not p or not q:
        return {}
    if len(p) > len(q):
        p, q = q, p
    if len(p) == 1:
        ((m1, c1),) = p.items()
        if not m1:
            return p_scale(q, c1)
        return {_mmul(m1, m2): _c(c1 * c2) for m2, c2 in q.items()}
    if len(p) * len(q) < 64:
        return _p_mul_plain(p, q)
    # Pack each monomial into one int, one byte per atom, so that
    # multiplying monomials is a single integer addition.
    top: dict[int, int] = {}
    for poly in (p, q):
        deg: dict[int, int] = {}
        for m in poly:
            for s, e in m:
                if e > deg.get(s, 0):
                    deg[s] = e
        for s, e in deg.items():
            top[s] = top.get(s, 0) + e
    if max(top.values()) > 255:
        return _p_mul_plain(p, q)
    serials = sorted(top)
    shift = {s: 8 * i for i, s in enumerate(serials)}
    pa = [(sum(e << shift[s] for s, e in m), c) for m, c in p.items()]
    qa = [(sum(e << shift[s] for s, e in m), c) for m, c in q.items()]
    r: dict = {}
    get = r.get
    for k1, c1 in pa:
        for k2, c2 in qa:
            k = k1 + k2
            r[k] = get(k, 0) + c1 * c2
    n = len(serials)
    out = {}
    for k, v in r.items():
        if v:
            b = k.to_bytes(n, "little")
            out[tuple([(serials[i], e) for i, e in enumerate(b) if e])] = _c(v)
    return out


def _p_mul_plain(p, q):
    r: dict = {}
    get = r.get
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mmul(m1, m2)
            v = get(m)
            r[m] = c1 * c2 if v is None else v + c1 * c2
    return {m: _c(v) for m, v in r.items() if v}


def p_pow(p, n):
    result = {(): 1}
    base = p
    while n:
        if n & 1:
            result = p_mul(result, base)
        n >>= 1
        if n:
            base = p_mul(base, base)
    return result


def p_partial(p, s):
    r = {}
    for m, c in p.items():
        for k, (t, e) in enumerate(m):
            if t == s:
                nm = m[:k] + m[k + 1 :] if e == 1 else m[:k] + ((t, e - 1),) + m[k + 1 :]
                r[nm] = _c(r.get(nm, 0) + c * e)
                break
            if t > s:
                break
    return {m: c for m, c in r.items() if c}


def p_serials(p) -> set[int]:
    out = set()
    for m in p:
        for s, _ in m:
            out.add(s)
    return out


def p_coeffs(p, s) -> dict[int, dict]:
    """Split ``p`` by powers of the atom with serial ``s``."""
    out: dict[int, dict] = {}
    for m, c in p.items():
        k = 0
        rest = m
        for i, (t, e) in enumerate(m):
            if t == s:
                k = e
                rest = m[:i] + m[i + 1 :]
                break
            if t > s:
                break
        out.setdefault(k, {})[rest] = c
    return out


def p_atom(serial: int, exp: int = 1):
    return {((serial, exp),): 1}


def _frozen(p):
    return frozenset(p.items())


def _mono_key(m):
    return (
        -sum(e for _, e in m),
        tuple(sorted((_ATOMS[s].key, -e) for s, e in m)),
    )


def _sorted_terms(p):
    return sorted(p.items(), key=lambda it: _mono_key(it[0]))


# ---------------------------------------------------------------------------
# denominator factors

_FACTORS: list[dict] = []
_FACTOR_INDEX: dict[frozenset, int] = {}
_FACTOR_ATOM: dict[int, int] = {}
_ATOM_FACTOR: dict[int, int] = {}
_FACTOR_KEYS: list[str] = []


def _factor_serial(poly) -> int:
    fz = _frozen(poly)
    with _LOCK:
        s = _FACTOR_INDEX.get(fz)
        if s is None:
            s = len(_FACTORS)
            _FACTORS.append(poly)
            _FACTOR_INDEX[fz] = s
            _FACTOR_KEYS.append(_poly_text(poly))
            if len(poly) == 1:
                ((m, _),) = poly.items()
                if len(m) == 1 and m[0][1] == 1:
                    _FACTOR_ATOM[s] = m[0][0]
                    _ATOM_FACTOR[m[0][0]] = s
        return s


def _atom_factor(serial: int) -> int:
    s = _ATOM_FACTOR.get(serial)
    if s is None:
        s = _factor_serial(p_atom(serial))
    return s


def _den_merge(a, b, sign=1):
    """Multiply (sign=1) or divide (sign=-1, exact) factored denominators."""
    if not b:
        return a
    d = dict(a)
    for f, e in b:
        v = d.get(f, 0) + sign * e
        if v:
            d[f] = v
        else:
            d.pop(f, None)
    return tuple(sorted(d.items()))


def _den_lcm(a, b):
    d = dict(a)
    for f, e in b:
        if d.get(f, 0) < e:
            d[f] = e
    return tuple(sorted(d.items()))


@lru_cache(maxsize=65536)
def _den_poly(den):
    r = {(): 1}
    for f, e in den:
        r = p_mul(r, p_pow(_FACTORS[f], e))
    return r


def _primitive(p):
    """Return (content, primitive integer poly with positive leading coefficient)."""
    from math import gcd, lcm

    den = 1
    for c in p.values():
        if type(c) is Fraction:
            den = lcm(den, c.denominator)
    ints = {m: int(c * den) for m, c in p.items()}
    g = 0
    for c in ints.values():
        g = gcd(g, c)
    lead = _sorted_terms(ints)[0][1]
    if lead < 0:
        g = -g
    prim = {m: c // g for m, c in ints.items()}
    return Fraction(g, den), prim


_FACTORIZE_CACHE: dict[frozenset, tuple] = {}


def _sympy_ring(serials):
    gens = sorted(serials)
    R = ring(",".join(f"g{s}" for s in gens) if gens else "g", QQ)[0]
    return R, {s: i for i, s in enumerate(gens)}


def _to_ring(R, pos, p):
    n = len(R.gens)
    d = {}
    for m, c in p.items():
        v = [0] * n
        for s, e in m:
            v[pos[s]] = e
        c = _q(c)
        d[tuple(v)] = QQ(c.numerator, c.denominator)
    return R.from_dict(d)


def _from_ring(el, gens):
    out = {}
    for exps, c in el.items():
        m = tuple((gens[i], e) for i, e in enumerate(exps) if e)
        out[m] = _c(Fraction(int(c.numerator), int(c.denominator)))
    return out


def _factorize(p):
    """Factor a nonzero polynomial into (rational constant, ((factor, exp), ...))."""
    content: dict[int, int] = {}
    first = True
    for m in p:
        exps = dict(m)
        if first:
            content = exps
            first = False
        else:
            content = {s: min(e, exps[s]) for s, e in content.items() if s in exps}
        if not content:
            break
    if content:
        p = {tuple((s, e - content.get(s, 0)) for s, e in m if e - content.get(s, 0)): c for m, c in p.items()}
    const, prim = _primitive(p)
    factors: dict[int, int] = {}
    for s, e in content.items():
        f = _atom_factor(s)
        factors[f] = factors.get(f, 0) + e
    if not (len(prim) == 1 and () in prim):
        key = _frozen(prim)
        cached = _FACTORIZE_CACHE.get(key)
        if cached is None:
            serials = sorted(p_serials(prim))
            R, pos = _sympy_ring(serials)
            c0, flist = _to_ring(R, pos, prim).factor_list()
            c0 = Fraction(int(c0.numerator), int(c0.denominator))
            parts = []
            for fel, e in flist:
                fp = _from_ring(fel, serials)
                fc, fprim = _primitive(fp)
                c0 *= fc**e
                parts.append((_factor_serial(fprim), e))
            cached = (c0, tuple(parts))
            _FACTORIZE_CACHE[key] = cached
        c0, parts = cached
        const *= c0
        for f, e in parts:
            factors[f] = factors.get(f, 0) + e
    return const, tuple(sorted(factors.items()))


def _exquo(num, f):
    """Exact quotient num / factor f, or None when f does not divide num."""
    fp = _FACTORS[f]
    fs = p_serials(fp)
    ns = p_serials(num)
    if not fs <= ns:
        return None
    serials = sorted(ns)
    R, pos = _sympy_ring(serials)
    try:
        q = _to_ring(R, pos, num).exquo(_to_ring(R, pos, fp))
    except ExactQuotientFailed:
        return None
    return _from_ring(q, serials)


# ---------------------------------------------------------------------------
# expressions


class Expr:
    """Exact rational function over atoms: ``num / prod(factor**exp)``."""

    __slots__ = ("num", "den", "_canon", "_hash", "_atoms")

    def __init__(self, num=None, den=()):
        self.num = {} if num is None else num
        self.den = den if self.num else ()
        self._canon = not self.den
        self._hash = None
        self._atoms = None

    # constructors ---------------------------------------------------------
    @staticmethod
    def const(c) -> "Expr":
        c = _c(Fraction(c)) if not isinstance(c, int) else c
        return Expr({(): c} if c else {})

    @staticmethod
    def of(atom: Atom) -> "Expr":
        return Expr(p_atom(atom.serial))

    # inspection -----------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.num

    def is_constant(self) -> bool:
        e = normalize(self)
        return not e.den and (not e.num or (len(e.num) == 1 and () in e.num))

    def constant_value(self) -> Fraction:
        e = normalize(self)
        if not e.is_constant():
            raise ValueError(f"not a constant: {e.text()}")
        return _q(e.num.get((), 0))

    def is_polynomial(self) -> bool:
        return not normalize(self).den

    def top_serials(self) -> set[int]:
        if self._atoms is None:
            s = p_serials(self.num)
            for f, _ in self.den:
                s |= p_serials(_FACTORS[f])
            self._atoms = frozenset(s)
        return self._atoms

    def atoms(self) -> list[Atom]:
        """Atoms occurring at top level (not inside function arguments)."""
        return sorted((_ATOMS[s] for s in self.top_serials()), key=lambda a: a.key)

    def deep_atoms(self) -> list[Atom]:
        """All atoms, including those nested in function arguments and radicands."""
        seen: dict[int, Atom] = {}
        for a in self.atoms():
            for b in _deep(a):
                seen[b.serial] = b
        return sorted(seen.values(), key=lambda a: a.key)

    def free_of(self, atom: Atom) -> bool:
        return all(atom.serial not in _deep_serials(a) for a in self.atoms())

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        if not other.num:
            return self
        if not self.num:
            return other
        if self.den == other.den:
            return _make(p_add(self.num, other.num), self.den)
        lcm = _den_lcm(self.den, other.den)
        a = p_mul(self.num, _den_poly(_den_merge(lcm, self.den, -1)))
        b = p_mul(other.num, _den_poly(_den_merge(lcm, other.den, -1)))
        return _make(p_add(a, b), lcm)

    __radd__ = __add__

    def __neg__(self):
        return Expr(p_neg(self.num), self.den)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, other):
        other = as_expr(other)
        if not self.num or not other.num:
            return ZERO
        num = p_mul(self.num, other.num)
        res = _make(num, _den_merge(self.den, other.den))
        return _reduce_alg(res)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_expr(other)
        if not other.num:
            raise ZeroDivisionError("division by the zero expression")
        return self * _inverse(other)

    def __rtruediv__(self, other):
        return as_expr(other) / self

    def __pow__(self, k):
        if isinstance(k, Expr):
            k = k.constant_value()
        if isinstance(k, Fraction) and k.denominator != 1:
            return _rational_power(self, k)
        k = int(k)
        if k < 0:
            return _inverse(self) ** (-k)
        if k == 0:
            return ONE
        result = ONE
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # comparison -----------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Expr):
            if isinstance(other, (int, Fraction, Atom)):
                other = as_expr(other)
            else:
                return NotImplemented
        if self is other:
            return True
        return (self - other).is_zero()

    def __hash__(self):
        if self._hash is None:
            e = normalize(self)
            self._hash = hash((_frozen(e.num), e.den))
        return self._hash

    def __bool__(self):
        return bool(self.num)

    # views ------------------------------------------------------------------
    def text(self) -> str:
        return to_text(self)

    def __repr__(self):
        return f"Expr({self.text()})"

    def __str__(self):
        return self.text()

    def numerator(self) -> "Expr":
        e = normalize(self)
        return Expr(e.num)

    def denominator(self) -> "Expr":
        e = normalize(self)
        return Expr(_den_poly(e.den)) if e.den else ONE

    def terms(self) -> list["Expr"]:
        """Canonical numerator terms, each divided by the denominator."""
        e = normalize(self)
        return [_make({m: c}, e.den) for m, c in _sorted_terms(e.num)]


ZERO = Expr()
ONE = Expr({(): 1})


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Atom):
        return Expr.of(x)
    if isinstance(x, (int, Fraction)):
        return Expr.const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _make(num, den) -> Expr:
    """Build an expression, cancelling bare-atom denominator factors eagerly."""
    if not num:
        return ZERO
    if den:
        newden = []
        for f, e in den:
            a = _FACTOR_ATOM.get(f)
            if a is not None:
                k = e
                for m in num:
                    got = 0
                    for s, x in m:
                        if s == a:
                            got = x
                            break
                        if s > a:
                            break
                    if got < k:
                        k = got
                        if not k:
                            break
                if k:
                    num = _divide_atom(num, a, k)
                    e -= k
            if e:
                newden.append((f, e))
        den = tuple(newden)
    return Expr(num, den)


def _divide_atom(num, a, k):
    out = {}
    for m, c in num.items():
        nm = []
        for s, x in m:
            if s == a:
                if x > k:
                    nm.append((s, x - k))
            else:
                nm.append((s, x))
        out[tuple(nm)] = c
    return out


def _reduce_alg(e: Expr) -> Expr:
    if not _ALG or not e.num:
        return e
    hits = None
    for m in e.num:
        for s, x in m:
            alg = _ALG.get(s)
            if alg is not None and x >= alg[0]:
                hits = True
                break
        if hits:
            break
    if not hits:
        return e
    keep = {}
    result = ZERO
    for m, c in e.num.items():
        factor = ONE
        nm = []
        for s, x in m:
            alg = _ALG.get(s)
            if alg is not None and x >= alg[0]:
                q, r = divmod(x, alg[0])
                factor = factor * (alg[1] ** q)
                if r:
                    nm.append((s, r))
            else:
                nm.append((s, x))
        if factor is ONE:
            keep[m] = c
        else:
            result = result + Expr({tuple(nm): c}) * factor
    result = result + Expr(keep)
    return _make(result.num, _den_merge(result.den, e.den))


def _inverse(e: Expr) -> Expr:
    num, den = e.num, e.den
    algs = [s for s in p_serials(num) if s in _ALG]
    if algs:
        if len(num) == 1:
            ((m, c),) = num.items()
            result = Expr(_den_poly(den)) / Expr.const(c)
            plain = []
            for s, x in m:
                if s in _ALG:
                    n, v = _ALG[s]
                    # s**-x == s**(x*(n-1)) / v**x
                    result = result * Expr(p_atom(s, x * (n - 1))) * _inverse(v) ** x
                else:
                    plain.append((s, x))
            if plain:
                result = result * _inverse(Expr({tuple(plain): 1}))
            return result
        if len(algs) == 1 and _ALG[algs[0]][0] == 2:
            s = algs[0]
            conj = {}
            for m, c in num.items():
                odd = any(t == s and x % 2 for t, x in m)
                conj[m] = -c if odd else c
            prod = _reduce_alg(Expr(num) * Expr(conj))
            if s in prod.top_serials():
                raise UnsupportedRadical("conjugate did not rationalise the denominator")
            return Expr(_den_poly(den)) * Expr(conj) * _inverse(prod)
        raise UnsupportedRadical("denominator with several algebraic atoms")
    const, factors = _factorize(num)
    return _make(p_scale(_den_poly(den), 1 / const), factors)


def _perfect_root(c: Fraction, q: int) -> Fraction | None:
    from sympy import integer_nthroot

    if c < 0:
        if q % 2 == 0:
            return None
        r = _perfect_root(-c, q)
        return None if r is None else -r
    a, ea = integer_nthroot(c.numerator, q)
    b, eb = integer_nthroot(c.denominator, q)
    if ea and eb:
        return Fraction(int(a), int(b))
    return None


def _rational_power(e: Expr, k: Fraction) -> Expr:
    p, q = k.numerator, k.denominator
    e = normalize(e)
    if e.is_zero():
        if k < 0:
            raise ZeroDivisionError("zero to a negative power")
        return ZERO
    if e.is_constant():
        r = _perfect_root(e.constant_value(), q)
        if r is not None:
            return Expr.const(r) ** p
    if any(isinstance(a, RadicalAtom) for a in e.atoms()):
        raise UnsupportedRadical(f"nested radical in ({e.text()})^({k})")
    return Expr.of(RadicalAtom(e, q)) ** p


def normalize(e) -> Expr:
    """Canonical reduced form: no denominator factor divides the numerator."""
    e = as_expr(e)
    if e._canon:
        return e
    num = e.num
    den = []
    for f, k in e.den:
        if f not in _FACTOR_ATOM:
            while k:
                q = _exquo(num, f)
                if q is None:
                    break
                num = q
                k -= 1
        if k:
            den.append((f, k))
    out = Expr(num, tuple(den))
    out._canon = True
    return out


# ---------------------------------------------------------------------------
# structure helpers


@lru_cache(maxsize=None)
def _deep_serials(atom: Atom) -> frozenset:
    out = {atom.serial}
    if isinstance(atom, FnAtom):
        for x in atom.args:
            for a in x.atoms():
                out |= _deep_serials(a)
    elif isinstance(atom, RadicalAtom):
        for a in atom.base.atoms():
            out |= _deep_serials(a)
    elif isinstance(atom, FieldAtom) and atom.relation is not None:
        for a in atom.relation[1].atoms():
            out |= _deep_serials(a)
    return frozenset(out)


def _deep(atom: Atom) -> list[Atom]:
    return [_ATOMS[s] for s in _deep_serials(atom)]


def formal_partial(e: Expr, atom: Atom) -> Expr:
    """Partial derivative treating every top-level atom as independent."""
    s = atom.serial
    if s not in e.top_serials():
        return ZERO
    res = _make(p_partial(e.num, s), e.den)
    for f, k in e.den:
        df = p_partial(_FACTORS[f], s)
        if df:
            res = res - _make(p_scale(p_mul(e.num, df), k), _den_merge(e.den, ((f, 1),)))
    return _reduce_alg(res)


def _atom_derivative(b: Atom, a: Atom) -> Expr | None:
    """d b / d a for atom b, chaining through function arguments and relations."""
    if b is a:
        return ONE
    if a.serial not in _deep_serials(b):
        return None
    if isinstance(b, FnAtom):
        total = ZERO
        for j, arg in enumerate(b.args):
            d = diff_atom(arg, a)
            if d:
                total = total + Expr.of(b.raised(j)) * d
        return total
    alg = b.algebraic
    if alg is not None:
        n, v = alg
        dv = diff_atom(v, a)
        if not dv:
            return None
        # d b = dv / (n b^(n-1)) = dv * b / (n v)
        return dv * Expr.of(b) / (v * n)
    return None


def diff_atom(e, a: Atom) -> Expr:
    """Partial derivative of ``e`` with respect to atom ``a``."""
    e = as_expr(e)
    total = ZERO
    for s in sorted(e.top_serials()):
        b = _ATOMS[s]
        db = _atom_derivative(b, a)
        if db is None or not db:
            continue
        part = formal_partial(e, b)
        if part:
            total = total + part * db
    return total


def derivation(e: Expr, rule: Callable[[Atom], Expr | None]) -> Expr:
    """Apply the derivation determined by its values ``rule(atom)`` on atoms."""
    e = as_expr(e)
    if not e.num:
        return ZERO
    memo: dict[int, Expr | None] = {}

    def value(s):
        if s not in memo:
            v = rule(_ATOMS[s])
            memo[s] = v if v is not None and v.num else None
        return memo[s]

    res = _poly_derivation(e.num, value)
    if e.den:
        res = _make(res.num, _den_merge(res.den, e.den))
        for f, k in e.den:
            df = _poly_derivation(_FACTORS[f], value)
            if df:
                t = _make(p_scale(p_mul(e.num, df.num), k), _den_merge(df.den, _den_merge(e.den, ((f, 1),))))
                res = res - t
    return _reduce_alg(res)


def _poly_derivation(p, value) -> Expr:
    acc_poly: dict = {}
    acc = ZERO
    for s in sorted(p_serials(p)):
        d = value(s)
        if d is None:
            continue
        part = p_partial(p, s)
        if not d.den:
            acc_poly = p_add(acc_poly, p_mul(part, d.num))
        else:
            acc = acc + _make(p_mul(part, d.num), d.den)
    return _reduce_alg(acc + Expr(acc_poly))


# ---------------------------------------------------------------------------
# substitution and evaluation


def _eval_poly(p, val) -> Expr:
    """Evaluate polynomial p with atom values ``val(serial) -> Expr``."""
    vals = {s: val(s) for s in p_serials(p)}
    if all(v.is_constant() if not v.den else False for v in vals.values()):
        consts = {s: v.num.get((), 0) for s, v in vals.items()}
        total = 0
        for m, c in p.items():
            t = c
            for s, x in m:
                t = t * consts[s] ** x
                if not t:
                    break
            total += t
        return Expr.const(total)
    if all(not v.den for v in vals.values()):
        powers: dict = {}
        acc: dict = {}
        for m, c in p.items():
            t = {(): c}
            for s, x in m:
                key = (s, x)
                pw = powers.get(key)
                if pw is None:
                    pw = p_pow(vals[s].num, x)
                    powers[key] = pw
                t = p_mul(t, pw)
            acc = p_add(acc, t)
        return _reduce_alg(Expr(acc))
    total = ZERO
    for m, c in p.items():
        t = Expr.const(c)
        for s, x in m:
            t = t * vals[s] ** x
        total = total + t
    return total


def substitute(
    e,
    bindings: Mapping[Atom, object],
    fn_hook: Callable[[FnAtom, tuple], Expr | None] | None = None,
) -> Expr:
    """Simultaneous replacement of atoms (also inside function arguments)."""
    e = as_expr(e)
    binds = {a: as_expr(v) for a, v in bindings.items()}
    if not binds and fn_hook is None:
        return e
    bound = {a.serial for a in binds}
    memo: dict[int, Expr] = {}

    def val(s):
        r = memo.get(s)
        if r is not None:
            return r
        a = _ATOMS[s]
        if a in binds:
            r = binds[a]
        elif isinstance(a, FnAtom):
            touched = fn_hook is not None or bool(bound & _deep_serials(a))
            if touched:
                args = tuple(substitute(x, binds, fn_hook) for x in a.args)
                r = fn_hook(a, args) if fn_hook is not None else None
                if r is None:
                    r = Expr.of(FnAtom(a.name, a.orders, args))
            else:
                r = Expr.of(a)
        elif isinstance(a, RadicalAtom) and bound & _deep_serials(a):
            r = substitute(a.base, binds, fn_hook) ** Fraction(1, a.degree)
        elif isinstance(a, FieldAtom) and a.relation is not None and bound & _deep_serials(a):
            n, v = a.relation
            nv = substitute(v, binds, fn_hook)
            root = _perfect_root(nv.constant_value(), n) if nv.is_constant() else None
            if root is not None and root != 0:
                r = Expr.const(abs(root) if n % 2 == 0 else root)
            else:
                r = Expr.of(FieldAtom(a.name, (n, nv)))
        else:
            r = Expr.of(a)
        memo[s] = r
        return r

    if not (bound & set().union(*(_deep_serials(_ATOMS[s]) for s in e.top_serials()))) and fn_hook is None:
        return e
    result = _eval_poly(e.num, val)
    for f, k in e.den:
        fv = _eval_poly(_FACTORS[f], val)
        if not fv:
            raise DivisionByZeroAtPoint(f"denominator factor {_FACTOR_KEYS[f]} vanishes")
        result = result / fv**k
    return result


class FnInstantiation:
    """Consistent polynomial instantiation of arbitrary functions.

    ``polys`` maps a function name to an expression in the slot parameters
    returned by :meth:`slot`; derivative atoms use partial derivatives of the
    same polynomial.
    """

    def __init__(self, polys: Mapping[str, Expr]):
        self.polys = {name: as_expr(p) for name, p in polys.items()}
        self._derived: dict[tuple, Expr] = {}

    @staticmethod
    def slot(j: int) -> Parameter:
        return Parameter(f"__slot{j}")

    def derived(self, name: str, orders: tuple[int, ...]) -> Expr:
        key = (name, orders)
        if key not in self._derived:
            p = self.polys[name]
            for j, k in enumerate(orders):
                for _ in range(k):
                    p = diff_atom(p, self.slot(j))
            self._derived[key] = p
        return self._derived[key]

    def __call__(self, atom: FnAtom, args: tuple) -> Expr | None:
        if atom.name not in self.polys:
            return None
        p = self.derived(atom.name, atom.orders)
        return substitute(p, {self.slot(j): a for j, a in enumerate(args)})


def eval_partial(e, point: Mapping[Atom, object], inst: FnInstantiation | None = None) -> Expr:
    """Evaluate at a point, leaving only unbound algebraic atoms symbolic."""
    try:
        return substitute(e, point, inst)
    except ZeroDivisionError as exc:
        if isinstance(exc, DivisionByZeroAtPoint):
            raise
        raise DivisionByZeroAtPoint(str(exc)) from exc


def eval_exact(e, point: Mapping[Atom, object], inst: FnInstantiation | None = None) -> Fraction:
    """Exact rational value of ``e`` at ``point`` with functions from ``inst``."""
    v = eval_partial(e, point, inst)
    if not v.is_constant():
        raise IrrationalValue(f"value is not rational: {v.text()}")
    return v.constant_value()


# ---------------------------------------------------------------------------
# text and JSON forms


def _coeff_text(c) -> str:
    c = _c(c)
    return str(c)


def _mono_text(m) -> str:
    parts = []
    for s, e in sorted(m, key=lambda it: _ATOMS[it[0]].key):
        a = _ATOMS[s]
        t = a.text()
        if isinstance(a, RadicalAtom) and e != 1:
            t = f"({t})"
        parts.append(t if e == 1 else f"{t}^{e}")
    return "*".join(parts)


def _poly_text(p) -> str:
    if not p:
        return "0"
    out = []
    for m, c in _sorted_terms(p):
        c = _q(c)
        neg = c < 0
        a = -c if neg else c
        mono = _mono_text(m)
        if not mono:
            body = _coeff_text(a)
        elif a == 1:
            body = mono
        else:
            body = f"{_coeff_text(a)}*{mono}"
        if not out:
            out.append(("-" if neg else "") + body)
        else:
            out.append((" - " if neg else " + ") + body)
    return "".join(out)


def to_text(e) -> str:
    """Canonical parenthesised infix text (parseable by the DSL)."""
    e = normalize(as_expr(e))
    num = _poly_text(e.num)
    if not e.den:
        return num
    dens = []
    for f, k in sorted(e.den, key=lambda it: _FACTOR_KEYS[it[0]]):
        t = _FACTOR_KEYS[f]
        t = t if f in _FACTOR_ATOM else f"({t})"
        dens.append(t if k == 1 else f"{t}^{k}")
    return f"({num})/({'*'.join(dens)})"


def _atom_json(a: Atom):
    if isinstance(a, JetCoord):
        return {"jet": a.dep, "index": list(a.index)}
    if isinstance(a, FnAtom):
        return {"fn": a.name, "orders": list(a.orders), "args": [to_json(x) for x in a.args]}
    if isinstance(a, RadicalAtom):
        return {"root": a.degree, "base": to_json(a.base)}
    kind = {IndependentVar: "var", Parameter: "param", FieldAtom: "field"}[type(a)]
    return {kind: a.name}


def _poly_json(p):
    terms = []
    for m, c in _sorted_terms(p):
        factors = [{"const": _coeff_text(c)}] if (c != 1 or not m) else []
        for s, e in sorted(m, key=lambda it: _ATOMS[it[0]].key):
            node = {"atom": _atom_json(_ATOMS[s])}
            factors.append(node if e == 1 else {"pow": [node, e]})
        terms.append(factors[0] if len(factors) == 1 else {"mul": factors})
    if not terms:
        return {"const": "0"}
    return terms[0] if len(terms) == 1 else {"add": terms}


def to_json(e):
    """JSON tree: nested ``add``/``mul``/``pow``/``div`` nodes over ``const`` and ``atom``."""
    e = normalize(as_expr(e))
    num = _poly_json(e.num)
    if not e.den:
        return num
    dens = []
    for f, k in sorted(e.den, key=lambda it: _FACTOR_KEYS[it[0]]):
        node = _poly_json(_FACTORS[f])
        dens.append(node if k == 1 else {"pow": [node, k]})
    return {"div": [num, dens[0] if len(dens) == 1 else {"mul": dens}]}
