"""Seeded numeric spot checks, independent of symbolic simplification.

Each claim is a list of expressions whose sum should vanish.  The parts are
evaluated separately at random rational points, with arbitrary functions
replaced by random polynomials, and only then added up.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Sequence

from .expr import (
    ZERO,
    DivisionByZeroAtPoint,
    Expr,
    FieldAtom,
    FnAtom,
    FnInstantiation,
    IndependentVar,
    JetCoord,
    Parameter,
    eval_partial,
    normalize,
)

__all__ = ["OracleResult", "Oracle"]


@dataclass(frozen=True)
class OracleResult:
    points: int
    failures: int
    skipped: int = 0

    def to_json(self) -> dict:
        return {"points": self.points, "failures": self.failures}


def _random_poly(rng: random.Random, arity: int, degree: int) -> Expr:
    slots = [Expr.of(FnInstantiation.slot(j)) for j in range(arity)]
    total = ZERO
    for d in range(degree + 1):
        for mono in combinations_with_replacement(range(arity), d):
            t = Expr.const(rng.randint(-4, 4))
            for j in mono:
                t = t * slots[j]
            total = total + t
    return total


class Oracle:
    """Evaluates claims at ``points`` seeded random points.

    A point where a denominator vanishes is redrawn, up to a bounded number
    of attempts; points that never succeed are counted as skipped.
    """

    def __init__(self, seed: int | str = 0, points: int = 20, degree: int = 3):
        self.seed = seed
        self.points = points
        self.degree = degree

    def _atoms(self, parts: Sequence[Expr]):
        bind, fns = set(), {}
        for e in parts:
            for a in e.deep_atoms():
                if isinstance(a, FnAtom):
                    fns[a.name] = len(a.args)
                elif isinstance(a, (IndependentVar, Parameter, JetCoord)):
                    bind.add(a)
                elif isinstance(a, FieldAtom) and a.relation is None:
                    bind.add(a)
        return sorted(bind, key=lambda a: a.text()), fns

    def _point(self, rng, bind, fns):
        point = {a: Expr.const(Fraction(rng.randint(-9, 9), rng.randint(1, 4))) for a in bind}
        inst = FnInstantiation({name: _random_poly(rng, k, self.degree) for name, k in sorted(fns.items())})
        return point, inst

    def values(self, parts: Sequence, label: str = ""):
        """Yield the summed value at each point, or None if no usable point was found."""
        parts = [normalize(p) for p in parts]
        bind, fns = self._atoms(parts)
        rng = random.Random(f"{self.seed}:{label}")
        for _ in range(self.points):
            for _attempt in range(20):
                point, inst = self._point(rng, bind, fns)
                try:
                    total = ZERO
                    for p in parts:
                        total = total + eval_partial(p, point, inst)
                except DivisionByZeroAtPoint:
                    continue
                yield normalize(total)
                break
            else:
                yield None

    def vanishes(self, parts: Sequence, label: str = "") -> OracleResult:
        """Count points where the parts fail to sum to zero."""
        fails = skipped = 0
        for v in self.values(parts, label):
            if v is None:
                skipped += 1
            elif not v.is_zero():
                fails += 1
        return OracleResult(self.points, fails, skipped)

    def differs(self, parts: Sequence, label: str = "") -> OracleResult:
        """For claimed non-identities: a failure is a point where the sum vanishes."""
        fails = skipped = 0
        for v in self.values(parts, label):
            if v is None:
                skipped += 1
            elif v.is_zero():
                fails += 1
        return OracleResult(self.points, fails, skipped)
