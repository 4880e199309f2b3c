"""Worked systems shipped as ``.pde`` files, and the runner for their checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from ..dsl import Check, Document, parse_document
from ..expr import ZERO, Expr, normalize
from ..jet import divergence, euler_op, prolong_apply
from ..oracle import Oracle, OracleResult
from ..subsym import (
    Refutation,
    equivalent,
    first_noether,
    generate_claw,
    deform_claw,
    quasi_noether_check,
    subsymmetry_check,
    triviality_classify,
)
from ..system import (
    CertificateMismatch,
    Combination,
    ConservationLaw,
    on_solutions_zero,
    reduce,
)

__all__ = [
    "CASES",
    "SKIPPED",
    "UnknownCase",
    "CheckRecord",
    "Report",
    "run_case",
    "run_document",
    "case_files",
    "case_source",
]

CASES = {
    "nls": "nonlinear Schroedinger system, phase sub-symmetry and particle-number law",
    "vort2d": "2D vorticity system, Casimir sub-symmetry",
    "euler3d-constrained": "constrained 3D Euler system with symbolic constraint vectors",
    "euler3d-less-constrained": "3D Euler system without the divergence constraint on b",
    "vort3d-constrained": "constrained 3D vorticity system and its characteristics",
    "helical-2comp": "helical 2-component vorticity system with weighted divergence",
    "helicity": "helicity law from a sub-symmetry of the energy combination",
    "wave-lagrangian": "1D wave equation, first Noether theorem",
}

SKIPPED = {
    "helical-3comp": "three-component helical flow: the constrained system is only given by reference",
}


class UnknownCase(KeyError):
    pass


@dataclass
class CheckRecord:
    name: str
    ref: str | None
    kind: str
    verdict: str  # PASS, FAIL or SKIPPED
    residual: Expr | None = None
    certificate: Combination | None = None
    oracle: OracleResult | None = None
    detail: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "ref": self.ref,
            "kind": self.kind,
            "verdict": self.verdict,
            "residual": None if self.residual is None else self.residual.text(),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "oracle": (self.oracle or OracleResult(0, 0)).to_json(),
            "detail": self.detail,
        }


@dataclass
class Report:
    name: str
    records: list[CheckRecord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.verdict != "FAIL" for r in self.records)

    def to_json(self) -> str:
        body = {"case": self.name, "ok": self.ok, "checks": [r.to_json() for r in self.records]}
        return json.dumps(body, indent=2, sort_keys=True)

    def to_text(self, verbose: bool = False) -> str:
        lines = []
        for r in self.records:
            o = r.oracle
            tail = f"  [oracle {o.points - o.failures}/{o.points}]" if o and o.points else ""
            lines.append(f"{r.verdict:7} {r.name}{tail}")
            if r.verdict == "FAIL" or verbose:
                if r.detail:
                    lines.append(f"        {r.detail}")
                if r.residual is not None and not r.residual.is_zero():
                    lines.append(f"        residual: {r.residual.text()}")
            if verbose and r.certificate is not None:
                lines.append(f"        certificate: {r.certificate.text()}")
        passed = sum(r.verdict == "PASS" for r in self.records)
        skipped = sum(r.verdict == "SKIPPED" for r in self.records)
        summary = f"{self.name}: {passed}/{len(self.records) - skipped} passed"
        lines.append(summary + (f", {skipped} skipped" if skipped else ""))
        return "\n".join(lines)


# cases whose checks need more than one system
_EXTRA_FILES = {"vort3d-constrained": ["vort3d-constrained-gamma0"]}


def case_files(name: str) -> list[str]:
    if name not in CASES:
        raise UnknownCase(name)
    return [name] + _EXTRA_FILES.get(name, [])


def case_source(name: str) -> str:
    """Text of a shipped ``.pde`` file (a case name or one of its extra files)."""
    path = resources.files(__package__).joinpath("cases", f"{name}.pde")
    if not path.is_file():
        raise UnknownCase(name)
    return path.read_text()


def run_case(name: str, seed: int = 0, points: int = 20) -> Report:
    if name in SKIPPED:
        return Report(name, [CheckRecord(name, None, "case", "SKIPPED", detail=SKIPPED[name])])
    report = Report(name)
    for fname in case_files(name):
        report.records += run_document(parse_document(case_source(fname)), fname, seed, points).records
    return report


def run_document(doc: Document, name: str = "document", seed: int = 0, points: int = 20) -> Report:
    oracle = Oracle(seed, points)
    report = Report(name)
    for chk in doc.checks:
        report.records.append(_run(doc, chk, oracle))
    return report


# ---------------------------------------------------------------------------


def _flux_gap(a, b) -> Expr | None:
    """First nonzero componentwise difference, or None when equal."""
    for x, y in zip(a, b):
        d = normalize(x - y)
        if not d.is_zero():
            return d
    return None


def _finish(rec: CheckRecord, ok: bool, oracle: OracleResult | None, negative: bool = False) -> CheckRecord:
    rec.oracle = oracle
    if ok and oracle is not None and oracle.points:
        agree = oracle.failures < oracle.points if negative else oracle.failures == 0
        if not agree:
            rec.detail = "symbolic verdict and numeric oracle disagree"
            ok = False
    rec.verdict = "PASS" if ok else "FAIL"
    return rec


def _run(doc: Document, chk: Check, oracle: Oracle) -> CheckRecord:
    rec = CheckRecord(chk.title, chk.ref, chk.kind, "FAIL")
    try:
        return _HANDLERS[chk.kind](doc, chk.args, rec, oracle, chk.title)
    except (CertificateMismatch,) as exc:
        rec.residual = exc.residual
        rec.detail = str(exc)
    except (ValueError, LookupError, RuntimeError, ArithmeticError, AssertionError) as exc:
        rec.detail = f"{type(exc).__name__}: {exc}"
    return rec


def _pairs(a):
    """(lhs, rhs, separately computed summands of lhs - rhs) per component."""
    lhs, rhs = a["lhs"], a["rhs"]
    if not isinstance(lhs, tuple):
        lhs, rhs = (lhs,), (rhs,)
    out = []
    for k, (l, r) in enumerate(zip(lhs, rhs)):
        parts = list(a["lhs_parts"][k]) + [-t for t in a["rhs_parts"][k]]
        out.append((l, r, parts))
    return out


def _identity(doc, a, rec, oracle, label):
    pairs = _pairs(a)
    rec.residual = _flux_gap([l for l, _, _ in pairs], [r for _, r, _ in pairs]) or ZERO
    fails = sum(oracle.vanishes(parts, f"{label}:{k}").failures for k, (_, _, parts) in enumerate(pairs))
    return _finish(rec, rec.residual.is_zero(), OracleResult(oracle.points, min(fails, oracle.points)))


def _nonidentity(doc, a, rec, oracle, label):
    pairs = _pairs(a)
    rec.residual = _flux_gap([l for l, _, _ in pairs], [r for _, r, _ in pairs]) or ZERO
    # a failure is a point where every component agrees
    agree = [True] * oracle.points
    for k, (_, _, parts) in enumerate(pairs):
        zeros = [v is not None and v.is_zero() for v in oracle.values(parts, f"{label}:{k}")]
        agree = [x and y for x, y in zip(agree, zeros)]
    o = OracleResult(oracle.points, sum(agree))
    return _finish(rec, not rec.residual.is_zero(), o, negative=True)


def _zero(doc, a, rec, oracle, label):
    v = on_solutions_zero(doc.system, a["expr"], a.get("cert"))
    rec.residual = v.residual
    rec.certificate = v.certificate if v.certified else None
    o = None
    if v.holds and v.certified:
        o = oracle.vanishes([a["expr"], -v.certificate.evaluate(doc.system)], label)
    elif not v.certified:
        rec.detail = "decided through substitutions inside function arguments; no certificate"
    return _finish(rec, v.holds, o)


def _nonzero(doc, a, rec, oracle, label):
    red = reduce(doc.system, a["expr"])
    rec.residual = red.normal_form
    o = None
    if red.certified:
        rec.certificate = red.certificate
        o = oracle.vanishes([a["expr"], -red.normal_form, -red.certificate.evaluate(doc.system)], label)
    return _finish(rec, not red.normal_form.is_zero(), o)


def _quasi(doc, a, rec, oracle, label):
    q = quasi_noether_check(doc.system, a["combo"])
    G = a["combo"].evaluate(doc.system)
    bad = [r for r in q.residuals.values() if not r.is_zero()]
    rec.residual = bad[0] if bad else ZERO
    fails = 0
    for dep, gamma in q.gammas.items():
        fails += oracle.vanishes([euler_op(doc.ctx, G, dep), -gamma.evaluate(doc.system)], f"{label}:{dep}").failures
    return _finish(rec, q.holds, OracleResult(oracle.points, min(fails, oracle.points)))


def _subsym(doc, a, rec, oracle, label):
    X, combo = a["field"], a["combo"]
    sub = subsymmetry_check(doc.system, X, combo, a.get("cert"))
    if isinstance(sub, Refutation):
        rec.residual = sub.reduced if sub.reduced is not None else sub.residual
        return _finish(rec, False, None)
    rec.residual = ZERO
    rec.certificate = sub.certificate
    XG = prolong_apply(doc.ctx, X, combo.evaluate(doc.system))
    o = oracle.vanishes([XG, -sub.certificate.evaluate(doc.system)], label) if sub.certified else None
    return _finish(rec, True, o)


def _refute(doc, a, rec, oracle, label):
    X, combo = a["field"], a["combo"]
    sub = subsymmetry_check(doc.system, X, combo)
    if not isinstance(sub, Refutation):
        rec.residual = ZERO
        rec.detail = "the field is a sub-symmetry"
        return _finish(rec, False, None)
    rec.residual = sub.residual
    expected = a.get("residual")
    if expected is not None:
        gap = normalize(sub.residual - expected)
        if not gap.is_zero():
            rec.detail = f"raw residual differs from the expected one by {gap.text()}"
            return _finish(rec, False, None)
        o = oracle.vanishes([prolong_apply(doc.ctx, X, combo.evaluate(doc.system)), -expected], label)
        return _finish(rec, True, o)
    if sub.reduced is not None:
        rec.residual = sub.reduced
        return _finish(rec, True, oracle.differs([sub.reduced], label), negative=True)
    return _finish(rec, True, oracle.differs([sub.residual], label), negative=True)


def _divergence(doc, a, rec, oracle, label):
    div = divergence(doc.ctx, a["flux"], weighted=True)
    rec.residual = normalize(a["expr"] - div)
    return _finish(rec, rec.residual.is_zero(), oracle.vanishes([a["expr"], -div], label))


def _notdivergence(doc, a, rec, oracle, label):
    for dep in doc.ctx.dep:
        E = normalize(euler_op(doc.ctx, a["expr"], dep))
        if not E.is_zero():
            rec.residual = E
            rec.detail = f"Euler operator in {dep} is nonzero"
            return _finish(rec, True, oracle.differs([E], label), negative=True)
    rec.residual = ZERO
    rec.detail = "every Euler operator vanishes"
    return _finish(rec, False, None)


def _law_oracle(doc, system, law, oracle, label):
    return oracle.vanishes([divergence(doc.ctx, law.flux, law.weighted), -law.certificate.evaluate(system)], label)


def _compare(doc, a, rec, law) -> bool:
    if "expect" in a:
        gap = _flux_gap(law.flux, a["expect"])
        if gap is not None:
            rec.residual = gap
            rec.detail = "flux differs from the expected flux"
            return False
    if "equivalent" in a:
        eq = equivalent(doc.system, law.flux, a["equivalent"], law.weighted)
        rec.residual = eq.residual
        if not eq.holds:
            rec.detail = "flux is not equivalent to the expected flux"
            return False
        trivial = [x.text() for x in eq.first_kind]
        rec.detail = "trivial part (vanishes on solutions): (" + ", ".join(trivial) + ")"
    return True


def _claw(doc, a, rec, oracle, label):
    sub = subsymmetry_check(doc.system, a["field"], a["combo"], a.get("cert"))
    if isinstance(sub, Refutation):
        rec.residual = sub.residual
        rec.detail = "not a sub-symmetry"
        return _finish(rec, False, None)
    law = generate_claw(doc.system, sub)
    rec.certificate = law.certificate
    rec.residual = ZERO
    ok = _compare(doc, a, rec, law)
    return _finish(rec, ok, _law_oracle(doc, doc.system, law, oracle, label))


def _deform(doc, a, rec, oracle, label):
    law = deform_claw(doc.system, a["field"], a["flux"], a["combo"], a.get("cert"), weighted=True)
    rec.certificate = law.certificate
    rec.residual = ZERO
    ok = _compare(doc, a, rec, law)
    return _finish(rec, ok, _law_oracle(doc, doc.system, law, oracle, label))


def _law(doc, a, rec, oracle, label):
    law = ConservationLaw(a["flux"], a["cert"], weighted=True)
    rec.residual = law.residual(doc.system)
    rec.certificate = a["cert"]
    return _finish(rec, rec.residual.is_zero(), _law_oracle(doc, doc.system, law, oracle, label))


def _noether(doc, a, rec, oracle, label):
    law, system = first_noether(doc.ctx, a["lagrangian"], a["field"], a["flux"])
    rec.certificate = law.certificate
    rec.residual = law.residual(system)
    ok = rec.residual.is_zero()
    if ok and "expect" in a:
        gap = _flux_gap(law.flux, a["expect"])
        if gap is not None:
            rec.residual = gap
            rec.detail = "flux differs from the expected flux"
            ok = False
    return _finish(rec, ok, _law_oracle(doc, system, law, oracle, label))


def _classify(doc, a, rec, oracle, label):
    system = doc.system
    law = ConservationLaw(a["flux"], a["cert"], weighted=True)
    rec.certificate = a["cert"]
    res = law.residual(system)
    if not res.is_zero():
        rec.residual = res
        rec.detail = "flux divergence differs from the certificate"
        return _finish(rec, False, None)
    cls = triviality_classify(system, law, a.get("rewrites", ()), a.get("trades", ()))
    parts = [c * system.equations[k] for k, c in cls.characteristics.items()]
    parts += [divergence(doc.ctx, cls.trivial_flux, weighted=False), -cls.certificate.evaluate(system)]
    o = oracle.vanishes(parts, label)
    # expected characteristics are claims too; keep the worst agreement
    for k, v in a.get("expect", {}).items():
        ok_k = oracle.vanishes([cls.characteristics[k], -v], f"{label}:{k}")
        if ok_k.failures > o.failures:
            o = ok_k
    chars = ", ".join(f"{k}: {v.text()}" for k, v in cls.characteristics.items() if not v.is_zero())
    rec.detail = f"{cls.kind}; characteristics {{{chars}}}"
    rec.residual = ZERO
    ok = cls.kind.lower() == a["verdict"]
    for k, v in a.get("expect", {}).items():
        gap = normalize(cls.characteristics[k] - v)
        if not gap.is_zero():
            rec.residual = gap
            rec.detail += f"; characteristic on {k} differs from the expected one"
            ok = False
            break
    return _finish(rec, ok, o)


def _equivalent(doc, a, rec, oracle, label):
    K1, K2 = a["flux"], a["other"]
    eq = equivalent(doc.system, K1, K2, weighted=True)
    rec.residual = eq.residual
    if eq.holds:
        rec.detail = "trivial part (vanishes on solutions): (" + ", ".join(x.text() for x in eq.first_kind) + ")"
    div = lambda K: divergence(doc.ctx, K, weighted=True)  # noqa: E731
    o = oracle.vanishes([div(K1), -div(K2), -div(eq.first_kind)], label) if eq.holds else None
    return _finish(rec, eq.holds, o)


def _record(doc, a, rec, oracle, label):
    e = normalize(a["expr"])
    rec.residual = e
    rec.detail = "recorded, not asserted"
    if doc.system is not None and doc.system.solved:
        red = reduce(doc.system, e)
        rec.residual = red.normal_form
        rec.detail += "; residual is the normal form on solutions"
        if red.certified:
            rec.certificate = red.certificate
    return _finish(rec, True, None)


_HANDLERS = {
    "identity": _identity,
    "nonidentity": _nonidentity,
    "zero": _zero,
    "nonzero": _nonzero,
    "quasi": _quasi,
    "subsym": _subsym,
    "refute": _refute,
    "divergence": _divergence,
    "notdivergence": _notdivergence,
    "claw": _claw,
    "deform": _deform,
    "law": _law,
    "noether": _noether,
    "classify": _classify,
    "equivalent": _equivalent,
    "record": _record,
}
