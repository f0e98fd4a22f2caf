"""Command-line front end driven by a single JSON run manifest.

    kpalpha --manifest run.json [--out result.json] [--verbose]

Manifest keys: ``command``, ``truncation``, optional ``alpha``, ``inputs``
(named operators), optional ``params`` and ``output``.  An operator is given
as notation text, as {"text": ...}, {"file": path} or {"json": serialized}.
The exit status is 0 when every residual is exactly zero, 1 when some
residual is not, and 2 on malformed input or a violated precondition.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._notation import ParseError, parse_operator
from .conjugation import CanonicalPair, ConjugationError, parshin_conjugate
from .hierarchy import (
    HierarchySolution,
    ResidualReport,
    birkhoff_factor,
    is_admissible,
    sato_wilson_solve,
    sw_residuals,
    verify_commutativity_preserved,
    verify_lax,
    verify_zakharov_shabat,
)
from .isospectral import CommutingPair, deform, reduce_pair, verify_deformation
from .pdo import PdoOp, commutator, commute_criterion, conjugate, inverse, kth_root
from .scalars import AlphaFn, Truncation

log = logging.getLogger("kpalpha")

COMMANDS = (
    "mul",
    "commutator",
    "split",
    "inverse",
    "root",
    "conjugate",
    "birkhoff",
    "flow",
    "verify",
    "reduce",
    "deform",
    "admissible",
)


class ManifestError(ValueError):
    """The manifest is malformed or refers to unusable inputs."""


class Run:
    """One manifest together with its resolved inputs."""

    def __init__(self, manifest: dict, base: Path):
        if not isinstance(manifest, dict):
            raise ManifestError("manifest must be a JSON object")
        self.command = manifest.get("command")
        if self.command not in COMMANDS:
            raise ManifestError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if "truncation" not in manifest:
            raise ManifestError("manifest has no truncation")
        try:
            self.trunc = Truncation.from_json(manifest["truncation"])
        except (KeyError, TypeError, ValueError) as err:
            raise ManifestError(f"bad truncation: {err}") from None
        alpha = manifest.get("alpha")
        self.alpha = AlphaFn.from_json(alpha) if alpha else AlphaFn.full()
        for k in self.trunc.active_times:
            if not self.alpha.admits(k):
                raise ManifestError(f"active time {k} violates i <= alpha(j) for {self.alpha!r}")
        self.inputs = manifest.get("inputs", {})
        self.params = manifest.get("params", {})
        self.output = manifest.get("output")
        self.base = base

    def op(self, name: str) -> PdoOp:
        if name not in self.inputs:
            raise ManifestError(f"missing input {name!r}")
        ref = self.inputs[name]
        if isinstance(ref, str):
            return self._parse(name, ref)
        if not isinstance(ref, dict):
            raise ManifestError(f"input {name!r} must be text or an object")
        if "text" in ref:
            return self._parse(name, ref["text"])
        if "json" in ref:
            return PdoOp.from_json(self.trunc, ref["json"])
        if "file" in ref:
            path = self.base / ref["file"]
            text = path.read_text()
            if path.suffix == ".json":
                return PdoOp.from_json(self.trunc, json.loads(text))
            return self._parse(f"{name} ({path.name})", text)
        raise ManifestError(f"input {name!r} needs one of text, json or file")

    def _parse(self, name, text):
        try:
            return parse_operator(text, self.trunc)
        except ParseError as err:
            raise ParseError(f"input {name!r}: {err.message}", err.line, err.column) from None

    def has(self, name: str) -> bool:
        return name in self.inputs

    def pair(self) -> CanonicalPair:
        """Canonical pair from inputs u0, v_minus1 (default 1) and v0 (default 0)."""
        u0 = self.op("u0").coeff(0)
        vm = self.op("v_minus1").coeff(0) if self.has("v_minus1") else PdoOp.one(self.trunc).coeff(0)
        v0 = self.op("v0").coeff(0) if self.has("v0") else PdoOp.zero(self.trunc).coeff(0)
        pair = CanonicalPair(u0, vm, v0)
        pair.check_shape()
        return pair

    def S0(self) -> PdoOp:
        return self.op("S0") if self.has("S0") else PdoOp.one(self.trunc)


def _zero_report(name, residual: PdoOp) -> ResidualReport:
    rep = ResidualReport()
    rep.add(None, name, residual)
    return rep


def _solution(run: Run) -> HierarchySolution:
    if run.has("solution"):
        ref = run.inputs["solution"]
        data = json.loads((run.base / ref["file"]).read_text()) if "file" in ref else ref["json"]
        if "result" in data:
            data = data["result"]
        data = data.get("solution", data)
        return HierarchySolution.from_json(data)
    return sato_wilson_solve(run.pair(), run.alpha, run.S0(), run.trunc)


def _verify_all(sol: HierarchySolution) -> ResidualReport:
    rep = ResidualReport()
    rep.extend(sw_residuals(sol))
    rep.extend(verify_lax(sol))
    rep.extend(verify_zakharov_shabat(sol))
    rep.extend(verify_commutativity_preserved(sol))
    z = sol.S.eval_t0() - sol.S0 if sol.S0 is not None else None
    if z is not None:
        rep.add(None, "initial_value", z)
    return rep


def execute(run: Run):
    """Dispatch the command; returns (result dict, ResidualReport)."""
    c = run.command
    one = PdoOp.one(run.trunc)
    if c == "mul":
        a, b = run.op("a"), run.op("b")
        return {"product": (a * b).to_json()}, ResidualReport()
    if c == "commutator":
        a, b = run.op("a"), run.op("b")
        comm = commutator(a, b)
        rows = [[m, r.to_json()] for m, r in commute_criterion(b, a)]
        return {"commutator": comm.to_json(), "per_order": rows}, ResidualReport()
    if c == "split":
        plus, minus = run.op("a").split()
        return {"plus": plus.to_json(), "minus": minus.to_json()}, ResidualReport()
    if c == "inverse":
        a = run.op("a")
        inv = inverse(a)
        return {"inverse": inv.to_json()}, _zero_report("a*inverse-1", a * inv - one)
    if c == "root":
        a = run.op("a")
        k = int(run.params.get("k", 2))
        r = kth_root(a, k)
        return {"root": r.to_json(), "k": k}, _zero_report("root^k-a", r ** k - a)
    if c == "conjugate":
        S, a = run.op("S"), run.op("a")
        return {"conjugate": conjugate(S, a).to_json()}, ResidualReport()
    if c == "birkhoff":
        S, Y = birkhoff_factor(run.op("U"))
        rep = _zero_report("(S*U)_minus", (S * run.op("U")).minus())
        return {"S": S.to_json(), "Y": Y.to_json()}, rep
    if c == "flow":
        sol = sato_wilson_solve(run.pair(), run.alpha, run.S0(), run.trunc)
        return {"solution": sol.to_json()}, sw_residuals(sol)
    if c == "verify":
        sol = _solution(run)
        return {"checked": "sato_wilson, lax, zakharov_shabat, commutator"}, _verify_all(sol)
    if c == "reduce":
        P1, P2 = run.op("P1"), run.op("P2")
        L1, L2 = reduce_pair(CommutingPair(P1, P2))
        res = parshin_conjugate(L1, L2)
        rep = _zero_report("[L1,L2]", commutator(L1, L2))
        for name, terms in res.residuals.items():
            rep.entries.append(
                {
                    "index": None,
                    "equation": f"canonical_{name}",
                    "order": terms[0][0] if terms else None,
                    "residual_term_count": sum(s.term_count() for *_, s in terms),
                    "first_term": None if not terms else str(terms[0][3]),
                    "checked_floor": None,
                    "clipped": False,
                }
            )
        return {"L1": L1.to_json(), "L2": L2.to_json(), "pair": res.pair.to_json(), "S": res.S.to_json()}, rep
    if c == "deform":
        fam = deform(CommutingPair(run.op("P1"), run.op("P2")), run.alpha, None, run.trunc)
        rep = verify_deformation(fam, run.params.get("use_minus", ()))
        return {"family": fam.to_json()}, rep
    if c == "admissible":
        ok, witness = is_admissible(run.op("T"), run.pair())
        rep = ResidualReport()
        rep.entries.append(
            {
                "index": None,
                "equation": "admissible",
                "order": None,
                "residual_term_count": 0 if ok else 1,
                "first_term": witness,
                "checked_floor": None,
                "clipped": False,
            }
        )
        return {"admissible": ok, "witness": witness}, rep
    raise ManifestError(f"unknown command {c!r}")  # pragma: no cover


def _show(result: dict, trunc, prefix=""):
    """Print every serialized operator in a result, one level of nesting deep."""
    for key, val in result.items():
        if not isinstance(val, dict):
            continue
        if "coeffs" in val and "exact_floor2" in val:
            print(f"  {prefix}{key} = {PdoOp.from_json(trunc, val)}")
        elif not prefix:
            _show(val, trunc, f"{key}.")


def run(manifest: dict, out: Path = None, base: Path = Path("."), verbose: bool = False) -> int:
    """Execute a manifest, write the result file and return the exit status."""
    r = Run(manifest, base)
    result, report = execute(r)
    doc = {
        "command": r.command,
        "truncation": r.trunc.to_json(),
        "alpha": r.alpha.to_json(),
        "result": result,
        "residuals": report.to_json(),
    }
    target = out or (base / r.output if r.output else None)
    text = json.dumps(doc, sort_keys=True, indent=1, default=str) + "\n"
    if target is not None:
        Path(target).write_text(text)
    bad = report.failures()
    print(f"{r.command}: {len(report.entries)} residual checks, {len(bad)} nonzero")
    for e in bad:
        print(f"  nonzero: {e['equation']} index={e['index']} order={e['order']} terms={e['residual_term_count']}")
    if verbose:
        _show(result, r.trunc)
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kpalpha", description=__doc__.split("\n\n")[0])
    parser.add_argument("--manifest", required=True, help="JSON run manifest")
    parser.add_argument("--out", help="result file (overrides the manifest's output)")
    parser.add_argument("--verbose", action="store_true", help="print operators in notation")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        print(f"error: {path}: line {err.lineno}, column {err.colno}: {err.msg}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        return run(manifest, Path(args.out) if args.out else None, path.parent, args.verbose)
    except ParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return 2
    except (ManifestError, ConjugationError, ValueError, ArithmeticError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
