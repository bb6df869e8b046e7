"""``liftcount`` command line.

Exit codes: 0 success, 1 bad input, 2 infeasible or out-of-scope input,
3 a cross-check failed. ``LIFTCOUNT_SEED`` is accepted and ignored since
nothing here is random.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from gmpy2 import mpq

from .algebra import Poly
from .engine import (EngineStats, _setup, _substitute_nullary, closed_form_terms,
                     distribution_by_cardinality, incremental_tables, wfomc)
from .errors import (CrossCheckError, InfeasibleError, LiftcountError, OracleLimitError,
                     OutOfScopeError, ParseError, UnsatisfiableError, ValidationError)
from .kernel import CellParams, build_params
from .logic import Problem, parse_problem
from .mln import decimal_text, smokers_experiment
from .oracle import brute_force_wfomc, per_ordering_counts
from .transform import NormalizedProblem, normalize

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_CHECK = 0, 1, 2, 3


def exact_text(v) -> str:
    if isinstance(v, Poly):
        return str(v)
    q = mpq(v)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _decimal(v) -> Optional[str]:
    if isinstance(v, Poly):
        return None
    return decimal_text(mpq(v))


@dataclass
class RunReport:
    """Outcome of one command. ``seconds`` is printed but kept out of the
    JSON so that equal inputs give equal files."""

    digest: str
    method: str
    cells: int
    peak_table: int
    result: object
    seconds: float = 0.0
    extra: Dict[str, object] = field(default_factory=dict)

    def record(self) -> Dict[str, object]:
        doc: Dict[str, object] = {
            "input_sha256": self.digest,
            "method": self.method,
            "cells": self.cells,
            "peak_table": self.peak_table,
            "result": exact_text(self.result) if not isinstance(self.result, list)
            else [exact_text(v) for v in self.result],
            "decimal": _decimal(self.result) if not isinstance(self.result, list)
            else [_decimal(v) for v in self.result],
        }
        doc.update(self.extra)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.record(), indent=2, sort_keys=True) + "\n"

    def text(self) -> str:
        rec = self.record()
        lines = [f"method      {rec['method']}", f"cells       {rec['cells']}",
                 f"peak table  {rec['peak_table']}"]
        if isinstance(self.result, list):
            for k, (e, d) in enumerate(zip(rec["result"], rec["decimal"])):
                lines.append(f"Pr(k={k})    {e}  ({d})")
        else:
            lines.append(f"result      {rec['result']}")
            if rec["decimal"] is not None:
                lines.append(f"decimal     {rec['decimal']}")
        lines.append(f"time        {self.seconds:.3f}s")
        return "\n".join(lines)


def _load(path: str, n: Optional[int]) -> tuple[Problem, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}") from None
    problem = parse_problem(raw.decode("utf-8"))
    if n is not None:
        problem = problem.with_n(n)
    if problem.n is None:
        raise ValidationError("no domain size: add 'n = <int>' to the file or pass --n")
    return problem, hashlib.sha256(raw).hexdigest()


# ---------------------------------------------------------------------------
# Self-check
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    status: str          # "pass", "fail" or "skipped"
    detail: str = ""

    def line(self) -> str:
        return f"{self.status.upper():7} {self.name}" + (f": {self.detail}" if self.detail else "")


ParamsHook = Callable[[CellParams], CellParams]


def _param_sets(np_: NormalizedProblem):
    """Cell parameters for each truth assignment of the nullary predicates."""
    setup = _setup(np_, np_.n, sorted({c.pred for c in np_.constraints}))
    nullary = sorted(p for p, a in np_.vocabulary.items() if a == 0)
    for values in itertools.product((True, False), repeat=len(nullary)):
        assignment = dict(zip(nullary, values))
        matrix = _substitute_nullary(np_.matrix, assignment) if nullary else np_.matrix
        yield assignment, build_params(matrix, setup.vocabulary, setup.kernel_weights, np_.linear)


def _first_mismatch(np_: NormalizedProblem, hook: Optional[ParamsHook]) -> Optional[str]:
    for assignment, params in _param_sets(np_):
        if hook is not None:
            params = hook(params)
        last: Dict = {}
        for table in incremental_tables(params, np_.n):
            last = table
        closed = closed_form_terms(params, np_.n)
        for key in sorted(set(last) | set(closed)):
            a, b = last.get(key, 0), closed.get(key, 0)
            if a != b:
                where = f"p-vector {key}" + (f" with {assignment}" if assignment else "")
                return f"{where}: incremental {exact_text(a)}, closed form {exact_text(b)}"
    return None


def selfcheck(problem: Problem, hook: Optional[ParamsHook] = None) -> List[Check]:
    """Run every cross-check that applies to ``problem``.

    ``hook`` may rewrite the cell parameters before the table comparison;
    tests use it to plant a fault.
    """
    checks: List[Check] = []
    np_ = normalize(problem)
    engine = wfomc(np_)

    try:
        oracle = brute_force_wfomc(problem)
    except OracleLimitError as e:
        checks.append(Check("engine = brute force", "skipped", str(e)))
    else:
        ok = oracle == engine
        checks.append(Check("engine = brute force", "pass" if ok else "fail",
                            f"engine {exact_text(engine)}, brute force {exact_text(oracle)}"))

    compiled = wfomc(np_, method="incremental", backend="compiled")
    python = wfomc(np_, method="incremental", backend="python")
    checks.append(Check("compiled backend = exact backend",
                        "pass" if python == compiled == engine else "fail",
                        f"{exact_text(compiled)} vs {exact_text(python)}"))

    if np_.linear is None:
        if problem.n:
            mismatch = _first_mismatch(np_, hook)
            checks.append(Check("incremental = closed form", "fail" if mismatch else "pass",
                                mismatch or ""))
    else:
        checks.append(Check("incremental = closed form", "skipped",
                            "the closed form needs a problem without order"))
        try:
            tally = per_ordering_counts(problem)
        except OracleLimitError as e:
            checks.append(Check("orderings weigh the same", "skipped", str(e)))
        else:
            values = set(exact_text(v) for v in tally.values())
            checks.append(Check("orderings weigh the same", "pass" if len(values) == 1 else "fail",
                                f"{len(tally)} orderings, values {sorted(values)}"))
    return checks


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _write(path: Optional[str], text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_count(args) -> int:
    problem, digest = _load(args.file, args.n)
    np_ = normalize(problem)
    if args.dump_normalized:
        print(np_.to_text())
        print()
    if args.dump_cells:
        _dump_cells(np_)
    stats = EngineStats()
    start = time.perf_counter()
    if args.distribution:
        result = distribution_by_cardinality(np_, args.distribution, args.method, stats)
    else:
        result = wfomc(np_, args.method, stats)
    report = RunReport(digest, stats.method, stats.cells, stats.peak_table, result,
                       time.perf_counter() - start)
    print(report.text())
    _write(args.json, report.to_json())
    return EXIT_OK


def cmd_oracle(args) -> int:
    problem, digest = _load(args.file, args.n)
    start = time.perf_counter()
    result = brute_force_wfomc(problem)
    report = RunReport(digest, "brute-force", 0, 0, result, time.perf_counter() - start)
    print(report.text())
    _write(args.json, report.to_json())
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    problem, digest = _load(args.file, args.n)
    checks = selfcheck(problem)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if c.status == "fail"]
    _write(args.json, json.dumps({"input_sha256": digest,
                                  "checks": [c.__dict__ for c in checks]},
                                 indent=2, sort_keys=True) + "\n")
    if failed:
        raise CrossCheckError(f"{len(failed)} check(s) failed")
    return EXIT_OK


def _dump_cells(np_: NormalizedProblem) -> None:
    for assignment, params in _param_sets(np_):
        if assignment:
            print("nullary " + ", ".join(f"{k}={v}" for k, v in assignment.items()))
        print(params.dump())


def cmd_cells(args) -> int:
    problem, _ = _load(args.file, args.n)
    np_ = normalize(problem)
    if args.dump_normalized:
        print(np_.to_text())
        print()
    _dump_cells(np_)
    return EXIT_OK


def cmd_smokers(args) -> int:
    table = smokers_experiment(args.n, args.m, args.w, args.models)
    print(table.summary())
    for kind, secs in table.seconds.items():
        print(f"{kind}: {secs:.1f}s")
    _write(args.csv, table.to_csv())
    _write(args.json, table.to_json())
    return EXIT_OK


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1), not argparse's default 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="liftcount",
                                     description="Exact weighted first-order model counting.")
    parser.add_argument("--threads", type=_positive, default=1,
                        help="worker cap; the engine currently runs on one thread")
    sub = parser.add_subparsers(dest="command", required=True)

    def problem_command(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("file")
        p.add_argument("--n", type=int, help="override the domain size")
        p.add_argument("--json", metavar="PATH")
        return p

    p = problem_command("count", "weighted model count of a problem file")
    p.add_argument("--method", choices=("auto", "incremental", "closed-form"), default="auto")
    p.add_argument("--distribution", metavar="PRED",
                   help="print Pr(|PRED| = k) instead of the count")
    p.add_argument("--dump-normalized", action="store_true")
    p.add_argument("--dump-cells", action="store_true")
    p.set_defaults(func=cmd_count)

    p = problem_command("oracle", "brute-force count over all worlds (small inputs only)")
    p.set_defaults(func=cmd_oracle)

    p = problem_command("selfcheck", "compare the engine with independent computations")
    p.set_defaults(func=cmd_selfcheck)

    p = problem_command("cells", "print the cells and their weights")
    p.add_argument("--dump-normalized", action="store_true")
    p.set_defaults(func=cmd_cells)

    p = sub.add_parser("smokers", help="smoker-count distributions on ring and random graphs")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, nargs="+", default=[5, 8, 10])
    p.add_argument("--w", nargs="+", default=["ln2", "2", "e", "3"])
    p.add_argument("--models", nargs="+", choices=("ring", "random"), default=["ring", "random"])
    p.add_argument("--csv", metavar="PATH")
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_smokers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    os.environ.get("LIFTCOUNT_SEED")  # reserved, no effect
    try:
        return args.func(args)
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleError, OutOfScopeError, UnsatisfiableError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CrossCheckError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK
    except LiftcountError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
