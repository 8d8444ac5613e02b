"""fairassign command line: mechanisms, Nash welfare programs, audits and batteries.

Every mechanism subcommand reads an instance file and writes one JSON report
holding the allocation and its audit.  Exit codes: 0 success, 2 invalid
input, 3 solver did not converge, 4 an audit check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import audit as au
from .eating import EatingError, chores_eat, eat, ps
from .fisher import (
    FisherError,
    FisherInstance,
    fisher_envy_factor,
    fisher_nsw_value,
    run_fisher,
)
from .generators import (
    ORACLE_KINDS,
    gen_chores_lower_bound,
    gen_fisher_kink,
    gen_random,
    gen_random_fisher,
)
from .jsonio import (
    SCHEMA,
    allocation_from_dict,
    allocation_to_dict,
    dumps,
    instance_from_dict,
    instance_to_dict,
    loads,
)
from .model import (
    CHORES,
    GOODS,
    CardinalInstance,
    InstanceError,
    exact,
    validate,
)
from .nswopt import max_nsw, max_nsw_ef, max_nsw_restricted

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str):
    try:
        data = loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INVALID, f"cannot read {path}: {exc}") from exc
    try:
        if isinstance(data, dict) and data.get("mode") == "fisher":
            return FisherInstance.from_dict(data)
        inst = instance_from_dict(data)
    except (InstanceError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_INVALID, f"invalid instance: {exc}") from exc
    report = validate(inst)
    if not report.ok:
        raise CliError(EXIT_INVALID, "; ".join(report.errors))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return inst


def _emit(doc: dict, out: str | None) -> None:
    text = dumps(doc)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _gamma(arg: str | None, n: int):
    if arg is None:
        return None
    return n if arg == "n" else float(exact(arg))


def _cardinal(inst, what: str) -> CardinalInstance:
    if not isinstance(inst, CardinalInstance):
        raise CliError(EXIT_INVALID, f"{what} needs a cardinal instance")
    return inst


def _report(alloc, inst, reference=None, alpha=None, gamma=None) -> dict:
    if not isinstance(inst, CardinalInstance):
        return {}
    rep = au.audit_allocation(alloc, inst, reference=reference, alpha=alpha, gamma=gamma)
    return rep.to_dict()


def _finish(doc: dict, args) -> int:
    doc.setdefault("schema", SCHEMA)
    _emit(doc, args.out)
    rep = doc.get("audit") or {}
    if rep and not rep.get("passed", True):
        return EXIT_AUDIT
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands


def cmd_eat(args) -> int:
    inst = _load(args.instance)
    try:
        if args.command == "ps":
            ordinal = inst.ordinal() if isinstance(inst, CardinalInstance) else inst
            alloc, trace = ps(ordinal, mode=args.mode)
        elif args.command == "chores-eat":
            alloc, trace = chores_eat(inst, mode=args.mode)
        else:
            alloc, trace = eat(inst, mode=args.mode)
    except EatingError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    gamma = _gamma(args.gamma, alloc.n_agents)
    alpha = 1 if args.mode == "rational" else 1 + 1e-9
    doc = {
        "allocation": allocation_to_dict(alloc),
        "trace": trace.to_dict(),
        "audit": _report(alloc, inst, alpha=alpha if isinstance(inst, CardinalInstance) else None, gamma=gamma),
    }
    if isinstance(inst, CardinalInstance):
        doc["utilities"] = au.utilities(inst, alloc)
    return _finish(doc, args)


def cmd_nsw(args) -> int:
    inst = _cardinal(_load(args.instance), args.command)
    if inst.mode != GOODS:
        raise CliError(EXIT_INVALID, "Nash welfare programs need a goods instance")
    if args.command == "nsw":
        res = max_nsw(inst, row_mode=args.row_mode)
        alpha = 2 + 1e-6
    elif args.command == "ef-nsw":
        res = max_nsw_ef(inst, row_mode=args.row_mode)
        alpha = 1 + 1e-6
    else:
        if args.caps is None:
            raise CliError(EXIT_INVALID, "nsw-restricted needs --caps")
        caps = [float(exact(c)) for c in args.caps.split(",")]
        try:
            res = max_nsw_restricted(inst, caps, row_mode=args.row_mode)
        except InstanceError as exc:
            raise CliError(EXIT_INVALID, str(exc)) from exc
        alpha = 2 + 1e-6
    if res.status != "optimal":
        _emit({"schema": SCHEMA, "solve": res.to_dict()}, args.out)
        return EXIT_SOLVER
    doc = {
        "allocation": allocation_to_dict(res.x),
        "solve": res.to_dict(),
        "audit": _report(res.x, inst, reference=res, alpha=alpha, gamma=_gamma(args.gamma, inst.n_agents)),
    }
    return _finish(doc, args)


def cmd_fisher(args) -> int:
    inst = _load(args.instance)
    if not isinstance(inst, FisherInstance):
        raise CliError(EXIT_INVALID, "fisher needs a Fisher instance")
    eps = exact(args.eps)
    try:
        run = run_fisher(inst, eps, mode=args.mode)
    except FisherError as exc:
        raise CliError(EXIT_SOLVER, str(exc)) from exc
    if run.reference.status != "optimal":
        raise CliError(EXIT_SOLVER, f"reference solve status {run.reference.status}")
    x = run.x
    ref_x = [list(r) for r in run.reference.x.x]
    factor = fisher_envy_factor(inst, x)
    agents = [i for i in range(inst.n_agents) if i not in run.reference.excluded]
    ref = fisher_nsw_value(inst, ref_x, agents)
    ratio = fisher_nsw_value(inst, x, agents) / ref if ref > 0 else 1.0
    n = inst.n_agents
    checks = {
        "envy": factor <= float(1 + eps) + 1e-6,
        "nsw_ratio": ratio >= 1 / (2 * (1 + float(eps))) - 1e-4,
        "partial_bound": run.partial.iterations <= n**3 / float(eps),
        "completion_bound": run.completion.iterations <= n**4 / float(eps),
    }
    doc = {
        "allocation": {"schema": SCHEMA, "x": x, "provenance": {"mechanism": "fisher", "eps": eps}},
        "partial": {"x": run.partial.x, "iterations": run.partial.iterations, "log": run.partial.log},
        "completion": {"iterations": run.completion.iterations, "rotations": run.completion.rotations,
                       "log": run.completion.log},
        "reference": run.reference.to_dict(),
        "audit": {"ef_factor": factor, "nsw_ratio": ratio, "checks": checks,
                  "passed": all(checks.values()), "schema": SCHEMA},
    }
    return _finish(doc, args)


def cmd_audit(args) -> int:
    inst = _cardinal(_load(args.instance), "audit")
    try:
        data = loads(Path(args.allocation).read_text())
        # accept a bare allocation or a full mechanism report
        alloc = allocation_from_dict(data.get("allocation", data))
    except (OSError, KeyError, ValueError, AttributeError) as exc:
        raise CliError(EXIT_INVALID, f"bad allocation file: {exc}") from exc
    if alloc.x.shape != (inst.n_agents, inst.n_items):
        raise CliError(EXIT_INVALID, "allocation shape does not match the instance")
    reference = None
    if inst.mode == GOODS and not args.no_reference:
        reference = max_nsw(inst)
    alpha = exact(args.alpha) if args.alpha is not None else None
    rep = _report(alloc, inst, reference=reference, alpha=alpha, gamma=_gamma(args.gamma, inst.n_agents))
    return _finish({"audit": rep}, args)


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "random":
        inst = gen_random(args.family, args.n, args.m, args.oracle, args.seed, args.dist)
        doc = instance_to_dict(inst)
    elif kind == "chores-lower-bound":
        eps = args.eps.split(",") if args.eps else None
        inst, alt = gen_chores_lower_bound(args.n, eps)
        doc = instance_to_dict(inst)
        doc["alternative"] = alt
    elif kind == "zero-chore":
        doc = instance_to_dict(CardinalInstance([[0, 1], [0, 0]], mode=CHORES))
    elif kind == "fisher-kink":
        doc = gen_fisher_kink(exact(args.alpha)).to_dict()
    elif kind == "random-fisher":
        doc = gen_random_fisher(args.n, args.m, args.seed).to_dict()
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(EXIT_INVALID, f"unknown generator {kind}")
    _emit(doc, args.out)
    return EXIT_OK


BATTERY_FIELDS = [
    "index", "n", "m", "family", "oracle", "mechanism", "ef_factor", "sd_envy",
    "pareto_gamma", "nsw_ratio", "bound", "unit_singletons", "positive_disutilities", "ok",
]


def battery_row(k: int, args) -> dict:
    rng = np.random.default_rng([args.seed, k, 99])
    n = int(rng.integers(args.n_min, args.n_max + 1))
    m = int(rng.integers(args.m_min, args.m_max + 1))
    if args.family == CHORES:
        m = max(m, n)  # every agent must be able to take a full unit of chores
    kinds = args.oracle.split(",") if args.oracle != "mixed" else list(ORACLE_KINDS)
    kind = kinds[k % len(kinds)]
    inst = gen_random(args.family, n, m, kind, args.seed, args.dist, index=k)
    flags = au.assumption_flags(inst)
    if args.family == CHORES:
        x, _ = chores_eat(inst, mode=args.mode)
        gstar = au.pareto_gap(x, inst).gamma_star
        ratio = None
        bound = n
        ok = gstar <= n + 1e-9 if flags["positive_disutilities"] else True
    else:
        x, _ = eat(inst, mode=args.mode)
        ref = max_nsw(inst)
        ratio = au.nsw_ratio(x, ref, inst)
        rE = float(inst.rho.value(inst.rho.full))
        bound = math.log(min(n, rE)) + 2
        gstar = au.pareto_gap(x, inst).gamma_star
        ok = ref.status == "optimal" and (
            not flags["unit_singletons"] or (ratio >= 1 / bound - 1e-6 and gstar <= bound + 1e-6)
        )
    factor, _ = au.ef_factor(x, inst, inst.mode)
    sd = au.check_sd_envy(x, inst.orders())
    ok = ok and factor <= 1 + 1e-9 and not sd
    return {
        "index": k, "n": n, "m": m, "family": args.family, "oracle": kind if args.family == GOODS else "cardinality",
        "mechanism": "chores-eat" if args.family == CHORES else "eat",
        "ef_factor": factor, "sd_envy": len(sd), "pareto_gamma": gstar,
        "nsw_ratio": "" if ratio is None else ratio, "bound": bound,
        "unit_singletons": flags["unit_singletons"],
        "positive_disutilities": flags.get("positive_disutilities", ""),
        "ok": ok,
    }


def cmd_battery(args) -> int:
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda k: battery_row(k, args), range(args.count)))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BATTERY_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    failed = [r["index"] for r in rows if not r["ok"]]
    if failed:
        print(f"battery: {len(failed)} rows failed: {failed[:10]}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairassign", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("instance", help="instance JSON file")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--mode", choices=["rational", "float"], default="rational")
        return sp

    for name in ("eat", "ps", "chores-eat"):
        sp = common(sub.add_parser(name, help=f"run {name} on an instance"))
        sp.add_argument("--gamma", help="also certify gamma-Pareto efficiency ('n' for the agent count)")
        sp.set_defaults(func=cmd_eat)
    for name in ("nsw", "ef-nsw", "nsw-restricted"):
        sp = common(sub.add_parser(name, help=f"solve the {name} program"))
        sp.add_argument("--row-mode", choices=["leq", "eq"], default="leq")
        sp.add_argument("--gamma")
        if name == "nsw-restricted":
            sp.add_argument("--caps", help="comma-separated per-item supply caps")
        sp.set_defaults(func=cmd_nsw)
    sp = common(sub.add_parser("fisher", help="run both Fisher-market stages"))
    sp.add_argument("--eps", default="0.1")
    sp.set_defaults(func=cmd_fisher)

    sp = common(sub.add_parser("audit", help="audit an allocation file"))
    sp.add_argument("allocation", help="allocation JSON file")
    sp.add_argument("--alpha", help="envy factor to certify")
    sp.add_argument("--gamma", help="Pareto factor to certify ('n' for the agent count)")
    sp.add_argument("--no-reference", action="store_true", help="skip the NSW reference solve")
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("gen", help="generate an instance")
    sp.add_argument("kind", choices=["random", "chores-lower-bound", "zero-chore", "fisher-kink", "random-fisher"])
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--m", type=int, default=4)
    sp.add_argument("--family", choices=[GOODS, CHORES], default=GOODS)
    sp.add_argument("--oracle", choices=list(ORACLE_KINDS), default="cardinality")
    sp.add_argument("--dist", choices=["uniform", "lognormal"], default="uniform")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eps", help="comma-separated eps ladder for chores-lower-bound")
    sp.add_argument("--alpha", default="10", help="kink parameter for fisher-kink")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("battery", help="seeded sweep writing one CSV row per instance")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--family", choices=[GOODS, CHORES], default=GOODS)
    sp.add_argument("--oracle", default="mixed", help="oracle kind, comma list, or 'mixed'")
    sp.add_argument("--dist", choices=["uniform", "lognormal"], default="uniform")
    sp.add_argument("--n-min", type=int, default=1)
    sp.add_argument("--n-max", type=int, default=5)
    sp.add_argument("--m-min", type=int, default=1)
    sp.add_argument("--m-max", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=["rational", "float"], default="rational")
    sp.add_argument("--workers", type=int, default=4)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_battery)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
