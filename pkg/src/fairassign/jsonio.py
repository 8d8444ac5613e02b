"""JSON instance and allocation files.

Instance files::

    {"mode": "goods"|"chores"|"ordinal", "agents": n, "items": m,
     "values": [[...], ...]  or  "orders": [[...], ...],
     "rho": {"kind": "cardinality"} | {"kind": "capacities", "s": [...]} |
            {"kind": "table", "sets": {"<bitmask>": value, ...}} | ...}

Numbers may be JSON numbers or decimal/fraction strings; both are read
exactly.  Exact values are written back as integers or strings so a
parse/serialize round trip loses nothing.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .model import (
    CHORES,
    GOODS,
    ORDINAL,
    Allocation,
    CardinalInstance,
    InstanceError,
    Lottery,
    OrdinalInstance,
    from_payload,
    exact,
)

SCHEMA = 1


def number_to_json(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return int(v.numerator)
        d = v.denominator
        for p in (2, 5):
            while d % p == 0:
                d //= p
        if d == 1:
            # terminating decimal: write it out exactly
            k = 0
            while (v * 10**k).denominator != 1:
                k += 1
            digits = str(abs((v * 10**k).numerator)).rjust(k + 1, "0")
            sign = "-" if v < 0 else ""
            return f"{sign}{digits[:-k]}.{digits[-k:]}"
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (set, frozenset)):
        return sorted(to_jsonable(v) for v in obj)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return number_to_json(obj)


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=False) + "\n"


def loads(text: str) -> Any:
    # floats stay as their literal text so they can be read exactly
    return json.loads(text, parse_float=str)


def _num(v: Any) -> Any:
    if isinstance(v, str):
        return exact(v)
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    raise InstanceError(f"expected a number, got {v!r}")


# ---------------------------------------------------------------------------
# instances


def instance_from_dict(data: dict) -> CardinalInstance | OrdinalInstance:
    mode = data.get("mode", GOODS)
    n = data.get("agents")
    m = data.get("items")
    if mode == "fisher":
        raise InstanceError("fisher instances are read with fisher_from_dict")
    if mode == ORDINAL:
        orders = data.get("orders")
        if orders is None:
            raise InstanceError("ordinal instance needs 'orders'")
        m = m if m is not None else len(orders[0])
        rho = from_payload(m, data.get("rho"))
        inst: CardinalInstance | OrdinalInstance = OrdinalInstance(orders, m, rho)
    elif mode in (GOODS, CHORES):
        values = data.get("values")
        if values is None:
            raise InstanceError(f"{mode} instance needs 'values'")
        vals = [[_num(v) for v in row] for row in values]
        m = m if m is not None else len(vals[0])
        rho = from_payload(m, data.get("rho"))
        inst = CardinalInstance(vals, mode, rho)
    else:
        raise InstanceError(f"unknown mode {mode!r}")
    if n is not None and n != inst.n_agents:
        raise InstanceError(f"'agents' is {n} but {inst.n_agents} rows given")
    if m != inst.n_items:
        raise InstanceError(f"'items' is {m} but rows have {inst.n_items} entries")
    return inst


def instance_to_dict(inst: CardinalInstance | OrdinalInstance) -> dict:
    out: dict[str, Any] = {}
    if isinstance(inst, OrdinalInstance):
        out["mode"] = ORDINAL
        out["agents"] = inst.n_agents
        out["items"] = inst.n_items
        out["orders"] = [list(o) for o in inst.orders]
    else:
        out["mode"] = inst.mode
        out["agents"] = inst.n_agents
        out["items"] = inst.n_items
        out["values"] = [list(r) for r in inst.values]
    out["rho"] = inst.rho.params
    return to_jsonable(out)


def parse_instance(text: str) -> CardinalInstance | OrdinalInstance:
    return instance_from_dict(loads(text))


def serialize_instance(inst: CardinalInstance | OrdinalInstance) -> str:
    return dumps(instance_to_dict(inst))


def read_instance(path: str | Path) -> CardinalInstance | OrdinalInstance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def write_instance(inst: CardinalInstance | OrdinalInstance, path: str | Path) -> None:
    Path(path).write_text(serialize_instance(inst), encoding="utf-8")


# ---------------------------------------------------------------------------
# allocations


def allocation_to_dict(alloc: Allocation) -> dict:
    return to_jsonable({"schema": SCHEMA, "x": alloc.x, "provenance": alloc.provenance})


def allocation_from_dict(data: dict) -> Allocation:
    x = [[_num(v) if not isinstance(v, float) else v for v in row] for row in data["x"]]
    return Allocation(np.array(x, dtype=object), dict(data.get("provenance", {})))


def read_allocation(path: str | Path) -> Allocation:
    return allocation_from_dict(loads(Path(path).read_text(encoding="utf-8")))


def lottery_to_dict(lot: Lottery) -> dict:
    return to_jsonable({
        "schema": SCHEMA,
        "items": lot.n_items,
        "entries": [{"assignment": list(pi), "p": p} for pi, p in lot.entries],
    })
