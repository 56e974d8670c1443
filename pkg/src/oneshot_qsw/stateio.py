"""JSON state files.

Layout::

    {"registers": [{"name": "R", "dim": 2}, ...],
     "kind": "pure" | "mixed",
     "data": [[re, im], ...]}

Vectors are dense, matrices are flattened row-major. Every float is written
with 17 significant digits so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .qstate import DensityOperator, Ket, RegisterSystem


def _num(x: float) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return format(x, ".17g")


def dumps_state(state) -> str:
    if isinstance(state, Ket):
        kind = "pure"
        flat = state.vector
    elif isinstance(state, DensityOperator):
        kind = "mixed"
        flat = np.asarray(state.matrix).reshape(-1)
    else:
        raise TypeError(f"cannot serialize {type(state).__name__}")
    regs = ", ".join(
        '{"name": %s, "dim": %d}' % (json.dumps(n), d) for n, d in state.system.registers
    )
    data = ",\n  ".join(f"[{_num(z.real)}, {_num(z.imag)}]" for z in flat)
    return '{"registers": [%s],\n "kind": "%s",\n "data": [\n  %s\n ]}\n' % (regs, kind, data)


def state_to_obj(state) -> dict:
    """Plain-dict form of a state, for embedding in larger JSON documents."""
    return json.loads(dumps_state(state))


def state_from_obj(obj, *, check=True):
    system = RegisterSystem(tuple((r["name"], int(r["dim"])) for r in obj["registers"]))
    arr = np.asarray(obj["data"], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError("state data must be a list of [re, im] pairs")
    flat = arr[:, 0] + 1j * arr[:, 1]
    kind = obj.get("kind", "pure")
    if kind == "pure":
        return Ket(system, flat, normalized=check)
    if kind == "mixed":
        d = system.dim
        if flat.size != d * d:
            raise ShapeError(f"mixed state needs {d * d} entries, got {flat.size}")
        return DensityOperator(system, flat.reshape(d, d), check=check)
    raise ShapeError(f"unknown state kind {kind!r}")


def loads_state(text: str, *, check=True):
    return state_from_obj(json.loads(text), check=check)


def save_state(state, path) -> None:
    Path(path).write_text(dumps_state(state), encoding="utf-8")


def load_state(path, *, check=True):
    return loads_state(Path(path).read_text(encoding="utf-8"), check=check)


def to_jsonable(x):
    """Convert reports to plain JSON types.

    Non-finite floats become strings (``"inf"``, ``"nan"``) so the output is
    strict JSON; states become their file-format dicts; objects with a
    ``to_dict`` method are expanded.
    """
    if isinstance(x, (Ket, DensityOperator)):
        return state_to_obj(x)
    if hasattr(x, "to_dict") and callable(x.to_dict):
        return to_jsonable(x.to_dict())
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [to_jsonable(x.real), to_jsonable(x.imag)]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps_report(obj) -> str:
    """Stable JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"
