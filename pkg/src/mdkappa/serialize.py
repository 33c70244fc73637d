"""JSON encoding of exact objects and canonical dumps for digests.

Rationals are strings ``"p/q"``; a radical scalar is a list of ``[r, q]``
pairs meaning ``sum r sqrt(q)``.  Floats derived from exact data are written
next to their exact source, never instead of it.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from typing import Any

from .errors import ValidationError
from .mp import PwAffineMap
from .pcf import PCF
from .radical import RadScalar, _term_str
from .sets import SimpleSet
from .systems import OrthoSystem, SplitTree, _tree_system, rademacher

__all__ = [
    "frac_to_json", "frac_from_json", "rad_to_json", "rad_from_json", "rad_str",
    "set_to_json", "set_from_json", "pcf_to_json", "pcf_from_json",
    "map_to_json", "map_from_json", "system_to_json", "system_from_json",
    "to_jsonable", "canonical_dumps", "digest",
]


def frac_to_json(x) -> str:
    return str(Fraction(x))


def frac_from_json(s) -> Fraction:
    if isinstance(s, bool) or not isinstance(s, (str, int)):
        raise ValidationError(f"expected a rational string, got {s!r}")
    return Fraction(s)


def rad_to_json(x: RadScalar) -> list:
    return [[str(r), q] for r, q in x.terms()]


def rad_str(x) -> str:
    """Exact text form: ``p/q`` for rationals, ``r*sqrt(q)+...`` otherwise."""
    if not isinstance(x, RadScalar):
        return str(x)
    if x.is_rational():
        return str(x.as_fraction())
    return "+".join(_term_str(r, q) for r, q in x.terms()).replace("+-", "-")


def rad_from_json(d) -> RadScalar:
    if isinstance(d, (str, int)):
        return RadScalar(frac_from_json(d))
    return RadScalar.from_terms([(frac_from_json(r), int(q)) for r, q in d])


def set_to_json(a: SimpleSet) -> list:
    return [[str(lo), str(hi)] for lo, hi in a.pairs()]


def set_from_json(d) -> SimpleSet:
    return SimpleSet([(frac_from_json(lo), frac_from_json(hi)) for lo, hi in d])


def pcf_to_json(f: PCF) -> dict:
    return {"breaks": [str(b) for b in f.breaks], "values": [rad_to_json(v) for v in f.values]}


def pcf_from_json(d) -> PCF:
    return PCF([frac_from_json(b) for b in d["breaks"]], [rad_from_json(v) for v in d["values"]])


def map_to_json(m: PwAffineMap) -> dict:
    return m.to_json()


def map_from_json(d) -> PwAffineMap:
    return PwAffineMap.from_json(d)


def system_to_json(s: OrthoSystem) -> dict:
    out: dict = {"kind": s.kind, "size": len(s), "functions": [pcf_to_json(f) for f in s.functions]}
    tree = s.meta.get("tree")
    if isinstance(tree, SplitTree):
        out["tree"] = tree.to_json()
    return out


def system_from_json(d) -> OrthoSystem:
    fs = [pcf_from_json(f) for f in d["functions"]]
    kind = d.get("kind", "custom")
    if "tree" in d:
        s = _tree_system(SplitTree.from_json(d["tree"]), len(fs), kind)
    elif kind == "rademacher":
        s = rademacher(len(fs))
    else:
        return OrthoSystem(fs, kind)
    if s.functions != fs:
        raise ValidationError("stored functions do not match the stored generator")
    return s


def to_jsonable(x: Any):
    """Recursive encoder for results: exact types become their tagged forms."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, float):
        return x
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, RadScalar):
        return {"rad": rad_to_json(x), "float": float(x)}
    if isinstance(x, SimpleSet):
        return set_to_json(x)
    if isinstance(x, PCF):
        return pcf_to_json(x)
    if isinstance(x, PwAffineMap):
        return map_to_json(x)
    if isinstance(x, OrthoSystem):
        return system_to_json(x)
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "to_json"):
        return to_jsonable(x.to_json())
    if hasattr(x, "item"):  # numpy scalars
        return x.item()
    raise TypeError(f"cannot encode {type(x).__name__}")


def canonical_dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def digest(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()
