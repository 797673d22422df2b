"""JSON forms of fields, elements, homs and stabilization instances.

Every top-level document carries ``"schema"``. Scalars use the field's own
exact encoding; elements are lists of row-major scalar matrices. Output is
deterministic: keys are sorted and nothing depends on hash order.
"""
from __future__ import annotations

import json
from fractions import Fraction

from .matalg import ConcreteHom, Element, PseudoRank, Shape, Subalgebra
from .scalar import InvolutiveField, parse_field
from .stabilize import StabilizationInstance

SCHEMA = "contfactor/1"


class SchemaError(ValueError):
    """A document does not match the expected layout; ``where`` locates the problem."""

    def __init__(self, message: str, where: str = "$"):
        super().__init__(f"{where}: {message}")
        self.where = where


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write(doc, path: str | None):
    text = dumps(doc)
    if path is None or path == "-":
        return text
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def load(path: str):
    """Parse a JSON file; syntax errors become :class:`SchemaError` with line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read: {exc.strerror}", path) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc


def _need(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"missing key {key!r}", where)
    v = obj[key]
    if kind is not None and not isinstance(v, kind):
        raise SchemaError(f"{key!r} has the wrong type", f"{where}.{key}")
    return v


def check_schema(doc, kind: str, where: str = "$"):
    if not isinstance(doc, dict):
        raise SchemaError("document is not an object", where)
    if doc.get("schema") != SCHEMA:
        raise SchemaError(f"expected schema {SCHEMA!r}, got {doc.get('schema')!r}", where)
    if doc.get("kind") != kind:
        raise SchemaError(f"expected kind {kind!r}, got {doc.get('kind')!r}", where)


def rational(x) -> str:
    return str(Fraction(x))


# elements -----------------------------------------------------------------

def element_to_json(x: Element):
    f = x.field
    return [[[f.to_json(v) for v in row] for row in b.to_dense(f.zero)] for b in x.blocks]


def element_from_json(obj, f: InvolutiveField, where: str = "$") -> Element:
    if not isinstance(obj, list) or not obj:
        raise SchemaError("an element is a non-empty list of square matrices", where)
    mats = []
    for k, m in enumerate(obj):
        w = f"{where}[{k}]"
        if not isinstance(m, list) or any(not isinstance(r, list) or len(r) != len(m) for r in m):
            raise SchemaError("block is not a square matrix", w)
        try:
            mats.append([[f.from_json(v) for v in r] for r in m])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad scalar ({exc})", w) from exc
    return Element.from_dense(f, mats)


def hom_to_json(h: ConcreteHom):
    images = []
    for (t, a, b), img in sorted(h.images().items()):
        images.append({"block": t, "row": a, "col": b, "image": element_to_json(img)})
    return {"src": list(h.src), "tgt": list(h.tgt), "images": images}


def hom_from_json(obj, f: InvolutiveField, where: str = "$") -> ConcreteHom:
    src = Shape(_need(obj, "src", where, list))
    tgt = Shape(_need(obj, "tgt", where, list))
    imgs = {}
    for k, item in enumerate(_need(obj, "images", where, list)):
        w = f"{where}.images[{k}]"
        key = (_need(item, "block", w, int), _need(item, "row", w, int), _need(item, "col", w, int))
        imgs[key] = element_from_json(_need(item, "image", w), f, w + ".image")
    try:
        return ConcreteHom.from_images(src, tgt, f, imgs)
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"not a homomorphism ({exc})", where) from exc


# stabilization instances ---------------------------------------------------

def instance_to_json(inst: StabilizationInstance) -> dict:
    meta = {k: rational(v) if isinstance(v, Fraction) else v for k, v in inst.meta.items()}
    return {
        "schema": SCHEMA, "kind": "stabilization-instance", "field": inst.field.name, "star": inst.star,
        "ambient": list(inst.ambient), "weights": [rational(w) for w in inst.N.weights],
        "eps": rational(inst.eps), "subalgebra": hom_to_json(inst.A.hom), "rho": hom_to_json(inst.rho),
        "approximants": [[element_to_json(x) for x in row] for row in inst.approximants], "meta": meta,
    }


def instance_from_json(doc) -> StabilizationInstance:
    check_schema(doc, "stabilization-instance")
    f = parse_field(_need(doc, "field", "$", str))
    star = bool(doc.get("star", False))
    ambient = Shape(_need(doc, "ambient", "$", list))
    weights = [Fraction(w) for w in _need(doc, "weights", "$", list)]
    N = PseudoRank(ambient, weights)
    A = Subalgebra(hom_from_json(_need(doc, "subalgebra", "$"), f, "$.subalgebra"), star=star)
    rho = hom_from_json(_need(doc, "rho", "$"), f, "$.rho")
    approx = [[element_from_json(x, f, f"$.approximants[{i}][{j}]") for j, x in enumerate(row)]
              for i, row in enumerate(_need(doc, "approximants", "$", list))]
    return StabilizationInstance(ambient, f, N, A, rho, approx, Fraction(_need(doc, "eps", "$", str)), star,
                                 meta=dict(doc.get("meta", {})))


# projection pairs ------------------------------------------------------------

def pair_to_json(p: Element, q: Element, meta=None) -> dict:
    return {"schema": SCHEMA, "kind": "projection-pair", "field": p.field.name,
            "p": element_to_json(p), "q": element_to_json(q), "meta": meta or {}}


def pair_from_json(doc):
    check_schema(doc, "projection-pair")
    f = parse_field(_need(doc, "field", "$", str))
    return element_from_json(_need(doc, "p", "$"), f, "$.p"), element_from_json(_need(doc, "q", "$"), f, "$.q")
