"""Program-view files: parsing, validation, serialization and source/binary linking.

A view file is a UTF-8 JSON object::

    {"label": "source",
     "functions": [{"id": "f1", "link_key": "main", "return": "i32",
                    "params": ["ptr(void)"], "variadic": false,
                    "address_taken": true}],
     "call_sites": [{"id": "c1", "link_key": "a.c:10:3",
                     "expects_return": "void", "args": ["i64"]}]}
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from .types import TypeDescriptor, TypeGrammarError, Void, format_type, parse_type

log = logging.getLogger(__name__)

__all__ = [
    "VIEW_LABELS",
    "InputError",
    "SchemaError",
    "DuplicateIdError",
    "TypeGrammarError",
    "FunctionSignature",
    "CallSiteSignature",
    "ProgramView",
    "UnmatchedCounts",
    "MatchedProgram",
    "parse_view",
    "load_view",
    "view_to_dict",
    "serialize_view",
    "link_views",
]

VIEW_LABELS = ("source", "binary-I", "binary-II", "synthetic")

_FUNCTION_FIELDS = ("id", "link_key", "return", "params", "variadic", "address_taken")
_CALL_SITE_FIELDS = ("id", "link_key", "expects_return", "args")
_VIEW_FIELDS = ("label", "functions", "call_sites")


class InputError(ValueError):
    """Base class for malformed input; carries an optional JSON path and line."""

    def __init__(self, message, location=None, line=None):
        self.location = location
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = self.args[0]
        if self.location:
            msg = f"{self.location}: {msg}"
        return msg


class SchemaError(InputError):
    pass


class DuplicateIdError(InputError):
    pass


@dataclass(frozen=True)
class FunctionSignature:
    fn_id: str
    link_key: str
    return_type: TypeDescriptor
    params: Tuple[TypeDescriptor, ...] = ()
    variadic: bool = False
    address_taken: bool = True

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))


@dataclass(frozen=True)
class CallSiteSignature:
    cs_id: str
    link_key: str
    expects_return: TypeDescriptor = Void()
    args: Tuple[TypeDescriptor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class ProgramView:
    label: str
    functions: Tuple[FunctionSignature, ...] = ()
    call_sites: Tuple[CallSiteSignature, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "call_sites", tuple(self.call_sites))

    @property
    def address_taken(self) -> Tuple[FunctionSignature, ...]:
        return tuple(f for f in self.functions if f.address_taken)

    def function(self, fn_id: str) -> FunctionSignature:
        return self._fn_index[fn_id]

    def call_site(self, cs_id: str) -> CallSiteSignature:
        return self._cs_index[cs_id]

    @property
    def _fn_index(self):
        idx = self.__dict__.get("_fn_idx")
        if idx is None:
            idx = {f.fn_id: f for f in self.functions}
            object.__setattr__(self, "_fn_idx", idx)
        return idx

    @property
    def _cs_index(self):
        idx = self.__dict__.get("_cs_idx")
        if idx is None:
            idx = {c.cs_id: c for c in self.call_sites}
            object.__setattr__(self, "_cs_idx", idx)
        return idx


@dataclass(frozen=True)
class UnmatchedCounts:
    source: int = 0
    binary: int = 0


@dataclass(frozen=True)
class MatchedProgram:
    """Two linked views.

    ``fn_pairs`` is a partial bijection of function ids (source order).
    ``cs_map`` has one entry per source call-site; the value is the
    (possibly empty) tuple of binary call-sites sharing its link key.
    """

    source: ProgramView
    binary: ProgramView
    fn_pairs: Tuple[Tuple[str, str], ...]
    cs_map: Mapping[str, Tuple[str, ...]]
    unmatched_fns: UnmatchedCounts
    unmatched_css: UnmatchedCounts

    @property
    def matched_call_sites(self) -> List[str]:
        return [cs for cs, bins in self.cs_map.items() if bins]

    @property
    def source_to_binary_fn(self) -> Dict[str, str]:
        return dict(self.fn_pairs)

    @property
    def binary_to_source_fn(self) -> Dict[str, str]:
        return {b: s for s, b in self.fn_pairs}


# ---------------------------------------------------------------------------
# parsing


def _line_of(text: Optional[str], needle: str, start: int = 0) -> Optional[int]:
    if text is None:
        return None
    idx = text.find(needle, start)
    if idx < 0:
        idx = text.find(needle)
    if idx < 0:
        return None
    return text.count("\n", 0, idx) + 1


class _Parser:
    def __init__(self, text, strict):
        self.text = text
        self.strict = strict
        self.cursor = 0

    def anchor(self, entity_id):
        # Advance a search cursor to the entity's id so later line lookups
        # land inside the right object.
        if self.text is None or not isinstance(entity_id, str):
            return
        idx = self.text.find(json.dumps(entity_id), self.cursor)
        if idx >= 0:
            self.cursor = idx

    def line(self, needle=None):
        if self.text is None:
            return None
        if needle is None:
            return self.text.count("\n", 0, self.cursor) + 1
        return _line_of(self.text, needle, self.cursor)

    def check_fields(self, obj, allowed, where):
        if not isinstance(obj, dict):
            raise SchemaError(f"expected an object, got {type(obj).__name__}", where, self.line())
        extra = sorted(set(obj) - set(allowed))
        if extra:
            msg = f"unknown field(s) {', '.join(extra)}"
            if self.strict:
                raise SchemaError(msg, where, self.line(json.dumps(extra[0])))
            log.warning("%s: %s (ignored)", where, msg)
        for name in allowed:
            if name not in obj:
                raise SchemaError(f"missing field {name!r}", where, self.line())

    def string(self, obj, key, where):
        value = obj[key]
        if not isinstance(value, str) or not value:
            raise SchemaError(f"{key!r} must be a non-empty string", where, self.line())
        return value

    def boolean(self, obj, key, where):
        value = obj[key]
        if not isinstance(value, bool):
            raise SchemaError(f"{key!r} must be a boolean", where, self.line())
        return value

    def type_(self, value, where):
        if not isinstance(value, str):
            raise SchemaError("type must be a string", where, self.line())
        try:
            return parse_type(value)
        except TypeGrammarError as exc:
            exc.location = where
            exc.line = self.line(json.dumps(value))
            raise

    def type_list(self, obj, key, where):
        values = obj[key]
        if not isinstance(values, list):
            raise SchemaError(f"{key!r} must be a list", where, self.line())
        return tuple(self.type_(v, f"{where}.{key}[{i}]") for i, v in enumerate(values))

    def function(self, obj, where):
        if isinstance(obj, dict):
            self.anchor(obj.get("id"))
        self.check_fields(obj, _FUNCTION_FIELDS, where)
        return FunctionSignature(
            fn_id=self.string(obj, "id", where),
            link_key=self.string(obj, "link_key", where),
            return_type=self.type_(obj["return"], f"{where}.return"),
            params=self.type_list(obj, "params", where),
            variadic=self.boolean(obj, "variadic", where),
            address_taken=self.boolean(obj, "address_taken", where),
        )

    def call_site(self, obj, where):
        if isinstance(obj, dict):
            self.anchor(obj.get("id"))
        self.check_fields(obj, _CALL_SITE_FIELDS, where)
        return CallSiteSignature(
            cs_id=self.string(obj, "id", where),
            link_key=self.string(obj, "link_key", where),
            expects_return=self.type_(obj["expects_return"], f"{where}.expects_return"),
            args=self.type_list(obj, "args", where),
        )

    def view(self, doc):
        if not isinstance(doc, dict):
            raise SchemaError("view must be a JSON object", None, 1)
        self.check_fields(doc, _VIEW_FIELDS, "view")
        label = doc["label"]
        if label not in VIEW_LABELS:
            raise SchemaError(f"label must be one of {list(VIEW_LABELS)}, got {label!r}", "view.label",
                              self.line(json.dumps(label)))
        for key in ("functions", "call_sites"):
            if not isinstance(doc[key], list):
                raise SchemaError(f"{key!r} must be a list", f"view.{key}", self.line(json.dumps(key)))
        fns = tuple(self.function(o, f"functions[{i}]") for i, o in enumerate(doc["functions"]))
        css = tuple(self.call_site(o, f"call_sites[{i}]") for i, o in enumerate(doc["call_sites"]))
        view = ProgramView(label, fns, css)
        _check_unique(view, self.text)
        return view


def _check_unique(view: ProgramView, text=None):
    def dup(kind, attr, items, where):
        seen = set()
        for i, item in enumerate(items):
            value = getattr(item, attr)
            if value in seen:
                raise DuplicateIdError(f"duplicate {kind} {value!r}", f"{where}[{i}]",
                                       _line_of(text, json.dumps(value), 0))
            seen.add(value)

    dup("function id", "fn_id", view.functions, "functions")
    dup("function link_key", "link_key", view.functions, "functions")
    dup("call-site id", "cs_id", view.call_sites, "call_sites")
    if view.label == "source":
        dup("call-site link_key", "link_key", view.call_sites, "call_sites")


def parse_view(payload, strict: bool = True) -> ProgramView:
    """Parse and validate a view from bytes, text, or an already-decoded dict.

    With ``strict=False`` unknown fields are logged and ignored instead of
    raising :class:`SchemaError`.
    """
    text = None
    if isinstance(payload, (bytes, bytearray)):
        try:
            text = bytes(payload).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError(f"payload is not valid UTF-8 ({exc.reason})", None, None) from None
    elif isinstance(payload, str):
        text = payload
    if text is not None:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", f"col {exc.colno}", exc.lineno) from None
    else:
        doc = payload
    return _Parser(text, strict).view(doc)


def load_view(path, strict: bool = True) -> ProgramView:
    with open(path, "rb") as fh:
        return parse_view(fh.read(), strict=strict)


def view_to_dict(view: ProgramView) -> dict:
    return {
        "label": view.label,
        "functions": [
            {
                "id": f.fn_id,
                "link_key": f.link_key,
                "return": format_type(f.return_type),
                "params": [format_type(p) for p in f.params],
                "variadic": f.variadic,
                "address_taken": f.address_taken,
            }
            for f in view.functions
        ],
        "call_sites": [
            {
                "id": c.cs_id,
                "link_key": c.link_key,
                "expects_return": format_type(c.expects_return),
                "args": [format_type(a) for a in c.args],
            }
            for c in view.call_sites
        ],
    }


def serialize_view(view: ProgramView) -> bytes:
    return (json.dumps(view_to_dict(view), indent=1) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# linking


def link_views(source: ProgramView, binary: ProgramView) -> MatchedProgram:
    """Pair functions and call-sites of two views by exact ``link_key`` equality."""
    bin_fn_by_key = {f.link_key: f.fn_id for f in binary.functions}
    fn_pairs = []
    for f in source.functions:
        b = bin_fn_by_key.get(f.link_key)
        if b is not None:
            fn_pairs.append((f.fn_id, b))
    unmatched_fns = UnmatchedCounts(
        source=len(source.functions) - len(fn_pairs),
        binary=len(binary.functions) - len(fn_pairs),
    )

    bin_cs_by_key: Dict[str, List[str]] = defaultdict(list)
    for c in binary.call_sites:
        bin_cs_by_key[c.link_key].append(c.cs_id)

    cs_map = {}
    used_keys = set()
    for c in source.call_sites:
        # a binary site lands under at most one source site; only non-source
        # labelled views can repeat keys, the first holder wins there
        bins = [] if c.link_key in used_keys else bin_cs_by_key.get(c.link_key, [])
        if bins:
            used_keys.add(c.link_key)
        cs_map[c.cs_id] = tuple(bins)
    matched_src = sum(1 for v in cs_map.values() if v)
    matched_bin = sum(len(bin_cs_by_key[k]) for k in used_keys)
    unmatched_css = UnmatchedCounts(
        source=len(source.call_sites) - matched_src,
        binary=len(binary.call_sites) - matched_bin,
    )
    return MatchedProgram(source, binary, tuple(fn_pairs), cs_map, unmatched_fns, unmatched_css)
