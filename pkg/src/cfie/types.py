"""Type descriptors, the textual type grammar, and per-policy type relations.

Descriptors are small frozen dataclasses, so they hash and compare
structurally. Two equality relations are defined on top of them:

* ``type_equal_ifcc`` collapses every pointer to one opaque pointer token.
* ``type_equal_mcfi`` compares pointers structurally, pointee included.

``relaxed_width`` maps a descriptor to the register width lattice
``{0, 8, 16, 32, 64}`` used by the width-based policy.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Union

__all__ = [
    "Void",
    "Scalar",
    "Pointer",
    "Aggregate",
    "Function",
    "Unknown",
    "TypeDescriptor",
    "PolicyId",
    "TypeGrammarError",
    "RELAXED_WIDTHS",
    "SCALAR_KINDS",
    "SCALAR_WIDTHS",
    "parse_type",
    "format_type",
    "relaxed_width",
    "ifcc_projection",
    "type_equal_ifcc",
    "type_equal_mcfi",
    "category",
    "pointer_depth",
]

SCALAR_KINDS = ("int", "float", "bool", "enum")
SCALAR_WIDTHS = (8, 16, 32, 64)
RELAXED_WIDTHS = (0, 8, 16, 32, 64)

_KIND_PREFIX = {"int": "i", "float": "f", "bool": "b", "enum": "e"}
_PREFIX_KIND = {v: k for k, v in _KIND_PREFIX.items()}


class TypeGrammarError(ValueError):
    """A type string does not follow the grammar.

    ``position`` is the character offset inside the type string where
    parsing failed; ``location`` is filled in by callers that know where
    the string came from (e.g. ``functions[2].params[0]``).
    """

    def __init__(self, message, text="", position=0, location=None, line=None):
        self.text = text
        self.position = position
        self.location = location
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = self.args[0]
        if self.text:
            msg = f"{msg} in {self.text!r} at offset {self.position}"
        if self.location:
            msg = f"{self.location}: {msg}"
        return msg


@dataclass(frozen=True)
class Void:
    pass


@dataclass(frozen=True)
class Scalar:
    kind: str
    width_bits: int

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown scalar kind {self.kind!r}")
        if self.width_bits not in SCALAR_WIDTHS:
            raise ValueError(f"scalar width must be one of {SCALAR_WIDTHS}, got {self.width_bits!r}")


@dataclass(frozen=True)
class Pointer:
    pointee: "TypeDescriptor"

    def __post_init__(self):
        if not isinstance(self.pointee, _DESCRIPTOR_CLASSES):
            raise TypeError(f"pointee must be a type descriptor, got {type(self.pointee).__name__}")


@dataclass(frozen=True)
class Aggregate:
    tag: str

    def __post_init__(self):
        if not self.tag or not _TAG_RE.fullmatch(self.tag):
            raise ValueError(f"invalid aggregate tag {self.tag!r}")


@dataclass(frozen=True)
class Function:
    pass


@dataclass(frozen=True)
class Unknown:
    pass


TypeDescriptor = Union[Void, Scalar, Pointer, Aggregate, Function, Unknown]
_DESCRIPTOR_CLASSES = (Void, Scalar, Pointer, Aggregate, Function, Unknown)

# Tags cannot contain grammar delimiters or whitespace.
_TAG_RE = re.compile(r"[^()\s]+")
_SCALAR_RE = re.compile(r"([ifbe])(8|16|32|64)")


class PolicyId(str, enum.Enum):
    TypeArmor = "TypeArmor"
    IFCC = "IFCC"
    MCFI = "MCFI"
    TCFI = "TCFI"

    @classmethod
    def parse(cls, value) -> "PolicyId":
        """Accept a ``PolicyId`` or a case-insensitive name (``tcfi``, ``tau-cfi``...)."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value.lower() == key:
                return member
        if key in ("taucfi", "τcfi"):
            return cls.TCFI
        raise ValueError(f"unknown policy {value!r}; expected one of {[m.value for m in cls]}")

    def __str__(self):
        return self.value


# ---------------------------------------------------------------------------
# textual grammar


def parse_type(text: str) -> TypeDescriptor:
    """Parse a type string such as ``"ptr(struct(evt))"`` into a descriptor."""
    if not isinstance(text, str):
        raise TypeGrammarError(f"type must be a string, got {type(text).__name__}")
    node, pos = _parse_at(text, 0)
    if pos != len(text):
        raise TypeGrammarError("trailing characters", text, pos)
    return node


def _parse_at(text, pos):
    if text.startswith("void", pos):
        return Void(), pos + 4
    if text.startswith("func", pos):
        return Function(), pos + 4
    if text.startswith("unknown", pos):
        return Unknown(), pos + 7
    if text.startswith("ptr(", pos):
        inner, end = _parse_at(text, pos + 4)
        if end >= len(text) or text[end] != ")":
            raise TypeGrammarError("expected ')'", text, end)
        return Pointer(inner), end + 1
    if text.startswith("struct(", pos):
        m = _TAG_RE.match(text, pos + 7)
        if m is None:
            raise TypeGrammarError("expected aggregate tag", text, pos + 7)
        end = m.end()
        if end >= len(text) or text[end] != ")":
            raise TypeGrammarError("expected ')'", text, end)
        return Aggregate(m.group(0)), end + 1
    m = _SCALAR_RE.match(text, pos)
    if m is not None:
        return Scalar(_PREFIX_KIND[m.group(1)], int(m.group(2))), m.end()
    raise TypeGrammarError("unrecognized type", text, pos)


def format_type(t: TypeDescriptor) -> str:
    """Inverse of :func:`parse_type`."""
    if isinstance(t, Void):
        return "void"
    if isinstance(t, Scalar):
        return f"{_KIND_PREFIX[t.kind]}{t.width_bits}"
    if isinstance(t, Pointer):
        return f"ptr({format_type(t.pointee)})"
    if isinstance(t, Aggregate):
        return f"struct({t.tag})"
    if isinstance(t, Function):
        return "func"
    if isinstance(t, Unknown):
        return "unknown"
    raise TypeError(f"not a type descriptor: {t!r}")


# ---------------------------------------------------------------------------
# relations


def relaxed_width(t: TypeDescriptor) -> int:
    if isinstance(t, Void):
        return 0
    if isinstance(t, Scalar):
        return t.width_bits
    # pointers, aggregates, function handles and unknowns travel in a 64-bit register
    return 64


_OPAQUE_POINTER = "ptr"


def ifcc_projection(t: TypeDescriptor):
    """Canonical hashable key such that equal keys <=> ``type_equal_ifcc``."""
    if isinstance(t, Pointer):
        return _OPAQUE_POINTER
    return t


def type_equal_ifcc(a: TypeDescriptor, b: TypeDescriptor) -> bool:
    return ifcc_projection(a) == ifcc_projection(b)


def type_equal_mcfi(a: TypeDescriptor, b: TypeDescriptor) -> bool:
    # dataclass equality already recurses through pointees
    return a == b


def pointer_depth(t: TypeDescriptor) -> int:
    depth = 0
    while isinstance(t, Pointer):
        depth += 1
        t = t.pointee
    return depth


def category(t: TypeDescriptor) -> str:
    """Bucket label used by the accuracy tables.

    Scalars keep their grammar token (``i32``, ``f64``...), everything else
    collapses to its head: ``void``, ``pointer``, ``aggregate``,
    ``function`` or ``unknown``.
    """
    if isinstance(t, Scalar):
        return format_type(t)
    if isinstance(t, Pointer):
        return "pointer"
    if isinstance(t, Aggregate):
        return "aggregate"
    if isinstance(t, Function):
        return "function"
    if isinstance(t, Unknown):
        return "unknown"
    return "void"
