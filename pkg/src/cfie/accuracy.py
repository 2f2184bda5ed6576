"""Signature-recovery accuracy tables for a linked source/binary program.

Every table is keyed by a ground-truth bucket and counts how many binary-side
recoveries were right (``true``) or wrong (``false``). Samples come from
matched function pairs (``side="function"``) and from every (source site,
binary site) pair in the call-site map (``side="call_site"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple

from .ingest import MatchedProgram
from .types import (
    Pointer,
    TypeDescriptor,
    Void,
    category,
    relaxed_width,
    type_equal_ifcc,
    type_equal_mcfi,
)

__all__ = [
    "DIMENSIONS",
    "SIDES",
    "ARITY_LABELS",
    "WIDTH_LABELS",
    "VOIDNESS_LABELS",
    "BucketTable",
    "arity_accuracy",
    "return_accuracy",
    "preliminary_type_accuracy",
    "pointer_type_accuracy",
    "relaxed_type_accuracy",
    "all_tables",
]

DIMENSIONS = (
    "arity",
    "return_voidness",
    "preliminary_type",
    "pointer_base_type",
    "relaxed_width",
    "relaxed_return_width",
)
SIDES = ("call_site", "function")

ARITY_LABELS = ("0", "1", "2", "3", "4", "5", "6+")
WIDTH_LABELS = ("0", "8", "16", "32", "64")
VOIDNESS_LABELS = ("void", "non-void")
# scalar categories first, then heads, in a fixed order for stable output
TYPE_LABELS = tuple(f"{p}{w}" for p in "ifbe" for w in (8, 16, 32, 64)) + (
    "void",
    "pointer",
    "aggregate",
    "function",
    "unknown",
)

_FIXED_LABELS = {
    "arity": ARITY_LABELS,
    "return_voidness": VOIDNESS_LABELS,
    "relaxed_width": WIDTH_LABELS,
    "relaxed_return_width": WIDTH_LABELS,
}


@dataclass
class BucketTable:
    dimension: str
    side: str
    rows: Dict[str, List[int]] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        for label in _FIXED_LABELS.get(self.dimension, ()):
            self.rows.setdefault(label, [0, 0])

    def add(self, label: str, ok: bool):
        row = self.rows.setdefault(label, [0, 0])
        row[0 if ok else 1] += 1

    @property
    def true_count(self) -> int:
        return sum(t for t, _ in self.rows.values())

    @property
    def false_count(self) -> int:
        return sum(f for _, f in self.rows.values())

    @property
    def total(self) -> int:
        return self.true_count + self.false_count

    @property
    def accuracy(self):
        """Overall fraction of true samples, ``None`` when the table is empty."""
        return self.true_count / self.total if self.total else None

    def ordered_rows(self) -> List[Tuple[str, int, int]]:
        order = _FIXED_LABELS.get(self.dimension, TYPE_LABELS)
        rank = {label: i for i, label in enumerate(order)}
        labels = sorted(self.rows, key=lambda l: (rank.get(l, len(rank)), l))
        return [(l, self.rows[l][0], self.rows[l][1]) for l in labels]

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "side": self.side,
            "true": self.true_count,
            "false": self.false_count,
            "accuracy": self.accuracy,
            "rows": [{"bucket": l, "true": t, "false": f} for l, t, f in self.ordered_rows()],
        }


# ---------------------------------------------------------------------------
# sample pairs


def _function_pairs(mp) -> Iterator[Tuple[tuple, tuple, TypeDescriptor, TypeDescriptor]]:
    for s, b in mp.fn_pairs:
        fs, fb = mp.source.function(s), mp.binary.function(b)
        yield fs.params, fb.params, fs.return_type, fb.return_type


def _call_site_pairs(mp):
    for s, bins in mp.cs_map.items():
        cs = mp.source.call_site(s)
        for b in bins:
            cb = mp.binary.call_site(b)
            yield cs.args, cb.args, cs.expects_return, cb.expects_return


def _pairs(mp, side):
    return _function_pairs(mp) if side == "function" else _call_site_pairs(mp)


def _per_side(dimension, mp, fill):
    out = {}
    for side in SIDES:
        table = BucketTable(dimension, side)
        for src_args, bin_args, src_ret, bin_ret in _pairs(mp, side):
            fill(table, src_args, bin_args, src_ret, bin_ret)
        out[side] = table
    return out


def _positions(src_args, bin_args):
    # ground-truth anchored: missing binary positions are None, extras ignored
    for i, t in enumerate(src_args):
        yield t, (bin_args[i] if i < len(bin_args) else None)


# ---------------------------------------------------------------------------
# tables


def arity_accuracy(mp: MatchedProgram) -> Dict[str, BucketTable]:
    def fill(table, sa, ba, sr, br):
        label = "6+" if len(sa) >= 6 else str(len(sa))
        table.add(label, len(sa) == len(ba))

    return _per_side("arity", mp, fill)


def return_accuracy(mp: MatchedProgram) -> Dict[str, BucketTable]:
    def fill(table, sa, ba, sr, br):
        src_void = isinstance(sr, Void)
        table.add("void" if src_void else "non-void", src_void == isinstance(br, Void))

    return _per_side("return_voidness", mp, fill)


def preliminary_type_accuracy(mp: MatchedProgram) -> Dict[str, BucketTable]:
    def fill(table, sa, ba, sr, br):
        for s, b in _positions(sa, ba):
            table.add(category(s), b is not None and type_equal_ifcc(s, b))

    return _per_side("preliminary_type", mp, fill)


def pointer_type_accuracy(mp: MatchedProgram) -> Dict[str, BucketTable]:
    def fill(table, sa, ba, sr, br):
        for s, b in _positions(sa, ba):
            if isinstance(s, Pointer):
                table.add(category(s.pointee), b is not None and type_equal_mcfi(s, b))

    return _per_side("pointer_base_type", mp, fill)


def relaxed_type_accuracy(mp: MatchedProgram) -> Tuple[Dict[str, BucketTable], Dict[str, BucketTable]]:
    """Argument width tables and return width tables, in that order."""

    def fill_args(table, sa, ba, sr, br):
        for s, b in _positions(sa, ba):
            w = relaxed_width(s)
            table.add(str(w), b is not None and relaxed_width(b) == w)

    def fill_return(table, sa, ba, sr, br):
        w = relaxed_width(sr)
        table.add(str(w), relaxed_width(br) == w)

    return _per_side("relaxed_width", mp, fill_args), _per_side("relaxed_return_width", mp, fill_return)


def all_tables(mp: MatchedProgram) -> List[BucketTable]:
    """Every table, ordered by dimension then side."""
    widths, ret_widths = relaxed_type_accuracy(mp)
    by_dim = {
        "arity": arity_accuracy(mp),
        "return_voidness": return_accuracy(mp),
        "preliminary_type": preliminary_type_accuracy(mp),
        "pointer_base_type": pointer_type_accuracy(mp),
        "relaxed_width": widths,
        "relaxed_return_width": ret_widths,
    }
    return [by_dim[d][s] for d in DIMENSIONS for s in SIDES]
