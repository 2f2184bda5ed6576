"""Seeded degradation of a ground-truth view into a binary-style view.

Randomness comes from numpy's PCG64 bit generator. ``PerturbConfig.seed``
feeds a ``SeedSequence`` that spawns two PCG64 streams: one for the Bernoulli
decisions and one for the replacement values. The decision stream is consumed
in a fixed order (per function: drop, arity, one per parameter, return; per
call-site: drop, arity, one per argument, return, split, then the same
signature draws for the would-be duplicate) whatever the rates
are, so configs that differ only in rates make coupled decisions: anything hit
at a low rate is also hit at a higher one.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import List

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .ingest import CallSiteSignature, FunctionSignature, ProgramView
from .types import Aggregate, Function, Pointer, Scalar, TypeDescriptor, Unknown, Void
from .validation import check_probability, check_view

__all__ = ["PerturbConfig", "perturb_view", "ViewPerturber", "REPLACEMENT_PALETTE"]

_I64 = Scalar("int", 64)

# candidate replacements for a mis-recovered argument type
REPLACEMENT_PALETTE = (
    Scalar("int", 8),
    Scalar("int", 16),
    Scalar("int", 32),
    _I64,
    Scalar("float", 32),
    Scalar("float", 64),
    Scalar("bool", 8),
    Scalar("enum", 32),
    Pointer(Void()),
    Pointer(Scalar("int", 8)),
    Pointer(Scalar("int", 32)),
    Pointer(_I64),
    Pointer(Aggregate("anon")),
    Pointer(Pointer(Scalar("int", 8))),
    Function(),
    Unknown(),
)
_NON_VOID_RETURNS = (Scalar("int", 32), _I64, Scalar("int", 8), Pointer(Void()), Pointer(_I64))

# struct* is most often recovered as int64, otherwise as int64*
_STRUCT_PTR_CONFUSION = 0.5
_STRUCT_PTR_AS_PTR_I64 = 0.25


@dataclass(frozen=True)
class PerturbConfig:
    seed: int = 0
    arity_err: float = 0.0
    type_err: float = 0.0
    return_voidness_err: float = 0.0
    drop_fn: float = 0.0
    drop_cs: float = 0.0
    split_cs: float = 0.0

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        for f in fields(self):
            if f.name != "seed":
                object.__setattr__(self, f.name, check_probability(getattr(self, f.name), f.name))

    @classmethod
    def from_dict(cls, doc: dict) -> "PerturbConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown perturbation setting(s): {', '.join(sorted(extra))}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "PerturbConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


class _Perturber:
    def __init__(self, cfg: PerturbConfig):
        self.cfg = cfg
        decide, values = np.random.SeedSequence(int(cfg.seed)).spawn(2)
        self.decide = np.random.Generator(np.random.PCG64(decide))
        self.rng = np.random.Generator(np.random.PCG64(values))

    def hit(self, p):
        # always draw, so the decision stream layout does not depend on the rates
        return self.decide.random() < p

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def replace_type(self, t: TypeDescriptor) -> TypeDescriptor:
        if isinstance(t, Pointer) and isinstance(t.pointee, Aggregate):
            u = self.rng.random()
            if u < _STRUCT_PTR_CONFUSION:
                return _I64
            if u < _STRUCT_PTR_CONFUSION + _STRUCT_PTR_AS_PTR_I64:
                return Pointer(_I64)
        choices = [c for c in REPLACEMENT_PALETTE if c != t]
        return self.pick(choices)

    def args(self, types):
        cfg = self.cfg
        out = list(types)
        change_arity = self.hit(cfg.arity_err)
        for i in range(len(out)):
            if self.hit(cfg.type_err):
                out[i] = self.replace_type(out[i])
        if change_arity:
            if out and self.rng.random() < 0.5:
                out.pop()
            else:
                out.append(self.pick(REPLACEMENT_PALETTE))
        return tuple(out)

    def ret(self, t):
        if not self.hit(self.cfg.return_voidness_err):
            return t
        if isinstance(t, Void):
            return self.pick(_NON_VOID_RETURNS)
        return Void()

    def function(self, f: FunctionSignature):
        dropped = self.hit(self.cfg.drop_fn)
        params = self.args(f.params)
        ret = self.ret(f.return_type)
        if dropped:
            return None
        return FunctionSignature(f.fn_id, f.link_key, ret, params, f.variadic, f.address_taken)

    def call_site(self, c: CallSiteSignature):
        args = self.args(c.args)
        ret = self.ret(c.expects_return)
        return CallSiteSignature(c.cs_id, c.link_key, ret, args)


def perturb_view(view: ProgramView, cfg: PerturbConfig) -> ProgramView:
    """Degrade ``view`` according to ``cfg``; the result is labelled ``synthetic``."""
    check_view(view)
    p = _Perturber(cfg)
    functions = [g for g in (p.function(f) for f in view.functions) if g is not None]

    taken = {c.cs_id for c in view.call_sites}
    call_sites: List[CallSiteSignature] = []
    for c in view.call_sites:
        dropped = p.hit(cfg.drop_cs)
        site = p.call_site(c)
        split = p.hit(cfg.split_cs)
        dup = p.call_site(c)
        if dropped:
            continue
        call_sites.append(site)
        if split:
            k = 1
            while f"{c.cs_id}~{k}" in taken:
                k += 1
            dup_id = f"{c.cs_id}~{k}"
            taken.add(dup_id)
            call_sites.append(CallSiteSignature(dup_id, dup.link_key, dup.expects_return, dup.args))
    return ProgramView("synthetic", tuple(functions), tuple(call_sites))


class ViewPerturber(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`perturb_view`; ``fit`` is a no-op."""

    def __init__(self, seed=0, arity_err=0.0, type_err=0.0, return_voidness_err=0.0,
                 drop_fn=0.0, drop_cs=0.0, split_cs=0.0):
        self.seed = seed
        self.arity_err = arity_err
        self.type_err = type_err
        self.return_voidness_err = return_voidness_err
        self.drop_fn = drop_fn
        self.drop_cs = drop_cs
        self.split_cs = split_cs

    @property
    def config(self) -> PerturbConfig:
        return PerturbConfig(**self.get_params())

    def fit(self, X, y=None):
        self.config_ = self.config
        return self

    def transform(self, X) -> ProgramView:
        return perturb_view(X, self.config)
