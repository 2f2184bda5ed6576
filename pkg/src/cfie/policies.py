"""Type-based forward-edge CFI policies and per-call-site target sets.

Each policy is a predicate over one (call-site, function) pair. Target sets
are computed either by the naive double loop (:func:`naive_target_sets`, kept
as the reference oracle) or by :class:`TargetSetEstimator`, which buckets the
address-taken functions into equivalence classes keyed by the part of the
signature the policy looks at and resolves each distinct call-site shape once.
"""

from __future__ import annotations

import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Mapping

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .ingest import CallSiteSignature, FunctionSignature, ProgramView, SchemaError
from .types import PolicyId, Void, ifcc_projection, relaxed_width, type_equal_ifcc, type_equal_mcfi
from .validation import check_policy, check_view, resolve_n_jobs

__all__ = [
    "MAX_REGISTER_ARGS",
    "TargetMap",
    "allows_typearmor",
    "allows_ifcc",
    "allows_mcfi",
    "allows_tcfi",
    "allows",
    "PREDICATES",
    "naive_target_sets",
    "target_sets",
    "TargetSetEstimator",
]

# System V x86-64 passes the first six integer-class arguments in registers.
MAX_REGISTER_ARGS = 6


def _clamp(n):
    return min(n, MAX_REGISTER_ARGS)


# ---------------------------------------------------------------------------
# predicates


def allows_typearmor(cs: CallSiteSignature, fn: FunctionSignature) -> bool:
    if _clamp(len(fn.params)) > _clamp(len(cs.args)):
        return False
    if not isinstance(cs.expects_return, Void) and isinstance(fn.return_type, Void):
        return False
    return True


def _typed_match(cs, fn, eq):
    n = len(fn.params)
    if fn.variadic:
        if len(cs.args) < n:
            return False
    elif len(cs.args) != n:
        return False
    return all(eq(a, p) for a, p in zip(cs.args, fn.params))


def allows_ifcc(cs: CallSiteSignature, fn: FunctionSignature) -> bool:
    """Exact arity and per-position type match with pointers collapsed.

    Variadic targets match when their fixed parameters are a prefix of the
    call-site arguments. The return type is ignored.
    """
    return _typed_match(cs, fn, type_equal_ifcc)


def allows_mcfi(cs: CallSiteSignature, fn: FunctionSignature) -> bool:
    return _typed_match(cs, fn, type_equal_mcfi)


def allows_tcfi(cs: CallSiteSignature, fn: FunctionSignature) -> bool:
    n_fn = _clamp(len(fn.params))
    if _clamp(len(cs.args)) < n_fn:
        return False
    want = relaxed_width(cs.expects_return)
    if want:
        got = relaxed_width(fn.return_type)
        if got == 0 or want < got:
            return False
    for i in range(n_fn):
        if relaxed_width(cs.args[i]) < relaxed_width(fn.params[i]):
            return False
    return True


PREDICATES: Dict[PolicyId, Callable[[CallSiteSignature, FunctionSignature], bool]] = {
    PolicyId.TypeArmor: allows_typearmor,
    PolicyId.IFCC: allows_ifcc,
    PolicyId.MCFI: allows_mcfi,
    PolicyId.TCFI: allows_tcfi,
}


def allows(policy, cs: CallSiteSignature, fn: FunctionSignature) -> bool:
    return PREDICATES[check_policy(policy)](cs, fn)


# ---------------------------------------------------------------------------
# target maps


@dataclass(frozen=True)
class TargetMap:
    policy: PolicyId
    view_label: str
    entries: Mapping[str, FrozenSet[str]]

    def sizes(self) -> Dict[str, int]:
        return {cs: len(t) for cs, t in self.entries.items()}

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "view_label": self.view_label,
            "entries": {cs: sorted(self.entries[cs]) for cs in sorted(self.entries)},
        }

    def to_json(self) -> str:
        """Serialize with entries sorted by call-site id and targets ascending.

        Call-sites of the same shape share one frozenset, so each distinct set
        is rendered once.
        """
        rendered = {}
        parts = []
        for cs in sorted(self.entries):
            targets = self.entries[cs]
            text = rendered.get(id(targets))
            if text is None:
                text = json.dumps(sorted(targets))
                rendered[id(targets)] = text
            parts.append(f"  {json.dumps(cs)}: {text}")
        head = f'{{"policy": {json.dumps(self.policy.value)}, "view_label": {json.dumps(self.view_label)}, "entries": {{'
        body = ",\n".join(parts)
        return head + ("\n" + body + "\n" if parts else "") + "}}\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "TargetMap":
        try:
            return cls(
                policy=check_policy(doc["policy"]),
                view_label=doc["view_label"],
                entries={cs: frozenset(fns) for cs, fns in doc["entries"].items()},
            )
        except (KeyError, AttributeError, TypeError) as exc:
            raise SchemaError(f"malformed target map: {exc}") from None


def naive_target_sets(view: ProgramView, policy) -> TargetMap:
    """Reference double loop over every (call-site, address-taken function) pair."""
    policy = check_policy(policy)
    pred = PREDICATES[policy]
    universe = [f for f in view.functions if f.address_taken]
    entries = {
        cs.cs_id: frozenset(f.fn_id for f in universe if pred(cs, f))
        for cs in sorted(view.call_sites, key=lambda c: c.cs_id)
    }
    return TargetMap(policy, view.label, entries)


# ---------------------------------------------------------------------------
# equivalence-class resolution
#
# Each resolver exposes fn_key/cs_key projections and a resolve(cs_key) that
# returns the frozenset of fn ids allowed for every call-site with that key.


class _CountReturnResolver:
    # TypeArmor: (clamped arity, returns-void)
    def __init__(self, classes):
        self.classes = classes

    @staticmethod
    def fn_key(fn):
        return _clamp(len(fn.params)), isinstance(fn.return_type, Void)

    @staticmethod
    def cs_key(cs):
        return _clamp(len(cs.args)), not isinstance(cs.expects_return, Void)

    def resolve(self, key):
        n_args, needs_value = key
        out = set()
        for (n_params, is_void), fns in self.classes.items():
            if n_params <= n_args and not (needs_value and is_void):
                out |= fns
        return frozenset(out)


class _TypedResolver:
    # IFCC / MCFI: exact projected parameter tuple, typed prefix for variadics
    def __init__(self, classes, project):
        self.project = project
        self.exact = {}
        self.variadic = {}
        for (is_variadic, params), fns in classes.items():
            (self.variadic if is_variadic else self.exact)[params] = fns
        self.variadic_lengths = sorted({len(p) for p in self.variadic})

    def fn_key(self, fn):
        return fn.variadic, tuple(self.project(p) for p in fn.params)

    def cs_key(self, cs):
        return tuple(self.project(a) for a in cs.args)

    def resolve(self, args):
        out = set(self.exact.get(args, ()))
        for k in self.variadic_lengths:
            if k > len(args):
                break
            out |= self.variadic.get(args[:k], frozenset())
        return frozenset(out)


class _WidthResolver:
    # TCFI: (widths of the first six params, return width)
    def __init__(self, classes):
        self.classes = classes

    @staticmethod
    def fn_key(fn):
        return tuple(relaxed_width(p) for p in fn.params[:MAX_REGISTER_ARGS]), relaxed_width(fn.return_type)

    @staticmethod
    def cs_key(cs):
        return tuple(relaxed_width(a) for a in cs.args[:MAX_REGISTER_ARGS]), relaxed_width(cs.expects_return)

    def resolve(self, key):
        arg_widths, want = key
        out = set()
        for (param_widths, got), fns in self.classes.items():
            if len(param_widths) > len(arg_widths):
                continue
            if want and (got == 0 or want < got):
                continue
            if all(a >= p for a, p in zip(arg_widths, param_widths)):
                out |= fns
        return frozenset(out)


def _mcfi_projection(t):
    return t


def _make_resolver(policy, functions):
    if policy is PolicyId.TypeArmor:
        key = _CountReturnResolver.fn_key
    elif policy is PolicyId.TCFI:
        key = _WidthResolver.fn_key
    else:
        project = ifcc_projection if policy is PolicyId.IFCC else _mcfi_projection

        def key(fn):
            return fn.variadic, tuple(project(p) for p in fn.params)

    grouped = defaultdict(set)
    for fn in functions:
        grouped[key(fn)].add(fn.fn_id)
    classes = {k: frozenset(v) for k, v in grouped.items()}

    if policy is PolicyId.TypeArmor:
        return _CountReturnResolver(classes), classes
    if policy is PolicyId.TCFI:
        return _WidthResolver(classes), classes
    return _TypedResolver(classes, project), classes


class TargetSetEstimator(BaseEstimator):
    """Per-call-site target set computation for one CFI policy.

    ``fit`` learns the target universe (address-taken functions of a view,
    grouped into equivalence classes); ``predict`` maps call-sites to their
    allowed targets.

    Parameters
    ----------
    policy : str or PolicyId
        One of ``TypeArmor``, ``IFCC``, ``MCFI``, ``TCFI``.
    n_jobs : int or None
        Worker threads used to resolve distinct call-site shapes. ``None``
        reads ``CFIE_THREADS``; 0 means one per CPU. The result never
        depends on this value.

    Attributes
    ----------
    classes_ : dict
        Policy-relevant signature projection -> frozenset of fn ids.
    n_targets_ : int
        Number of address-taken functions seen in ``fit``.
    view_label_ : str
    """

    def __init__(self, policy="TypeArmor", n_jobs=None):
        self.policy = policy
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        view = check_view(X)
        self.policy_ = check_policy(self.policy)
        universe = [f for f in view.functions if f.address_taken]
        self._resolver, self.classes_ = _make_resolver(self.policy_, universe)
        self.n_targets_ = len(universe)
        self.view_label_ = view.label
        return self

    def _check_fitted(self):
        if not hasattr(self, "classes_"):
            raise NotFittedError("TargetSetEstimator is not fitted yet; call fit() first")

    def predict(self, X) -> TargetMap:
        """Target sets for the call-sites of ``X`` (a view or an iterable of call-sites)."""
        self._check_fitted()
        if isinstance(X, ProgramView):
            call_sites = X.call_sites
            label = X.label
        else:
            call_sites = tuple(X)
            label = self.view_label_
        resolver = self._resolver
        cs_keys = {cs.cs_id: resolver.cs_key(cs) for cs in call_sites}
        distinct = list(dict.fromkeys(cs_keys.values()))

        n_jobs = resolve_n_jobs(self.n_jobs)
        if n_jobs > 1 and len(distinct) > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                resolved = dict(zip(distinct, pool.map(resolver.resolve, distinct)))
        else:
            resolved = {k: resolver.resolve(k) for k in distinct}

        entries = {cs: resolved[cs_keys[cs]] for cs in sorted(cs_keys)}
        return TargetMap(self.policy_, label, entries)

    def fit_predict(self, X, y=None) -> TargetMap:
        return self.fit(X).predict(X)


def target_sets(view: ProgramView, policy, n_jobs=None) -> TargetMap:
    return TargetSetEstimator(policy=policy, n_jobs=n_jobs).fit_predict(view)
