"""Random program views for tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from .ingest import CallSiteSignature, FunctionSignature, ProgramView
from .types import Aggregate, Function, Pointer, Scalar, Unknown, Void

__all__ = ["make_random_view", "TYPE_POOL"]

_TAGS = ("conn", "evt", "buf", "node", "ctx")

TYPE_POOL = (
    (Scalar("int", 32), 8),
    (Scalar("int", 64), 6),
    (Scalar("int", 8), 2),
    (Scalar("int", 16), 1),
    (Scalar("float", 64), 1),
    (Scalar("bool", 8), 1),
    (Scalar("enum", 32), 1),
    (Pointer(Void()), 4),
    (Pointer(Scalar("int", 8)), 4),
    (Pointer(Scalar("int", 32)), 2),
    (Pointer(Pointer(Scalar("int", 8))), 1),
    (Function(), 1),
    (Unknown(), 1),
) + tuple((Pointer(Aggregate(t)), 2) for t in _TAGS)

_RETURNS = ((Void(), 6), (Scalar("int", 32), 6), (Scalar("int", 64), 3), (Pointer(Void()), 2),
            (Pointer(Aggregate("conn")), 1), (Scalar("bool", 8), 1))


def _table(pool):
    items = [t for t, _ in pool]
    w = np.array([w for _, w in pool], dtype=float)
    return items, w / w.sum()


_ARG_TYPES, _ARG_P = _table(TYPE_POOL)
_RET_TYPES, _RET_P = _table(_RETURNS)
_ARITY_P = np.array([6, 10, 10, 8, 5, 3, 2, 1, 1], dtype=float)
_ARITY_P /= _ARITY_P.sum()


def make_random_view(n_functions=100, n_call_sites=50, seed=0, label="source",
                     address_taken_rate=0.7, variadic_rate=0.05, shaped_rate=0.6) -> ProgramView:
    """Draw a random, valid view.

    A fraction ``shaped_rate`` of call-sites copies the signature of a random
    function (so most sites have targets under the strict policies); the rest
    are drawn independently.
    """
    rng = np.random.default_rng(seed)

    def types(n):
        return tuple(_ARG_TYPES[i] for i in rng.choice(len(_ARG_TYPES), size=n, p=_ARG_P))

    def ret():
        return _RET_TYPES[rng.choice(len(_RET_TYPES), p=_RET_P)]

    functions = []
    for i in range(n_functions):
        n = int(rng.choice(len(_ARITY_P), p=_ARITY_P))
        functions.append(FunctionSignature(
            fn_id=f"f{i}",
            link_key=f"fn_{i}",
            return_type=ret(),
            params=types(n),
            variadic=bool(rng.random() < variadic_rate),
            address_taken=bool(rng.random() < address_taken_rate),
        ))

    call_sites = []
    for i in range(n_call_sites):
        if functions and rng.random() < shaped_rate:
            f = functions[int(rng.integers(len(functions)))]
            args = f.params + (types(int(rng.integers(1, 3))) if f.variadic else ())
            expects = f.return_type if rng.random() < 0.7 else Void()
        else:
            args = types(int(rng.choice(len(_ARITY_P), p=_ARITY_P)))
            expects = ret()
        call_sites.append(CallSiteSignature(f"c{i}", f"site.c:{i + 1}:3", expects, args))

    return ProgramView(label, tuple(functions), tuple(call_sites))
