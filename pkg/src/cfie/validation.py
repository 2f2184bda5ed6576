"""Input validation helpers shared by estimators, metrics and the CLI."""

from __future__ import annotations

import math
import os

from .ingest import MatchedProgram, ProgramView, SchemaError, _check_unique
from .types import PolicyId


def check_view(view, name="view") -> ProgramView:
    if not isinstance(view, ProgramView):
        raise TypeError(f"{name} must be a ProgramView, got {type(view).__name__}")
    _check_unique(view)
    return view


def check_matched(mp, name="matched program") -> MatchedProgram:
    if not isinstance(mp, MatchedProgram):
        raise TypeError(f"{name} must be a MatchedProgram, got {type(mp).__name__}")
    return mp


def check_policy(policy) -> PolicyId:
    try:
        return PolicyId.parse(policy)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def check_policies(policies):
    if isinstance(policies, str):
        policies = [p for p in policies.split(",") if p.strip()]
    out = []
    for p in policies:
        pid = check_policy(p)
        if pid not in out:
            out.append(pid)
    if not out:
        raise SchemaError("policy list must not be empty")
    return out


def check_probability(value, name) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number, got {value!r}") from None
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def resolve_n_jobs(n_jobs=None) -> int:
    """Number of worker threads; ``None`` reads ``CFIE_THREADS`` (0 = auto)."""
    if n_jobs is None:
        raw = os.environ.get("CFIE_THREADS", "1").strip() or "1"
        try:
            n_jobs = int(raw)
        except ValueError:
            raise ValueError(f"CFIE_THREADS must be an integer, got {raw!r}") from None
    if n_jobs < 0:
        raise ValueError(f"thread count must be >= 0, got {n_jobs}")
    if n_jobs == 0:
        n_jobs = os.cpu_count() or 1
    return n_jobs
