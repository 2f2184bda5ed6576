"""CTR distributions, RelativeCTR_T / RelativeCTR_F, normalized CTR and CDF series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .ingest import InputError, MatchedProgram
from .policies import TargetMap
from .types import PolicyId

__all__ = [
    "DistributionStats",
    "RelativeReport",
    "SiteRatio",
    "PolicyMismatchError",
    "ViewMismatchError",
    "describe",
    "ctr_stats",
    "relative_ctr",
    "normalized_ctr",
    "zero_target_counts",
    "cdf_series",
]


class PolicyMismatchError(InputError):
    pass


class ViewMismatchError(InputError):
    pass


@dataclass(frozen=True)
class DistributionStats:
    """Summary of a sample. Every field but ``n`` is ``None`` when ``n == 0``."""

    n: int
    mean: Optional[float] = None
    std: Optional[float] = None
    min: Optional[float] = None
    median: Optional[float] = None
    p90: Optional[float] = None
    max: Optional[float] = None

    @property
    def total(self) -> Optional[float]:
        # plain sum over sites
        return None if self.mean is None else self.mean * self.n

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "median": self.median,
            "p90": self.p90,
            "max": self.max,
            "total": self.total,
        }


def _nearest_rank(sorted_values, q):
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def describe(values: Sequence[float]) -> DistributionStats:
    """Population mean/std and nearest-rank median/p90 of ``values``."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 0:
        return DistributionStats(0)
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / n
    return DistributionStats(
        n=n,
        mean=mean,
        std=math.sqrt(var),
        min=xs[0],
        median=_nearest_rank(xs, 0.5),
        p90=_nearest_rank(xs, 0.9),
        max=xs[-1],
    )


def ctr_stats(tm: TargetMap) -> DistributionStats:
    return describe([len(t) for t in tm.entries.values()])


def zero_target_counts(tm: TargetMap) -> int:
    return sum(1 for t in tm.entries.values() if not t)


def normalized_ctr(tm: TargetMap, total_targets: int) -> float:
    """Mean reachable targets per call-site divided by the size of the target universe."""
    if total_targets <= 0:
        raise ZeroDivisionError("total_targets must be positive")
    mean = ctr_stats(tm).mean
    return 0.0 if mean is None else mean / total_targets


@dataclass(frozen=True)
class SiteRatio:
    cs_id: str
    r_t: Optional[float]
    r_f: Optional[float]
    n_source: int
    n_binary: int
    n_common: int


@dataclass(frozen=True)
class RelativeReport:
    policy: PolicyId
    per_site: Tuple[SiteRatio, ...]
    rt_stats: DistributionStats
    rf_stats: DistributionStats
    skipped_rt: int
    skipped_rf: int

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "matched_call_sites": len(self.per_site),
            "skipped_rt": self.skipped_rt,
            "skipped_rf": self.skipped_rf,
            "rt_stats": self.rt_stats.to_dict(),
            "rf_stats": self.rf_stats.to_dict(),
            "per_site": [
                {
                    "cs_id": s.cs_id,
                    "rt": s.r_t,
                    "rf": s.r_f,
                    "source_targets": s.n_source,
                    "binary_targets": s.n_binary,
                    "common_targets": s.n_common,
                }
                for s in self.per_site
            ],
        }


def _check_map(tm, view, side):
    if tm.view_label != view.label:
        raise ViewMismatchError(f"{side} target map was computed on view {tm.view_label!r}, not {view.label!r}")
    expected = {c.cs_id for c in view.call_sites}
    if set(tm.entries) != expected:
        raise ViewMismatchError(f"{side} target map call-sites do not match the {side} view")


def relative_ctr(mp: MatchedProgram, src: TargetMap, bin: TargetMap) -> RelativeReport:
    """Per matched source call-site, compare the ground-truth and binary target sets.

    Both sets are expressed over source fn ids; targets whose function has no
    counterpart in the other view are dropped. The binary set of a source
    site is the union over every binary site sharing its link key.
    """
    if src.policy != bin.policy:
        raise PolicyMismatchError(f"policy mismatch: {src.policy} vs {bin.policy}")
    _check_map(src, mp.source, "source")
    _check_map(bin, mp.binary, "binary")

    paired_src = {s for s, _ in mp.fn_pairs}
    to_src = mp.binary_to_source_fn

    sites = []
    rts, rfs = [], []
    skipped_rt = skipped_rf = 0
    for cs_id, bin_sites in mp.cs_map.items():
        if not bin_sites:
            continue
        ct = src.entries[cs_id] & paired_src
        ct_bin = set()
        for b in bin_sites:
            ct_bin.update(to_src[f] for f in bin.entries[b] if f in to_src)
        common = len(ct & ct_bin)
        r_t = r_f = None
        if ct:
            r_t = common / len(ct)
            rts.append(r_t)
        else:
            skipped_rt += 1
        if ct_bin:
            r_f = len(ct_bin - ct) / len(ct_bin)
            rfs.append(r_f)
        else:
            skipped_rf += 1
        sites.append(SiteRatio(cs_id, r_t, r_f, len(ct), len(ct_bin), common))

    return RelativeReport(src.policy, tuple(sites), describe(rts), describe(rfs), skipped_rt, skipped_rf)


def cdf_series(values: Sequence[float]) -> List[Tuple[float, float]]:
    """Empirical CDF: one ``(value, fraction of samples <= value)`` per distinct value."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    out = []
    for i, x in enumerate(xs):
        if i + 1 < n and xs[i + 1] == x:
            continue
        out.append((x, (i + 1) / n))
    return out
