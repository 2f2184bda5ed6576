"""``cfie`` command-line front end.

Exit codes: 0 success, 2 input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .accuracy import all_tables
from .ingest import InputError, link_views, load_view, serialize_view
from .metrics import cdf_series, ctr_stats, normalized_ctr, relative_ctr, zero_target_counts
from .perturb import PerturbConfig, perturb_view
from .policies import target_sets
from .types import PolicyId, TypeGrammarError
from .validation import check_policies, resolve_n_jobs

log = logging.getLogger("cfie")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVARIANT = 3

CTR_HEADER = ["benchmark", "view", "policy", "mean", "std", "min", "med", "90thp", "max", "n"]
RELATIVE_HEADER = ["benchmark", "policy", "metric", "mean", "std", "min", "med", "90thp", "max", "n", "skipped"]
CDF_HEADER = ["value", "cumulative_fraction"]

# warn when more than this fraction of source entities found no counterpart
HEAVY_UNMATCHED = 0.5


class InvariantError(RuntimeError):
    pass


class _InputProblem(Exception):
    def __init__(self, path, exc):
        self.path = path
        self.exc = exc
        super().__init__(str(exc))

    def diagnostic(self):
        line = getattr(self.exc, "line", None)
        where = f"{self.path}:{line}" if line else str(self.path)
        return f"{where}: {self.exc}"


def _fmt(x):
    return "" if x is None else f"{x:.4f}"


def _stats_row(stats):
    return [_fmt(stats.mean), _fmt(stats.std), _fmt(stats.min), _fmt(stats.median),
            _fmt(stats.p90), _fmt(stats.max), stats.n]


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out, command, config, inputs):
    outputs = sorted(p.name for p in Path(out).iterdir() if p.name != "manifest.json")
    _write_json(Path(out) / "manifest.json", {
        "tool": "cfie",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": outputs,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    })


def _load(path, lenient):
    try:
        return load_view(path, strict=not lenient)
    except (InputError, TypeGrammarError, OSError) as exc:
        raise _InputProblem(path, exc) from None


def _benchmark_name(args, path):
    return args.benchmark or Path(path).stem


def _policies(args):
    raw = args.policies
    if raw.strip().lower() == "all":
        return list(PolicyId)
    try:
        return check_policies(raw)
    except InputError as exc:
        raise _InputProblem("--policies", exc) from None


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args):
    view = _load(args.view, args.lenient)
    policies = _policies(args)
    out = _outdir(args.out)
    bench = _benchmark_name(args, args.view)
    total = sum(1 for f in view.functions if f.address_taken)

    summary = {"benchmark": bench, "view_label": view.label, "address_taken": total, "policies": {}}
    rows = []
    for policy in policies:
        tm = target_sets(view, policy, n_jobs=args.threads)
        (out / f"targets_{policy.value}.json").write_text(tm.to_json(), encoding="utf-8")
        stats = ctr_stats(tm)
        summary["policies"][policy.value] = {
            "ctr": stats.to_dict(),
            "zero_target_sites": zero_target_counts(tm),
            "normalized_ctr": normalized_ctr(tm, total) if total else None,
        }
        rows.append([bench, view.label, policy.value] + _stats_row(stats))
    _write_json(out / "ctr_stats.json", summary)
    if args.csv:
        _write_csv(out / "ctr.csv", CTR_HEADER, rows)
    _write_manifest(out, "analyze", {"policies": [p.value for p in policies], "csv": args.csv,
                                     "lenient": args.lenient, "benchmark": bench}, [args.view])
    return EXIT_OK


def _check_report(report, mp):
    matched = len(mp.matched_call_sites)
    if report.rt_stats.n + report.skipped_rt != matched or report.rf_stats.n + report.skipped_rf != matched:
        raise InvariantError(f"{report.policy}: ratio counts do not add up to {matched} matched call-sites")
    for s in report.per_site:
        for v in (s.r_t, s.r_f):
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvariantError(f"{report.policy}: ratio {v} out of range at {s.cs_id}")


def _warn_unmatched(mp):
    for kind, total, counts in (("functions", len(mp.source.functions), mp.unmatched_fns),
                                ("call-sites", len(mp.source.call_sites), mp.unmatched_css)):
        if total and counts.source / total > HEAVY_UNMATCHED:
            log.warning("%d of %d source %s have no binary counterpart", counts.source, total, kind)


def cmd_compare(args):
    source = _load(args.source, args.lenient)
    binary = _load(args.binary, args.lenient)
    policies = _policies(args)
    out = _outdir(args.out)
    bench = _benchmark_name(args, args.source)

    mp = link_views(source, binary)
    _warn_unmatched(mp)
    unmatched = {
        "function_pairs": len(mp.fn_pairs),
        "matched_call_sites": len(mp.matched_call_sites),
        "unmatched_functions": {"source": mp.unmatched_fns.source, "binary": mp.unmatched_fns.binary},
        "unmatched_call_sites": {"source": mp.unmatched_css.source, "binary": mp.unmatched_css.binary},
    }
    _write_json(out / "unmatched.json", unmatched)

    views = (("source", source), ("binary", binary))
    totals = {side: sum(1 for f in v.functions if f.address_taken) for side, v in views}
    combined = {"benchmark": bench, "unmatched": unmatched, "policies": {}}
    ctr_rows, rel_rows, norm_rows, zero_rows = [], [], [], []
    for policy in policies:
        maps = {side: target_sets(v, policy, n_jobs=args.threads) for side, v in views}
        report = relative_ctr(mp, maps["source"], maps["binary"])
        _check_report(report, mp)
        doc = report.to_dict()
        combined["policies"][policy.value] = doc
        _write_json(out / f"relative_{policy.value}.json", doc)

        for metric, stats, skipped in (("rt", report.rt_stats, report.skipped_rt),
                                       ("rf", report.rf_stats, report.skipped_rf)):
            rel_rows.append([bench, policy.value, metric] + _stats_row(stats) + [skipped])
        for side, v in views:
            tm = maps[side]
            ctr_rows.append([bench, v.label, policy.value] + _stats_row(ctr_stats(tm)))
            ratio = normalized_ctr(tm, totals[side]) if totals[side] else None
            norm_rows.append([bench, policy.value, v.label, _fmt(ratio)])
            zero_rows.append([bench, policy.value, v.label, zero_target_counts(tm), len(tm.entries)])

    _write_json(out / "report.json", combined)
    _write_csv(out / "relative_ctr.csv", RELATIVE_HEADER, rel_rows)
    _write_csv(out / "ctr.csv", CTR_HEADER, ctr_rows)
    _write_csv(out / "normalized_ctr.csv", ["benchmark", "policy", "view", "ratio"], norm_rows)
    _write_csv(out / "zero_targets.csv", ["benchmark", "policy", "view", "zero_target_sites", "call_sites"],
               zero_rows)
    _write_manifest(out, "compare", {"policies": [p.value for p in policies], "lenient": args.lenient,
                                     "benchmark": bench}, [args.source, args.binary])
    return EXIT_OK


def cmd_accuracy(args):
    source = _load(args.source, args.lenient)
    binary = _load(args.binary, args.lenient)
    out = _outdir(args.out)
    mp = link_views(source, binary)
    _warn_unmatched(mp)
    tables = all_tables(mp)
    for t in tables:
        if t.total != sum(a + b for a, b in t.rows.values()):
            raise InvariantError(f"{t.dimension}/{t.side}: bucket counts do not add up")
        _write_csv(out / f"accuracy_{t.dimension}_{t.side}.csv", ["bucket", "true", "false"], t.ordered_rows())
    _write_json(out / "accuracy.json", {"tables": [t.to_dict() for t in tables]})
    _write_manifest(out, "accuracy", {"lenient": args.lenient}, [args.source, args.binary])
    return EXIT_OK


_RATE_FLAGS = ("arity_err", "type_err", "return_voidness_err", "drop_fn", "drop_cs", "split_cs")


def cmd_perturb(args):
    view = _load(args.view, args.lenient)
    settings = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                settings = json.load(fh)
            if not isinstance(settings, dict):
                raise ValueError("config must be a JSON object")
        except (OSError, ValueError) as exc:
            raise _InputProblem(args.config, exc) from None
    for name in _RATE_FLAGS:
        value = getattr(args, name)
        if value is not None:
            settings[name] = value
    if args.seed is not None:
        settings["seed"] = args.seed
    try:
        cfg = PerturbConfig.from_dict(settings)
    except (TypeError, ValueError) as exc:
        raise _InputProblem(args.config or "flags", exc) from None
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(serialize_view(perturb_view(view, cfg)))
    return EXIT_OK


def _report_values(doc, metric):
    """Yield (policy, values) from a combined report or a single-policy report."""
    if isinstance(doc, dict) and isinstance(doc.get("policies"), dict):
        items = list(doc["policies"].items())
    elif isinstance(doc, dict) and "per_site" in doc:
        items = [(doc.get("policy", "policy"), doc)]
    else:
        raise ValueError("not a relative report")
    out = []
    for name, rep in items:
        sites = rep.get("per_site") if isinstance(rep, dict) else None
        if not isinstance(sites, list):
            raise ValueError(f"report for {name} has no per_site list")
        values = []
        for s in sites:
            if not isinstance(s, dict) or metric not in s:
                raise ValueError(f"metric {metric!r} absent from report for {name}")
            if s[metric] is not None:
                values.append(s[metric])
        out.append((name, values))
    return out


def cmd_cdf(args):
    try:
        with open(args.report, encoding="utf-8") as fh:
            doc = json.load(fh)
        series = _report_values(doc, args.metric)
    except (OSError, ValueError) as exc:
        raise _InputProblem(args.report, exc) from None
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    for name, values in series:
        target = out if len(series) == 1 else out.with_name(f"{out.stem}_{name}{out.suffix}")
        _write_csv(target, CDF_HEADER, [(repr(v), repr(f)) for v, f in cdf_series(values)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="cfie", description="Evaluate type-based CFI policies on source and binary views.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, csv_flag=True):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--lenient", action="store_true", help="warn about unknown fields instead of failing")
        sp.add_argument("--benchmark", help="benchmark name used in CSV rows (default: input file stem)")
        if csv_flag:
            sp.add_argument("--csv", action="store_true", help="also write CSV tables")

    a = sub.add_parser("analyze", help="target sets and CTR statistics for one view")
    a.add_argument("--view", required=True)
    a.add_argument("--policies", default="all", help="comma-separated list or 'all'")
    common(a)
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compare", help="RelativeCTR and CTR tables for a source/binary pair")
    c.add_argument("--source", required=True)
    c.add_argument("--binary", required=True)
    c.add_argument("--policies", default="all", help="comma-separated list or 'all'")
    common(c)
    c.set_defaults(func=cmd_compare)

    acc = sub.add_parser("accuracy", help="signature recovery accuracy tables")
    acc.add_argument("--source", required=True)
    acc.add_argument("--binary", required=True)
    common(acc, csv_flag=False)
    acc.set_defaults(func=cmd_accuracy)

    pt = sub.add_parser("perturb", help="derive a degraded view from a ground-truth view")
    pt.add_argument("--view", required=True)
    pt.add_argument("--config", help="JSON file with perturbation settings; flags override it")
    pt.add_argument("--seed", type=int)
    for name in _RATE_FLAGS:
        pt.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    pt.add_argument("--out", required=True, help="output view file")
    pt.add_argument("--lenient", action="store_true")
    pt.set_defaults(func=cmd_perturb)

    cd = sub.add_parser("cdf", help="cumulative distribution of per-site ratios")
    cd.add_argument("--report", required=True)
    cd.add_argument("--metric", required=True, choices=("rt", "rf"))
    cd.add_argument("--out", required=True)
    cd.set_defaults(func=cmd_cdf)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="cfie: %(levelname)s: %(message)s")
    try:
        args.threads = resolve_n_jobs()
    except ValueError as exc:
        print(f"cfie: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except _InputProblem as exc:
        print(f"cfie: error: {exc.diagnostic()}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantError, AssertionError) as exc:
        print(f"cfie: internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
