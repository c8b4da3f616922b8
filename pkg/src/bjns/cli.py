"""Command-line front end: ``bjns fit|simulate|screen|score``.

Exit codes: 0 on success, 2 for bad input, 3 for numeric failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .gibbs import ChainConfig, NumericError, PriorConfig, ShrinkageHyper
from .inference import fit, kappa_trace, stability
from .model import ModelSpec, SpecError, edge_index
from .screening import DEFAULT_ALPHA, PAIRWISE_CHAIN, iterative_reduce
from .stats import CacheConsistencyError, compute_group_stats

log = logging.getLogger("bjns")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DESIGNS = ("ar2_chain_k4", "random_shared_k4", "block_k6")


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def fmt(x):
    """Full-precision scientific notation, stable across runs."""
    return f"{float(x):.17e}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _label(component):
    return "-".join(map(str, component))


# ---------------------------------------------------------------------------
# input


def read_group_csv(path):
    """Read one group's data: a header row, then one numeric row per observation."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or any(h == "" for h in header):
            raise InputError(f"{path}:1: header has empty column names")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line_no}: expected {len(header)} fields, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise InputError(f"{path}:{line_no}: non-numeric value {bad!r}") from None
            if not all(np.isfinite(vals)):
                raise InputError(f"{path}:{line_no}: non-finite value")
            rows.append(vals)
    if len(rows) < 2:
        raise InputError(f"{path}: need at least 2 observations, found {len(rows)}")
    return header, np.array(rows)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_manifest(path):
    """Groups in manifest order; relative paths resolve against the manifest."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: manifest not found")
    try:
        doc = json.loads(path.read_text())
        groups = doc["groups"]
        entries = [(str(g["name"]), path.parent / g["path"]) for g in groups]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed manifest ({exc})") from None
    if not entries:
        raise InputError(f"{path}: manifest lists no groups")
    return entries


def load_groups(manifest, center=True):
    entries = read_manifest(manifest)
    data, header0 = [], None
    for name, p in entries:
        header, X = read_group_csv(p)
        if header0 is None:
            header0 = header
        elif header != header0:
            raise InputError(f"group {name!r}: columns differ from the first group "
                             f"({len(header)} vs {len(header0)} variables)")
        data.append(X)
    try:
        stats = compute_group_stats(data, center=center)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return [n for n, _ in entries], header0, stats


def load_spec(arg, K):
    if arg in (None, "full"):
        try:
            return ModelSpec.full(K)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    path = Path(arg)
    if not path.is_file():
        raise InputError(f"{path}: spec file not found")
    try:
        spec = ModelSpec.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, SpecError, ValueError) as exc:
        raise InputError(f"{path}: invalid spec ({exc})") from None
    if spec.K != K:
        raise InputError(f"{path}: spec has K={spec.K} but the manifest lists {K} groups")
    return spec


def _configs(args, stats):
    sampler = {"grid": "grid", "point": "point_mass"}[args.diag_sampler]
    try:
        cfg = ChainConfig(burnin=args.burnin, samples=args.samples, seed=args.seed, diag_sampler=sampler)
        prior = PriorConfig.default_for(stats.p, stats.n, mode=args.prior_odds)
        hyper = ShrinkageHyper(r=args.shape, s=args.rate)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return cfg, prior, hyper


# ---------------------------------------------------------------------------
# output


def write_fit_outputs(out, result, trace, names, truth=None, full_trace=False):
    """fit.json, trace.csv, edges_by_component.csv, kappa_or_stability.csv."""
    out = Path(out)
    doc = result.to_dict()
    doc["group_names"] = list(names)
    _write_json(out / "fit.json", doc)

    iu, ju = edge_index(result.p)
    spec = result.spec
    rows = []
    for s in range(trace.n_samples):
        comp = trace.components[s]
        idx = range(comp.size) if full_trace else np.flatnonzero(comp >= 0)
        for e in idx:
            c = int(comp[e])
            rows.append([s, int(iu[e]) + 1, int(ju[e]) + 1, _label(spec.components[c]) if c >= 0 else "0",
                         fmt(trace.values[s, e])])
    _write_csv(out / "trace.csv", ["sample", "i", "j", "component", "value"], rows)

    rows = []
    for l, subset in enumerate(spec.components):
        for e in np.flatnonzero(result.component == l):
            lo, hi = result.ci[e]
            rows.append([_label(subset), int(iu[e]) + 1, int(ju[e]) + 1, fmt(result.estimate[e]),
                         fmt(result.frequency[e]), "" if np.isnan(lo) else fmt(lo), "" if np.isnan(hi) else fmt(hi)])
    _write_csv(out / "edges_by_component.csv",
               ["component", "i", "j", "estimate", "frequency", "ci_low", "ci_high"], rows)

    if truth is not None:
        kap = kappa_trace(trace, truth)
        _write_csv(out / "kappa_or_stability.csv", ["sample", "kappa"],
                   [[s, fmt(v)] for s, v in enumerate(kap)])
    else:
        first, second = stability(trace)
        _write_csv(out / "kappa_or_stability.csv", ["i", "j", "stability_first_half", "stability_second_half"],
                   [[int(iu[e]) + 1, int(ju[e]) + 1, fmt(first[e]), fmt(second[e])] for e in range(first.size)])


def score_table(result, truth):
    """Rows ``(target, MC%, SP%, SE%)`` for every group and component."""
    if result.p != truth.p or result.spec.K != truth.K:
        raise InputError(f"fit (p={result.p}, K={result.spec.K}) does not match truth "
                         f"(p={truth.p}, K={truth.K})")
    rows = []
    for target in synthetic.score_targets(result.spec, truth):
        m = synthetic.score(result.component, result.spec, truth, target)
        kind, what = target
        name = f"Omega{what}" if kind == "omega" else f"Psi{_label(what)}"
        rows.append([name, fmt(100 * m.MCC), fmt(100 * m.SP), fmt(100 * m.SE)])
    return rows


def _load_truth(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: truth file not found")
    try:
        return synthetic.GroundTruth.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid truth file ({exc})") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args):
    names, _, stats = load_groups(args.manifest, center=not args.no_center)
    spec = load_spec(args.spec, stats.K)
    cfg, prior, hyper = _configs(args, stats)
    truth = _load_truth(args.truth) if args.truth else None
    if truth is not None and (truth.p != stats.p or truth.K != stats.K):
        raise InputError("truth dimensions do not match the data")
    result, trace = fit(stats, spec, cfg, hyper, prior)
    out = _outdir(args.out)
    write_fit_outputs(out, result, trace, names, truth, args.full_trace)
    log.info("fit: %d selected edges written to %s", int((result.component >= 0).sum()), out)
    return EXIT_OK


def cmd_screen(args):
    names, _, stats = load_groups(args.manifest, center=not args.no_center)
    cfg, prior, hyper = _configs(args, stats)
    pcfg = ChainConfig(burnin=args.pairwise_burnin, samples=args.pairwise_samples, seed=args.seed,
                       diag_sampler=cfg.diag_sampler)
    start = load_spec(args.spec, stats.K) if args.spec else None
    outcome = iterative_reduce(stats, cfg, args.max_rounds, hyper, prior, args.jobs, pcfg,
                               args.alpha, args.rule, start_spec=start)
    out = _outdir(args.out)
    _write_json(out / "screen_report.json", outcome.report.to_dict())
    (out / "barplot.csv").write_text(outcome.report.barplot_csv())
    _write_json(out / "final_spec.json", outcome.spec.to_dict())
    truth = _load_truth(args.truth) if args.truth else None
    write_fit_outputs(out, outcome.result, outcome.trace, names, truth, args.full_trace)
    return EXIT_OK


def cmd_simulate(args):
    if args.design not in DESIGNS:
        raise InputError(f"unknown design {args.design!r}; choose from {', '.join(DESIGNS)}")
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    try:
        if args.design == "ar2_chain_k4":
            truth = synthetic.gen_ar2_chain_k4(args.p, rng)
        elif args.design == "random_shared_k4":
            truth = synthetic.gen_random_shared(args.p, args.sparsity, args.shared_fraction, 4, rng)
        else:
            truth = synthetic.gen_block_k6(args.p, rng)
        data = synthetic.sample_groups(truth, args.n, rng)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _outdir(args.out)
    header = [f"V{j + 1}" for j in range(truth.p)]
    groups = []
    for k, X in enumerate(data, start=1):
        fname = f"group{k}.csv"
        _write_csv(out / fname, header, [[fmt(x) for x in row] for row in X])
        groups.append({"name": f"group{k}", "path": fname})
    _write_json(out / "manifest.json", {"groups": groups})
    _write_json(out / "truth.json", truth.to_dict())
    iu, ju = edge_index(truth.p)
    rows = [[_label(truth.spec.components[c]), int(iu[e]) + 1, int(ju[e]) + 1, fmt(truth.theta.value[e])]
            for e, c in enumerate(truth.theta.component) if c >= 0]
    rows.sort(key=lambda r: (truth.spec.index(tuple(map(int, r[0].split("-")))), r[1], r[2]))
    _write_csv(out / "truth_edges.csv", ["component", "i", "j", "value"], rows)
    return EXIT_OK


def cmd_score(args):
    from .inference import FitResult

    path = Path(args.fit)
    if not path.is_file():
        raise InputError(f"{path}: fit file not found")
    try:
        result = FitResult.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid fit file ({exc})") from None
    truth = _load_truth(args.truth)
    rows = score_table(result, truth)
    out = _outdir(args.out)
    _write_csv(out / "scores.csv", ["target", "MC%", "SP%", "SE%"], rows)
    for r in rows:
        print(f"{r[0]:>12s}  MC {float(r[1]):7.2f}  SP {float(r[2]):7.2f}  SE {float(r[3]):7.2f}")
    return EXIT_OK


def _outdir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--seed", type=int, required=True, help="master random seed (required)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")


def _add_chain(p, spec_default="full"):
    p.add_argument("--manifest", required=True, help='group manifest JSON {"groups": [{"name", "path"}]}')
    p.add_argument("--spec", default=spec_default, help="component spec JSON file, or 'full'")
    p.add_argument("--burnin", type=int, default=2000)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--prior-odds", choices=("literal", "corrected"), default="literal")
    p.add_argument("--diag-sampler", choices=("grid", "point"), default="point")
    p.add_argument("--shape", type=float, default=1e-2, help="gamma hyperprior shape r")
    p.add_argument("--rate", type=float, default=1e-6, help="gamma hyperprior rate s")
    p.add_argument("--no-center", action="store_true", help="use raw second moments (data already centered)")
    p.add_argument("--truth", help="truth JSON; when given, a kappa trace replaces the stability table")
    p.add_argument("--full-trace", action="store_true", help="write every edge of every draw to trace.csv")


def build_parser():
    ap = argparse.ArgumentParser(prog="bjns", description="Joint sparse graphical models via Gibbs sampling.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one decomposition")
    _add_common(p)
    _add_chain(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("screen", help="pairwise screening, pruning and a final fit")
    _add_common(p)
    _add_chain(p, spec_default=None)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="relative edge-count threshold")
    p.add_argument("--rule", choices=("relative", "kmeans"), default="relative")
    p.add_argument("--max-rounds", type=int, default=3)
    p.add_argument("--pairwise-burnin", type=int, default=PAIRWISE_CHAIN.burnin)
    p.add_argument("--pairwise-samples", type=int, default=PAIRWISE_CHAIN.samples)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("simulate", help="generate a synthetic dataset with known truth")
    _add_common(p)
    p.add_argument("--design", required=True, help=f"one of {', '.join(DESIGNS)}")
    p.add_argument("--p", type=int, default=40)
    p.add_argument("--n", type=int, default=200, help="observations per group")
    p.add_argument("--sparsity", type=float, default=0.95, help="random_shared_k4 only")
    p.add_argument("--shared-fraction", type=float, default=0.5, help="random_shared_k4 only")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="MC%%/SP%%/SE%% table of a fit against truth")
    _add_common(p)
    p.add_argument("--fit", required=True, help="fit.json")
    p.add_argument("--truth", required=True, help="truth.json")
    p.set_defaults(func=cmd_score)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("bjns: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"bjns: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, CacheConsistencyError, FloatingPointError) as exc:
        print(f"bjns: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
