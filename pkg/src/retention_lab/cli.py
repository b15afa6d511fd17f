"""Command-line front end.

Exit codes:
  0  success
  1  other error
  2  bad command-line usage
  3  a referenced file does not exist
  4  a file or config does not match its expected format
  5  feature catalog version mismatch between artifacts
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, config as config_mod
from .cachesim import simulate
from .corpus import CorpusSpec, build_workload, corpus_params
from .energymodel import compute_energy
from .features import CatalogMismatchError
from .learn import (LearnError, cross_validate, iterative_elimination, model_from_json, model_to_json,
                    train)
from .policy import (MODES, SCART, PolicyError, PolicyResult, build_dataset, dataset_from_csv,
                     dataset_to_csv, rows_to_dataset, run_policy, savings_report)
from .trace import TraceParseError, load_trace, save_trace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_CATALOG = 5


class CliError(Exception):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _read(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}", EXIT_MISSING)
    return p.read_text(encoding="utf-8")


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _load_json(path):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: not valid JSON ({e.msg})", EXIT_FORMAT) from None


def _workloads(paths):
    out = []
    for p in paths:
        if not Path(p).is_file():
            raise CliError(f"no such file: {p}", EXIT_MISSING)
        out.append(load_trace(p))
    return out


def _trace_paths(args, cfg):
    paths = list(args.traces or [])
    if getattr(args, "manifest", None):
        base = Path(args.manifest).parent
        paths += [str(base / ln.strip()) for ln in _read(args.manifest).splitlines()
                  if ln.strip() and not ln.startswith("#")]
    if not paths:
        paths = list(cfg.workloads)
    if not paths:
        raise CliError("no traces given (positional paths, --manifest, or [experiment] workloads)")
    return paths


# -- commands ---------------------------------------------------------------------

def cmd_gen(args, cfg):
    seed = cfg.effective_seed(args.seed)
    spec = CorpusSpec(n_workloads=args.count, seed=seed, phase_instructions=args.phase_instructions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for entry in corpus_params(spec):
        w = build_workload(*entry)
        save_trace(w, out / f"{w.name}.trace")
        names.append(f"{w.name}.trace")
    (out / "manifest.txt").write_text(
        f"# retention-lab corpus version={__version__} seed={seed}\n" + "\n".join(names) + "\n")
    return EXIT_OK


def cmd_simulate(args, cfg):
    (w,) = _workloads([args.trace])
    prof = cfg.profile(args.profile or cfg.base)
    prof.validate_physical()
    pc = cfg.policy()
    stats = simulate(w, pc.geometry, prof, pc.monitor, pc.timing, pc.l2_geometry)
    doc = {"version": __version__, "workload": w.name, "profile": prof.name,
           "stats": stats.to_dict(), "energy": compute_energy(stats, prof, pc.timing).to_dict()}
    _write(args.out, _json(doc))
    return EXIT_OK


def cmd_label(args, cfg):
    pc = cfg.policy()
    rows = build_dataset(_workloads(_trace_paths(args, cfg)), pc, args.jobs)
    _write(args.out, dataset_to_csv(rows, pc))
    return EXIT_OK


def _dataset(args, cfg):
    pc = cfg.policy(args.objective)
    try:
        rows = dataset_from_csv(_read(args.dataset), pc)
    except PolicyError as e:
        raise CliError(f"{args.dataset}: {e}", EXIT_FORMAT) from None
    return rows_to_dataset(rows, pc.objective, pc), pc


def _selected(spec, catalog):
    if not spec:
        return None
    try:
        return [catalog.index(n.strip()) for n in spec.split(",") if n.strip()]
    except ValueError as e:
        raise CliError(f"unknown feature in --features: {e}", EXIT_FORMAT) from None


def cmd_train(args, cfg):
    ds, pc = _dataset(args, cfg)
    model = train(ds, args.k or cfg.k, _selected(args.features, pc.catalog))
    _write(args.out, model_to_json(model))
    return EXIT_OK


def cmd_xval(args, cfg):
    ds, pc = _dataset(args, cfg)
    seed = cfg.effective_seed(args.seed)
    rep = cross_validate(ds, args.folds, seed, args.k or cfg.k, _selected(args.features, pc.catalog))
    doc = {"version": __version__, "catalog_version": pc.catalog.version, "objective": pc.objective,
           **rep.to_dict(include_timing=args.timing)}
    _write(args.out, _json(doc))
    return EXIT_OK


def cmd_select_features(args, cfg):
    ds, pc = _dataset(args, cfg)
    seed = cfg.effective_seed(args.seed)
    res = iterative_elimination(ds, seed, args.folds, args.k or cfg.k, args.repeats)
    names = pc.catalog.names
    doc = {"version": __version__, "catalog_version": pc.catalog.version, "objective": pc.objective,
           "seed": seed, "selected": [names[i] for i in res.selected],
           "curve": [{"n_features": n, "f_score": f, "features": [names[i] for i in fs]}
                     for n, f, _, fs in res.curve]}
    if args.timing:
        doc["timing"] = {"prediction_ns": {str(n): t for n, _, t, _ in res.curve}}
    _write(args.out, _json(doc))
    return EXIT_OK


def cmd_policy(args, cfg):
    pc = cfg.policy(args.objective)
    model = None
    if args.mode == SCART:
        if not args.model:
            raise CliError("--mode scart needs --model")
        try:
            model = model_from_json(_read(args.model), pc.catalog)
        except (LearnError, json.JSONDecodeError, KeyError) as e:
            raise CliError(f"{args.model}: not a usable model file ({e})", EXIT_FORMAT) from None
    profile = cfg.profile(args.profile) if args.profile else None
    results = [run_policy(w, args.mode, pc, model, profile, args.jobs)
               for w in _workloads(_trace_paths(args, cfg))]
    doc = {"version": __version__, "catalog_version": pc.catalog.version, "mode": args.mode,
           "objective": pc.objective, "results": [r.to_dict() for r in results]}
    _write(args.out, _json(doc))
    return EXIT_OK


def _results(path):
    doc = _load_json(path)
    if not isinstance(doc, dict) or "results" not in doc:
        raise CliError(f"{path}: not a policy result file", EXIT_FORMAT)
    try:
        return [PolicyResult.from_dict(r) for r in doc["results"]]
    except (KeyError, TypeError) as e:
        raise CliError(f"{path}: malformed result entry ({e})", EXIT_FORMAT) from None


def cmd_compare(args, cfg):
    report = savings_report(_results(args.results), _results(args.baseline))
    _write(args.out, report.to_csv())
    return EXIT_OK


def cmd_config(args, cfg):
    _write(args.out, config_mod.dumps(cfg))
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="overrides the config and $RETENTION_LAB_SEED")
    common.add_argument("--out", "-o", help="output file (default: stdout)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for simulations")

    p = argparse.ArgumentParser(
        prog="retention-lab",
        description="Retention-time selection for STT-RAM L1 data caches.",
        epilog="exit codes: 0 ok, 1 error, 2 usage, 3 missing file, "
               "4 format/schema mismatch, 5 feature catalog mismatch",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"retention-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="write the synthetic corpus as trace files")
    g.add_argument("--count", type=int, default=40)
    g.add_argument("--phase-instructions", type=int, default=CorpusSpec().phase_instructions)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("simulate", parents=[common], help="simulate one trace on one profile")
    s.add_argument("trace")
    s.add_argument("--profile")
    s.set_defaults(func=cmd_simulate)

    lb = sub.add_parser("label", parents=[common], help="exhaustively label traces into a dataset CSV")
    lb.add_argument("traces", nargs="*")
    lb.add_argument("--manifest")
    lb.set_defaults(func=cmd_label)

    def learner(name, func, helptext):
        q = sub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("dataset")
        q.add_argument("--objective", choices=("latency", "energy"))
        q.add_argument("--k", type=int)
        q.add_argument("--features", help="comma-separated feature names (default: all)")
        q.add_argument("--folds", type=int, default=5)
        q.add_argument("--timing", action="store_true", help="include wall-clock prediction times")
        q.set_defaults(func=func)
        return q

    learner("train", cmd_train, "train a KNN model from a dataset")
    learner("xval", cmd_xval, "k-fold cross-validation report")
    sf = learner("select-features", cmd_select_features, "iterative feature elimination")
    sf.add_argument("--repeats", type=int, default=5)

    po = sub.add_parser("policy", parents=[common], help="replay a selection strategy")
    po.add_argument("traces", nargs="*")
    po.add_argument("--manifest")
    po.add_argument("--mode", choices=MODES, required=True)
    po.add_argument("--model")
    po.add_argument("--profile", help="unit for --mode static (default: base)")
    po.add_argument("--objective", choices=("latency", "energy"))
    po.set_defaults(func=cmd_policy)

    c = sub.add_parser("compare", parents=[common], help="savings of one result file against a baseline")
    c.add_argument("results")
    c.add_argument("baseline")
    c.set_defaults(func=cmd_compare)

    cf = sub.add_parser("config", parents=[common], help="configuration utilities")
    cf.add_argument("action", choices=("dump",))
    cf.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.ExperimentConfig()
    except FileNotFoundError:
        print(f"error: no such file: {args.config}", file=sys.stderr)
        return EXIT_MISSING
    except config_mod.ConfigError as e:
        print(f"error: {args.config}: {e}", file=sys.stderr)
        return EXIT_FORMAT
    try:
        return args.func(args, cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except CatalogMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CATALOG
    except (TraceParseError, config_mod.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (LearnError, PolicyError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
