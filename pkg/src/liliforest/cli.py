"""Command-line front door.

Subcommands: ``synth`` (write a synthetic dataset plus its ground truth),
``estimate`` (cluster-based ATE/ITE pipeline), ``baseline`` (plain forest
estimator on the same data), ``sweep`` (grid search over min_leaf and tree
count) and ``regime`` (tolerance-function classification). Every command
is deterministic given its configuration and seed, and reruns produce
byte-identical output files.

Options may come from a flat ``key=value`` config file (``--config``);
explicit flags win over file values.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import estimate as est_mod
from .forest import derive_seed, fit_forest, forest_ites
from .lili import (ToleranceFn, cluster, coleaf_counts, prune_single_group,
                   regime_classify, tolerance_threshold)
from .tree import TreeParams
from .tune import select, sweep

# seed-derivation tag for the traversal-order shuffle, outside any tree or
# grid-point index range
_ORDER_TAG = 1 << 32

_DEFAULTS = {
    "k": 50,
    "pi": 0.1,
    "subsample": 0.8,
    "tolerance": "sqrt",
    "order": "row",
    "seed": 0,
    "min_available": 0.8,
    "p": 0.9,
    "confounding": "none",
    "noise_sd": 1.0,
    "effect": "const:2",
}

_CASTERS = {
    "data": str, "schema": str, "k": int, "min_leaf": int, "pi": float,
    "subsample": float, "tolerance": str, "order": str, "seed": int,
    "out": str, "min_available": float, "n": int, "d": int, "effect": str,
    "confounding": str, "noise_sd": float, "l_grid": str, "k_grid": str,
    "p": float, "synth": str, "alpha": float,
}
_BOOL_KEYS = {"honesty", "no_lipschitz"}


class CliError(Exception):
    pass


def _load_config(path: str) -> dict:
    cfg = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file: {path}") from exc
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise CliError(f"bad config line {lineno}: {line!r}")
        key, value = s.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then program defaults."""
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    for dest, caster in _CASTERS.items():
        if not hasattr(args, dest):
            continue
        if getattr(args, dest) is None:
            key = dest.replace("_", "-")
            if key in cfg:
                setattr(args, dest, caster(cfg[key]))
            elif dest in _DEFAULTS:
                setattr(args, dest, caster(_DEFAULTS[dest]))
    for dest in _BOOL_KEYS:
        if hasattr(args, dest) and getattr(args, dest) is None:
            key = dest.replace("_", "-")
            raw = cfg.get(key, "0")
            setattr(args, dest, raw.strip().lower() in {"1", "true", "yes"})
    return args


def _parse_schema(text: str) -> data_mod.CsvSchema:
    """Parse ``treatment=t,outcome=y[,counterfactual=c][,categorical=a;b]
    [,continuous=c;d]`` into a CsvSchema."""
    fields = {}
    kinds = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise CliError(f"bad schema entry: {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        if key in ("treatment", "outcome", "counterfactual"):
            fields[key] = value
        elif key in ("categorical", "continuous"):
            for col in value.split(";"):
                if col:
                    kinds[col.strip()] = key
        else:
            raise CliError(f"unknown schema key: {key!r}")
    if "treatment" not in fields or "outcome" not in fields:
        raise CliError("schema must name treatment= and outcome= columns")
    return data_mod.CsvSchema(
        treatment=fields["treatment"], outcome=fields["outcome"],
        counterfactual=fields.get("counterfactual"), kinds=kinds,
    )


def _parse_effect(text: str):
    text = text.strip()
    if text == "x0":
        return "x0"
    if text.startswith("const:"):
        return float(text[len("const:"):])
    raise CliError(f"cannot parse effect: {text!r} (use const:VALUE or x0)")


def _parse_grid(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"bad grid: {text!r} (use comma-separated integers)") from None


def _parse_synth_spec(text: str, seed: int):
    kv = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise CliError(f"bad synth entry: {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        kv[key] = value
    try:
        spec = data_mod.SyntheticSpec(
            n=int(kv["n"]),
            d=int(kv["d"]),
            effect=_parse_effect(kv.get("effect", _DEFAULTS["effect"])),
            confounding=kv.get("confounding", "none"),
            noise_sd=float(kv.get("noise-sd", 1.0)),
            lipschitz_outcome=kv.get("lipschitz", "1").lower() not in {"0", "false", "no"},
        )
    except KeyError as exc:
        raise CliError(f"synth spec missing {exc.args[0]}=") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    dataset, true_ate, true_ite = data_mod.generate_synthetic(spec, seed)
    return dataset, spec, true_ate, true_ite


def _load_dataset(args):
    """Dataset from --data/--schema or --synth; the sources are mutually
    exclusive."""
    if args.data and args.synth:
        raise CliError("--data and --synth are mutually exclusive")
    if args.data:
        if not args.schema:
            raise CliError("--schema is required with --data")
        schema = _parse_schema(args.schema)
        return data_mod.load_csv(args.data, schema)
    if args.synth:
        dataset, _, _, _ = _parse_synth_spec(args.synth, args.seed)
        return dataset
    raise CliError("provide a dataset with --data or --synth")


def _traversal_order(args, n: int):
    if args.order == "row":
        return None
    if args.order == "seeded-shuffle":
        rng = np.random.default_rng(derive_seed(args.seed, _ORDER_TAG))
        return rng.permutation(n)
    raise CliError(f"unknown order policy: {args.order!r}")


def _out_dir(args) -> Path:
    if not args.out:
        raise CliError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_dataset_csv(dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        cols = [f"x{j}" for j in range(dataset.d)]
        header = ["t", "y"]
        if dataset.counterfactual_outcome is not None:
            header.append("ycf")
        writer.writerow(header + cols)
        for i in range(dataset.n):
            row = [int(dataset.treatment[i]), repr(float(dataset.outcome[i]))]
            if dataset.counterfactual_outcome is not None:
                row.append(repr(float(dataset.counterfactual_outcome[i])))
            row += [repr(float(v)) for v in dataset.covariates[i]]
            writer.writerow(row)


def _potential_outcomes(dataset):
    treated = dataset.treatment == 1
    cf = dataset.counterfactual_outcome
    y1 = np.where(treated, dataset.outcome, cf)
    y0 = np.where(treated, cf, dataset.outcome)
    return y1, y0


def _tree_params(args) -> TreeParams:
    if args.min_leaf is None:
        raise CliError("--min-leaf is required")
    return TreeParams(
        min_leaf=args.min_leaf,
        alpha=args.alpha,
        random_split_prob=args.pi,
        subsample_ratio=args.subsample,
        honesty=bool(args.honesty),
    )


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    if args.synth is None:
        raise CliError("--synth SPEC is required (e.g. --synth n=500,d=5,effect=const:2)")
    dataset, spec, true_ate, _ = _parse_synth_spec(args.synth, args.seed)
    out = _out_dir(args)
    _write_dataset_csv(dataset, out / "dataset.csv")
    truth = {
        "true_ate": true_ate,
        "seed": args.seed,
        "spec": {
            "n": spec.n, "d": spec.d,
            "effect": spec.effect if isinstance(spec.effect, str) else float(spec.effect),
            "confounding": spec.confounding,
            "noise_sd": spec.noise_sd,
            "lipschitz_outcome": spec.lipschitz_outcome,
        },
    }
    est_mod.write_summary(truth, out / "truth.json")
    print(f"wrote {out / 'dataset.csv'} and {out / 'truth.json'} (true_ate={true_ate!r})")
    return 0


def cmd_estimate(args) -> int:
    dataset = data_mod.preprocess(_load_dataset(args))
    params = _tree_params(args)
    tolerance = ToleranceFn.parse(args.tolerance)
    forest = fit_forest(dataset, args.k, params, args.seed)
    counts = coleaf_counts(forest, dataset)
    threshold = tolerance_threshold(args.k, tolerance)
    clustering = prune_single_group(
        cluster(counts, threshold, _traversal_order(args, dataset.n)),
        dataset.treatment,
    )
    if not clustering.clusters:
        raise CliError(
            "no cluster holds both treatment groups; "
            "try a larger --min-leaf or a smaller --k"
        )
    ate, report = est_mod.overall_ate(clustering, dataset)
    summary = est_mod.report_summary(report)
    summary.update({
        "n": dataset.n, "k": args.k, "min_leaf": args.min_leaf,
        "threshold": threshold, "tolerance": tolerance.tag,
        "order": args.order, "seed": args.seed,
    })
    if dataset.counterfactual_outcome is not None:
        truth = data_mod.ground_truth_ate(dataset, mode="mean")
        y1, y0 = _potential_outcomes(dataset)
        summary["true_ate"] = truth
        summary["l1_ate_loss"] = est_mod.l1_ate_loss(ate, truth)
        summary["pehe"] = est_mod.pehe(report.per_instance_ite, y1, y0)
    out = _out_dir(args)
    est_mod.write_summary(summary, out / "summary.json")
    est_mod.write_cluster_table(report, out / "clusters.csv")
    est_mod.write_ite_table(report, out / "ites.csv", clustering)
    print(
        f"ate={ate!r} clusters={report.cluster_count} "
        f"available={report.available_fraction!r}"
    )
    return 0


def cmd_baseline(args) -> int:
    dataset = data_mod.preprocess(_load_dataset(args))
    params = _tree_params(args)
    forest = fit_forest(dataset, args.k, params, args.seed)
    ites, defined = forest_ites(forest, dataset)
    if not defined.any():
        raise CliError("no (instance, tree) pair has both groups in a leaf")
    ate = float(ites[defined].mean())
    summary = {
        "overall_ate": ate,
        "defined_fraction": float(defined.mean()),
        "n": dataset.n, "k": args.k, "min_leaf": args.min_leaf,
        "seed": args.seed,
    }
    if dataset.counterfactual_outcome is not None:
        truth = data_mod.ground_truth_ate(dataset, mode="mean")
        y1, y0 = _potential_outcomes(dataset)
        filled = np.where(defined, ites, ate)
        summary["true_ate"] = truth
        summary["l1_ate_loss"] = est_mod.l1_ate_loss(ate, truth)
        summary["pehe"] = est_mod.pehe(filled, y1, y0)
    out = _out_dir(args)
    est_mod.write_summary(summary, out / "summary.json")
    with open(out / "ites.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance", "cluster_id", "ite"])
        for i in range(dataset.n):
            writer.writerow([i, -1, repr(float(ites[i]))])
    print(f"ate={ate!r} defined_fraction={float(defined.mean())!r}")
    return 0


def cmd_sweep(args) -> int:
    if not args.l_grid or not args.k_grid:
        raise CliError("--l-grid and --k-grid are required")
    if args.min_available not in (0.8, 0.9):
        raise CliError("--min-available must be 0.8 or 0.9")
    dataset = data_mod.preprocess(_load_dataset(args))
    tolerance = ToleranceFn.parse(args.tolerance)
    records = sweep(
        dataset, _parse_grid(args.l_grid), _parse_grid(args.k_grid),
        tolerance, args.seed,
        random_split_prob=args.pi, subsample_ratio=args.subsample,
        order=_traversal_order(args, dataset.n),
    )
    out = _out_dir(args)
    # wall_time stays in the API record but out of the file so reruns are
    # byte-identical
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["min_leaf", "n_trees", "tolerance", "available_fraction",
                         "cluster_count", "estimated_ate", "l1_loss", "failure"])
        for r in records:
            writer.writerow([
                r.min_leaf, r.n_trees, r.tolerance,
                repr(r.available_fraction), r.cluster_count,
                repr(r.estimated_ate),
                "" if r.l1_loss is None else repr(r.l1_loss),
                r.failure or "",
            ])
    chosen = select(records, args.min_available)
    est_mod.write_summary(
        {"min_leaf": chosen.min_leaf, "n_trees": chosen.n_trees,
         "warning": chosen.warning, "min_available": args.min_available},
        out / "selected.json",
    )
    print(f"selected min_leaf={chosen.min_leaf} n_trees={chosen.n_trees} "
          f"warning={chosen.warning}")
    return 0


def cmd_regime(args) -> int:
    tolerance = ToleranceFn.parse(args.tolerance)
    grid = _parse_grid(args.k_grid) if args.k_grid else [2 ** i for i in range(4, 41, 2)]
    try:
        label = regime_classify(tolerance, args.p, grid)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    print(f"classification={label}")
    if args.out:
        out = _out_dir(args)
        est_mod.write_summary(
            {"classification": label, "tolerance": tolerance.tag,
             "p": args.p, "k_grid": grid},
            out / "regime.json",
        )
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(parser, *, dataset=False, tree=False, output=True):
    parser.add_argument("--config", help="flat key=value config file; flags win")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    if output:
        parser.add_argument("--out", help="output directory")
    if dataset:
        parser.add_argument("--data", help="CSV dataset path")
        parser.add_argument("--schema",
                            help="treatment=T,outcome=Y[,counterfactual=C]"
                                 "[,categorical=a;b][,continuous=c;d]")
        parser.add_argument("--synth",
                            help="inline synthetic spec, e.g. n=500,d=5,"
                                 "effect=const:2,confounding=linear,noise-sd=1")
    if tree:
        parser.add_argument("--k", type=int, help="number of trees (default 50)")
        parser.add_argument("--min-leaf", type=int, help="minimum leaf size")
        parser.add_argument("--alpha", type=float,
                            help="min child fraction; default min_leaf/s_n capped at 0.2")
        parser.add_argument("--pi", type=float,
                            help="random-split probability (default 0.1)")
        parser.add_argument("--subsample", type=float,
                            help="subsample ratio (default 0.8)")
        parser.add_argument("--honesty", action="store_true", default=None,
                            help="fit splits on one half, members from the other")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liliforest",
        description="Causal forest with leaf-co-occurrence clustering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    _add_common(p)
    p.add_argument("--synth", help="spec: n=...,d=...[,effect=const:2|x0]"
                                   "[,confounding=none|linear][,noise-sd=F][,lipschitz=0|1]")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="cluster-based ATE/ITE estimation")
    _add_common(p, dataset=True, tree=True)
    p.add_argument("--tolerance", help="sqrt | const:C | gap:C (default sqrt)")
    p.add_argument("--order", choices=["row", "seeded-shuffle"],
                   help="cluster traversal order (default row)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", help="plain forest ATE/ITE estimation")
    _add_common(p, dataset=True, tree=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("sweep", help="grid search over min_leaf and tree count")
    _add_common(p, dataset=True, tree=True)
    p.add_argument("--tolerance", help="sqrt | const:C | gap:C (default sqrt)")
    p.add_argument("--order", choices=["row", "seeded-shuffle"],
                   help="cluster traversal order (default row)")
    p.add_argument("--l-grid", help="comma-separated min_leaf grid")
    p.add_argument("--k-grid", help="comma-separated tree-count grid")
    p.add_argument("--min-available", type=float,
                   help="retained-fraction floor for selection: 0.8 or 0.9")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regime", help="classify a tolerance function")
    _add_common(p)
    p.add_argument("--tolerance", help="sqrt | const:C | gap:C")
    p.add_argument("--p", type=float, help="co-leaf probability level (default 0.9)")
    p.add_argument("--k-grid", help="comma-separated K grid (default powers of two)")
    p.set_defaults(func=cmd_regime)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
