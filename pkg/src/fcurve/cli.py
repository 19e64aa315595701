"""Command-line pipeline.

Subcommands mirror the analysis stages: `ingest` builds a curve panel
from life tables, `smooth` fits basis coefficients, `fpca`, `cluster`,
and `flm` analyze a fitted dataset, and `report` re-runs a recorded
manifest.  Every command writes `<command>_manifest.json` into its
output directory; errors exit with 2 (configuration), 3 (data), or
4 (numerics).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BSplineBasis, KnotScheme
from .cluster import hierarchical, score_distance_matrix, two_stage
from .errors import ConfigError, FcurveError
from .flm import FlmVariant, select_model
from .fpca import fit_fpca
from .ingest import Sex, build_panel, load_life_table, panel_from_csv, panel_to_csv
from .report import (RunManifest, composition_grid, default_panel_config,
                     effect_plot, file_sha256, labeled_csv,
                     panel_country_codes, plot_curves, trajectory_plot)
from .smooth import FunctionalDataset, default_lambda_grid, smooth_panel

#: Environment variable naming the life-table directory.
DATA_DIR_ENV = "FCURVE_DATA_DIR"


def _parse_years(text):
    try:
        lo, hi = text.replace("..", ":").split(":")
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"bad year range {text!r}, expected LO:HI") from None


def _parse_grid(text):
    if text is None:
        return None
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
            if lo <= 0 or hi <= 0 or count < 1:
                raise ValueError
            return np.logspace(math.log10(lo), math.log10(hi), count)
        return np.asarray([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(
            f"bad penalty grid {text!r}, expected LO:HI:N or a comma list"
        ) from None


def _parse_counts(text):
    """Cluster counts: "7", "2,5,7", or a range "2..9"."""
    text = str(text)
    try:
        if ".." in text or ":" in text:
            lo, hi = text.replace("..", ":").split(":")
            lo, hi = int(lo), int(hi)
            if lo > hi:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(
            f"bad cluster counts {text!r}, expected K, K1,K2,..., or LO..HI"
        ) from None


def _single_sex(dataset, sex_option):
    """Restrict a dataset to one sex, or verify it already has one."""
    if sex_option not in (None, "all"):
        wanted = Sex.parse(sex_option)
        idx = [i for i, key in enumerate(dataset.keys) if key.sex is wanted]
        if not idx:
            raise ConfigError(f"the dataset has no {wanted.value} curves")
        return dataset.subset(np.asarray(idx)), wanted
    sexes = dataset.sexes
    if len(sexes) != 1:
        raise ConfigError(
            "the dataset mixes sexes; pass --sex male or --sex female")
    return dataset, sexes[0]


def _write_partition_csv(path, keys, labels, run_hash):
    rows = [(k.country, k.year, k.sex.value, int(lab))
            for k, lab in zip(keys, labels)]
    labeled_csv(path, ("country", "year", "sex", "cluster"), rows, run_hash)


def _mean_curve_series(dataset, partition):
    grid = np.linspace(*dataset.basis.domain, 221)
    design = dataset.basis.design(grid)
    series = []
    for label in range(1, partition.n_clusters + 1):
        members = partition.members(label)
        mean_coeffs = dataset.coefficients[members].mean(axis=0)
        series.append((f"cluster {label}", grid, design @ mean_coeffs))
    return series


# --- command runners (shared by direct invocation and `report`) -----------

def run_ingest(config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_dir = config["data_dir"]
    countries = config["countries"]
    years = tuple(config["years"])
    sexes = [Sex.parse(s) for s in config["sexes"]]

    tables = {}
    digest = hashlib.sha256()
    for sex in sorted(sexes, key=lambda s: s.value):
        for country in countries:
            tables[(country, sex)] = load_life_table(data_dir, country, sex)
            path = Path(data_dir) / f"{country}.{sex.table_name}.txt"
            digest.update(f"{country}/{sex.value}:".encode())
            digest.update(file_sha256(path).encode())
            digest.update(b"\n")
    panel = build_panel(tables, countries, years, sexes)

    manifest = RunManifest.make("ingest", config, input_path=data_dir,
                                input_digest=digest.hexdigest())
    panel_to_csv(panel, out_dir / config["output"], run_hash=manifest.hash)
    manifest.to_json(out_dir / "ingest_manifest.json")
    print(f"ingest: wrote {len(panel)} curves to {out_dir / config['output']}")
    return manifest


def run_smooth(config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panel = panel_from_csv(config["input"])
    basis = BSplineBasis.from_config(config["basis"])
    grid = np.asarray(config["grid"], dtype=np.float64)
    dataset = smooth_panel(panel, basis, mode=config["mode"], grid=grid)

    manifest = RunManifest.make("smooth", config, input_path=config["input"])
    dataset.save(out_dir / config["output"])
    manifest.to_json(out_dir / "smooth_manifest.json")
    lams = sorted(set(float(l) for l in dataset.lambdas))
    shown = ", ".join(f"{l:g}" for l in lams[:4])
    if len(lams) > 4:
        shown += ", ..."
    print(f"smooth: fitted {len(dataset)} curves "
          f"(mode {config['mode']}, penalty weights {shown})")
    return manifest


def run_fpca(config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = FunctionalDataset.load(config["input"])
    manifest = RunManifest.make("fpca", config, input_path=config["input"])
    n_scores = int(config["components"])

    groups = (dataset.split_by_sex() if config["by_sex"]
              else {None: dataset})
    lines = []
    for sex, part in sorted(groups.items(),
                            key=lambda kv: "" if kv[0] is None else kv[0].value):
        tag = "all" if sex is None else sex.value
        result = fit_fpca(part)
        rows = [(l + 1, repr(float(ev)), repr(float(vr)))
                for l, (ev, vr) in enumerate(zip(result.eigenvalues,
                                                 result.variance_ratio))]
        labeled_csv(out_dir / f"variance_{tag}.csv",
                    ("component", "eigenvalue", "variance_ratio"),
                    rows, manifest.hash)
        score_cols = min(n_scores, result.dimension)
        header = ("country", "year", "sex") + tuple(
            f"score_{j + 1}" for j in range(score_cols))
        rows = [(k.country, k.year, k.sex.value,
                 *(repr(float(v)) for v in result.scores[i, :score_cols]))
                for i, k in enumerate(part.keys)]
        labeled_csv(out_dir / f"scores_{tag}.csv", header, rows, manifest.hash)
        for comp in range(1, min(2, result.dimension) + 1):
            plus, minus = result.harmonic_effect(comp)
            effect_plot(part.basis, result.mean_coefficients, plus, minus,
                        out_dir / f"effect_{tag}_{comp}.svg",
                        title=f"component {comp} ({tag})",
                        run_hash=manifest.hash)
        trajectory_plot(result.scores[:, :2], part.keys,
                        out_dir / f"trajectories_{tag}.svg",
                        title=f"score trajectories ({tag})",
                        run_hash=manifest.hash)
        top2 = float(result.variance_ratio[:2].sum())
        lines.append(f"{tag}: first two components explain {top2 * 100:.1f}%")
    manifest.to_json(out_dir / "fpca_manifest.json")
    print("fpca: " + "; ".join(lines))
    return manifest


def run_cluster(config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = FunctionalDataset.load(config["input"])
    dataset, _ = _single_sex(dataset, config.get("sex"))
    manifest = RunManifest.make("cluster", config, input_path=config["input"])

    n_clusters = int(config["n_clusters"])
    method = config["method"]
    if method == "twostage":
        feature = config.get("feature", "coefficients")
        partition = two_stage(dataset, n_clusters, feature=feature,
                              n_components=config.get("n_components"),
                              seed=int(config["seed"]))
    elif method == "distance":
        q = config.get("n_components")
        if q is None:
            raise ConfigError("distance-based clustering needs --q")
        distances = score_distance_matrix(dataset, int(q))
        partition = hierarchical(distances, n_clusters,
                                 linkage=config["linkage"])
    else:
        raise ConfigError(f"unknown method {method!r}")

    _write_partition_csv(out_dir / "partition.csv", dataset.keys,
                         partition.labels, manifest.hash)
    grid = composition_grid(partition, dataset.keys)
    grid.to_csv(out_dir / "composition.csv", run_hash=manifest.hash)
    grid.to_svg(out_dir / "composition.svg", run_hash=manifest.hash)
    plot_curves(_mean_curve_series(dataset, partition),
                out_dir / "cluster_means.svg", title="cluster mean curves",
                ylabel="density", run_hash=manifest.hash)
    manifest.to_json(out_dir / "cluster_manifest.json")
    sizes = ", ".join(str(s) for s in partition.sizes)
    print(f"cluster: {method} produced clusters of size {sizes}")
    return manifest


def run_flm(config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = FunctionalDataset.load(config["input"])
    dataset, _ = _single_sex(dataset, config.get("sex"))
    manifest = RunManifest.make("flm", config, input_path=config["input"])

    variants = [FlmVariant.parse(v) for v in config["variants"]]
    model, scores = select_model(
        dataset, config["n_clusters"], variants=variants,
        seeds=[int(s) for s in config["seeds"]],
        scree_threshold=float(config["threshold"]),
        init=config["init"])

    rows = [(s.n_clusters, s.variant.value, s.seed, repr(s.loglik),
             s.n_parameters, repr(s.bic)) for s in scores]
    labeled_csv(out_dir / "bic.csv",
                ("n_clusters", "variant", "seed", "loglik", "n_parameters", "bic"),
                rows, manifest.hash)

    partition = model.partition()
    _write_partition_csv(out_dir / "partition.csv", dataset.keys,
                         partition.labels, manifest.hash)
    grid = composition_grid(partition, dataset.keys)
    grid.to_csv(out_dir / "composition.csv", run_hash=manifest.hash)
    grid.to_svg(out_dir / "composition.svg", run_hash=manifest.hash)

    summary = {
        "n_clusters": model.n_clusters,
        "variant": model.variant.value,
        "seed": model.config.seed,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "loglik": model.loglik,
        "n_parameters": model.n_parameters(),
        "bic": next(s.bic for s in scores
                    if (s.n_clusters, s.variant, s.seed)
                    == (model.n_clusters, model.variant, model.config.seed)),
        "weights": [float(w) for w in model.weights],
        "dims": list(model.dims),
        "noise_variances": [float(b) for b in model.noise_variances],
        "signal_variances": [[float(a) for a in ak]
                             for ak in model.signal_variances],
        "signal_variances_x1e4": [[round(float(a) * 1e4, 4) for a in ak]
                                  for ak in model.signal_variances],
        "explained_within": [model.explained_within(k + 1)
                             for k in range(model.n_clusters)],
        "run": manifest.hash,
    }
    with open(out_dir / "model.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for k in range(1, model.n_clusters + 1):
        plus, minus, mean = model.component_effect(k, 1)
        effect_plot(model.basis, mean, plus, minus,
                    out_dir / f"effect_cluster{k}.svg",
                    title=f"cluster {k}, first direction",
                    run_hash=manifest.hash)
    manifest.to_json(out_dir / "flm_manifest.json")
    print(f"flm: best model K={model.n_clusters} ({model.variant.value}), "
          f"BIC {summary['bic']:.2f}, dims {list(model.dims)}")
    return manifest


_RUNNERS = {
    "ingest": run_ingest,
    "smooth": run_smooth,
    "fpca": run_fpca,
    "cluster": run_cluster,
    "flm": run_flm,
}


def run_report(config, out_dir):
    source = RunManifest.from_json(config["run"])
    if source.command not in _RUNNERS:
        raise ConfigError(f"manifest command {source.command!r} is not replayable")
    if source.command != "ingest":
        input_path = Path(source.config["input"])
        digest = file_sha256(input_path) if input_path.is_file() else ""
        if digest != source.input_sha256:
            raise ConfigError(
                "the manifest's input file changed since the recorded run")
    print(f"report: replaying {source.command} run {source.hash[:12]}")
    return _RUNNERS[source.command](source.config, out_dir)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fcurve",
        description="Functional data analysis of age-at-death curves.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a curve panel from life tables")
    p.add_argument("--data-dir", default=None,
                   help=f"directory of life-table files "
                        f"(default: ${DATA_DIR_ENV})")
    p.add_argument("--countries", default=None,
                   help="comma-separated codes (default: built-in panel)")
    p.add_argument("--years", default=None, help="LO:HI (default 1960:2010)")
    p.add_argument("--sex", default="both", choices=("male", "female", "both"))
    p.add_argument("--output", default="panel.csv", help="panel CSV filename")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("smooth", help="fit penalized spline coefficients")
    p.add_argument("--input", required=True, help="panel CSV")
    p.add_argument("--basis", default="nonuniform31",
                   help="named scheme (nonuniform31, uniform111) or a basis "
                        "config JSON path")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--mode", default="per-curve", choices=("per-curve", "common"))
    p.add_argument("--lambda-grid", default=None, dest="lambda_grid",
                   help="penalty weights, LO:HI:N (log-spaced) or a comma list")
    p.add_argument("--output", default="dataset.bin", help="dataset filename")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("fpca", help="principal component decomposition")
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--by-sex", action="store_true",
                   help="decompose each sex separately")
    p.add_argument("--components", type=int, default=5,
                   help="score columns written to CSV")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("cluster", help="two-stage or distance-based clustering")
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--method", default="twostage",
                   choices=("twostage", "distance"))
    p.add_argument("--K", type=int, required=True, dest="n_clusters")
    p.add_argument("--feature", default="coefficients",
                   choices=("coefficients", "scores"))
    p.add_argument("--q", type=int, default=None, dest="n_components",
                   help="leading components for scores feature / distance")
    p.add_argument("--linkage", default="ward",
                   choices=("ward", "complete", "average"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sex", default=None, choices=("male", "female"))
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("flm", help="model-based clustering with BIC selection")
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--K", required=True, dest="n_clusters",
                   help="cluster counts: K, K1,K2,..., or LO..HI")
    p.add_argument("--variant", default="akj-b-qk-dk",
                   choices=("akj-b-qk-dk", "akj-bk-qk-dk", "both"))
    p.add_argument("--threshold", type=float, default=0.2,
                   help="scree-gap retention threshold")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--init", default="kmeans", choices=("kmeans", "random"))
    p.add_argument("--sex", default=None, choices=("male", "female"))
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("report", help="replay a recorded run manifest")
    p.add_argument("--run", required=True, help="path to a run manifest JSON")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _basis_config(option, order):
    if option in ("nonuniform31", "uniform111"):
        return BSplineBasis(KnotScheme.by_name(option), order=order).to_config()
    if Path(option).is_file():
        return BSplineBasis.load_config(option).to_config()
    raise ConfigError(
        f"--basis {option!r} is neither a named scheme nor a config file")


def _config_from_args(args):
    if args.command == "ingest":
        data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
        if not data_dir:
            raise ConfigError(
                f"pass --data-dir or set ${DATA_DIR_ENV}")
        config = default_panel_config()
        countries = (args.countries.split(",") if args.countries
                     else panel_country_codes(config))
        years = _parse_years(args.years) if args.years else tuple(config["years"])
        sexes = (["male", "female"] if args.sex == "both" else [args.sex])
        return {"data_dir": data_dir, "countries": sorted(countries),
                "years": list(years), "sexes": sexes, "output": args.output}
    if args.command == "smooth":
        grid = _parse_grid(args.lambda_grid)
        if grid is None:
            grid = default_lambda_grid()
        return {"input": args.input,
                "basis": _basis_config(args.basis, args.order),
                "mode": args.mode.replace("-", "_"),
                "grid": [float(v) for v in grid], "output": args.output}
    if args.command == "fpca":
        if args.components < 1:
            raise ConfigError("--components must be >= 1")
        return {"input": args.input, "by_sex": bool(args.by_sex),
                "components": args.components}
    if args.command == "cluster":
        return {"input": args.input, "method": args.method,
                "n_clusters": args.n_clusters, "feature": args.feature,
                "n_components": args.n_components, "linkage": args.linkage,
                "seed": args.seed, "sex": args.sex}
    if args.command == "flm":
        variants = (["akj-b-qk-dk", "akj-bk-qk-dk"] if args.variant == "both"
                    else [args.variant])
        return {"input": args.input,
                "n_clusters": _parse_counts(args.n_clusters),
                "variants": variants, "threshold": args.threshold,
                "seeds": [int(s) for s in args.seeds.split(",")],
                "init": args.init, "sex": args.sex}
    if args.command == "report":
        return {"run": args.run}
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        runner = run_report if args.command == "report" else _RUNNERS[args.command]
        runner(config, args.out)
    except FcurveError as exc:
        print(f"fcurve {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
