"""`surf` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All reports are UTF-8 JSON; tabular outputs are RFC-4180 CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .bof import build_dictionary, pool_histogram, read_dictionary, soft_assign, write_dictionary
from .errors import (
    DataError,
    DomainError,
    NumericalError,
    UsageError,
)
from .laplacian import cotangent_system, eigendecompose, shape_dna
from .learn import (
    LabeledDataset,
    balance_classes,
    cross_validate_svm,
    paired_comparison,
    pls_loocv,
)
from .mesh import inspect_mesh, load_mesh, surface_area, write_mesh
from .pipeline import (
    PipelineConfig,
    canonical_json,
    compute_surface_signature,
    emit_report,
    read_features_csv,
    read_manifest,
    run_pipeline,
    write_distance_csv,
    write_features_csv,
    write_scatter_csv,
)
from .sgwt import chi2_distance_map, compute_sgws, read_sgws_store, write_sgws_store
from .synth import SynthSpec, bump_sphere, generate_cohort, icosphere

logger = logging.getLogger("surfwave")

DIAGNOSIS_TASKS = {"AD", "MCI", "NC"}
SEX_TASKS = {"M", "F"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(payload, out_path):
    if out_path:
        emit_report(payload, out_path)
    else:
        payload = dict(payload)
        payload.setdefault("tool_version", __version__)
        sys.stdout.write(canonical_json(payload))


def _load_config(args):
    data = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            data = json.load(f)
    config = PipelineConfig.from_dict(data)
    if getattr(args, "jobs", None):
        config.jobs = args.jobs
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _eigensystem_for(path, k, method="auto"):
    mesh = load_mesh(path)
    system = cotangent_system(mesh)
    return mesh, eigendecompose(system, k, method=method)


# ---------------------------------------------------------------------------
# Command handlers


def _cmd_info(args):
    mesh = load_mesh(args.mesh, fmt=args.format)
    counts = inspect_mesh(mesh)
    fatal = (
        counts["duplicate_triangles"]
        + counts["degenerate_triangles"]
        + counts["isolated_vertices"]
    )
    _emit(
        {
            "path": str(args.mesh),
            "label": mesh.label,
            "n_vertices": mesh.n_vertices,
            "n_triangles": mesh.n_triangles,
            "surface_area": surface_area(mesh),
            "validation": {
                "is_valid": fatal == 0,
                "issue_counts": counts,
                "pruned_vertices": 0,
            },
        },
        args.out,
    )
    return 0


def _cmd_spectrum(args):
    method = "dense" if args.dense else "auto"
    _, eigsys = _eigensystem_for(args.mesh, args.k, method=method)
    _emit(
        {
            "eigenvalues": eigsys.eigenvalues.tolist(),
            "k": eigsys.k,
            "mesh_area": eigsys.mesh_area,
            "method": method,
        },
        args.out,
    )
    return 0


def _cmd_shapedna(args):
    k = args.k if args.k else args.d + 1
    if k <= args.d:
        raise UsageError(f"--k must exceed --d (got k={k}, d={args.d})")
    _, eigsys = _eigensystem_for(args.mesh, k)
    vector = shape_dna(eigsys, args.d)
    line = ",".join(repr(float(x)) for x in vector)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(line + "\r\n")
    else:
        sys.stdout.write(line + "\n")
    return 0


def _cmd_sgws(args):
    _, eigsys = _eigensystem_for(args.mesh, args.k)
    sgws = compute_sgws(eigsys, args.level)
    if args.csv:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(
                [f"wavelet_scale_{r + 1}" for r in range(args.level)] + ["scaling"]
            )
            for column in sgws.values.T:
                writer.writerow([repr(float(x)) for x in column])
    else:
        write_sgws_store(sgws, args.out)
    return 0


def _cmd_distmap(args):
    _, eigsys = _eigensystem_for(args.mesh, args.k)
    sgws = compute_sgws(eigsys, args.level)
    distances = chi2_distance_map(sgws, args.ref)
    if args.out:
        write_distance_csv(args.out, distances)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["vertex_id", "distance"])
        for i, dv in enumerate(distances):
            writer.writerow([i, repr(float(dv))])
    return 0


def _cmd_dict(args):
    signatures = [read_sgws_store(p) for p in args.stores]
    seed = 0 if args.seed is None else args.seed
    dictionary = build_dictionary(signatures, args.k, seed)
    write_dictionary(dictionary, args.out)
    logger.info(
        "trained vocabulary of %d atoms in %d iterations (inertia %.6g)",
        dictionary.k,
        dictionary.training_meta["n_iter"],
        dictionary.training_meta["inertia"],
    )
    return 0


def _resolve_sigma(args, dictionary):
    if args.sigma is not None:
        return args.sigma
    sigma = dictionary.sigma_auto
    if not sigma or sigma <= 0:
        raise DataError(
            "dictionary carries no usable auto bandwidth; pass --sigma"
        )
    return sigma


def _cmd_encode(args):
    dictionary = read_dictionary(args.dictionary)
    if str(args.source).endswith(".sgws"):
        sgws = read_sgws_store(args.source)
        mesh_area = None
    else:
        mesh = load_mesh(args.source)
        system = cotangent_system(mesh)
        eigsys = eigendecompose(system, min(args.k, mesh.n_vertices))
        sgws = compute_sgws(eigsys, args.level)
        mesh_area = eigsys.mesh_area
    codes = soft_assign(sgws, dictionary, _resolve_sigma(args, dictionary))
    if mesh_area is None:
        if args.normalize:
            raise UsageError(
                "signature stores carry no mesh area; rerun on the mesh "
                "or drop --normalize"
            )
        hist = pool_histogram(codes, 1.0, normalize=False)
    else:
        hist = pool_histogram(codes, mesh_area, normalize=args.normalize)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([f"bin_{i}" for i in range(hist.values.shape[0])])
        writer.writerow([repr(float(x)) for x in hist.values])
    return 0


def _cmd_assemble(args):
    config = _load_config(args)
    if args.diffs:
        config.with_differences = True
    rows = read_manifest(args.manifest)
    dictionary = read_dictionary(args.dictionary)
    result = run_pipeline(rows, config, cache_dir=args.cache, dictionary=dictionary)
    write_features_csv(args.out, result.matrix.subject_ids, result.matrix.columns.T)
    if result.failures:
        logger.warning("%d surfaces failed", len(result.failures))
    return 0


def _parse_task(task):
    parts = task.split("-")
    if len(parts) != 2 or parts[0] == parts[1]:
        raise UsageError(f"task must look like AD-NC or M-F, got {task!r}")
    a, b = parts
    if {a, b} <= DIAGNOSIS_TASKS:
        return "diagnosis", (a, b)
    if {a, b} <= SEX_TASKS:
        return "sex", (a, b)
    raise UsageError(f"unknown task labels {task!r}")


def _join_labels(features_path, manifest_path, column, wanted=None, need_age=False):
    ids, features = read_features_csv(features_path)
    rows = {r.subject_id: r for r in read_manifest(manifest_path)}
    missing = [sid for sid in ids if sid not in rows]
    if missing:
        raise DataError(f"subjects missing from manifest: {missing[:5]}")
    keep, labels = [], []
    for i, sid in enumerate(ids):
        row = rows[sid]
        if need_age:
            if row.age is None:
                continue
            labels.append(row.age)
        else:
            value = getattr(row, column)
            if value == "NA" or (wanted is not None and value not in wanted):
                continue
            labels.append(value)
        keep.append(i)
    if not keep:
        raise DataError("no labelled subjects after filtering")
    return LabeledDataset(
        features[keep],
        np.asarray(labels),
        [ids[i] for i in keep],
    )


def _cmd_classify(args):
    config = _load_config(args)
    column, pair = _parse_task(args.task)
    dataset = _join_labels(args.features, args.manifest, column, wanted=set(pair))
    seed = 0 if args.seed is None else args.seed
    if not args.no_balance:
        dataset = balance_classes(dataset, seed)
    report = cross_validate_svm(
        dataset, folds=args.folds, C=args.svm_c, seed=seed
    )
    payload = report.to_dict()
    payload["task"] = args.task
    payload["config_echo"].update({"pipeline": config.to_dict()})
    _emit(payload, args.out)
    return 0


def _cmd_regress(args):
    config = _load_config(args)
    dataset = _join_labels(args.features, args.manifest, "age", need_age=True)
    report = pls_loocv(dataset, ncomp=args.ncomp)
    write_scatter_csv(args.scatter, report)
    payload = report.to_dict()
    payload["scatter_csv"] = str(args.scatter)
    payload["config_echo"].update({"pipeline": config.to_dict()})
    _emit(payload, args.out)
    return 0


def _cmd_compare(args):
    reports = []
    for path in (args.report_a, args.report_b):
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        if "fold_accuracies" not in payload:
            raise DataError(f"{path}: not a classification report")
        reports.append(payload["fold_accuracies"])
    result = paired_comparison(reports[0], reports[1])
    payload = result.to_dict()
    payload["report_a"] = str(args.report_a)
    payload["report_b"] = str(args.report_b)
    _emit(payload, args.out)
    return 0


def _cmd_synth(args):
    if args.family == "icosphere":
        mesh = icosphere(args.sub)
    else:
        mesh = bump_sphere(
            SynthSpec(
                family="bump_sphere",
                subdivision=args.sub,
                amplitude=args.eps,
                n_bumps=args.bumps,
                bump_width=args.width,
                seed=args.seed if args.seed is not None else 0,
            )
        )
    write_mesh(mesh, args.out)
    return 0


def _cmd_synth_cohort(args):
    with open(args.cohort_config, encoding="utf-8") as f:
        cohort = json.load(f)
    manifest = generate_cohort(cohort, args.out)
    logger.info("cohort manifest at %s", manifest)
    return 0


def _cmd_run(args):
    config = _load_config(args)
    if args.diffs:
        config.with_differences = True
    rows = read_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    cache_dir = args.cache or os.path.join(args.out, "cache")
    result = run_pipeline(rows, config, cache_dir=cache_dir)

    z_path = os.path.join(args.out, "Z.csv")
    write_features_csv(z_path, result.matrix.subject_ids, result.matrix.columns.T)
    write_dictionary(result.dictionary, os.path.join(args.out, "dict.bin"))
    if result.shapedna is not None:
        write_features_csv(
            os.path.join(args.out, "shapedna.csv"),
            result.matrix.subject_ids,
            result.shapedna.T,
        )

    stats = dict(result.stats)
    timings = {"wall_seconds": stats.pop("wall_seconds", None)}
    emit_report(
        {
            "config": config.to_dict(),
            "stats": stats,
            "failures": [f.to_dict() for f in result.failures],
            "subjects": result.matrix.subject_ids,
            "block_layout": list(result.matrix.block_layout),
            "descriptor_length": int(result.matrix.columns.shape[0]),
            "outputs": {
                "features": "Z.csv",
                "dictionary": "dict.bin",
                "shapedna": "shapedna.csv" if result.shapedna is not None else None,
            },
            "timings": timings,
        },
        os.path.join(args.out, "run_report.json"),
    )
    logger.info(
        "pipeline done: %d subjects, %d eigensolves, %d cache hits",
        result.matrix.n_subjects,
        stats["eigensolves"],
        stats["cache_hits"],
    )
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser():
    parser = _Parser(prog="surf", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--cache", help="signature cache directory")
    parser.add_argument("--jobs", type=int, default=None, help="worker pool width")
    parser.add_argument("--seed", type=int, default=None, help="default RNG seed")
    parser.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="mesh counts, area, validation report")
    p.add_argument("mesh")
    p.add_argument("--format", default="auto",
                   choices=["auto", "off", "ply-ascii", "freesurfer-binary"])
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_info)

    p = sub.add_parser("spectrum", help="smallest eigenvalues as JSON")
    p.add_argument("mesh")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--dense", action="store_true", help="force the dense solver")
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_spectrum)

    p = sub.add_parser("shapedna", help="area-normalized spectrum as a CSV row")
    p.add_argument("mesh")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, default=0,
                   help="eigenpairs to compute (default d+1)")
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_shapedna)

    p = sub.add_parser("sgws", help="per-vertex wavelet signatures")
    p.add_argument("mesh")
    p.add_argument("--k", type=int, default=201)
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--csv", action="store_true",
                   help="write CSV (one row per vertex) instead of the binary store")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_sgws)

    p = sub.add_parser("distmap", help="chi-squared distances from one vertex")
    p.add_argument("mesh")
    p.add_argument("--ref", type=int, required=True)
    p.add_argument("--k", type=int, default=201)
    p.add_argument("--level", type=int, default=3)
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_distmap)

    p = sub.add_parser("dict", help="train a signature vocabulary")
    p.add_argument("stores", nargs="+", help="signature store files (.sgws)")
    p.add_argument("-k", "--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, dest="seed")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_dict)

    p = sub.add_parser("encode", help="encode one surface into a histogram")
    p.add_argument("source", help="mesh file or signature store (.sgws)")
    p.add_argument("--dict", dest="dictionary", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--k", type=int, default=201)
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_encode)

    p = sub.add_parser("assemble", help="descriptor table from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dict", dest="dictionary", required=True)
    p.add_argument("--diffs", action="store_true")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_assemble)

    p = sub.add_parser("classify", help="cross-validated SVM on a feature table")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", required=True, help="e.g. AD-NC, NC-MCI, M-F")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--svm-c", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None, dest="seed")
    p.add_argument("--no-balance", action="store_true",
                   help="skip subsampling to equal class sizes")
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_classify)

    p = sub.add_parser("regress", help="leave-one-out PLS age prediction")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ncomp", type=int, default=10)
    p.add_argument("--scatter", default="scatter.csv")
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_regress)

    p = sub.add_parser("compare", help="paired t-test of two classification reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("-o", "--out")
    p.set_defaults(handler=_cmd_compare)

    p = sub.add_parser("synth", help="generate a synthetic surface")
    p.add_argument("--family", default="bump_sphere",
                   choices=["icosphere", "bump_sphere"])
    p.add_argument("--sub", type=int, default=4)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--bumps", type=int, default=30)
    p.add_argument("--width", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=None, dest="seed")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("synth-cohort", help="generate a cohort plus manifest")
    p.add_argument("--config", dest="cohort_config", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_synth_cohort)

    p = sub.add_parser("run", help="full pipeline: signatures to Z.csv")
    p.add_argument("--manifest", required=True)
    p.add_argument("--diffs", action="store_true")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(handler=_cmd_run)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level.upper())
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
