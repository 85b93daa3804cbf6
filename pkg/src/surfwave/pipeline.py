"""Manifest-driven batch pipeline with a content-addressed signature cache.

Per surface: load -> validate(prune) -> cotangent system -> truncated
eigendecomposition -> wavelet signatures, cached under a BLAKE2 hash of
the mesh bytes plus the numeric parameters (so cache hits survive file
renames and reruns skip every eigensolve). Then one shared vocabulary is
trained on the pooled training signatures, each surface is encoded and
pooled, and per-subject descriptor columns are assembled in manifest
order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .bof import (
    Dictionary,
    WaveletBrainMatrix,
    assemble_waveletbrain,
    block_layout,
    build_dictionary,
    pool_histogram,
    soft_assign,
)
from .errors import DataError, DomainError, ManifestError, SurfwaveError
from .laplacian import cotangent_system, eigendecompose, shape_dna
from .mesh import load_mesh, validate_mesh
from .sgwt import SgwsMatrix, compute_sgws, read_sgws_store, write_sgws_store
from .synth import SURFACE_TAGS

logger = logging.getLogger(__name__)

DIAGNOSIS_VOCAB = {"AD", "MCI", "NC", "NA"}
SEX_VOCAB = {"M", "F", "NA"}

MANIFEST_FIELDS = [
    "subject_id", "path_LW", "path_LG", "path_RW", "path_RG",
    "diagnosis", "age", "sex",
]


@dataclass
class ManifestRow:
    subject_id: str
    paths: dict  # tag -> absolute path
    diagnosis: str = "NA"
    age: float | None = None
    sex: str = "NA"


def read_manifest(path):
    """Parse a cohort manifest CSV; relative mesh paths resolve against
    the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in MANIFEST_FIELDS if c not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError(f"{path}: missing columns {missing}")
        for line_no, rec in enumerate(reader, start=2):
            sid = rec["subject_id"].strip()
            if not sid:
                raise ManifestError(f"{path}:{line_no}: empty subject_id")
            if sid in seen:
                raise ManifestError(f"{path}:{line_no}: duplicate subject_id {sid!r}")
            seen.add(sid)
            diagnosis = rec["diagnosis"].strip() or "NA"
            if diagnosis not in DIAGNOSIS_VOCAB:
                raise ManifestError(
                    f"{path}:{line_no}: diagnosis {diagnosis!r} not in "
                    f"{sorted(DIAGNOSIS_VOCAB)}"
                )
            sex = rec["sex"].strip() or "NA"
            if sex not in SEX_VOCAB:
                raise ManifestError(
                    f"{path}:{line_no}: sex {sex!r} not in {sorted(SEX_VOCAB)}"
                )
            age_token = rec["age"].strip()
            age = None
            if age_token and age_token != "NA":
                try:
                    age = float(age_token)
                except ValueError:
                    raise ManifestError(
                        f"{path}:{line_no}: bad age {age_token!r}"
                    ) from None
            paths = {}
            for tag in SURFACE_TAGS:
                p = rec[f"path_{tag}"].strip()
                if not p:
                    raise ManifestError(f"{path}:{line_no}: empty path_{tag}")
                paths[tag] = p if os.path.isabs(p) else os.path.join(base, p)
            rows.append(
                ManifestRow(
                    subject_id=sid, paths=paths, diagnosis=diagnosis,
                    age=age, sex=sex,
                )
            )
    if not rows:
        raise ManifestError(f"{path}: manifest has no subjects")
    return rows


@dataclass
class PipelineConfig:
    """Numeric knobs echoed verbatim into every report."""

    eigenpairs: int = 201
    level: int = 3
    vocab_size: int = 64
    sigma: float | str = "auto"
    dict_seed: int = 0
    area_normalize: bool = True
    with_differences: bool = False
    shapedna_d: int = 30  # 0 disables the ShapeDNA side channel
    max_failure_fraction: float = 0.5
    jobs: int = 1
    dictionary_subjects: list | None = None  # None: train on all subjects
    folds: int = 10
    svm_c: float = 1.0
    pls_components: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("eigenpairs", "level", "vocab_size", "folds", "jobs"):
            if getattr(self, name) < 1:
                raise DomainError(f"config field {name} must be positive")
        if isinstance(self.sigma, str):
            if self.sigma != "auto":
                raise DomainError(f"sigma must be positive or 'auto', got {self.sigma!r}")
        elif self.sigma <= 0:
            raise DomainError(f"sigma must be positive or 'auto', got {self.sigma}")
        if self.svm_c <= 0 or self.pls_components < 1:
            raise DomainError("classifier/regression settings must be positive")
        if not 0.0 <= self.max_failure_fraction <= 1.0:
            raise DomainError("max_failure_fraction must be in [0, 1]")
        if self.shapedna_d < 0:
            raise DomainError("shapedna_d must be >= 0")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SurfaceFailure:
    subject_id: str
    tag: str
    stage: str
    message: str

    def to_dict(self):
        return {
            "subject_id": self.subject_id,
            "tag": self.tag,
            "stage": self.stage,
            "message": self.message,
        }


@dataclass
class PipelineResult:
    matrix: WaveletBrainMatrix
    dictionary: Dictionary
    shapedna: np.ndarray | None  # (4 * d, n_subjects) or None
    failures: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def _cache_key(mesh_bytes, k, level):
    h = hashlib.blake2b(digest_size=16)
    h.update(mesh_bytes)
    h.update(struct.pack("<ii", k, level))
    return h.hexdigest()


def compute_surface_signature(path, k, level, cache_dir=None, label=""):
    """Signature matrix plus metadata for one surface file, cached by
    content hash.

    Returns ``(SgwsMatrix, meta, cache_hit)`` where ``meta`` carries the
    mesh area and the truncated spectrum (enough to derive ShapeDNA
    without a second eigensolve).
    """
    with open(path, "rb") as f:
        mesh_bytes = f.read()
    key = _cache_key(mesh_bytes, k, level)

    if cache_dir is not None:
        store_path = os.path.join(cache_dir, f"{key}.sgws")
        meta_path = os.path.join(cache_dir, f"{key}.json")
        if os.path.exists(store_path) and os.path.exists(meta_path):
            with open(meta_path, encoding="utf-8") as f:
                meta = json.load(f)
            sgws = read_sgws_store(store_path)
            return SgwsMatrix(sgws.values, sgws.level, source_label=label), meta, True

    mesh = load_mesh(path, label=label or os.path.basename(str(path)))
    mesh, _ = validate_mesh(mesh, policy="prune")
    system = cotangent_system(mesh)
    k_eff = min(k, mesh.n_vertices)
    if k_eff < k:
        logger.warning(
            "%s: clamping eigenpairs %d -> %d (mesh has %d vertices)",
            path, k, k_eff, mesh.n_vertices,
        )
    eigsys = eigendecompose(system, k_eff)
    sgws = compute_sgws(eigsys, level)
    sgws = SgwsMatrix(sgws.values, sgws.level, source_label=label)
    meta = {
        "mesh_area": eigsys.mesh_area,
        "eigenvalues": eigsys.eigenvalues.tolist(),
        "m": int(mesh.n_vertices),
        "k": int(k_eff),
        "level": int(level),
        "source": os.path.basename(str(path)),
    }
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = store_path + ".tmp"
        write_sgws_store(sgws, tmp)
        os.replace(tmp, store_path)
        with open(meta_path, "w", encoding="utf-8") as f:
            json.dump(meta, f, sort_keys=True)
    return sgws, meta, False


def _shapedna_from_meta(meta, d):
    lam = np.asarray(meta["eigenvalues"])
    if d >= lam.shape[0]:
        raise DomainError(
            f"shapedna_d={d} needs more than {lam.shape[0]} cached eigenpairs"
        )
    return lam[1 : d + 1] * meta["mesh_area"]


def run_pipeline(manifest_rows, config, cache_dir=None, dictionary=None):
    """Run the full descriptor pipeline over a cohort.

    Surfaces failing any stage are collected into ``failures`` and their
    subjects dropped; the run aborts only when the failed fraction
    exceeds ``config.max_failure_fraction``. Pass a pre-trained
    ``dictionary`` to skip vocabulary training (e.g. encoding a test set
    against a training-set vocabulary).
    """
    t_start = time.monotonic()
    stats = {"cache_hits": 0, "eigensolves": 0, "surfaces": 0}

    def one_surface(row, tag):
        return compute_surface_signature(
            row.paths[tag],
            config.eigenpairs,
            config.level,
            cache_dir=cache_dir,
            label=f"{row.subject_id}:{tag}",
        )

    jobs = [(row, tag) for row in manifest_rows for tag in SURFACE_TAGS]
    results = {}
    failures = []

    def run_one(job):
        row, tag = job
        try:
            return job, one_surface(row, tag), None
        except (SurfwaveError, OSError) as exc:
            return job, None, SurfaceFailure(
                row.subject_id, tag, "signature", str(exc)
            )

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(run_one, jobs))
    else:
        outcomes = [run_one(job) for job in jobs]

    for (row, tag), result, failure in outcomes:  # merged in manifest order
        stats["surfaces"] += 1
        if failure is not None:
            failures.append(failure)
            logger.warning(
                "surface %s:%s failed: %s",
                failure.subject_id, failure.tag, failure.message,
            )
            continue
        sgws, meta, hit = result
        stats["cache_hits"] += int(hit)
        stats["eigensolves"] += int(not hit)
        results[(row.subject_id, tag)] = (sgws, meta)

    if len(failures) > config.max_failure_fraction * len(jobs):
        raise DataError(
            f"{len(failures)}/{len(jobs)} surfaces failed, above the "
            f"configured abort fraction {config.max_failure_fraction}"
        )

    failed_subjects = {f.subject_id for f in failures}
    usable_rows = [r for r in manifest_rows if r.subject_id not in failed_subjects]
    if not usable_rows:
        raise DataError("no subject survived the signature stage")

    if dictionary is None:
        if config.dictionary_subjects is None:
            training_rows = usable_rows
        else:
            wanted = set(config.dictionary_subjects)
            training_rows = [r for r in usable_rows if r.subject_id in wanted]
            if not wanted.issubset({r.subject_id for r in usable_rows}):
                missing = wanted - {r.subject_id for r in usable_rows}
                raise DataError(
                    f"dictionary_subjects not in usable manifest: {sorted(missing)}"
                )
        training = [
            results[(row.subject_id, tag)][0]
            for row in training_rows
            for tag in SURFACE_TAGS
        ]
        dictionary = build_dictionary(training, config.vocab_size, config.dict_seed)
        stats["dictionary_trained"] = True
        stats["dictionary_subject_hash"] = hashlib.blake2b(
            ",".join(sorted(r.subject_id for r in training_rows)).encode(),
            digest_size=8,
        ).hexdigest()
    else:
        stats["dictionary_trained"] = False

    sigma = config.sigma
    if sigma == "auto":
        sigma = dictionary.sigma_auto
        if not sigma or sigma <= 0:
            raise DataError("dictionary carries no usable auto bandwidth")
    stats["sigma"] = float(sigma)

    columns = []
    subject_ids = []
    shapedna_cols = [] if config.shapedna_d else None
    for row in usable_rows:
        histograms = {}
        for tag in SURFACE_TAGS:
            sgws, meta = results[(row.subject_id, tag)]
            codes = soft_assign(sgws, dictionary, sigma)
            histograms[tag] = pool_histogram(
                codes,
                meta["mesh_area"],
                normalize=config.area_normalize,
                surface_label=tag,
            )
        columns.append(
            assemble_waveletbrain(histograms, config.with_differences)
        )
        if shapedna_cols is not None:
            shapedna_cols.append(
                np.concatenate(
                    [
                        _shapedna_from_meta(
                            results[(row.subject_id, tag)][1], config.shapedna_d
                        )
                        for tag in SURFACE_TAGS
                    ]
                )
            )
        subject_ids.append(row.subject_id)

    matrix = WaveletBrainMatrix(
        columns=np.column_stack(columns),
        block_layout=block_layout(config.with_differences),
        subject_ids=subject_ids,
    )
    stats["wall_seconds"] = time.monotonic() - t_start
    return PipelineResult(
        matrix=matrix,
        dictionary=dictionary,
        shapedna=None if shapedna_cols is None else np.column_stack(shapedna_cols),
        failures=failures,
        stats=stats,
    )


# ---------------------------------------------------------------------------
# Tabular and report I/O


def write_features_csv(path, subject_ids, features_by_row):
    """RFC-4180 feature table: header ``subject_id,feat_0,...``, one row
    per subject. ``features_by_row`` is (n_subjects, n_features)."""
    features_by_row = np.asarray(features_by_row)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["subject_id"] + [f"feat_{i}" for i in range(features_by_row.shape[1])]
        )
        for sid, row in zip(subject_ids, features_by_row):
            writer.writerow([sid] + [repr(float(x)) for x in row])


def read_features_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "subject_id":
            raise DataError(f"{path}: expected a subject_id feature table")
        ids, rows = [], []
        for rec in reader:
            ids.append(rec[0])
            rows.append([float(x) for x in rec[1:]])
    if not ids:
        raise DataError(f"{path}: feature table is empty")
    return ids, np.asarray(rows, dtype=np.float64)


def write_scatter_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["subject_id", "true_age", "predicted_age"])
        for sid, (true, pred) in zip(report.subject_ids, report.scatter_rows):
            writer.writerow([sid, repr(float(true)), repr(float(pred))])


def write_distance_csv(path, distances):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["vertex_id", "distance"])
        for i, dv in enumerate(distances):
            writer.writerow([i, repr(float(dv))])


def canonical_json(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def emit_report(payload, path):
    """Write a canonical JSON report (UTF-8, sorted keys).

    The payload gains provenance fields; wall-clock data lives under the
    single ``timings`` key so determinism checks can drop it.
    """
    body = dict(payload)
    body.setdefault("tool_version", __version__)
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_json(body))
