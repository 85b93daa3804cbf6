"""Synthetic surfaces with known spectral ground truth.

The icosphere has the analytic Laplace-Beltrami spectrum l*(l+1) of the
unit sphere, which anchors the solver tests. Bump spheres add seeded
Gaussian lobes in geodesic angle and serve as a desk-scale stand-in for
cohorts of folded surfaces.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .mesh import TriangleMesh, write_mesh

MAX_SUBDIVISION = 7  # memory guard: level 7 already has 163842 vertices

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

ICOSAHEDRON_VERTICES = np.array(
    [
        [-1.0, _PHI, 0.0],
        [1.0, _PHI, 0.0],
        [-1.0, -_PHI, 0.0],
        [1.0, -_PHI, 0.0],
        [0.0, -1.0, _PHI],
        [0.0, 1.0, _PHI],
        [0.0, -1.0, -_PHI],
        [0.0, 1.0, -_PHI],
        [_PHI, 0.0, -1.0],
        [_PHI, 0.0, 1.0],
        [-_PHI, 0.0, -1.0],
        [-_PHI, 0.0, 1.0],
    ]
)

ICOSAHEDRON_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def icosphere(subdivision):
    """Unit sphere triangulation with m = 10 * 4**subdivision + 2 vertices."""
    if not 0 <= subdivision <= MAX_SUBDIVISION:
        raise DomainError(
            f"subdivision must be in [0, {MAX_SUBDIVISION}], got {subdivision}"
        )
    vertices = list(ICOSAHEDRON_VERTICES / np.linalg.norm(ICOSAHEDRON_VERTICES[0]))
    faces = ICOSAHEDRON_FACES

    for _ in range(subdivision):
        midpoint = {}

        def midpoint_index(i, j):
            key = (i, j) if i < j else (j, i)
            idx = midpoint.get(key)
            if idx is None:
                p = vertices[i] + vertices[j]
                vertices.append(p / np.linalg.norm(p))
                idx = len(vertices) - 1
                midpoint[key] = idx
            return idx

        new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)
        for n, (a, b, c) in enumerate(faces):
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            new_faces[4 * n : 4 * n + 4] = [
                [a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca],
            ]
        faces = new_faces

    v = np.asarray(vertices)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v, faces, label=f"icosphere{subdivision}")


@dataclass
class SynthSpec:
    """Parameters for one synthetic surface."""

    family: str = "icosphere"
    subdivision: int = 4
    amplitude: float = 0.0
    n_bumps: int = 0
    bump_width: float = 0.3
    seed: int = 0


def bump_sphere(spec):
    """Icosphere with seeded radial Gaussian bumps.

    The displacement at a vertex v is
    ``amplitude * sum_b exp(-angle(v, c_b)^2 / (2 * width^2))`` with bump
    centers drawn uniformly on the sphere. ``amplitude`` must stay below
    1 so the surface cannot fold through the origin.
    """
    if spec.family != "bump_sphere":
        raise DomainError(f"expected family 'bump_sphere', got {spec.family!r}")
    if not 0.0 <= spec.amplitude < 1.0:
        raise DomainError(f"amplitude must be in [0, 1), got {spec.amplitude}")
    if spec.amplitude > 0 and spec.n_bumps < 1:
        raise DomainError("bump_sphere with positive amplitude needs n_bumps >= 1")
    if spec.bump_width <= 0:
        raise DomainError(f"bump_width must be positive, got {spec.bump_width}")

    base = icosphere(spec.subdivision)
    label = (
        f"bump_sphere(sub={spec.subdivision},eps={spec.amplitude:g},"
        f"n={spec.n_bumps},w={spec.bump_width:g},seed={spec.seed})"
    )
    if spec.amplitude == 0.0 or spec.n_bumps == 0:
        return base.with_label(label)

    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.n_bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    cosines = np.clip(base.vertices @ centers.T, -1.0, 1.0)
    angles = np.arccos(cosines)
    radius = 1.0 + spec.amplitude * np.exp(
        -(angles**2) / (2.0 * spec.bump_width**2)
    ).sum(axis=1)
    return TriangleMesh(base.vertices * radius[:, None], base.triangles, label=label)


# ---------------------------------------------------------------------------
# Cohort generation

SURFACE_TAGS = ("LW", "LG", "RW", "RG")


def _draw(rng, value, integer=False):
    """Sample a scalar parameter given either a constant or a [lo, hi] range."""
    if isinstance(value, (list, tuple)):
        lo, hi = value
        if integer:
            return int(rng.integers(int(lo), int(hi) + 1))
        return float(rng.uniform(lo, hi))
    return int(value) if integer else float(value)


def generate_cohort(config, out_dir):
    """Write a cohort of bump-sphere subjects plus a manifest.csv.

    ``config`` keys:

    - ``seed``: master RNG seed (every derived quantity is reproducible).
    - ``subdivision``: icosphere level for all surfaces.
    - ``groups``: list of ``{label, size, amplitude, n_bumps, bump_width}``;
      ``amplitude``, ``n_bumps`` and ``bump_width`` accept either a constant
      or a ``[lo, hi]`` range sampled per subject.
    - ``age``: optional ``{intercept, amplitude_slope, noise_sd}`` making the
      age proxy a linear function of the subject's amplitude plus Gaussian
      noise.
    - ``sex_pattern``: optional list cycled over subjects (default M/F).

    Each subject gets four surfaces (LW, LG, RW, RG) sharing the subject's
    parameters but with independent bump layouts. Returns the manifest path.
    """
    seed = int(config.get("seed", 0))
    subdivision = int(config.get("subdivision", 3))
    groups = config.get("groups")
    if not groups:
        raise DomainError("cohort config needs a non-empty 'groups' list")
    age_rule = config.get("age")
    sex_pattern = config.get("sex_pattern", ["M", "F"])

    rng = np.random.default_rng(seed)
    mesh_dir = os.path.join(out_dir, "meshes")
    os.makedirs(mesh_dir, exist_ok=True)

    rows = []
    subject_index = 0
    for group in groups:
        for _ in range(int(group["size"])):
            sid = f"s{subject_index:04d}"
            amplitude = _draw(rng, group.get("amplitude", 0.05))
            n_bumps = _draw(rng, group.get("n_bumps", 30), integer=True)
            width = _draw(rng, group.get("bump_width", 0.3))
            row = {
                "subject_id": sid,
                "diagnosis": str(group.get("label", "NA")),
                "sex": sex_pattern[subject_index % len(sex_pattern)],
            }
            if age_rule is not None:
                age = (
                    float(age_rule.get("intercept", 60.0))
                    + float(age_rule.get("amplitude_slope", 0.0)) * amplitude
                    + float(age_rule.get("noise_sd", 0.0)) * rng.standard_normal()
                )
                row["age"] = f"{age:.6f}"
            else:
                row["age"] = "NA"
            for tag in SURFACE_TAGS:
                surf_seed = int(rng.integers(0, 2**31 - 1))
                spec = SynthSpec(
                    family="bump_sphere",
                    subdivision=subdivision,
                    amplitude=amplitude,
                    n_bumps=n_bumps,
                    bump_width=width,
                    seed=surf_seed,
                )
                rel = os.path.join("meshes", f"{sid}_{tag}.off")
                write_mesh(bump_sphere(spec), os.path.join(out_dir, rel), fmt="off")
                row[f"path_{tag}"] = rel
            rows.append(row)
            subject_index += 1

    manifest_path = os.path.join(out_dir, "manifest.csv")
    fieldnames = [
        "subject_id", "path_LW", "path_LG", "path_RW", "path_RG",
        "diagnosis", "age", "sex",
    ]
    with open(manifest_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return manifest_path
