"""Cotangent Laplace-Beltrami discretization and its eigensystem.

The weak-form pencil is ``C xi = lambda A xi`` with the symmetric
stiffness matrix ``C = D - W`` built from half-cotangent edge weights
``w_ij = (cot(alpha_ij) + cot(beta_ij)) / 2`` and the barycentric lumped
mass ``a_i`` (one third of the area incident to vertex i). Keeping the
area on the mass side leaves C symmetric, which both the solver and the
squared-eigenfunction signatures downstream rely on.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from .errors import ConvergenceError, DegenerateMeshError, DimensionError

# |cot| beyond this means an angle numerically at 0 or pi
COT_LIMIT = 1e8

DENSE_SOLVE_LIMIT = 512

# fixed ARPACK start vector seed: decompositions must be reproducible
_ARPACK_SEED = 0x5EED


class LaplacianSystem:
    """Stiffness matrix, lumped mass diagonal, and total area of one mesh."""

    def __init__(self, stiffness, mass, mesh_area):
        self.stiffness = stiffness.tocsr()
        mass = np.asarray(mass, dtype=np.float64)
        mass.setflags(write=False)
        self.mass = mass
        self.mesh_area = float(mesh_area)

    @property
    def n_vertices(self):
        return self.mass.shape[0]

    def mass_matrix(self):
        """The diagonal mass as a sparse matrix."""
        return sparse.diags(self.mass)


class EigenSystem:
    """Ascending eigenvalues and mass-orthonormal eigenvectors.

    Column ``l`` of ``eigenvectors`` solves ``C xi = eigenvalues[l] A xi``
    with ``xi^T A xi = 1``. Signs are fixed so the entry of largest
    magnitude in each column is positive.
    """

    def __init__(self, eigenvalues, eigenvectors, mesh_area):
        eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
        eigenvectors = np.asarray(eigenvectors, dtype=np.float64)
        eigenvalues.setflags(write=False)
        eigenvectors.setflags(write=False)
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.k = eigenvalues.shape[0]
        self.mesh_area = float(mesh_area)

    @property
    def n_vertices(self):
        return self.eigenvectors.shape[0]


def cotangent_system(mesh):
    """Assemble the cotangent stiffness and barycentric mass of a mesh."""
    v = mesh.vertices
    t = mesh.triangles
    m = mesh.n_vertices

    # corner c is opposite edge (a, b); cot(c) = (ca . cb) / |ca x cb|
    cots = np.empty((t.shape[0], 3))
    for corner, (a, b) in enumerate([(1, 2), (2, 0), (0, 1)]):
        ea = v[t[:, a]] - v[t[:, corner]]
        eb = v[t[:, b]] - v[t[:, corner]]
        cross = np.linalg.norm(np.cross(ea, eb), axis=1)
        dot = np.einsum("ij,ij->i", ea, eb)
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, corner] = dot / cross
    bad = ~np.isfinite(cots) | (np.abs(cots) > COT_LIMIT)
    if np.any(bad):
        tri_id = int(np.nonzero(bad.any(axis=1))[0][0])
        raise DegenerateMeshError(
            f"near-degenerate angle in triangle {tri_id} of mesh {mesh.label!r}"
        )

    rows = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    cols = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
    half_cot = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    w = sparse.coo_matrix(
        (
            np.concatenate([half_cot, half_cot]),
            (np.concatenate([rows, cols]), np.concatenate([cols, rows])),
        ),
        shape=(m, m),
    ).tocsr()
    degrees = np.asarray(w.sum(axis=1)).ravel()
    stiffness = sparse.diags(degrees) - w

    areas = mesh.triangle_areas()
    mass = np.bincount(
        t.reshape(-1), weights=np.repeat(areas / 3.0, 3), minlength=m
    )
    return LaplacianSystem(stiffness, mass, areas.sum())


def _flip_signs(vectors):
    idx = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigendecompose(system, k, method="auto"):
    """Solve for the k smallest eigenpairs of the Laplacian pencil.

    ``method`` is ``"dense"`` (LAPACK on the full matrices), ``"sparse"``
    (shift-invert ARPACK at sigma=0), or ``"auto"`` which goes dense for
    meshes up to 512 vertices. Output is deterministic up to rotations
    within numerically degenerate eigenspaces: the ARPACK start vector is
    fixed and eigenvector signs are normalized.
    """
    m = system.n_vertices
    if not 1 <= k <= m:
        raise DimensionError(f"k must be in [1, {m}], got {k}")
    if method == "auto":
        method = "dense" if m <= DENSE_SOLVE_LIMIT else "sparse"
    if method == "sparse" and k >= m:
        method = "dense"  # ARPACK requires k < m

    if method == "dense":
        c = system.stiffness.toarray()
        a = np.diag(system.mass)
        values, vectors = scipy.linalg.eigh(c, a)
        values, vectors = values[:k], vectors[:, :k]
    elif method == "sparse":
        c = system.stiffness.tocsc()
        a = sparse.diags(system.mass).tocsc()
        v0 = np.random.default_rng(_ARPACK_SEED).standard_normal(m)
        try:
            try:
                values, vectors = splinalg.eigsh(
                    c, k=k, M=a, sigma=0.0, which="LM", v0=v0
                )
            except (RuntimeError, splinalg.ArpackError):
                # singular stiffness at sigma=0 (closed surface): nudge the
                # factorized matrix positive definite
                eps = 1e-10 * system.mass.sum() / m
                values, vectors = splinalg.eigsh(
                    c + eps * sparse.identity(m, format="csc"),
                    k=k, M=a, sigma=0.0, which="LM", v0=v0,
                )
        except splinalg.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"ARPACK converged only {len(exc.eigenvalues)}/{k} pairs",
                iterations=10 * m,
                residual=float("nan"),
            ) from exc
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")

    # renormalize in the mass inner product and fix signs
    norms = np.sqrt(np.einsum("ij,i,ij->j", vectors, system.mass, vectors))
    vectors = _flip_signs(vectors / norms)
    return EigenSystem(values, vectors, system.mesh_area)


def mht(eigsys, signal, mass):
    """Forward harmonic transform: coefficients of a vertex signal.

    Uses the mass-weighted inner product ``xi^T A f``, the one consistent
    with A-orthonormal eigenvectors (exact round trip when k = m).
    """
    signal = np.asarray(signal, dtype=np.float64)
    mass = np.asarray(mass, dtype=np.float64)
    if signal.shape != (eigsys.n_vertices,):
        raise DimensionError(
            f"signal length {signal.shape} != vertex count {eigsys.n_vertices}"
        )
    if mass.shape != (eigsys.n_vertices,):
        raise DimensionError("mass diagonal length mismatch")
    return eigsys.eigenvectors.T @ (mass * signal)


def imht(eigsys, coefficients):
    """Inverse harmonic transform: vertex signal from coefficients."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != (eigsys.k,):
        raise DimensionError(
            f"expected {eigsys.k} coefficients, got {coefficients.shape}"
        )
    return eigsys.eigenvectors @ coefficients


def shape_dna(eigsys, d):
    """Area-normalized ascending spectrum with the trivial mode dropped.

    Returns ``(lambda_2, ..., lambda_{d+1}) * mesh_area``; multiplying by
    the area makes the vector invariant to uniform scaling.
    """
    if not 1 <= d < eigsys.k:
        raise DimensionError(f"d must be in [1, {eigsys.k}), got {d}")
    return eigsys.eigenvalues[1 : d + 1] * eigsys.mesh_area
