import numpy as np
import pytest
from scipy.spatial import ConvexHull

from surfwave.laplacian import cotangent_system, eigendecompose
from surfwave.mesh import TriangleMesh
from surfwave.synth import SynthSpec, bump_sphere, icosphere

# regular tetrahedron with unit edges
TETRA_VERTICES = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / (2 * np.sqrt(2))
TETRA_TRIANGLES = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


def make_tetra():
    return TriangleMesh(TETRA_VERTICES.copy(), TETRA_TRIANGLES.copy(), label="tetra")


def random_rotation(seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def sphere_hull_mesh(n_vertices, seed=0):
    """Closed convex triangulation with exactly n_vertices (hull of random
    unit vectors; every point is a hull vertex)."""
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((n_vertices, 3))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    hull = ConvexHull(points)
    return TriangleMesh(points, hull.simplices, label=f"hull{n_vertices}")


@pytest.fixture
def tetra():
    return make_tetra()


@pytest.fixture(scope="session")
def icosphere2():
    return icosphere(2)


@pytest.fixture(scope="session")
def icosphere4():
    return icosphere(4)


@pytest.fixture(scope="session")
def icosphere4_eigs(icosphere4):
    return eigendecompose(cotangent_system(icosphere4), 16, method="sparse")


@pytest.fixture(scope="session")
def icosphere2_eigs(icosphere2):
    return eigendecompose(cotangent_system(icosphere2), 40)


@pytest.fixture(scope="session")
def hull50():
    return sphere_hull_mesh(50, seed=3)


@pytest.fixture(scope="session")
def hull50_eigs_full(hull50):
    return eigendecompose(cotangent_system(hull50), hull50.n_vertices)


def small_bump_sphere(seed=1, amplitude=0.08, subdivision=2):
    return bump_sphere(
        SynthSpec(
            family="bump_sphere",
            subdivision=subdivision,
            amplitude=amplitude,
            n_bumps=20,
            bump_width=0.3,
            seed=seed,
        )
    )


@pytest.fixture(scope="session")
def bump2():
    return small_bump_sphere()


@pytest.fixture(scope="session")
def bump2_eigs(bump2):
    return eigendecompose(cotangent_system(bump2), 30)
