"""Built-in fixture complexes and exactly-flat representations.

All representations here are induced from matrix cocycles on the edges of
the fixture: a tree-path product conjugates each non-tree edge value into a
generator image, so every relator evaluates to the identity exactly (up to
float rounding). The cocycles count crossings of cut circles on the 3 x 3
torus grid, which keeps all values in a commuting family per handle.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, Tuple

import numpy as np

from .complex_core import ComplexMesh, Edge, build_mesh, canon_edge
from .errors import HiggsmeshError
from .group_rep import Presentation, Representation, make_representation

# Oriented winding dicts map canonical edges to integers; the reverse
# orientation negates.


def _grid_windings(vid: Callable[[int, int], int], windings: Dict[str, Dict[Edge, int]],
                   row_key: str, col_key: str):
    """Record cut crossings for one 3x3 torus grid.

    The row cut sits between row 2 and row 0, the column cut between column
    2 and column 0; an oriented step that wraps 2 -> 0 crosses positively.
    """
    for i in range(3):
        for j in range(3):
            u = vid(i, j)
            steps = (
                (vid((i + 1) % 3, j), int(i == 2), 0),
                (vid(i, (j + 1) % 3), 0, int(j == 2)),
                (vid((i + 1) % 3, (j + 1) % 3), int(i == 2), int(j == 2)),
            )
            for v, wrow, wcol in steps:
                e = canon_edge(u, v)
                sign = 1 if (u, v) == e else -1
                for key, w in ((row_key, wrow), (col_key, wcol)):
                    prev = windings.setdefault(key, {}).get(e)
                    val = sign * w
                    if prev is not None and prev != val:
                        raise HiggsmeshError(f"inconsistent winding on shared edge {e}")
                    windings[key][e] = val


def _torus_triangles(vid):
    tris = []
    for i in range(3):
        for j in range(3):
            a = vid(i, j)
            b = vid((i + 1) % 3, j)
            c = vid((i + 1) % 3, (j + 1) % 3)
            d = vid(i, (j + 1) % 3)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return tris


def torus_fixture():
    """3 x 3 triangulated torus: 9 vertices, 27 edges, 18 triangles."""
    vid = lambda i, j: 3 * i + j
    tris = _torus_triangles(vid)
    windings: Dict[str, Dict[Edge, int]] = {}
    _grid_windings(vid, windings, "row", "col")
    return build_mesh(range(9), tris), windings


def tetrahedron_fixture():
    """Boundary of the tetrahedron: the minimal sphere triangulation."""
    tris = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return build_mesh(range(4), tris), {}


def glued_tori_fixture():
    """Two 3 x 3 tori identified along a common 3-edge cycle (row 0).

    The three glued edges acquire four incident triangles each; the complex
    is admissible but not a manifold.
    """
    vid_a = lambda i, j: 3 * i + j
    # Torus B shares row 0 with torus A; its rows 1 and 2 are fresh ids.
    vid_b = lambda i, j: j if i == 0 else 9 + 3 * (i - 1) + j
    tris = _torus_triangles(vid_a) + _torus_triangles(vid_b)
    windings: Dict[str, Dict[Edge, int]] = {}
    _grid_windings(vid_a, windings, "rowA", "colA")
    _grid_windings(vid_b, windings, "rowB", "colB")
    return build_mesh(range(15), tris), windings


def genus2_fixture():
    """Genus-2 surface: connected sum of two 3 x 3 tori.

    One triangle is removed from each torus and the boundary 3-cycles are
    identified. V=15, E=51, T=34, Euler characteristic -2.
    """
    vid_a = lambda i, j: 3 * i + j
    shared = {(1, 1): vid_a(1, 1), (2, 1): vid_a(2, 1), (2, 2): vid_a(2, 2)}
    fresh = {}

    def vid_b(i, j):
        if (i, j) in shared:
            return shared[(i, j)]
        if (i, j) not in fresh:
            fresh[(i, j)] = 9 + len(fresh)
        return fresh[(i, j)]

    removed = (vid_a(1, 1), vid_a(2, 1), vid_a(2, 2))
    tris_a = [t for t in _torus_triangles(vid_a) if set(t) != set(removed)]
    tris_b = [t for t in _torus_triangles(vid_b)
              if t != (vid_b(1, 1), vid_b(2, 1), vid_b(2, 2))]
    if len(tris_a) != 17 or len(tris_b) != 17:
        raise HiggsmeshError("genus-2 fixture construction lost the wrong triangle")
    windings: Dict[str, Dict[Edge, int]] = {}
    _grid_windings(vid_a, windings, "rowA", "colA")
    _grid_windings(vid_b, windings, "rowB", "colB")
    return build_mesh(range(15), tris_a + tris_b), windings


FIXTURE_BUILDERS = {
    "torus": torus_fixture,
    "tetrahedron": tetrahedron_fixture,
    "glued_tori": glued_tori_fixture,
    "genus2": genus2_fixture,
}


def fixture_mesh(name: str) -> ComplexMesh:
    if name not in FIXTURE_BUILDERS:
        raise HiggsmeshError(
            f"unknown fixture {name!r}; choose from {sorted(FIXTURE_BUILDERS)}"
        )
    return FIXTURE_BUILDERS[name]()[0]


# --- cocycle-induced representations --------------------------------------


def cocycle_representation(pres: Presentation, z: Dict[Edge, np.ndarray],
                           rank: int, tolerance=1e-9) -> Representation:
    """Representation induced by an exactly flat edge cocycle.

    Tree-path values conjugate each non-tree edge value to the basepoint:
    rho(g_e) = Z(p) z(p -> q) Z(q)^{-1} for the generator edge (p, q), with
    Z the ordered cocycle product along the tree path from the basepoint.
    """
    eye = np.eye(rank, dtype=complex)

    def z_oriented(p, q):
        e = canon_edge(p, q)
        val = z.get(e)
        if val is None:
            return eye
        return val if (p, q) == e else np.linalg.inv(val)

    zpath: Dict[int, np.ndarray] = {pres.basepoint: eye}

    def Z(v):
        if v not in zpath:
            par, _ = pres.parent[v]
            zpath[v] = Z(par) @ z_oriented(par, v)
        return zpath[v]

    images = np.zeros((pres.n_generators, rank, rank), dtype=complex)
    for gi, (p, q) in enumerate(pres.generators):
        images[gi] = Z(p) @ z_oriented(p, q) @ np.linalg.inv(Z(q))
    return make_representation(pres, images, tolerance)


def _power_table(mat: np.ndarray, inv: np.ndarray):
    eye = np.eye(mat.shape[0], dtype=complex)
    return {-1: inv, 0: eye, 1: mat}


def _winding_cocycle(windings, contributions) -> Dict[Edge, np.ndarray]:
    """Edge cocycle from winding counts: z(e) = prod of base^w over keys."""
    z: Dict[Edge, np.ndarray] = {}
    edges = set()
    for key, _, _ in contributions:
        edges |= set(windings[key])
    for e in sorted(edges):
        val = None
        for key, mat, inv in contributions:
            w = windings[key].get(e, 0)
            term = _power_table(mat, inv)[w]
            val = term if val is None else val @ term
        z[e] = val
    return z


def trivial_representation(pres: Presentation, rank=2) -> Representation:
    images = np.tile(np.eye(rank, dtype=complex), (pres.n_generators, 1, 1))
    return make_representation(pres, images, tolerance=1e-12)


def torus_abelian_representation(pres: Presentation, s=math.e) -> Representation:
    """Column-winding cocycle with values diag(s, 1/s); the row loop maps to I."""
    _, windings = torus_fixture()
    a = np.diag([s, 1.0 / s]).astype(complex)
    ai = np.diag([1.0 / s, s]).astype(complex)
    return cocycle_representation(pres, _winding_cocycle(windings, [("col", a, ai)]), 2)


def torus_unitary_representation(pres: Presentation, alpha=0.7, beta=0.4):
    """Commuting diagonal SU(2) images on both torus cycles."""
    _, windings = torus_fixture()
    r = np.diag([np.exp(1j * alpha), np.exp(-1j * alpha)])
    s = np.diag([np.exp(1j * beta), np.exp(-1j * beta)])
    z = _winding_cocycle(
        windings,
        [("col", r, np.conj(r)), ("row", s, np.conj(s))],
    )
    return cocycle_representation(pres, z, 2)


def torus_abelian_rank3_representation(pres: Presentation, s=math.e):
    """Rank-3 column-winding cocycle diag(s^2, 1/s, 1/s).

    The spectrum is asymmetric, so traces distinguish a generator from its
    inverse; this pins down orientation conventions in round trips.
    """
    _, windings = torus_fixture()
    a = np.diag([s * s, 1.0 / s, 1.0 / s]).astype(complex)
    ai = np.diag([1.0 / (s * s), s, s]).astype(complex)
    return cocycle_representation(pres, _winding_cocycle(windings, [("col", a, ai)]), 3)


def genus2_free_representation(pres: Presentation) -> Representation:
    """Irreducible unimodular pair on the genus-2 fixture.

    The two handle cocycles map onto the unipotent pair [[1,1],[0,1]] and
    [[1,0],[1,1]], which generates an irreducible subgroup of SL(2,Z); all
    relators hold exactly in integer arithmetic.
    """
    _, windings = genus2_fixture()
    x = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex)
    xi = np.array([[1.0, -1.0], [0.0, 1.0]], dtype=complex)
    y = np.array([[1.0, 0.0], [1.0, 1.0]], dtype=complex)
    yi = np.array([[1.0, 0.0], [-1.0, 1.0]], dtype=complex)
    z = _winding_cocycle(windings, [("rowA", x, xi), ("rowB", y, yi)])
    return cocycle_representation(pres, z, 2)


def glued_tori_abelian_representation(pres: Presentation, s=math.e):
    """Common diagonal cocycle on the row cuts of both glued tori.

    Row cuts cross only edges interior to their own torus, never the glued
    circle, so the combined cocycle is flat on every triangle.
    """
    _, windings = glued_tori_fixture()
    a = np.diag([s, 1.0 / s]).astype(complex)
    ai = np.diag([1.0 / s, s]).astype(complex)
    z = _winding_cocycle(windings, [("rowA", a, ai), ("rowB", a, ai)])
    return cocycle_representation(pres, z, 2)


FIXTURE_REPRESENTATIONS = {
    "trivial": trivial_representation,
    "torus_abelian": torus_abelian_representation,
    "torus_unitary": torus_unitary_representation,
    "torus_abelian_r3": torus_abelian_rank3_representation,
    "genus2_free": genus2_free_representation,
    "glued_abelian": glued_tori_abelian_representation,
}


def fixture_representation(name: str, pres: Presentation) -> Representation:
    if name not in FIXTURE_REPRESENTATIONS:
        raise HiggsmeshError(
            f"unknown representation fixture {name!r}; "
            f"choose from {sorted(FIXTURE_REPRESENTATIONS)}"
        )
    return FIXTURE_REPRESENTATIONS[name](pres)
