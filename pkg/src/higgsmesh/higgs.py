"""Unitary connection and Higgs field extracted from an equivariant map.

Every refined vertex carries the frame g = u^{1/2} of its value, which is a
unitary frame for the harmonic metric on the flat bundle. The transport of
the flat connection over an oriented edge, expressed in these frames, is

    U(x -> y) = g_y^{-1} M(x -> y)^{-1} g_x,

with M the matrix cocycle of the deck words. Products of U around closed
quotient loops therefore telescope to frame-conjugates of the representation
(exactly, for exactly flat cocycles). The right polar split U = W P with P
positive definite at the start vertex separates the unitary connection link
W = e^{-A} from the Higgs increment P = e^{-psi}: under a unitary change of
vertex frames both factors transform covariantly, so all residuals built
from them are exactly gauge invariant, while a non-unitary gauge mixes the
factors and is detected by the co-closedness residual.

Per-triangle 1-form samples (two components per triangle, on the edges
leaving its first vertex) and the file dump follow from the edge data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import polar as _polar

from .complex_core import Edge, RefinedMesh, canon_edge, equilateral_xy
from .errors import HiggsmeshError, LogBranchError, NumericError
from .group_rep import Representation
from .harmonic import COTAN_WEIGHT, EquivariantMap, _TwistedGraph
from .symmetric_space import (
    frobenius,
    hermitian_part,
    invsqrtm_pd,
    logm_pd,
    sqrtm_pd,
)

TRIANGLE_AREA_FACTOR = np.sqrt(3.0) / 4.0  # unit-side equilateral area

# Radius of the base-vertex weighting zones: half the star inradius, fixed
# across refinements so delta-weighted norms are comparable.
VERTEX_ZONE_RADIUS = np.sqrt(3.0) / 4.0


def _logm_unitary(w, context=""):
    """Principal logarithm of a unitary matrix via eigendecomposition.

    Eigenvalues close to the negative real axis sit on the branch cut and
    are reported; refining the mesh shrinks the link rotations.
    """
    vals, vecs = np.linalg.eig(w)
    if np.any(np.abs(np.angle(vals)) > np.pi - 1e-6):
        raise LogBranchError(
            f"unitary logarithm near branch cut{context}: eigenvalues {vals}"
        )
    logw = vecs @ np.diag(np.log(vals.astype(complex))) @ np.linalg.inv(vecs)
    return 0.5 * (logw - np.conj(logw.T))


@dataclass
class HiggsPair:
    """Edge transports of the extracted flat connection with their polar
    splits, plus the vertex frames that define the gauge."""

    refined: RefinedMesh
    rep: Representation
    graph: _TwistedGraph = field(repr=False)
    frames: np.ndarray  # (V, r, r), vertex frames g
    transports: np.ndarray  # (E, r, r), U along canonical edge orientation
    unitary: np.ndarray  # (E, r, r), W factors
    higgs: np.ndarray  # (E, r, r), psi samples at the start vertex
    _connection: Optional[np.ndarray] = field(default=None, repr=False)
    _edge_index: Dict[Edge, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._edge_index:
            self._edge_index = {e: i for i, e in enumerate(self.graph.edges)}

    @property
    def rank(self):
        return self.rep.rank

    @property
    def mesh_size(self):
        return self.refined.side_length

    def edge_ids(self):
        return self.graph.edges

    def transport(self, x, y) -> np.ndarray:
        """Parallel transport of the full flat connection along x -> y."""
        e = canon_edge(x, y)
        u = self.transports[self._edge_index[e]]
        return u if (x, y) == e else np.linalg.inv(u)

    def unitary_link(self, x, y) -> np.ndarray:
        e = canon_edge(x, y)
        w = self.unitary[self._edge_index[e]]
        return w if (x, y) == e else np.conj(w.T)

    def higgs_sample(self, x, y) -> np.ndarray:
        """Higgs 1-form sample of the oriented edge, at the frame of x."""
        e = canon_edge(x, y)
        i = self._edge_index[e]
        if (x, y) == e:
            return self.higgs[i]
        w = self.unitary[i]
        return -(w @ self.higgs[i] @ np.conj(w.T))

    def connection_sample(self, x, y) -> np.ndarray:
        """Unitary-connection 1-form sample A with W = e^{-A}."""
        if self._connection is None:
            conn = np.empty_like(self.unitary)
            for i, e in enumerate(self.graph.edges):
                conn[i] = -_logm_unitary(self.unitary[i], f" on edge {e}")
            self._connection = conn
        e = canon_edge(x, y)
        i = self._edge_index[e]
        if (x, y) == e:
            return self._connection[i]
        w = self.unitary[i]
        return -(w @ self._connection[i] @ np.conj(w.T))

    def edge_form(self, x, y) -> np.ndarray:
        """Full flat 1-form sample B with transport(x, y) = e^{-B}."""
        u = self.transport(x, y)
        vals, vecs = np.linalg.eig(u)
        if np.any(np.abs(np.angle(vals)) > np.pi - 1e-6):
            raise LogBranchError(
                f"edge form near branch cut on ({x}, {y}): eigenvalues {vals}"
            )
        return -(vecs @ np.diag(np.log(vals.astype(complex))) @ np.linalg.inv(vecs))

    def triangle_samples(self, t_idx) -> Tuple[np.ndarray, ...]:
        """(A1, A2, psi1, psi2) on the edges v0 -> v1 and v0 -> v2."""
        v0, v1, v2 = self.refined.mesh.triangles[t_idx]
        return (
            self.connection_sample(v0, v1),
            self.connection_sample(v0, v2),
            self.higgs_sample(v0, v1),
            self.higgs_sample(v0, v2),
        )


def extract_higgs_pair(emap: EquivariantMap) -> HiggsPair:
    """Split the flat edge transports of the map into unitary and Higgs parts.

    The vertex frames are the Hermitian square roots of the map values; the
    per-edge transport in these frames is polar-decomposed, U = W e^{-psi}.
    For the identity map both parts vanish; traces vanish identically
    because all determinants are one.
    """
    g = emap.graph
    r = emap.rep.rank
    frames = sqrtm_pd(emap.values)
    inv_frames = invsqrtm_pd(emap.values)
    ne = len(g.edges)
    transports = np.empty((ne, r, r), dtype=complex)
    unitary = np.empty_like(transports)
    higgs = np.empty_like(transports)
    minv = np.linalg.inv(g.emat)
    for i in range(ne):
        u = inv_frames[g.ev[i]] @ minv[i] @ frames[g.eu[i]]
        w, p = _polar(u, side="right")
        transports[i] = u
        unitary[i] = w
        higgs[i] = -logm_pd(hermitian_part(p))
    return HiggsPair(
        refined=emap.refined,
        rep=emap.rep,
        graph=g,
        frames=frames,
        transports=transports,
        unitary=unitary,
        higgs=higgs,
    )


@dataclass(frozen=True)
class HitchinResiduals:
    """Max and L2 aggregates of the three equation residual densities."""

    mu1_max: float
    mu1_l2: float
    mu2_max: float
    mu2_l2: float
    mu3_max: float
    mu3_l2: float

    def aggregates(self) -> Tuple[float, float, float]:
        return (self.mu1_l2, self.mu2_l2, self.mu3_l2)


def hitchin_residuals(pair: HiggsPair) -> HitchinResiduals:
    """Discrete residual densities of the three Higgs-pair equations.

    Per refined triangle, the curvature of the unitary links plus the Higgs
    wedge gives the first equation and the covariant circulation of the
    Higgs samples the second; per interior refined vertex, the weighted
    divergence of the outgoing Higgs samples gives the third. Samples are
    divided by the cell measure, so densities of a smooth solution contract
    with the mesh size. All three are built from covariant composites and
    are exactly invariant under unitary vertex gauges.
    """
    refined = pair.refined
    mesh = refined.mesh
    area = TRIANGLE_AREA_FACTOR * pair.mesh_size ** 2

    mu1_sq, mu2_sq = [], []
    mu1_max = mu2_max = 0.0
    for t_idx, (x, y, z) in enumerate(mesh.triangles):
        wxy = pair.unitary_link(x, y)
        wyz = pair.unitary_link(y, z)
        wzx = pair.unitary_link(z, x)
        plaquette = wzx @ wyz @ wxy
        f_sample = _logm_unitary(plaquette, f" in triangle {t_idx}")
        p1 = pair.higgs_sample(x, y)
        p2 = pair.higgs_sample(x, z)
        comm = p1 @ p2 - p2 @ p1
        mu1 = (f_sample - 0.5 * comm) / area
        n1 = float(frobenius(mu1))
        mu1_sq.append(area * n1 * n1)
        mu1_max = max(mu1_max, n1)

        t1 = pair.higgs_sample(x, y)
        t2 = np.conj(wxy.T) @ pair.higgs_sample(y, z) @ wxy
        wxz = wyz @ wxy
        t3 = np.conj(wxz.T) @ pair.higgs_sample(z, x) @ wxz
        mu2 = (t1 + t2 + t3) / area
        n2 = float(frobenius(mu2))
        mu2_sq.append(area * n2 * n2)
        mu2_max = max(mu2_max, n2)

    g = pair.graph
    mu3_sq = []
    mu3_max = 0.0
    tri_counts = {
        v: len(mesh.vertex_triangles[v]) for v in mesh.vertices
    }
    for v in mesh.vertices:
        if refined.vertex_cell[v][0] == "vertex":
            continue
        dual_area = tri_counts[v] * area / 3.0
        total = np.zeros((pair.rank, pair.rank), dtype=complex)
        for e in mesh.vertex_edges[v]:
            other = e[0] if e[1] == v else e[1]
            w = len(mesh.edge_triangles[e]) * COTAN_WEIGHT
            total = total + w * pair.higgs_sample(v, other)
        mu3 = total / dual_area
        n3 = float(frobenius(mu3))
        mu3_sq.append(dual_area * n3 * n3)
        mu3_max = max(mu3_max, n3)

    return HitchinResiduals(
        mu1_max=mu1_max,
        mu1_l2=float(np.sqrt(np.sum(mu1_sq))),
        mu2_max=mu2_max,
        mu2_l2=float(np.sqrt(np.sum(mu2_sq))),
        mu3_max=mu3_max,
        mu3_l2=float(np.sqrt(np.sum(mu3_sq))) if mu3_sq else 0.0,
    )


@dataclass(frozen=True)
class WeightedNorms:
    delta: float
    l2_delta: float
    l2_1_delta: float
    per_vertex: Dict[int, float]  # squared l2 contribution per vertex zone
    far_contribution: float  # squared contribution away from all vertices


def _pointwise_form_norm_sq(s1, s2, h):
    """Squared pointwise norm of a constant 1-form from its two samples on
    unit-equilateral edge directions of length h (Gram-normalized)."""
    n1 = float(np.sum(np.abs(s1) ** 2))
    n2 = float(np.sum(np.abs(s2) ** 2))
    cross = float(np.real(np.sum(np.conj(s1) * s2)))
    return (4.0 / (3.0 * h * h)) * (n1 + n2 - cross)


def _triangle_zone(refined: RefinedMesh, t_idx):
    """(nearest base vertex or None, barycenter radius) of a refined triangle."""
    bt = refined.base_triangle_of[t_idx]
    tri = refined.mesh.triangles[t_idx]
    bary = [Fraction(0), Fraction(0), Fraction(0)]
    for v in tri:
        bv = refined.barycentric_in(v, bt)
        bary = [a + b / 3 for a, b in zip(bary, bv)]
    xy = equilateral_xy(bary)
    best_v, best_r = None, np.inf
    for i, corner in enumerate(refined.base.triangles[bt]):
        d = float(np.linalg.norm(xy - equilateral_xy(
            [Fraction(int(i == j)) for j in range(3)])))
        if d < best_r:
            best_v, best_r = corner, d
    return best_v, best_r


def weighted_norm(pair: HiggsPair, delta: float) -> WeightedNorms:
    """Radially weighted L2 and first-order norms of the Higgs field.

    Each refined triangle within half a star inradius of its nearest base
    vertex is weighted by r^{-delta} at its barycenter radius; elsewhere the
    weight is one. The first-order term compares the normal components of
    the Higgs and connection forms across adjacent refined triangles in the
    frame of the shared edge.
    """
    refined = pair.refined
    mesh = refined.mesh
    h = pair.mesh_size
    area = TRIANGLE_AREA_FACTOR * h * h

    per_vertex: Dict[int, float] = {}
    far = 0.0
    l2_sq = 0.0
    tri_weight = np.empty(len(mesh.triangles))
    for t_idx, tri in enumerate(mesh.triangles):
        v0, v1, v2 = tri
        p1 = pair.higgs_sample(v0, v1)
        p2 = pair.higgs_sample(v0, v2)
        zone_v, r = _triangle_zone(refined, t_idx)
        weight = r ** (-delta) if r <= VERTEX_ZONE_RADIUS else 1.0
        tri_weight[t_idx] = weight
        contrib = area * weight * _pointwise_form_norm_sq(p1, p2, h)
        l2_sq += contrib
        if r <= VERTEX_ZONE_RADIUS:
            per_vertex[zone_v] = per_vertex.get(zone_v, 0.0) + contrib
        else:
            far += contrib

    # First finite differences across adjacent refined triangles: the shared
    # edge fixes a common frame (its start vertex) and a common tangential
    # direction; the difference of the reconstructed normal components is a
    # one-sided derivative sample.
    d1_sq = 0.0
    sqrt3 = np.sqrt(3.0)
    for e in mesh.edges:
        tris = mesh.edge_triangles[e]
        if len(tris) < 2:
            continue
        x, y = e
        tang_psi = pair.higgs_sample(x, y)
        tang_a = pair.connection_sample(x, y)
        normals = []
        for t_idx in tris:
            apex = next(v for v in mesh.triangles[t_idx] if v not in e)
            npsi = (2.0 * pair.higgs_sample(x, apex) - tang_psi) / (sqrt3 * h)
            na = (2.0 * pair.connection_sample(x, apex) - tang_a) / (sqrt3 * h)
            normals.append((npsi, na))
        dist = h / sqrt3
        wedge = tri_weight[tris[0]]
        measure = 2.0 * area / 3.0
        for i in range(1, len(tris)):
            dpsi = (normals[i][0] - normals[0][0]) / dist
            da = (normals[i][1] - normals[0][1]) / dist
            d1_sq += measure * wedge * float(
                np.sum(np.abs(dpsi) ** 2) + np.sum(np.abs(da) ** 2)
            )

    return WeightedNorms(
        delta=float(delta),
        l2_delta=float(np.sqrt(l2_sq)),
        l2_1_delta=float(np.sqrt(l2_sq + d1_sq)),
        per_vertex=per_vertex,
        far_contribution=far,
    )


def apply_gauge(pair: HiggsPair, gauge) -> HiggsPair:
    """Change of vertex frames g -> g v: transports become v_y^{-1} U v_x.

    For unitary v the polar factors transform componentwise; a non-unitary
    gauge mixes them, which is visible in the co-closedness residual.
    """
    g = pair.graph
    nv = len(g.vertices)
    r = pair.rank
    if isinstance(gauge, dict):
        arr = np.empty((nv, r, r), dtype=complex)
        for v, i in g.vindex.items():
            arr[i] = gauge[v]
    else:
        arr = np.asarray(gauge, dtype=complex)
        if arr.shape != (nv, r, r):
            raise HiggsmeshError(f"gauge field must have shape {(nv, r, r)}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("gauge field has non-finite entries")
    dets = np.linalg.det(arr)
    worst = float(np.max(np.abs(dets - 1.0)))
    if worst > 1e-8:
        raise NumericError(f"gauge determinant drifts by {worst:.3e}")

    inv = np.linalg.inv(arr)
    ne = len(g.edges)
    transports = np.empty_like(pair.transports)
    unitary = np.empty_like(pair.unitary)
    higgs = np.empty_like(pair.higgs)
    for i in range(ne):
        u = inv[g.ev[i]] @ pair.transports[i] @ arr[g.eu[i]]
        w, p = _polar(u, side="right")
        transports[i] = u
        unitary[i] = w
        higgs[i] = -logm_pd(hermitian_part(p))
    return HiggsPair(
        refined=pair.refined,
        rep=pair.rep,
        graph=g,
        frames=pair.frames @ arr,
        transports=transports,
        unitary=unitary,
        higgs=higgs,
    )


def trivialize_flat(pair: HiggsPair, basepoint=None) -> np.ndarray:
    """Gauge field that trivializes all spanning-tree edge transports.

    Breadth-first over sorted vertex ids from the basepoint; the basepoint
    gauge is the identity. After apply_gauge every tree transport is the
    identity and the non-tree transports carry the discrete holonomy.
    """
    g = pair.graph
    mesh = pair.refined.mesh
    if basepoint is None:
        basepoint = pair.rep.presentation.basepoint
    if basepoint not in g.vindex:
        raise HiggsmeshError(f"basepoint {basepoint} is not a refined vertex")
    r = pair.rank
    nv = len(g.vertices)
    gauge = np.empty((nv, r, r), dtype=complex)
    seen = {basepoint}
    gauge[g.vindex[basepoint]] = np.eye(r)
    nbrs = {v: [] for v in mesh.vertices}
    for (a, b) in mesh.edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    queue = [basepoint]
    while queue:
        cur = queue.pop(0)
        for nb in sorted(nbrs[cur]):
            if nb not in seen:
                seen.add(nb)
                gauge[g.vindex[nb]] = pair.transport(cur, nb) @ gauge[g.vindex[cur]]
                queue.append(nb)
    if len(seen) != nv:
        raise HiggsmeshError("refined mesh is disconnected")
    return gauge


def format_higgs_pair(pair: HiggsPair) -> str:
    """Per-triangle dump: `T <id>` then A1, A2, psi1, psi2 row-major."""
    lines = []
    for t_idx in range(len(pair.refined.mesh.triangles)):
        lines.append(f"T {t_idx}")
        for mat in pair.triangle_samples(t_idx):
            for row in mat:
                lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    return "\n".join(lines) + "\n"
