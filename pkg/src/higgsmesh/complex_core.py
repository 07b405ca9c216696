"""Closed admissible simplicial 2-complexes with the unit equilateral metric.

A complex is a finite set of triangles over integer vertex ids; edges and all
incidence maps are derived. Every triangle carries the metric of a unit-side
equilateral triangle and every edge has length one, so refinement by midpoint
subdivision scales all lengths by powers of two and never changes angles.

Meshes are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Tuple

import numpy as np

from .errors import ComplexFormatError, HiggsmeshError

Edge = Tuple[int, int]
Triangle = Tuple[int, int, int]

SQRT3 = np.sqrt(3.0)


def canon_edge(u, v) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class ComplexMesh:
    """Simplicial 2-complex with derived incidence.

    vertices: sorted vertex ids.
    triangles: ordered vertex triples as declared (orientation per triangle).
    edges: sorted canonical (min, max) pairs derived from triangles.
    """

    vertices: Tuple[int, ...]
    triangles: Tuple[Triangle, ...]
    edges: Tuple[Edge, ...] = field(default=())
    edge_triangles: Dict[Edge, Tuple[int, ...]] = field(default_factory=dict)
    vertex_edges: Dict[int, Tuple[Edge, ...]] = field(default_factory=dict)
    vertex_triangles: Dict[int, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_triangles

    def triangle_edges(self, t_idx) -> Tuple[Edge, Edge, Edge]:
        a, b, c = self.triangles[t_idx]
        return (canon_edge(a, b), canon_edge(b, c), canon_edge(a, c))


def build_mesh(vertices, triangles) -> ComplexMesh:
    """Derive incidence and reject degenerate or duplicate triangles."""
    verts = tuple(sorted(set(vertices)))
    vset = set(verts)
    tris: List[Triangle] = []
    seen = set()
    for tri in triangles:
        a, b, c = tri
        if len({a, b, c}) != 3:
            raise ComplexFormatError(f"degenerate triangle {tri}: repeated vertex")
        for v in tri:
            if v not in vset:
                raise ComplexFormatError(f"triangle {tri} uses undeclared vertex {v}")
        key = frozenset(tri)
        if key in seen:
            raise ComplexFormatError(f"duplicate triangle {tri}")
        seen.add(key)
        tris.append((a, b, c))

    edge_tris: Dict[Edge, List[int]] = {}
    for i, (a, b, c) in enumerate(tris):
        for e in (canon_edge(a, b), canon_edge(b, c), canon_edge(a, c)):
            edge_tris.setdefault(e, []).append(i)
    edges = tuple(sorted(edge_tris))

    vertex_edges: Dict[int, List[Edge]] = {v: [] for v in verts}
    for e in edges:
        vertex_edges[e[0]].append(e)
        vertex_edges[e[1]].append(e)
    vertex_tris: Dict[int, List[int]] = {v: [] for v in verts}
    for i, tri in enumerate(tris):
        for v in tri:
            vertex_tris[v].append(i)

    return ComplexMesh(
        vertices=verts,
        triangles=tuple(tris),
        edges=edges,
        edge_triangles={e: tuple(ts) for e, ts in edge_tris.items()},
        vertex_edges={v: tuple(es) for v, es in vertex_edges.items()},
        vertex_triangles={v: tuple(ts) for v, ts in vertex_tris.items()},
    )


def parse_complex(text: str) -> ComplexMesh:
    """Parse the line-oriented complex format.

    Records: ``v <id>`` declares a vertex, ``t <a> <b> <c>`` a triangle,
    ``#`` starts a comment. Vertices must be declared before use.
    """
    vertices: List[int] = []
    declared = set()
    triangles: List[Triangle] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                if len(parts) != 2:
                    raise ComplexFormatError("vertex record needs one id", lineno)
                vid = int(parts[1])
                if vid < 0:
                    raise ComplexFormatError("vertex ids are unsigned", lineno)
                if vid in declared:
                    raise ComplexFormatError(f"duplicate vertex id {vid}", lineno)
                declared.add(vid)
                vertices.append(vid)
            elif tag == "t":
                if len(parts) != 4:
                    raise ComplexFormatError("triangle record needs three ids", lineno)
                tri = tuple(int(p) for p in parts[1:])
                for v in tri:
                    if v not in declared:
                        raise ComplexFormatError(
                            f"triangle uses undeclared vertex {v}", lineno
                        )
                triangles.append(tri)
            else:
                raise ComplexFormatError(f"unknown record type {tag!r}", lineno)
        except ValueError:
            raise ComplexFormatError(f"malformed integer in {line!r}", lineno)
    try:
        return build_mesh(vertices, triangles)
    except ComplexFormatError:
        raise
    except HiggsmeshError as exc:
        raise ComplexFormatError(str(exc))


def format_complex(mesh: ComplexMesh) -> str:
    lines = [f"v {v}" for v in mesh.vertices]
    lines += [f"t {a} {b} {c}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AdmissibilityReport:
    passed: bool
    failures: Tuple[Tuple[str, str], ...]

    def by_condition(self, name):
        return [w for c, w in self.failures if c == name]


def validate_admissible(mesh: ComplexMesh) -> AdmissibilityReport:
    """Check the four closed-admissible-complex conditions.

    Failures are report entries (condition, witness), never exceptions.
    """
    failures: List[Tuple[str, str]] = []

    for v in mesh.vertices:
        if not mesh.vertex_triangles.get(v):
            failures.append(("dimensional_homogeneity", f"vertex {v} lies in no triangle"))

    for e in mesh.edges:
        k = len(mesh.edge_triangles[e])
        if k < 2:
            failures.append(("no_boundary", f"edge {e} lies in {k} triangle(s)"))

    for v in mesh.vertices:
        tris = mesh.vertex_triangles.get(v, ())
        if len(tris) <= 1:
            continue
        # Triangle-adjacency graph at v: arcs are shared edges incident to v.
        adj = {t: set() for t in tris}
        by_edge: Dict[Edge, List[int]] = {}
        for t in tris:
            for e in mesh.triangle_edges(t):
                if v in e:
                    by_edge.setdefault(e, []).append(t)
        for ts in by_edge.values():
            for i in range(len(ts)):
                for j in range(i + 1, len(ts)):
                    adj[ts[i]].add(ts[j])
                    adj[ts[j]].add(ts[i])
        seen = {tris[0]}
        stack = [tris[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(tris):
            failures.append(("local_chainability", f"triangle wheel at vertex {v} is disconnected"))

    if mesh.vertices:
        seen = {mesh.vertices[0]}
        stack = [mesh.vertices[0]]
        nbrs: Dict[int, List[int]] = {v: [] for v in mesh.vertices}
        for u, w in mesh.edges:
            nbrs[u].append(w)
            nbrs[w].append(u)
        while stack:
            for nb in nbrs[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != mesh.n_vertices:
            missing = sorted(set(mesh.vertices) - seen)[:4]
            failures.append(("connected", f"complex is disconnected (e.g. vertices {missing})"))

    return AdmissibilityReport(passed=not failures, failures=tuple(failures))


@dataclass(frozen=True)
class LinkGraph:
    """Link of a vertex: one node per incident edge, one unit-weight arc per
    incident triangle corner."""

    vertex: int
    nodes: Tuple[int, ...]  # opposite endpoints of the incident edges
    arcs: Tuple[Tuple[int, int, int], ...]  # (node, node, triangle index)

    @property
    def n_nodes(self):
        return len(self.nodes)

    def components(self) -> List[List[int]]:
        nbrs = {n: [] for n in self.nodes}
        for a, b, _ in self.arcs:
            nbrs[a].append(b)
            nbrs[b].append(a)
        out, seen = [], set()
        for start in self.nodes:
            if start in seen:
                continue
            comp, stack = [start], [start]
            seen.add(start)
            while stack:
                for nb in nbrs[stack.pop()]:
                    if nb not in seen:
                        seen.add(nb)
                        comp.append(nb)
                        stack.append(nb)
            out.append(sorted(comp))
        return out

    def cycle_basis(self) -> List[List[int]]:
        """Fundamental cycles (as node sequences) of a spanning forest."""
        nbrs = {n: [] for n in self.nodes}
        for idx, (a, b, _) in enumerate(self.arcs):
            nbrs[a].append((b, idx))
            nbrs[b].append((a, idx))
        parent: Dict[int, Tuple[int, int]] = {}
        tree_arcs = set()
        seen = set()
        for root in self.nodes:
            if root in seen:
                continue
            seen.add(root)
            queue = [root]
            while queue:
                cur = queue.pop(0)
                for nb, idx in sorted(nbrs[cur]):
                    if nb not in seen:
                        seen.add(nb)
                        parent[nb] = (cur, idx)
                        tree_arcs.add(idx)
                        queue.append(nb)

        def path_to_root(n):
            path = [n]
            while path[-1] in parent:
                path.append(parent[path[-1]][0])
            return path

        cycles = []
        for idx, (a, b, _) in enumerate(self.arcs):
            if idx in tree_arcs:
                continue
            pa, pb = path_to_root(a), path_to_root(b)
            sa, sb = set(pa), set(pb)
            meet = next(n for n in pa if n in sb)
            cyc = pa[: pa.index(meet) + 1] + list(reversed(pb[: pb.index(meet)]))
            cycles.append(cyc)
        return cycles


def vertex_link(mesh: ComplexMesh, v) -> LinkGraph:
    """Link graph at v; for an interior manifold vertex this is one cycle."""
    if v not in mesh.vertex_triangles:
        raise HiggsmeshError(f"unknown vertex {v}")
    nodes = tuple(sorted(e[0] if e[1] == v else e[1] for e in mesh.vertex_edges[v]))
    arcs = []
    for t in mesh.vertex_triangles[v]:
        others = [x for x in mesh.triangles[t] if x != v]
        arcs.append((min(others), max(others), t))
    return LinkGraph(vertex=v, nodes=nodes, arcs=tuple(arcs))


@dataclass(frozen=True)
class LinkSpectrum:
    eigenvalues: Tuple[float, ...]  # full spectrum, ascending
    lambda_comb: float  # smallest positive eigenvalue over components
    n_components: int


def link_spectrum(link: LinkGraph, zero_tol=1e-12) -> LinkSpectrum:
    """Spectrum of the unit-weight graph Laplacian of the link.

    Computed per connected component; lambda_comb is the minimum over
    components of the smallest positive eigenvalue.
    """
    if not link.nodes:
        raise HiggsmeshError(f"empty link at vertex {link.vertex}")
    comps = link.components()
    all_eigs: List[float] = []
    lam = np.inf
    for comp in comps:
        index = {n: i for i, n in enumerate(comp)}
        n = len(comp)
        lap = np.zeros((n, n))
        for a, b, _ in link.arcs:
            if a in index and b in index:
                i, j = index[a], index[b]
                lap[i, j] -= 1.0
                lap[j, i] -= 1.0
                lap[i, i] += 1.0
                lap[j, j] += 1.0
        eigs = np.linalg.eigvalsh(lap)
        all_eigs.extend(eigs.tolist())
        positive = eigs[eigs > max(zero_tol, 1e-10 * max(abs(eigs[-1]), 1.0))]
        if positive.size:
            lam = min(lam, float(positive[0]))
    if not np.isfinite(lam):
        raise HiggsmeshError(f"link at vertex {link.vertex} has no positive eigenvalue")
    return LinkSpectrum(
        eigenvalues=tuple(sorted(all_eigs)),
        lambda_comb=lam,
        n_components=len(comps),
    )


# --- refinement ---------------------------------------------------------

# A refined-vertex position on the base complex is one of
#   ("vertex", v)
#   ("edge", (p, q), s)      s in (0,1) along the canonical p < q orientation
#   ("face", t_idx, (b0, b1, b2))   barycentric in stored vertex order
# with all parameters exact dyadic Fractions.


@dataclass(frozen=True)
class RefinedMesh:
    base: ComplexMesh
    level: int
    mesh: ComplexMesh
    vertex_cell: Dict[int, tuple]
    base_triangle_of: Tuple[int, ...]  # refined triangle index -> base index
    position_index: Dict[tuple, int]
    # canonical edge of the previous level -> its midpoint vertex here
    parent_midpoints: Dict[Edge, int] = field(default_factory=dict)

    @property
    def side_length(self):
        return 0.5 ** self.level

    def vertex_at(self, position):
        return self.position_index[position]

    def cell_of(self, vertex):
        return self.vertex_cell[vertex]

    def barycentric_in(self, vertex, base_t) -> Tuple[Fraction, ...]:
        """Barycentric coordinates of a refined vertex inside base triangle
        base_t (the vertex must lie in its closure)."""
        tri = self.base.triangles[base_t]
        kind = self.vertex_cell[vertex]
        bary = [Fraction(0)] * 3
        if kind[0] == "vertex":
            bary[tri.index(kind[1])] = Fraction(1)
        elif kind[0] == "edge":
            (p, q), s = kind[1], kind[2]
            bary[tri.index(p)] = 1 - s
            bary[tri.index(q)] = s
        else:
            t_idx, b = kind[1], kind[2]
            if t_idx != base_t:
                raise HiggsmeshError(
                    f"vertex {vertex} lies in base triangle {t_idx}, not {base_t}"
                )
            bary = list(b)
        return tuple(bary)

    def provenance(self, vertex) -> Tuple[int, Tuple[Fraction, ...]]:
        """(base triangle, barycentric position) with the lowest-index
        incident base triangle as representative."""
        kind = self.vertex_cell[vertex]
        if kind[0] == "face":
            return kind[1], kind[2]
        if kind[0] == "vertex":
            t = min(self.base.vertex_triangles[kind[1]])
        else:
            t = min(self.base.edge_triangles[kind[1]])
        return t, self.barycentric_in(vertex, t)

    def points_on_base_edge(self, e: Edge) -> List[Tuple[Fraction, int]]:
        """(s, vertex) samples on base edge e, ascending, endpoints included."""
        p, q = e
        out = [(Fraction(0), self.position_index[("vertex", p)]),
               (Fraction(1), self.position_index[("vertex", q)])]
        denom = 2 ** self.level
        for j in range(1, denom):
            s = Fraction(j, denom)
            out.append((s, self.position_index[("edge", e, s)]))
        out.sort()
        return out

    def path_along_base_edge(self, p, q) -> List[Tuple[int, int]]:
        """Oriented refined edges from base vertex p to base vertex q."""
        e = canon_edge(p, q)
        pts = [v for _, v in self.points_on_base_edge(e)]
        if p != e[0]:
            pts = pts[::-1]
        return list(zip(pts[:-1], pts[1:]))


def _as_bary(refined: "RefinedMesh", cache, vertex, base_t):
    key = (vertex, base_t)
    if key not in cache:
        cache[key] = refined.barycentric_in(vertex, base_t)
    return cache[key]


def refine_once(current: RefinedMesh) -> RefinedMesh:
    mesh = current.mesh
    base = current.base
    cells = dict(current.vertex_cell)
    positions = dict(current.position_index)
    next_id = max(mesh.vertices) + 1

    midpoint: Dict[Edge, int] = {}
    bary_cache: Dict[tuple, Tuple[Fraction, ...]] = {}

    def classify_midpoint(x, y, base_t):
        cx, cy = cells[x], cells[y]
        # Shared base edge, if any: midpoint stays on it.
        ex = {cx[1]} if cx[0] == "edge" else None
        if cx[0] == "vertex":
            ex = {e for e in base.vertex_edges[cx[1]]}
        ey = {cy[1]} if cy[0] == "edge" else None
        if cy[0] == "vertex":
            ey = {e for e in base.vertex_edges[cy[1]]}
        if ex and ey:
            shared = ex & ey
            if shared:
                e = min(shared)
                sx = _edge_param(cx, e)
                sy = _edge_param(cy, e)
                if sx is not None and sy is not None:
                    s = (sx + sy) / 2
                    return ("edge", e, s)
        bx = _as_bary(current, bary_cache, x, base_t)
        by = _as_bary(current, bary_cache, y, base_t)
        b = tuple((u + v) / 2 for u, v in zip(bx, by))
        return ("face", base_t, b)

    def _edge_param(cell, e):
        if cell[0] == "vertex":
            if cell[1] == e[0]:
                return Fraction(0)
            if cell[1] == e[1]:
                return Fraction(1)
            return None
        if cell[0] == "edge" and cell[1] == e:
            return cell[2]
        return None

    new_tris: List[Triangle] = []
    new_parent: List[int] = []
    for t_idx, (a, b, c) in enumerate(mesh.triangles):
        base_t = current.base_triangle_of[t_idx]
        mids = {}
        for (x, y) in ((a, b), (b, c), (a, c)):
            e = canon_edge(x, y)
            if e not in midpoint:
                pos = classify_midpoint(x, y, base_t)
                if pos in positions:
                    midpoint[e] = positions[pos]
                else:
                    vid = next_id
                    next_id += 1
                    midpoint[e] = vid
                    cells[vid] = pos
                    positions[pos] = vid
            mids[e] = midpoint[e]
        mab = mids[canon_edge(a, b)]
        mbc = mids[canon_edge(b, c)]
        mac = mids[canon_edge(a, c)]
        for child in ((a, mab, mac), (mab, b, mbc), (mac, mbc, c), (mab, mbc, mac)):
            new_tris.append(child)
            new_parent.append(base_t)

    new_mesh = build_mesh(list(cells.keys()), new_tris)
    return RefinedMesh(
        base=base,
        level=current.level + 1,
        mesh=new_mesh,
        vertex_cell=cells,
        base_triangle_of=tuple(new_parent),
        position_index=positions,
        parent_midpoints=dict(midpoint),
    )


def subdivide(mesh: ComplexMesh, k: int) -> RefinedMesh:
    """Midpoint 4-to-1 subdivision applied k times, with provenance."""
    if k < 0:
        raise HiggsmeshError("refinement level must be non-negative")
    cells = {v: ("vertex", v) for v in mesh.vertices}
    refined = RefinedMesh(
        base=mesh,
        level=0,
        mesh=mesh,
        vertex_cell=cells,
        base_triangle_of=tuple(range(mesh.n_triangles)),
        position_index={pos: v for v, pos in cells.items()},
    )
    for _ in range(k):
        refined = refine_once(refined)
    return refined


def equilateral_xy(bary, side=1.0) -> np.ndarray:
    """Planar coordinates of a barycentric point of a unit-side equilateral
    triangle with corners (0,0), (1,0), (1/2, sqrt(3)/2)."""
    b0, b1, b2 = (float(x) for x in bary)
    return side * np.array([b1 + 0.5 * b2, (SQRT3 / 2.0) * b2])


def distance_to_corner(bary, corner_index, side=1.0) -> float:
    """Distance from a barycentric point to one corner of an equilateral
    triangle of the given side length."""
    corners = [(Fraction(1), Fraction(0), Fraction(0)),
               (Fraction(0), Fraction(1), Fraction(0)),
               (Fraction(0), Fraction(0), Fraction(1))]
    p = equilateral_xy(bary, side)
    q = equilateral_xy(corners[corner_index], side)
    return float(np.linalg.norm(p - q))
