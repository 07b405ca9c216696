"""Equivariant discrete harmonic maps by twisted geodesic relaxation.

The map is stored on the quotient: one symmetric-space point per refined
vertex plus a group-word cocycle on oriented refined edges. A lift over a
deck word w evaluates to act(rho(w), value), so equivariance holds
structurally. The cocycle extends the base edge-path presentation to the
refined mesh: tree edges carry the empty word, a non-tree base edge carries
its generator on the segment entering its larger endpoint, and interior
refined edges carry frame-offset differences inside their base triangle.
Boundary words of refined triangles reduce to conjugates of base relators,
so the induced matrix cocycle is exactly flat for exact representations.

The twisted Dirichlet energy uses cotangent weights, which for unit
equilateral triangles are 1/(2 sqrt 3) per incident corner; relaxation is
Gauss-Seidel replacement of each vertex value by the weighted Karcher mean
of its pulled-back neighbours, which never increases the energy on a
non-positively curved target.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .complex_core import (
    Edge,
    RefinedMesh,
    canon_edge,
    link_spectrum,
    refine_once,
    vertex_link,
)
from .errors import HiggsmeshError
from .group_rep import Presentation, Representation, Word, concat_words, reduce_word, word_inverse
from .symmetric_space import (
    exp_at,
    expm_herm,
    frobenius,
    hermitian_part,
    invsqrtm_pd,
    logm_pd,
    random_tangent,
    sqrtm_pd,
)

COTAN_WEIGHT = 1.0 / (2.0 * np.sqrt(3.0))


def _triangle_frame_offsets(pres: Presentation, tri) -> Dict[int, Word]:
    a, b, c = tri
    wab = pres.edge_word(a, b)
    return {a: (), b: wab, c: concat_words(wab, pres.edge_word(b, c))}


def refined_cocycle(refined: RefinedMesh, pres: Presentation) -> Dict[Edge, Word]:
    """Group word per canonical refined edge (reverse orientation inverts).

    Within each base triangle the word is a difference of frame offsets, so
    boundary words of refined triangles are trivial or conjugates of base
    relators; along a subdivided base edge only the segment into the larger
    endpoint carries the base letter.
    """
    base = refined.base
    mesh = refined.mesh
    offsets = [_triangle_frame_offsets(pres, tri) for tri in base.triangles]

    def base_edge_of(cell):
        return cell[1] if cell[0] == "edge" else None

    def shared_base_edge(cu, cv):
        if cu[0] == "face" or cv[0] == "face":
            return None
        if cu[0] == "vertex" and cv[0] == "vertex":
            e = canon_edge(cu[1], cv[1])
            return e if e in base.edge_triangles else None
        if cu[0] == "edge" and cv[0] == "edge":
            return cu[1] if cu[1] == cv[1] else None
        vert, edge = (cu[1], cv[1]) if cu[0] == "vertex" else (cv[1], cu[1])
        return edge if vert in edge else None

    def triangles_of(cell):
        if cell[0] == "vertex":
            return set(base.vertex_triangles[cell[1]])
        if cell[0] == "edge":
            return set(base.edge_triangles[cell[1]])
        return {cell[1]}

    def offset_in(cell, t_idx):
        off = offsets[t_idx]
        if cell[0] == "vertex":
            return off[cell[1]]
        if cell[0] == "edge":
            return off[cell[1][0]]
        return ()

    words: Dict[Edge, Word] = {}
    for (u, v) in mesh.edges:
        cu, cv = refined.vertex_cell[u], refined.vertex_cell[v]
        e = shared_base_edge(cu, cv)
        if e is not None:
            # Frame along the base edge: larger endpoint sits one letter away.
            def edge_offset(cell):
                if cell[0] == "vertex" and cell[1] == e[1]:
                    return pres.edge_word(e[0], e[1])
                return ()
            words[(u, v)] = concat_words(word_inverse(edge_offset(cu)), edge_offset(cv))
        else:
            common = triangles_of(cu) & triangles_of(cv)
            if len(common) != 1:
                raise HiggsmeshError(
                    f"refined edge ({u}, {v}) has no unique base triangle"
                )
            t_idx = common.pop()
            words[(u, v)] = concat_words(
                word_inverse(offset_in(cu, t_idx)), offset_in(cv, t_idx)
            )
    return words


class _TwistedGraph:
    """Array form of the refined mesh with its matrix cocycle."""

    def __init__(self, refined: RefinedMesh, rep: Representation):
        pres = rep.presentation
        if pres is None:
            raise HiggsmeshError("representation carries no presentation")
        self.refined = refined
        self.rep = rep
        self.words = refined_cocycle(refined, pres)

        mesh = refined.mesh
        self.vertices = mesh.vertices
        self.vindex = {v: i for i, v in enumerate(self.vertices)}
        self.edges = mesh.edges
        r = rep.rank

        self._matrix_cache: Dict[Word, np.ndarray] = {(): np.eye(r, dtype=complex)}

        ne = len(self.edges)
        self.eu = np.empty(ne, dtype=np.int64)
        self.ev = np.empty(ne, dtype=np.int64)
        self.ew = np.empty(ne, dtype=float)
        self.emat = np.empty((ne, r, r), dtype=complex)  # word matrix of u -> v
        self.etrivial = np.empty(ne, dtype=bool)
        for i, (u, v) in enumerate(self.edges):
            self.eu[i] = self.vindex[u]
            self.ev[i] = self.vindex[v]
            self.ew[i] = len(mesh.edge_triangles[(u, v)]) * COTAN_WEIGHT
            w = self.words[(u, v)]
            self.emat[i] = self.matrix_of_word(w)
            self.etrivial[i] = not w

        # Neighbour structure: pull matrices map the neighbour's value into
        # the centre vertex's frame.
        nv = len(self.vertices)
        counts = np.zeros(nv, dtype=np.int64)
        for i in range(ne):
            counts[self.eu[i]] += 1
            counts[self.ev[i]] += 1
        self.noffset = np.zeros(nv + 1, dtype=np.int64)
        np.cumsum(counts, out=self.noffset[1:])
        total = int(self.noffset[-1])
        self.nidx = np.empty(total, dtype=np.int64)
        self.nw = np.empty(total, dtype=float)
        self.nmat = np.empty((total, r, r), dtype=complex)
        self.ntrivial = np.empty(total, dtype=bool)
        cursor = self.noffset[:-1].copy()
        for i in range(ne):
            iu, iv = self.eu[i], self.ev[i]
            m = self.emat[i]
            # from u, neighbour v is seen through the u -> v word
            self.nidx[cursor[iu]] = iv
            self.nw[cursor[iu]] = self.ew[i]
            self.nmat[cursor[iu]] = m
            self.ntrivial[cursor[iu]] = self.etrivial[i]
            cursor[iu] += 1
            mi = np.linalg.inv(m)
            self.nidx[cursor[iv]] = iu
            self.nw[cursor[iv]] = self.ew[i]
            self.nmat[cursor[iv]] = mi
            self.ntrivial[cursor[iv]] = self.etrivial[i]
            cursor[iv] += 1
        self.total_weight = np.zeros(nv)
        np.add.at(self.total_weight, self.eu, self.ew)
        np.add.at(self.total_weight, self.ev, self.ew)

        # Greedy colouring in vertex-id order: same-colour vertices are never
        # adjacent, so updating a colour class simultaneously reproduces the
        # sequential sweep ordered by (colour, vertex id).
        colour = np.full(nv, -1, dtype=np.int64)
        for i in range(nv):
            lo, hi = self.noffset[i], self.noffset[i + 1]
            used = {colour[j] for j in self.nidx[lo:hi] if colour[j] >= 0}
            c = 0
            while c in used:
                c += 1
            colour[i] = c
        groups: Dict[Tuple[int, int], List[int]] = {}
        for i in range(nv):
            deg = int(self.noffset[i + 1] - self.noffset[i])
            if deg == 0:
                continue
            groups.setdefault((int(colour[i]), deg), []).append(i)
        self.sweep_groups = []
        for (c, deg) in sorted(groups):
            idx = np.array(groups[(c, deg)], dtype=np.int64)
            nbr = np.empty((len(idx), deg), dtype=np.int64)
            w = np.empty((len(idx), deg))
            mats = np.empty((len(idx), deg, r, r), dtype=complex)
            triv = True
            for row, i in enumerate(idx):
                lo = self.noffset[i]
                nbr[row] = self.nidx[lo:lo + deg]
                w[row] = self.nw[lo:lo + deg]
                mats[row] = self.nmat[lo:lo + deg]
                triv = triv and bool(self.ntrivial[lo:lo + deg].all())
            self.sweep_groups.append(
                (idx, nbr, w, mats if not triv else None)
            )

    def matrix_of_word(self, w: Word) -> np.ndarray:
        if w not in self._matrix_cache:
            self._matrix_cache[w] = self.rep.evaluate(w)
        return self._matrix_cache[w]

    def pulled_neighbours(self, i, values):
        lo, hi = self.noffset[i], self.noffset[i + 1]
        idx = self.nidx[lo:hi]
        vals = values[idx]
        mats = self.nmat[lo:hi]
        if self.ntrivial[lo:hi].all():
            return vals, self.nw[lo:hi]
        pulled = mats @ vals @ np.conj(np.swapaxes(mats, -1, -2))
        return hermitian_part(pulled), self.nw[lo:hi]

    def pulled_group(self, nbr, mats, values):
        vals = values[nbr]
        if mats is None:
            return vals
        return hermitian_part(mats @ vals @ np.conj(np.swapaxes(mats, -1, -2)))


@dataclass
class EquivariantMap:
    """Vertex values on the quotient refined mesh plus the edge cocycle.

    Lifts are produced on demand, so u(gamma x) = rho(gamma) . u(x) holds
    bit for bit by construction.
    """

    refined: RefinedMesh
    rep: Representation
    values: np.ndarray  # (n_vertices, r, r), ordered like refined.mesh.vertices
    cocycle: Dict[Edge, Word]
    graph: _TwistedGraph = field(repr=False, default=None)

    @property
    def presentation(self) -> Presentation:
        return self.rep.presentation

    def vertex_value(self, v) -> np.ndarray:
        return self.values[self.graph.vindex[v]]

    def cocycle_word(self, u, v) -> Word:
        e = canon_edge(u, v)
        w = self.cocycle[e]
        return w if (u, v) == e else word_inverse(w)

    def cocycle_matrix(self, u, v) -> np.ndarray:
        return self.graph.matrix_of_word(self.cocycle_word(u, v))

    def lift(self, v, word: Word) -> np.ndarray:
        """Value of the lift translated by the deck word."""
        g = self.graph.matrix_of_word(reduce_word(word))
        return g @ self.vertex_value(v) @ np.conj(g.T)

    def pulled_value(self, at_vertex, neighbour) -> np.ndarray:
        m = self.cocycle_matrix(at_vertex, neighbour)
        return hermitian_part(m @ self.vertex_value(neighbour) @ np.conj(m.T))

    def copy(self) -> "EquivariantMap":
        return EquivariantMap(self.refined, self.rep, self.values.copy(),
                              self.cocycle, self.graph)


def new_equivariant_map(refined: RefinedMesh, rep: Representation,
                        init="identity", seed=0) -> EquivariantMap:
    graph = _TwistedGraph(refined, rep)
    r = rep.rank
    nv = len(graph.vertices)
    if init == "identity":
        values = np.tile(np.eye(r, dtype=complex), (nv, 1, 1))
    elif init == "random":
        rng = np.random.default_rng(seed)
        eye = np.eye(r, dtype=complex)
        values = np.stack([exp_at(eye, random_tangent(rng, r, 1.0)) for _ in range(nv)])
    else:
        raise HiggsmeshError(f"unknown initialization {init!r}")
    return EquivariantMap(refined, rep, values, graph.words, graph)


def _edge_squared_distances(emap: EquivariantMap) -> np.ndarray:
    g = emap.graph
    vals = emap.values
    hu = vals[g.eu]
    hv = vals[g.ev]
    pulled = np.where(
        g.etrivial[:, None, None], hv,
        hermitian_part(g.emat @ hv @ np.conj(np.swapaxes(g.emat, -1, -2))),
    )
    si = invsqrtm_pd(hu)
    logs = logm_pd(hermitian_part(si @ pulled @ si))
    return np.sum(np.abs(logs) ** 2, axis=(-2, -1))


def assemble_energy(emap: EquivariantMap) -> float:
    """Twisted cotangent-weighted Dirichlet energy, summed in edge order."""
    if len(emap.graph.edges) == 0:
        return 0.0
    return float(np.sum(emap.graph.ew * _edge_squared_distances(emap)))


def _group_objective(x, pulled, w):
    """Batched local objectives: x (B,r,r), pulled (B,d,r,r), w (B,d).

    Returns (objectives (B,), logs (B,d,r,r)) with logs the tangent images
    of the pulled neighbours at x."""
    si = invsqrtm_pd(x)
    inner = hermitian_part(si[:, None] @ pulled @ si[:, None])
    logs = logm_pd(inner)
    obj = np.einsum("bd,bd->b", w, np.sum(np.abs(logs) ** 2, axis=(-2, -1)))
    return obj, logs


def _exp_batch(x, steps):
    s = sqrtm_pd(x)
    return hermitian_part(s @ expm_herm(hermitian_part(steps)) @ s)


def _group_karcher(cur, pulled, w, tol=1e-12, max_iter=60):
    """Batched warm-started Karcher means with a per-vertex descent guard.

    Returns (means, objectives at cur, movement norms)."""
    wsum = w.sum(axis=1)
    x = cur.copy()
    obj_x, logs = _group_objective(x, pulled, w)
    obj0 = obj_x.copy()
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        step = np.einsum("bd,bdij->bij", w, logs) / wsum[:, None, None]
        ns = frobenius(step)
        active = active & (ns > tol)
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        cand = _exp_batch(x[idx], step[idx])
        obj_c, logs_c = _group_objective(cand, pulled[idx], w[idx])
        improved = obj_c <= obj_x[idx]
        good = idx[improved]
        x[good] = cand[improved]
        obj_x[good] = obj_c[improved]
        logs[good] = logs_c[improved]
        active[idx[~improved]] = False
    si = invsqrtm_pd(cur)
    moves = frobenius(logm_pd(hermitian_part(si @ x @ si)))
    return x, obj0, moves


def relax_sweep(emap: EquivariantMap, omega=1.0) -> Tuple[float, float]:
    """One Gauss-Seidel pass over the colour classes of the refined mesh.

    Within a colour class no two vertices are adjacent, so the batched
    simultaneous update equals the sequential sweep ordered by colour then
    vertex id. Each value is replaced by the weighted Karcher mean of its
    pulled-back neighbours; with omega > 1 the geodesic step to the mean is
    over-relaxed, and an over-shot point is kept only when it does not
    increase the local objective (falling back to the plain mean), so the
    energy never increases and the fixed points are unchanged. Returns
    (energy after the sweep, max geodesic vertex movement).
    """
    g = emap.graph
    values = emap.values
    max_move = 0.0
    for idx, nbr, w, mats in g.sweep_groups:
        pulled = g.pulled_group(nbr, mats, values)
        cur = values[idx]
        new, obj_cur, moves = _group_karcher(cur, pulled, w)
        if omega != 1.0:
            si = invsqrtm_pd(cur)
            to_new = logm_pd(hermitian_part(si @ new @ si))
            cand = _exp_batch(cur, omega * to_new)
            obj_c, _ = _group_objective(cand, pulled, w)
            take = obj_c <= obj_cur
            new[take] = cand[take]
            moves = np.where(take, omega * moves, moves)
        values[idx] = new
        if len(moves):
            max_move = max(max_move, float(np.max(moves)))
    return assemble_energy(emap), max_move


def _sor_sweep(emap: EquivariantMap, omega) -> Tuple[float, float]:
    """Accelerated sweep: one over-relaxed tangent-averaging step per vertex.

    Shares its fixed points with relax_sweep (the step vanishes exactly at a
    Karcher mean). Each update keeps the over-shot point only if the local
    objective does not increase, falling back to the fully relaxed mean
    otherwise, so the energy trace stays non-increasing.
    """
    g = emap.graph
    values = emap.values
    max_move = 0.0
    for idx, nbr, w, mats in g.sweep_groups:
        pulled = g.pulled_group(nbr, mats, values)
        cur = values[idx]
        obj_cur, logs = _group_objective(cur, pulled, w)
        step = np.einsum("bd,bdij->bij", w, logs) / w.sum(axis=1)[:, None, None]
        ns = frobenius(step)
        new = cur.copy()
        moves = np.zeros(len(idx))

        cand = _exp_batch(cur, omega * step)
        obj_c, _ = _group_objective(cand, pulled, w)
        take = (obj_c <= obj_cur) & (ns > 0)
        new[take] = cand[take]
        moves[take] = omega * ns[take]

        rest = np.nonzero(~take & (ns > 0))[0]
        if len(rest):
            mean, _, mean_moves = _group_karcher(cur[rest], pulled[rest], w[rest])
            new[rest] = mean
            moves[rest] = mean_moves
        values[idx] = new
        if len(moves):
            max_move = max(max_move, float(np.max(moves)))
    return assemble_energy(emap), max_move


def gradient_norms(emap: EquivariantMap) -> np.ndarray:
    """Per-vertex energy gradient in distance units: the norm of the
    weighted tangent mean of the pulled-back neighbours."""
    g = emap.graph
    out = np.zeros(len(g.vertices))
    for i in range(len(g.vertices)):
        pulled, w = g.pulled_neighbours(i, emap.values)
        if pulled.shape[0] == 0:
            continue
        si = invsqrtm_pd(emap.values[i])
        logs = logm_pd(hermitian_part(si @ pulled @ si))
        step = np.einsum("n,nij->ij", w, logs) / w.sum()
        out[i] = float(frobenius(step))
    return out


@dataclass
class SolveDiagnostics:
    energy_trace: Tuple[float, ...]
    final_gradient_norm: float
    sweeps: int
    converged: bool
    final_movement: float
    balancing: Dict[Edge, float]
    wall_time: float


def solve_harmonic(refined: RefinedMesh, rep: Representation, max_sweeps=500,
                   tol=1e-10, seed=0, init="identity",
                   start: Optional[EquivariantMap] = None, accel="auto"):
    """Relax until the max per-sweep vertex movement drops below tol.

    accel chooses the sweep: "auto" runs guarded geodesic over-relaxation
    with a factor tuned from the observed contraction rate (deterministic
    for fixed inputs), a float fixes the factor, and None or 1.0 runs plain
    Karcher-mean Gauss-Seidel. Returns (EquivariantMap, SolveDiagnostics);
    on non-convergence the best iterate is returned with converged=False.
    """
    if tol <= 0:
        raise HiggsmeshError("solver tolerance must be positive")
    t0 = time.perf_counter()
    if start is not None:
        emap = start
    else:
        emap = new_equivariant_map(refined, rep, init=init, seed=seed)
    trace = [assemble_energy(emap)]
    converged = False
    move = np.inf
    sweeps = 0
    moves: List[float] = []
    auto = accel == "auto"
    omega = 1.0 if auto or accel is None else float(accel)
    for sweeps in range(1, max_sweeps + 1):
        if auto and sweeps > 12 and sweeps % 20 == 13 and len(moves) >= 9:
            # Estimate the plain-sweep contraction radius through the current
            # factor and reapply the classical optimum 2 / (1 + sqrt(1 - rho)).
            ratios = [moves[-i] / moves[-i - 1] for i in range(1, 9)
                      if moves[-i - 1] > 0]
            if ratios:
                robs = min(float(np.exp(np.mean(np.log(ratios)))), 0.999999)
                if robs > max(0.0, (omega - 1.0) ** 2):
                    mu2 = ((robs + omega - 1.0) / (omega * np.sqrt(robs))) ** 2
                    mu2 = min(mu2, 0.999999)
                    omega = min(1.95, max(omega, 2.0 / (1.0 + np.sqrt(1.0 - mu2))))
                elif robs > 0.95:
                    omega = min(1.95, omega + 0.5 * (1.95 - omega))
        if omega > 1.0:
            energy, move = _sor_sweep(emap, omega)
        else:
            energy, move = relax_sweep(emap)
        trace.append(energy)
        moves.append(move)
        if move <= tol:
            converged = True
            break
    balancing = {}
    if refined.level >= 1:
        balancing = balancing_residual(emap)
    diag = SolveDiagnostics(
        energy_trace=tuple(trace),
        final_gradient_norm=float(np.max(gradient_norms(emap))) if len(trace) else 0.0,
        sweeps=sweeps,
        converged=converged,
        final_movement=float(move if np.isfinite(move) else 0.0),
        balancing=balancing,
        wall_time=time.perf_counter() - t0,
    )
    return emap, diag


def prolong(emap: EquivariantMap) -> EquivariantMap:
    """Interpolate to the next refinement level.

    Old vertices keep their values; each midpoint takes the geodesic
    midpoint of its parent endpoints pulled into its own frame, which
    preserves equivariance exactly.
    """
    finer = refine_once(emap.refined)
    out = new_equivariant_map(finer, emap.rep, init="identity")
    for v in emap.refined.mesh.vertices:
        out.values[out.graph.vindex[v]] = emap.vertex_value(v)
    for (u, v), m in finer.parent_midpoints.items():
        a = out.pulled_value(m, u)
        b = out.pulled_value(m, v)
        mid = exp_at(a, 0.5 * logm_pd(hermitian_part(
            invsqrtm_pd(a) @ b @ invsqrtm_pd(a))))
        out.values[out.graph.vindex[m]] = mid
    return out


def solve_multilevel(refined: RefinedMesh, rep: Representation, max_sweeps=500,
                     tol=1e-10, seed=0, init="identity", coarse_tol=None,
                     accel="auto"):
    """Solve coarse-to-fine: relax each level and prolong to the next.

    The returned diagnostics describe the finest level only.
    """
    from .complex_core import subdivide

    level = refined.level
    coarse_tol = tol if coarse_tol is None else coarse_tol
    cur = subdivide(refined.base, 0)
    emap, diag = solve_harmonic(cur, rep, max_sweeps=max_sweeps, tol=coarse_tol,
                                seed=seed, init=init, accel=accel)
    for _ in range(level):
        emap = prolong(emap)
        emap, diag = solve_harmonic(emap.refined, rep, max_sweeps=max_sweeps,
                                    tol=tol, start=emap, accel=accel)
    return emap, diag


def balancing_residual(emap: EquivariantMap) -> Dict[Edge, float]:
    """Per-base-edge stationarity defect along the edge, in distance units.

    At each refined vertex interior to the base edge the energy gradient
    sums the inward-normal flux contributions of every incident triangle
    strip (plus the tangential terms, whose weights are exactly the
    per-triangle shares), so the norm of the tangent-vector sum divided by
    twice the total incident weight measures the violation of the discrete
    balancing identity. Non-manifold edges need no special casing.
    """
    refined = emap.refined
    if refined.level < 1:
        raise HiggsmeshError("balancing residual needs refinement level >= 1")
    g = emap.graph
    out: Dict[Edge, float] = {}
    denom = 2 ** refined.level
    for e in refined.base.edges:
        worst = 0.0
        for j in range(1, denom):
            v = refined.position_index[("edge", e, Fraction(j, denom))]
            i = g.vindex[v]
            pulled, w = g.pulled_neighbours(i, emap.values)
            si = invsqrtm_pd(emap.values[i])
            logs = logm_pd(hermitian_part(si @ pulled @ si))
            grad = np.einsum("n,nij->ij", w, logs)
            scale = 2.0 * w.sum()
            worst = max(worst, float(frobenius(grad)) / scale)
        out[e] = worst
    return out


@dataclass
class OrderProfile:
    vertex: int
    radii: Tuple[float, ...]
    ring_params: Tuple[float, ...]  # along-edge parameter t of each ring
    alphas: Tuple[float, ...]  # nan where the boundary integral vanishes
    ball_energies: Tuple[float, ...]
    boundary_integrals: Tuple[float, ...]
    degenerate: bool
    two_lambda_comb: float


STAR_INRADIUS = np.sqrt(3.0) / 2.0


def _ring_rows(refined: RefinedMesh, v, j):
    """Per incident base triangle, the ring vertices at j subdivision steps
    from v, ordered along the row."""
    base = refined.base
    denom = 2 ** refined.level
    rows = []
    for t_idx in base.vertex_triangles[v]:
        tri = base.triangles[t_idx]
        iv = tri.index(v)
        i1, i2 = [i for i in range(3) if i != iv]
        row = []
        for m in range(j + 1):
            bary = [Fraction(0)] * 3
            bary[iv] = Fraction(denom - j, denom)
            bary[i1] = Fraction(j - m, denom)
            bary[i2] = Fraction(m, denom)
            row.append(refined.vertex_at(_position_of_bary(refined, t_idx, bary)))
        rows.append((t_idx, row))
    return rows


def _position_of_bary(refined: RefinedMesh, t_idx, bary):
    tri = refined.base.triangles[t_idx]
    support = [i for i in range(3) if bary[i] != 0]
    if len(support) == 1:
        return ("vertex", tri[support[0]])
    if len(support) == 2:
        p, q = tri[support[0]], tri[support[1]]
        e = canon_edge(p, q)
        s = bary[support[1]] if e == (p, q) else bary[support[0]]
        return ("edge", e, s)
    return ("face", t_idx, tuple(bary))


def order_estimate(emap: EquivariantMap, v, radii) -> OrderProfile:
    """Discrete order profile alpha(r) = r E(B_r) / boundary integral.

    Radii are distances within the star of the base vertex; each is mapped
    to the nearest ring of refined edges. The ball energy sums the edge
    shares of the refined triangles inside the polygon ball; the boundary
    integral uses trapezoid quadrature of squared distances to the centre
    value over the ring. The reported radius of a ring is its along-edge
    parameter. 2 lambda_comb of the link is attached for comparison.
    """
    refined = emap.refined
    base = refined.base
    if refined.level < 1:
        raise HiggsmeshError("order estimate needs refinement level >= 1")
    if v not in base.vertex_triangles:
        raise HiggsmeshError(f"unknown base vertex {v}")
    denom = 2 ** refined.level
    pres = emap.presentation
    offsets = {t: _triangle_frame_offsets(pres, base.triangles[t])
               for t in base.vertex_triangles[v]}

    def pull_word(t_idx, x):
        cell = refined.vertex_cell[x]
        off = offsets[t_idx]
        if cell[0] == "vertex":
            tail = off[cell[1]]
        elif cell[0] == "edge":
            tail = off[cell[1][0]]
        else:
            tail = ()
        return concat_words(word_inverse(off[v]), tail)

    uv = emap.vertex_value(v)
    si_v = invsqrtm_pd(uv)

    def dist2_to_centre(t_idx, x):
        m = emap.graph.matrix_of_word(pull_word(t_idx, x))
        val = hermitian_part(m @ emap.vertex_value(x) @ np.conj(m.T))
        return float(frobenius(logm_pd(hermitian_part(si_v @ val @ si_v)))) ** 2

    h = refined.side_length
    alphas, energies, integrals, params, flags = [], [], [], [], []
    for r in radii:
        t_par = r / STAR_INRADIUS
        if not 0 < t_par < 1:
            raise HiggsmeshError(f"radius {r} is outside the star of vertex {v}")
        j = min(max(int(round(t_par * denom)), 1), denom - 1)
        params.append(j / denom)

        boundary = 0.0
        for t_idx, row in _ring_rows(refined, v, j):
            d2 = [dist2_to_centre(t_idx, x) for x in row]
            for m in range(j):
                boundary += h * 0.5 * (d2[m] + d2[m + 1])

        cut = Fraction(denom - j, denom)
        energy = 0.0
        for rt_idx, tri in enumerate(refined.mesh.triangles):
            bt = refined.base_triangle_of[rt_idx]
            if bt not in offsets:
                continue
            ivb = base.triangles[bt].index(v)
            if any(refined.barycentric_in(x, bt)[ivb] < cut for x in tri):
                continue
            for (x, y) in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
                mx = emap.graph.matrix_of_word(pull_word(bt, x))
                my = emap.graph.matrix_of_word(pull_word(bt, y))
                vx = hermitian_part(mx @ emap.vertex_value(x) @ np.conj(mx.T))
                vy = hermitian_part(my @ emap.vertex_value(y) @ np.conj(my.T))
                sx = invsqrtm_pd(vx)
                d2 = float(frobenius(logm_pd(hermitian_part(sx @ vy @ sx)))) ** 2
                energy += COTAN_WEIGHT * d2

        energies.append(energy)
        integrals.append(boundary)
        if boundary < 1e-30:
            alphas.append(float("nan"))
        else:
            alphas.append((j / denom) * energy / boundary)

    degenerate = all(np.isnan(a) for a in alphas)
    lam = link_spectrum(vertex_link(base, v)).lambda_comb
    return OrderProfile(
        vertex=v,
        radii=tuple(float(r) for r in radii),
        ring_params=tuple(params),
        alphas=tuple(alphas),
        ball_energies=tuple(energies),
        boundary_integrals=tuple(integrals),
        degenerate=degenerate,
        two_lambda_comb=2.0 * lam,
    )


def map_sup_distance(m1: EquivariantMap, m2: EquivariantMap) -> float:
    """Largest geodesic distance between matching vertex values."""
    if m1.values.shape != m2.values.shape:
        raise HiggsmeshError("maps live on different meshes")
    si = invsqrtm_pd(m1.values)
    logs = logm_pd(hermitian_part(si @ m2.values @ si))
    return float(np.max(frobenius(logs)))


def center_at_basepoint(emap: EquivariantMap) -> EquivariantMap:
    """Translate all values by the isometry taking the basepoint value to
    the identity (comparison aid for reducible representations, whose
    minimizers are unique only up to translation along a flat)."""
    b = emap.presentation.basepoint
    gi = invsqrtm_pd(emap.vertex_value(b))
    out = emap.copy()
    out.values = hermitian_part(gi @ out.values @ gi)
    return out
