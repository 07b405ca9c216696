"""Edge-path presentations of the fundamental group and SL(r,C)
representations.

A spanning tree of the 1-skeleton kills the tree edges; the remaining
oriented edges generate, and every triangle contributes one relator (its
boundary edge word with tree letters dropped). Words are tuples of signed
integers, +(i+1) for generator i and -(i+1) for its inverse.

Representations are compared only through conjugation-invariant data: trace
fingerprints over all reduced words up to a length bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .complex_core import ComplexMesh, Edge, canon_edge
from .errors import HiggsmeshError, RepresentationError

Word = Tuple[int, ...]


def word_inverse(w: Word) -> Word:
    return tuple(-x for x in reversed(w))


def reduce_word(w) -> Word:
    out: List[int] = []
    for x in w:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def concat_words(*ws) -> Word:
    merged: List[int] = []
    for w in ws:
        merged.extend(w)
    return reduce_word(merged)


@dataclass(frozen=True)
class Presentation:
    """Edge-path presentation rooted at a basepoint.

    generators are the non-tree edges in canonical (min, max) orientation;
    relators are boundary words of the triangles, letters with exponent +-1.
    """

    basepoint: int
    tree_edges: frozenset
    generators: Tuple[Edge, ...]
    relators: Tuple[Word, ...]
    parent: Dict[int, Tuple[int, Edge]]  # BFS tree: vertex -> (parent, edge)
    gen_index: Dict[Edge, int] = field(default_factory=dict)

    @property
    def n_generators(self):
        return len(self.generators)

    def edge_word(self, p, q) -> Word:
        """Group letter crossed when walking the oriented edge p -> q."""
        e = canon_edge(p, q)
        if e in self.tree_edges:
            return ()
        g = self.gen_index[e] + 1
        return (g,) if (p, q) == e else (-g,)

    def tree_path(self, v) -> List[int]:
        """Vertices of the tree path from the basepoint to v."""
        path = [v]
        while path[-1] != self.basepoint:
            path.append(self.parent[path[-1]][0])
        return path[::-1]


def edge_presentation(mesh: ComplexMesh, basepoint) -> Presentation:
    """Deterministic presentation: BFS tree over sorted vertex ids, one
    relator per triangle from its stored boundary orientation."""
    if basepoint not in mesh.vertex_edges:
        raise HiggsmeshError(f"basepoint {basepoint} is not a vertex")
    nbrs: Dict[int, List[int]] = {v: [] for v in mesh.vertices}
    for u, w in mesh.edges:
        nbrs[u].append(w)
        nbrs[w].append(u)
    for v in nbrs:
        nbrs[v].sort()

    parent: Dict[int, Tuple[int, Edge]] = {}
    tree: set = set()
    seen = {basepoint}
    queue = [basepoint]
    while queue:
        cur = queue.pop(0)
        for nb in nbrs[cur]:
            if nb not in seen:
                seen.add(nb)
                e = canon_edge(cur, nb)
                parent[nb] = (cur, e)
                tree.add(e)
                queue.append(nb)
    if len(seen) != mesh.n_vertices:
        raise HiggsmeshError("mesh is disconnected; presentation undefined")

    generators = tuple(sorted(e for e in mesh.edges if e not in tree))
    gen_index = {e: i for i, e in enumerate(generators)}

    pres = Presentation(
        basepoint=basepoint,
        tree_edges=frozenset(tree),
        generators=generators,
        relators=(),
        parent=parent,
        gen_index=gen_index,
    )
    relators = []
    for (a, b, c) in mesh.triangles:
        relators.append(concat_words(
            pres.edge_word(a, b), pres.edge_word(b, c), pres.edge_word(c, a)
        ))
    object.__setattr__(pres, "relators", tuple(relators))
    return pres


def abelianized_relator_matrix(pres: Presentation) -> np.ndarray:
    """Integer matrix of exponent sums, one row per relator."""
    mat = np.zeros((len(pres.relators), pres.n_generators), dtype=np.int64)
    for i, w in enumerate(pres.relators):
        for x in w:
            mat[i, abs(x) - 1] += 1 if x > 0 else -1
    return mat


# --- representations -----------------------------------------------------


@dataclass(frozen=True)
class Representation:
    """Generator images in SL(r,C), validated against the relators."""

    rank: int
    images: np.ndarray  # (n_generators, r, r) complex
    tolerance: float
    presentation: Presentation = None
    max_det_error: float = 0.0
    max_relator_residual: float = 0.0

    @property
    def n_generators(self):
        return self.images.shape[0]

    def image_of_letter(self, letter) -> np.ndarray:
        g = self.images[abs(letter) - 1]
        return g if letter > 0 else np.linalg.inv(g)

    def evaluate(self, word: Word) -> np.ndarray:
        """Matrix of a word, letters multiplied left to right in path order."""
        out = np.eye(self.rank, dtype=complex)
        for x in word:
            out = out @ self.image_of_letter(x)
        return out


def make_representation(pres: Presentation, images, tolerance=1e-9) -> Representation:
    """Validate determinants and relator residuals, then freeze."""
    arr = np.asarray(images, dtype=complex)
    n = pres.n_generators
    if arr.ndim != 3 or arr.shape[0] != n or arr.shape[1] != arr.shape[2]:
        raise RepresentationError(
            f"expected {n} square matrices, got array of shape {arr.shape}"
        )
    r = arr.shape[1]
    if r < 1:
        raise RepresentationError("rank must be positive")
    dets = np.linalg.det(arr)
    det_err = float(np.max(np.abs(dets - 1.0))) if n else 0.0
    if det_err > tolerance:
        worst = int(np.argmax(np.abs(dets - 1.0)))
        raise RepresentationError(
            f"generator {worst} has det {dets[worst]:.12g}, violating |det-1| <= {tolerance}"
        )
    rep = Representation(rank=r, images=arr, tolerance=tolerance, presentation=pres)
    worst_res = 0.0
    eye = np.eye(r)
    for w in pres.relators:
        res = float(np.linalg.norm(rep.evaluate(w) - eye))
        worst_res = max(worst_res, res)
    if worst_res > tolerance:
        raise RepresentationError(
            f"relator residual {worst_res:.3e} exceeds tolerance {tolerance}"
        )
    return Representation(
        rank=r,
        images=arr,
        tolerance=tolerance,
        presentation=pres,
        max_det_error=det_err,
        max_relator_residual=worst_res,
    )


def parse_representation(text: str, pres: Presentation, tolerance=1e-9) -> Representation:
    """Load the text representation format and validate against pres.

    Header ``rep r <rank> n <count>``; per generator a ``g <index>`` line
    followed by r rows of 2r numbers (real imag pairs, row major).
    """
    tokens_by_line = [
        (i + 1, line.split("#", 1)[0].split())
        for i, line in enumerate(text.splitlines())
    ]
    lines = [(no, parts) for no, parts in tokens_by_line if parts]
    if not lines:
        raise RepresentationError("empty representation file")
    no, header = lines[0]
    if len(header) != 5 or header[0] != "rep" or header[1] != "r" or header[3] != "n":
        raise RepresentationError(f"line {no}: malformed header {' '.join(header)!r}")
    try:
        rank, count = int(header[2]), int(header[4])
    except ValueError:
        raise RepresentationError(f"line {no}: malformed header numbers")
    if rank < 2:
        raise RepresentationError(f"rank must be >= 2, got {rank}")
    if count != pres.n_generators:
        raise RepresentationError(
            f"file declares {count} generators, presentation has {pres.n_generators}"
        )

    images = np.zeros((count, rank, rank), dtype=complex)
    seen = set()
    pos = 1
    while pos < len(lines):
        no, parts = lines[pos]
        if parts[0] != "g" or len(parts) != 2:
            raise RepresentationError(f"line {no}: expected generator header, got {parts!r}")
        try:
            gidx = int(parts[1])
        except ValueError:
            raise RepresentationError(f"line {no}: malformed generator index")
        if not 0 <= gidx < count or gidx in seen:
            raise RepresentationError(f"line {no}: bad generator index {gidx}")
        seen.add(gidx)
        if pos + rank >= len(lines) + 1 and len(lines) - pos - 1 < rank:
            raise RepresentationError(f"line {no}: truncated matrix block")
        for row in range(rank):
            rno, rparts = lines[pos + 1 + row]
            if len(rparts) != 2 * rank:
                raise RepresentationError(
                    f"line {rno}: expected {2 * rank} numbers, got {len(rparts)}"
                )
            try:
                vals = [float(x) for x in rparts]
            except ValueError:
                raise RepresentationError(f"line {rno}: malformed number")
            images[gidx, row] = [complex(vals[2 * j], vals[2 * j + 1]) for j in range(rank)]
        pos += 1 + rank
    if len(seen) != count:
        raise RepresentationError(f"missing matrix blocks for {count - len(seen)} generators")
    return make_representation(pres, images, tolerance)


def format_representation(rep: Representation) -> str:
    out = [f"rep r {rep.rank} n {rep.n_generators}"]
    for i in range(rep.n_generators):
        out.append(f"g {i}")
        for row in rep.images[i]:
            out.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    return "\n".join(out) + "\n"


# --- conjugation-invariant comparison ------------------------------------

# Letters are enumerated as +g0, -g0, +g1, -g1, ...; words by length then
# lexicographically in that letter order. The inverse of letter l is l ^ 1.


def _letter_matrices(rep: Representation) -> np.ndarray:
    mats = np.zeros((2 * rep.n_generators, rep.rank, rep.rank), dtype=complex)
    for i in range(rep.n_generators):
        mats[2 * i] = rep.images[i]
        mats[2 * i + 1] = np.linalg.inv(rep.images[i])
    return mats


@dataclass(frozen=True)
class TraceFingerprint:
    """Traces of all reduced words up to maxlen, in canonical order."""

    maxlen: int
    n_generators: int
    rank: int
    traces: np.ndarray  # complex, one per word in enumeration order

    def level_sizes(self) -> List[int]:
        n2 = 2 * self.n_generators
        sizes = [1]
        if self.maxlen >= 1 and n2 > 0:
            sizes.append(n2)
            for _ in range(2, self.maxlen + 1):
                sizes.append(sizes[-1] * (n2 - 1))
        return sizes

    def word_at(self, index) -> Word:
        """Decode the reduced word at a global enumeration index."""
        sizes = self.level_sizes()
        level = 0
        while index >= sizes[level]:
            index -= sizes[level]
            level += 1
        letters: List[int] = []
        n2 = 2 * self.n_generators
        for depth in range(level):
            block = (n2 - 1) ** (level - depth - 1) if level - depth - 1 > 0 else 1
            if depth == 0:
                choice = index // block
                index -= choice * block
                letters.append(choice)
            else:
                choice = index // block
                index -= choice * block
                forbidden = letters[-1] ^ 1
                allowed = [l for l in range(n2) if l != forbidden]
                letters.append(allowed[choice])
        return tuple((l // 2 + 1) * (1 if l % 2 == 0 else -1) for l in letters)

    def entries(self) -> Dict[Word, complex]:
        return {self.word_at(i): complex(t) for i, t in enumerate(self.traces)}


def word_trace_fingerprint(rep: Representation, maxlen: int,
                           chunk=65536) -> TraceFingerprint:
    """Traces of all reduced words of length <= maxlen.

    Enumeration is breadth-first and lexicographic, so fingerprints of
    compatible representations align entry by entry. Matrix stacks are built
    level by level; the final level streams in chunks to bound memory.
    """
    if maxlen < 0:
        raise HiggsmeshError("maxlen must be non-negative")
    n = rep.n_generators
    r = rep.rank
    traces: List[np.ndarray] = [np.array([complex(r)])]
    if maxlen == 0 or n == 0:
        return TraceFingerprint(maxlen, n, r, np.concatenate(traces))
    letters = _letter_matrices(rep)
    n2 = 2 * n

    cur = letters.copy()  # level-1 matrices in letter order
    last = np.arange(n2)
    traces.append(np.trace(cur, axis1=-2, axis2=-1))

    for level in range(2, maxlen + 1):
        keep_matrices = level < maxlen
        new_parts = []
        trace_parts = []
        new_last_parts = []
        for start in range(0, cur.shape[0], chunk):
            par = cur[start:start + chunk]
            plast = last[start:start + chunk]
            ext = np.einsum("nij,ljk->nlik", par, letters)
            mask = np.ones((par.shape[0], n2), dtype=bool)
            mask[np.arange(par.shape[0]), plast ^ 1] = False
            flat = ext[mask]
            trace_parts.append(np.trace(flat, axis1=-2, axis2=-1))
            if keep_matrices:
                new_parts.append(flat)
                letter_grid = np.broadcast_to(np.arange(n2), mask.shape)
                new_last_parts.append(letter_grid[mask])
        traces.append(np.concatenate(trace_parts))
        if keep_matrices:
            cur = np.concatenate(new_parts)
            last = np.concatenate(new_last_parts)
    return TraceFingerprint(maxlen, n, r, np.concatenate(traces))


def conjugacy_compare(f1: TraceFingerprint, f2: TraceFingerprint, tol) -> bool:
    """Entrywise fingerprint agreement within tol.

    Trace agreement on all bounded words is necessary for conjugacy and is
    the working equality test for the irreducible fixtures used here.
    """
    diff, _ = fingerprint_distance(f1, f2)
    return diff <= tol


def fingerprint_distance(f1: TraceFingerprint, f2: TraceFingerprint):
    """(max entrywise trace difference, worst word)."""
    if (f1.maxlen, f1.n_generators) != (f2.maxlen, f2.n_generators):
        raise HiggsmeshError(
            "fingerprints have mismatched shapes: "
            f"(maxlen {f1.maxlen}, n {f1.n_generators}) vs "
            f"(maxlen {f2.maxlen}, n {f2.n_generators})"
        )
    diffs = np.abs(f1.traces - f2.traces)
    worst = int(np.argmax(diffs))
    return float(diffs[worst]), f1.word_at(worst)


def irreducibility(rep: Representation, maxlen=None):
    """Burnside span test: (irreducible?, span dimension).

    Computes the span of {rho(w) : |w| <= maxlen} inside r x r matrices;
    irreducible iff the span has full dimension r^2. The span after word
    length k equals the previous span plus its products with single letters,
    so it is grown by multiplying only newly added basis elements; this
    stabilizes after at most r^2 rounds. Independence uses a singular-value
    style cutoff of 1e-8 against the running orthonormal basis. Default
    maxlen is 2 r^2 with early exit at full span.
    """
    r = rep.rank
    target = r * r
    if maxlen is None:
        maxlen = 2 * target
    letters = _letter_matrices(rep)

    basis_vecs: List[np.ndarray] = []  # orthonormal, flattened matrices
    basis_mats: List[np.ndarray] = []

    def try_add(mat) -> bool:
        vec = mat.reshape(-1).astype(complex)
        for b in basis_vecs:
            vec = vec - np.vdot(b, vec) * b
        nrm = np.linalg.norm(vec)
        if nrm > 1e-8 * max(1.0, np.linalg.norm(mat)):
            basis_vecs.append(vec / nrm)
            basis_mats.append(mat)
            return True
        return False

    try_add(np.eye(r, dtype=complex))
    fresh = [np.eye(r, dtype=complex)]
    for _ in range(maxlen):
        if len(basis_vecs) == target or not fresh:
            break
        added: List[np.ndarray] = []
        for mat in fresh:
            for l in letters:
                m2 = mat @ l
                if try_add(m2):
                    added.append(m2)
                    if len(basis_vecs) == target:
                        return True, target
        fresh = added
    return len(basis_vecs) == target, len(basis_vecs)
