"""Discrete harmonic maps, Higgs pairs and holonomy over admissible
simplicial 2-complexes."""

__version__ = "0.1.0"

from .complex_core import (
    ComplexMesh,
    LinkGraph,
    RefinedMesh,
    build_mesh,
    link_spectrum,
    parse_complex,
    subdivide,
    validate_admissible,
    vertex_link,
)
from .group_rep import (
    Presentation,
    Representation,
    TraceFingerprint,
    conjugacy_compare,
    edge_presentation,
    fingerprint_distance,
    irreducibility,
    make_representation,
    parse_representation,
    word_trace_fingerprint,
)
from .symmetric_space import act, distance, exp_at, karcher_mean, log_at

__all__ = [
    "ComplexMesh",
    "LinkGraph",
    "Presentation",
    "RefinedMesh",
    "Representation",
    "TraceFingerprint",
    "act",
    "build_mesh",
    "conjugacy_compare",
    "distance",
    "edge_presentation",
    "exp_at",
    "fingerprint_distance",
    "irreducibility",
    "karcher_mean",
    "link_spectrum",
    "log_at",
    "make_representation",
    "parse_complex",
    "parse_representation",
    "subdivide",
    "validate_admissible",
    "vertex_link",
    "word_trace_fingerprint",
]
