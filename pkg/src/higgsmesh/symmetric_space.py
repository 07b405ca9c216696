"""Closed-form geometry of the symmetric space of positive definite
Hermitian matrices with determinant one.

A point of SL(r,C)/SU(r) is represented by the positive definite Hermitian
matrix h = g g* of a coset representative g, so the group acts by
congruence, ``g . h = g h g*``. Tangent vectors are kept in the identity
trivialization: a tangent at any base point is stored as a traceless
Hermitian matrix xi, transported to the base point h by X -> h^{1/2} X h^{1/2}.

With the Frobenius pairing <xi, eta> = tr(xi eta) at the identity the
geodesics, exponential, logarithm and distance are all closed-form in terms
of Hermitian eigendecompositions:

    exp_at(h, xi) = h^{1/2} expm(xi) h^{1/2}
    log_at(h, p)  = logm(h^{-1/2} p h^{-1/2})
    d(h1, h2)     = || logm(h1^{-1/2} h2 h1^{-1/2}) ||_F

The space has non-positive curvature, so weighted squared-distance sums are
geodesically convex and Karcher means are unique.

All functions accept and return plain complex ndarrays; the eigendecomposition
helpers broadcast over leading stack dimensions.
"""

from __future__ import annotations

import numpy as np

from .errors import KarcherConvergenceError, NumericError

# Relative eigenvalue floor below which a matrix is rejected as not
# positive definite.
PD_RELATIVE_FLOOR = 1e-13

# Determinant drift control: silently renormalize in (RENORM_LOW, RENORM_HIGH],
# fail beyond RENORM_HIGH.
DET_RENORM_LOW = 1e-12
DET_RENORM_HIGH = 1e-6

KARCHER_TOL = 1e-12
KARCHER_MAX_ITER = 200


def hermitian_part(a):
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def anti_hermitian_part(a):
    return 0.5 * (a - np.conj(np.swapaxes(a, -1, -2)))


def frobenius(a):
    """Frobenius norm, broadcasting over stacked matrices."""
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def _eigh_checked(h):
    w, v = np.linalg.eigh(h)
    wmax = np.max(np.abs(w), axis=-1)
    if np.any(w[..., 0] <= PD_RELATIVE_FLOOR * wmax):
        raise NumericError(
            "matrix is not positive definite "
            f"(smallest eigenvalue {np.min(w):.3e})"
        )
    return w, v


def _apply_eig(w, v, fw):
    return np.einsum("...ik,...k,...jk->...ij", v, fw, np.conj(v))


def sqrtm_pd(h):
    """Hermitian square root of a positive definite Hermitian matrix."""
    w, v = _eigh_checked(h)
    return _apply_eig(w, v, np.sqrt(w))


def invsqrtm_pd(h):
    w, v = _eigh_checked(h)
    return _apply_eig(w, v, 1.0 / np.sqrt(w))


def logm_pd(h):
    """Hermitian logarithm of a positive definite Hermitian matrix."""
    w, v = _eigh_checked(h)
    return _apply_eig(w, v, np.log(w))


def expm_herm(x):
    """Exponential of a Hermitian matrix (result is positive definite)."""
    w, v = np.linalg.eigh(x)
    return _apply_eig(w, v, np.exp(w))


def is_point(h, det_tol=1e-10):
    """Check the point invariants: Hermitian, positive definite, det 1."""
    h = np.asarray(h)
    scale = max(frobenius(h), 1.0)
    if frobenius(h - np.conj(h.T)) > 1e-12 * scale:
        return False
    w = np.linalg.eigvalsh(hermitian_part(h))
    if w[0] <= 0:
        return False
    return abs(np.prod(w) - 1.0) <= det_tol


def is_tangent(xi):
    """Check the tangent invariants: Hermitian and traceless."""
    xi = np.asarray(xi)
    scale = max(frobenius(xi), 1e-300)
    if frobenius(xi - np.conj(xi.T)) > 1e-12 * scale:
        return False
    return abs(np.trace(xi)) <= 1e-12 * max(scale, 1.0)


def _restore(h):
    """Symmetrize and pull the determinant back to one.

    Drift in (DET_RENORM_LOW, DET_RENORM_HIGH] is corrected silently; larger
    drift raises, since it indicates a genuine upstream problem.
    """
    h = hermitian_part(h)
    det = np.real(np.linalg.det(h))
    if det <= 0:
        raise NumericError(f"determinant collapsed to {det:.3e}")
    drift = abs(det - 1.0)
    if drift > DET_RENORM_HIGH:
        raise NumericError(f"determinant drift {drift:.3e} exceeds {DET_RENORM_HIGH}")
    if drift > DET_RENORM_LOW:
        r = h.shape[-1]
        h = h / det ** (1.0 / r)
    return h


def exp_at(h, xi):
    """Geodesic exponential at h applied to the identity-trivialized tangent xi.

    exp_at(h, xi) = h^{1/2} expm(xi) h^{1/2}; the inner conjugation by
    h^{-1/2} of the transported tangent h^{1/2} xi h^{1/2} cancels.
    """
    if not np.all(np.isfinite(xi)) or not np.all(np.isfinite(h)):
        raise NumericError("non-finite entries in exp_at input")
    s = sqrtm_pd(h)
    return _restore(s @ expm_herm(xi) @ s)


def log_at(h, p):
    """Inverse of exp_at in its second argument: log_at(h, p) is the
    identity-trivialized tangent of the geodesic from h to p.

    Broadcasts over a stack of targets p with a single base h.
    """
    if not np.all(np.isfinite(p)) or not np.all(np.isfinite(h)):
        raise NumericError("non-finite entries in log_at input")
    si = invsqrtm_pd(h)
    return logm_pd(hermitian_part(si @ p @ si))


def distance(h1, h2):
    """Geodesic distance d = ||logm(h1^{-1/2} h2 h1^{-1/2})||_F.

    Symmetric, zero iff the points coincide, invariant under act(g, .).
    """
    si = invsqrtm_pd(h1)
    return float(frobenius(logm_pd(hermitian_part(si @ h2 @ si))))


def geodesic(h1, h2, t):
    """Point at parameter t on the geodesic from h1 to h2."""
    return exp_at(h1, t * log_at(h1, h2))


def act(g, h, det_tol=1e-8):
    """Isometric action of a unimodular matrix: act(g, h) = g h g*."""
    det = np.linalg.det(g)
    if abs(det - 1.0) > det_tol:
        raise NumericError(f"matrix is not unimodular: det = {det}")
    return _restore(g @ h @ np.conj(g.T))


def karcher_mean(points, weights=None, tol=KARCHER_TOL, max_iter=KARCHER_MAX_ITER,
                 init=None):
    """Weighted Karcher mean: the unique minimizer of sum w_i d(., p_i)^2.

    Tangent-space averaging iteration x <- exp_at(x, mean of log_at(x, p_i)),
    run until the update norm drops below tol. Uniqueness is guaranteed by
    non-positive curvature; non-convergence raises KarcherConvergenceError
    with the last residual.

    points: array (n, r, r); weights: positive reals (n,).
    """
    pts = np.asarray(points, dtype=complex)
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise ValueError("karcher_mean needs a non-empty (n, r, r) stack")
    n = pts.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per point")
        w = w / w.sum()
    if n == 1:
        return pts[0].copy()

    x = pts[0].copy() if init is None else np.asarray(init, dtype=complex)
    residual = np.inf
    for _ in range(max_iter):
        step = np.einsum("n,nij->ij", w, log_at(x, pts))
        residual = float(frobenius(step))
        if residual <= tol:
            return x
        x = exp_at(x, step)
    raise KarcherConvergenceError(residual, max_iter)


def random_tangent(rng, r, scale=1.0):
    """Random traceless Hermitian matrix with Frobenius norm <= scale."""
    a = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    xi = hermitian_part(a)
    xi -= np.trace(xi) / r * np.eye(r)
    nrm = frobenius(xi)
    if nrm > 0:
        xi *= scale * rng.uniform(0.1, 1.0) / nrm
    return xi


def random_point(rng, r, scale=1.0):
    """Random point reached from the identity by a bounded random tangent."""
    return exp_at(np.eye(r, dtype=complex), random_tangent(rng, r, scale))


def random_unimodular(rng, r, scale=0.5):
    """Random SL(r,C) matrix by exponentiating a traceless matrix."""
    a = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    a -= np.trace(a) / r * np.eye(r)
    nrm = frobenius(a)
    if nrm > 0:
        a *= scale / nrm
    from scipy.linalg import expm

    return expm(a)
