"""Dense real linear-algebra kernel.

Thin, contract-checked wrappers around LAPACK-backed SciPy routines:
matrix exponential and principal logarithm, Sylvester solves, ordered
Schur invariant subspaces, least squares and SVD nullspaces.  Every
spectrum-splitting decision carries an explicit tolerance, relative to
the spectral norm of the input.
"""

import numpy as np
import scipy.linalg as sla

from .errors import NumericsError

__all__ = [
    "IM_AXIS_TOL",
    "as_matrix",
    "spectral_norm",
    "symmetrize",
    "min_eigenvalue",
    "is_positive_definite",
    "is_negative_definite",
    "expm",
    "logm_principal",
    "solve_sylvester",
    "solve_lyapunov",
    "invariant_subspace",
    "lstsq",
    "nullspace",
    "eig",
]

IM_AXIS_TOL = 1e-9


def as_matrix(M, name="M"):
    """Return ``M`` as a finite 2-D float array."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise NumericsError(f"{name} must be two-dimensional, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise NumericsError(f"{name} has non-finite entries")
    return M


def _square(M, name="M"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NumericsError(f"{name} must be square, got shape {M.shape}")
    return M


def spectral_norm(M):
    """Largest singular value (0 for empty input)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(np.atleast_2d(M), 2))


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def min_eigenvalue(M):
    """Smallest eigenvalue of the symmetric part of ``M``."""
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def is_positive_definite(M, rel_tol=1e-9):
    """``True`` when the smallest eigenvalue exceeds ``rel_tol * ||M||``."""
    scale = spectral_norm(M)
    if scale == 0.0:
        return False
    return min_eigenvalue(M) > rel_tol * scale


def is_negative_definite(M, rel_tol=1e-9):
    return is_positive_definite(-np.asarray(M, dtype=float), rel_tol)


def eig(M):
    """Eigenvalues and right eigenvectors (columns), complex."""
    M = _square(M)
    w, V = np.linalg.eig(M)
    return w.astype(complex), V.astype(complex)


def expm(M):
    """Matrix exponential by scaling and squaring with a Pade approximant.

    Backed by :func:`scipy.linalg.expm` (Al-Mohy and Higham 2009), whose
    order/squaring selection keeps the relative backward error at unit
    roundoff.
    """
    M = _square(M)
    return sla.expm(M)


def logm_principal(M):
    """Principal real matrix logarithm.

    Raises
    ------
    NumericsError
        If ``M`` has an eigenvalue on the closed negative real axis, where
        no real principal logarithm exists.
    """
    M = _square(M)
    w = np.linalg.eigvals(M)
    scale = max(spectral_norm(M), 1.0)
    on_axis = (np.abs(w.imag) <= 1e-12 * scale) & (w.real <= 1e-14 * scale)
    if np.any(on_axis):
        raise NumericsError(
            "non-principal branch: eigenvalue on the closed negative real "
            f"axis ({w[on_axis][0]:.3g})"
        )
    L = sla.logm(M, disp=False)[0]
    if np.iscomplexobj(L):
        if np.max(np.abs(L.imag), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(L))):
            raise NumericsError("principal logarithm is not real")
        L = L.real
    return np.asarray(L, dtype=float)


def solve_sylvester(A, B, C, sep_tol=1e-10):
    """Solve ``A X + X B = C``.

    The operator is singular when ``A`` and ``-B`` share an eigenvalue;
    this is checked before solving with a relative tolerance ``sep_tol``.
    """
    A = _square(A, "A")
    B = _square(B, "B")
    C = as_matrix(C, "C")
    if C.shape != (A.shape[0], B.shape[0]):
        raise NumericsError(f"C must have shape {(A.shape[0], B.shape[0])}, got {C.shape}")
    wa = np.linalg.eigvals(A)
    wb = np.linalg.eigvals(B)
    gap = np.min(np.abs(wa[:, None] + wb[None, :]))
    scale = spectral_norm(A) + spectral_norm(B)
    if gap <= sep_tol * max(scale, 1.0):
        raise NumericsError(f"singular Sylvester operator (eigenvalue gap {gap:.3g})")
    return sla.solve_sylvester(A, B, C)


def solve_lyapunov(A, C):
    """Solve ``A X + X A^T = C`` and symmetrize the result."""
    A = _square(A, "A")
    return symmetrize(solve_sylvester(A, A.T, symmetrize(C)))


def invariant_subspace(M, side="stable", im_axis_tol=IM_AXIS_TOL):
    """Orthonormal basis of the stable or anti-stable invariant subspace.

    Uses an ordered real Schur form so no eigenvectors are formed.

    Parameters
    ----------
    M : (k, k) array_like
    side : {'stable', 'antistable'}
    im_axis_tol : float
        Eigenvalues with ``|Re| <= im_axis_tol * ||M||`` are rejected.
    """
    M = _square(M)
    if side not in ("stable", "antistable"):
        raise ValueError(f"side must be 'stable' or 'antistable', got {side!r}")
    w = np.linalg.eigvals(M)
    thr = im_axis_tol * spectral_norm(M)
    close = np.abs(w.real) <= thr
    if np.any(close):
        raise NumericsError(
            f"imaginary-axis eigenvalue {w[close][0]:.3g} (tolerance {thr:.3g})"
        )
    sort = "lhp" if side == "stable" else "rhp"
    _, Z, sdim = sla.schur(M, output="real", sort=sort)
    return Z[:, :sdim]


def lstsq(A, B):
    """Minimum-Frobenius-norm least-squares solution of ``A X = B``."""
    A = as_matrix(A, "A")
    B = np.asarray(B, dtype=float)
    return np.linalg.lstsq(A, B, rcond=None)[0]


def nullspace(A, tol=1e-10):
    """Orthonormal basis of the numerical nullspace of ``A``.

    Directions whose singular value is at most ``tol * ||A||`` are kept.
    A zero matrix returns the whole space.
    """
    A = as_matrix(A, "A")
    ncols = A.shape[1]
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return np.eye(ncols)
    rank = int(np.sum(s > tol * smax))
    return Vh[rank:].T.copy()
