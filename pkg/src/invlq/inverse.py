"""Inverse autonomous LQ: recover a canonical cost from optimal trajectories.

The dynamics ``(A, B)`` are known.  Sampled optimal trajectories determine
the synthesis pair ``(A_plus, A_minus)``, from which ``Delta`` and then the
canonical cost ``(u + K x)' R (u + K x)`` with ``det R = 1`` follow by
linear algebra.

Identification pipeline
-----------------------
1. :func:`fit_lifted_propagator` regresses ``(x_{i+1}, x_{i+2})`` on
   ``(x_i, x_{i+1})``.  For exact data the fitted ``2n x 2n`` map is similar
   to ``blkdiag(e^{h A_plus}, e^{h A_minus})``.
2. :func:`split_propagator` separates the eigenvectors by modulus and takes
   principal logarithms.
3. :func:`recover_delta` finds the symmetric kernel tying ``A_plus`` to
   ``A_minus``.
4. :func:`reconstruct_cost` reads off ``K`` and ``R``.

:func:`refine` is an optional maximum-likelihood stage that fits ``(K, R)``
directly to the samples by integrating the Hamiltonian flow.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import numerics as nx
from .autonomous import (
    AutonomousLqProblem,
    BoundaryData,
    CanonicalCost,
    CheckResult,
    ValidationReport,
    feedback_gain,
    synthesis_pair,
)
from .errors import LqError, ReconstructionError

__all__ = [
    "TrajectoryBundle",
    "IdentifiedSynthesis",
    "ProductReport",
    "Reconstruction",
    "fit_lifted_propagator",
    "split_propagator",
    "delta_operator",
    "recover_delta",
    "validate_synthesis",
    "reconstruct_cost",
    "detect_product_structure",
    "refine",
    "identify_and_reconstruct",
    "bundle_from_boundaries",
]


@dataclass(frozen=True)
class TrajectoryBundle:
    """Uniformly sampled trajectories sharing the step ``step``.

    ``trajectories[k]`` has one row per sample time ``t0 + i * step``.
    ``boundaries``, when given, holds the prescribed ``(x0, x1)`` of each
    trajectory; the sampled endpoints may be noisy while these are exact.
    """

    step: float
    trajectories: tuple
    t0: float = 0.0
    boundaries: tuple = None

    def __post_init__(self):
        if not self.step > 0:
            raise LqError(f"step must be positive, got {self.step}")
        trs = tuple(np.atleast_2d(np.asarray(x, dtype=float)) for x in self.trajectories)
        if not trs:
            raise LqError("a bundle needs at least one trajectory")
        n = trs[0].shape[1]
        for k, x in enumerate(trs):
            if x.ndim != 2 or x.shape[1] != n:
                raise LqError(f"trajectory {k} has shape {x.shape}, expected (*, {n})")
            if x.shape[0] < 3:
                raise LqError(f"trajectory {k} has {x.shape[0]} samples, need at least 3")
            if not np.all(np.isfinite(x)):
                raise LqError(f"trajectory {k} has non-finite samples")
            x.setflags(write=False)
        object.__setattr__(self, "trajectories", trs)
        if self.boundaries is not None:
            bds = tuple(self.boundaries)
            if len(bds) != len(trs):
                raise LqError(f"{len(bds)} boundaries for {len(trs)} trajectories")
            for bd, x in zip(bds, trs):
                if bd.x0.size != n:
                    raise LqError(f"boundary vectors have size {bd.x0.size}, expected {n}")
                span = (x.shape[0] - 1) * self.step
                if abs((bd.t1 - bd.t0) - span) > 1e-9 * max(1.0, span):
                    raise LqError(
                        f"boundary horizon {bd.t1 - bd.t0} does not match {x.shape[0] - 1} "
                        f"steps of {self.step}"
                    )
            object.__setattr__(self, "boundaries", bds)
        pairs = sum(x.shape[0] - 2 for x in trs)
        if pairs < 4 * n * n:
            warnings.warn(
                f"only {pairs} sample pairs for {4 * n * n} propagator entries; "
                "the fit may be poorly determined",
                stacklevel=2,
            )

    @property
    def n(self):
        return self.trajectories[0].shape[1]

    def with_trajectories(self, trajectories):
        """Same step and boundaries, new samples."""
        return TrajectoryBundle(self.step, trajectories, self.t0, self.boundaries)


@dataclass(frozen=True)
class IdentifiedSynthesis:
    A_plus: np.ndarray
    A_minus: np.ndarray
    Delta: np.ndarray
    fit_residual: float


@dataclass(frozen=True)
class ProductReport:
    """Verdict of :func:`detect_product_structure`.

    ``status`` is ``"product"``, ``"none"`` or ``"inconclusive"``.  ``blocks``
    lists the eigenvector indices of ``A_plus`` in each invariant block and
    ``change_of_basis`` has the matching real basis as columns.
    """

    has_product: bool
    blocks: list
    change_of_basis: np.ndarray = None
    status: str = "none"
    detail: str = ""


@dataclass(frozen=True)
class Reconstruction:
    cost: CanonicalCost
    synthesis: IdentifiedSynthesis
    diagnostics: dict = field(default_factory=dict)


def _sample_pairs(bundle, lag=1):
    n = bundle.n
    lhs, rhs = [], []
    for x in bundle.trajectories:
        if x.shape[0] <= lag + 1:
            continue
        s = np.hstack([x[:-lag], x[lag:]])
        lhs.append(s[:-1])
        rhs.append(s[1:])
    if not lhs:
        return np.zeros((0, 2 * n)), np.zeros((0, 2 * n)), n
    return np.vstack(lhs), np.vstack(rhs), n


def fit_lifted_propagator(bundle, rank_tol=1e-10, lag=1):
    """Least-squares propagator ``T`` with ``s_{i+1} ~ T s_i``.

    ``s_i = (x_i; x_{i+lag})``.  Returns ``(T, residual)`` where ``residual``
    is the Frobenius misfit relative to the norm of the targets.

    With ``lag = 1`` the two halves of ``s_i`` differ only by
    ``e^{hA-} - e^{hA+}``, whose singular values decay like powers of ``h``
    when ``m < n``.  A lag of about half the horizon conditions the fit far
    better on finely sampled data.

    Raises
    ------
    ReconstructionError
        ``stage='fit'`` if the stacked pairs do not span ``R^{2n}``.
    """
    if int(lag) != lag or lag < 1:
        raise ReconstructionError(f"lag must be a positive integer, got {lag}", stage="fit")
    S0, S1, n = _sample_pairs(bundle, int(lag))
    if S0.shape[0] < 2 * n:
        raise ReconstructionError(
            f"rank-deficient sample pairs: {S0.shape[0]} pairs for {2 * n} unknowns", stage="fit"
        )
    sv = np.linalg.svd(S0, compute_uv=False)
    rank = int(np.sum(sv > rank_tol * sv[0])) if sv[0] > 0 else 0
    if rank < 2 * n:
        raise ReconstructionError(
            f"rank-deficient sample pairs: rank {rank} < {2 * n}", stage="fit"
        )
    T = nx.lstsq(S0, S1).T
    scale = np.linalg.norm(S1)
    residual = float(np.linalg.norm(S0 @ T.T - S1) / scale)
    return T, residual


def _graph_block(V, n, idx):
    U = V[:n, idx]
    W = V[n:, idx]
    if np.linalg.cond(U) > 1e12:
        raise ReconstructionError("top-half eigenvector matrix is singular", stage="split")
    E = np.linalg.solve(U.T, W.T).T
    if np.max(np.abs(E.imag), initial=0.0) > 1e-6 * max(1.0, np.max(np.abs(E))):
        raise ReconstructionError("eigenvector blocks do not pair into a real map", stage="split")
    return E.real


def _spectral_generator(V, w, n, idx, h):
    U = V[:n, idx]
    if np.linalg.cond(U) > 1e12:
        raise ReconstructionError("top-half eigenvector matrix is singular", stage="split")
    G = np.linalg.solve(U.T, (U * (np.log(w[idx]) / h)).T).T
    if np.max(np.abs(G.imag), initial=0.0) > 1e-6 * max(1.0, np.max(np.abs(G))):
        raise ReconstructionError("eigenvector blocks do not pair into a real map", stage="split")
    return G.real


def split_propagator(T, h, modulus_tol=1e-6, lag=1):
    """Recover ``(A_plus, A_minus)`` from a lifted propagator.

    Eigenvectors with ``|lambda| < 1`` have the form ``(u; e^{lag h A_plus} u)``;
    those with ``|lambda| > 1`` give ``e^{lag h A_minus}`` the same way.
    The eigenvalues themselves are one-step flow multipliers.  With
    ``lag = 1`` the generator is the principal log of the graph map;
    otherwise it is assembled from ``log(lambda) / h`` on the top-half
    eigenvectors, which avoids the branch cut of the lagged map.
    """
    T = nx.as_matrix(T, "T")
    n = T.shape[0] // 2
    w, V = np.linalg.eig(T)
    mod = np.abs(w)
    if np.any(np.abs(mod - 1.0) <= modulus_tol):
        raise ReconstructionError(
            "cannot split stable/anti-stable: eigenvalue modulus within "
            f"{modulus_tol:g} of 1", stage="split",
        )
    inside = np.flatnonzero(mod < 1.0)
    outside = np.flatnonzero(mod > 1.0)
    if inside.size != n:
        raise ReconstructionError(
            f"{inside.size} eigenvalues inside the unit circle, expected {n}", stage="split"
        )
    if lag != 1:
        return (_spectral_generator(V, w, n, inside, h),
                _spectral_generator(V, w, n, outside, h))
    try:
        A_plus = nx.logm_principal(_graph_block(V, n, inside)) / h
        A_minus = nx.logm_principal(_graph_block(V, n, outside)) / h
    except nx.NumericsError as exc:
        raise ReconstructionError(str(exc), stage="split") from exc
    return A_plus, A_minus


def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0 if i == j else np.sqrt(0.5)
            basis.append(E)
    return basis


def delta_operator(A_plus, A_minus, B):
    """Linear map from symmetric ``X`` (orthonormal coordinates) to the
    stacked residuals of

        A+ X + X A-' = 0,   (I - P_B)(A- - A+) X = 0,   (A- - A+) X symmetric.

    Returns the matrix and the basis of ``Sym(n)`` used for the coordinates.
    """
    A_plus = nx.as_matrix(A_plus, "A_plus")
    A_minus = nx.as_matrix(A_minus, "A_minus")
    B = nx.as_matrix(B, "B")
    n = A_plus.shape[0]
    proj = np.eye(n) - B @ np.linalg.solve(B.T @ B, B.T)
    D = A_minus - A_plus
    basis = _sym_basis(n)
    cols = []
    for E in basis:
        M = D @ E
        cols.append(np.concatenate([
            (A_plus @ E + E @ A_minus.T).ravel(),
            (proj @ M).ravel(),
            (M - M.T).ravel(),
        ]))
    return np.column_stack(cols), basis


def _z_of(A_plus, X, B):
    G = np.linalg.solve(B.T @ B, B.T)
    return nx.symmetrize(-G @ (A_plus @ X + X @ A_plus.T) @ G.T)


def recover_delta(A_plus, A_minus, B, tol=1e-8, strict=True):
    """Recover ``Delta`` from the synthesis pair.

    The ray of admissible ``X = Delta^{-1}`` is the kernel of
    :func:`delta_operator`.  Its scale is fixed so that ``det Z = 1``.

    With ``strict=False`` the right singular vector of the smallest singular
    value is used even if the kernel is numerically empty (noisy data).
    Returns ``(Delta, info)``, where ``info`` holds the singular values and
    the kernel dimension.

    Raises
    ------
    ReconstructionError
        ``stage='delta'``.  Raised when the kernel is empty (strict mode)
        or has more than one dimension.  Also raised when no
        positive-definite representative exists.
    """
    A_plus, A_minus, B = (nx.as_matrix(M) for M in (A_plus, A_minus, B))
    L, basis = delta_operator(A_plus, A_minus, B)
    _, s, Vh = np.linalg.svd(L, full_matrices=True)
    d = L.shape[1]
    s_full = np.concatenate([s, np.zeros(max(0, d - s.size))])
    # measured against the operator scale: for n = 1 every entry is round-off
    smax = max(s_full[0], nx.spectral_norm(A_plus) + nx.spectral_norm(A_minus))
    dim = int(np.sum(s_full <= tol * smax)) if smax > 0 else d
    info = {"singular_values": s_full, "kernel_dim": dim}
    if dim > 1:
        err = ReconstructionError(
            f"ambiguous: product structure suspected (kernel dimension {dim})", stage="delta"
        )
        err.kernel_dim = dim
        raise err
    if dim == 0 and strict:
        raise ReconstructionError(
            "not a valid synthesis pair (empty kernel, smallest singular value "
            f"{s_full[-1] / smax:.2e} relative)", stage="delta",
        )
    X = nx.symmetrize(sum(c * E for c, E in zip(Vh[-1], basis)))
    if np.trace(X) < 0:
        X = -X
    if not nx.is_positive_definite(X):
        raise ReconstructionError("not in the synthesis set: no positive-definite X on the ray", stage="delta")
    Z = _z_of(A_plus, X, B)
    detZ = np.linalg.det(Z)
    if detZ > 0:
        X = X / detZ ** (1.0 / B.shape[1])
    else:
        X = X / np.linalg.norm(X)
    # A+ X + X A+' = -(A- - A+) X follows from the first equation
    D = A_minus - A_plus
    lhs = A_plus @ X + X @ A_plus.T
    info["consistency"] = float(np.linalg.norm(lhs + D @ X) / max(np.linalg.norm(lhs), 1e-300))
    return nx.symmetrize(np.linalg.inv(X)), info


def validate_synthesis(A_plus, A_minus, Delta, A, B, tol=1e-8):
    """Membership test for the set of synthesis pairs of ``(A, B)``."""
    A_plus, A_minus, Delta, A, B = (nx.as_matrix(M) for M in (A_plus, A_minus, Delta, A, B))
    checks = {}
    sim = A_plus + np.linalg.solve(Delta, A_minus.T @ Delta)
    scale = nx.spectral_norm(A_plus) + nx.spectral_norm(A_minus)
    r = nx.spectral_norm(sim) / scale
    checks["similarity"] = CheckResult(r <= tol, r, f"|A+ + Delta^-1 A-' Delta| = {r:.2e} (relative)")

    re = float(np.max(np.linalg.eigvals(A_plus).real))
    checks["stable"] = CheckResult(re < 0, re, f"max Re spec(A+) = {re:.3g}")

    X = np.linalg.inv(Delta)
    Z = _z_of(A_plus, X, B)
    zmin = nx.min_eigenvalue(Z)
    checks["negative"] = CheckResult(
        nx.is_positive_definite(Z), zmin,
        f"min eig of -(B'B)^-1 B'(A+ X + X A+')B(B'B)^-1 = {zmin:.3g}",
    )
    proj = np.eye(A.shape[0]) - B @ np.linalg.solve(B.T @ B, B.T)
    for name, Ac in (("range_plus", A_plus), ("range_minus", A_minus)):
        r = nx.spectral_norm(proj @ (A - Ac)) / max(nx.spectral_norm(A - Ac), 1e-300)
        checks[name] = CheckResult(r <= tol, r, f"A - {name[6:]} outside range(B) by {r:.2e}")
    return ValidationReport(checks)


def reconstruct_cost(A_plus, Delta, A, B):
    """Canonical cost from ``(A_plus, Delta)``.

    ``K = (B'B)^{-1} B'(A - A+)``,
    ``Z = -(B'B)^{-1} B'(A+ Delta^{-1} + Delta^{-1} A+')B(B'B)^{-1}`` and
    ``R = det(Z)^{1/m} Z^{-1}``, so ``det R = 1``.
    """
    A_plus, Delta, A, B = (nx.as_matrix(M) for M in (A_plus, Delta, A, B))
    m = B.shape[1]
    K = np.linalg.solve(B.T @ B, B.T @ (A - A_plus))
    Z = _z_of(A_plus, np.linalg.inv(Delta), B)
    if not nx.is_positive_definite(Z):
        raise ReconstructionError(
            f"synthesis not realizable: Z not positive definite (min eig {nx.min_eigenvalue(Z):.3g})",
            stage="cost",
        )
    R = nx.symmetrize(np.linalg.det(Z) ** (1.0 / m) * np.linalg.inv(Z))
    if np.max(np.linalg.eigvals(A - B @ K).real) >= 0:
        raise ReconstructionError("A - B K is not stable", stage="cost")
    return CanonicalCost(K, R)


def _simple(w, rel_tol=1e-8):
    scale = max(np.max(np.abs(w)), 1.0)
    gaps = np.abs(w[:, None] - w[None, :])
    np.fill_diagonal(gaps, np.inf)
    return np.min(gaps, initial=np.inf) > rel_tol * scale


def _conjugate_partner(w, i, rel_tol=1e-8):
    scale = max(np.max(np.abs(w)), 1.0)
    return int(np.argmin(np.abs(w - np.conj(w[i])))) if abs(w[i].imag) > rel_tol * scale else i


def detect_product_structure(A_plus, A_minus, tol=1e-7):
    """Finest common real invariant decomposition of ``A_plus`` and ``A_minus``.

    Eigenvectors ``e+_i`` of ``A_plus`` and ``e-_j`` of ``A_minus`` are joined
    when ``e-_j`` has a non-negligible ``e+_i`` coordinate (Hermitian product
    in the ``e+`` basis).  Connected components, merged across complex
    conjugates, are the blocks.
    """
    A_plus = nx.as_matrix(A_plus, "A_plus")
    A_minus = nx.as_matrix(A_minus, "A_minus")
    n = A_plus.shape[0]
    wp, Vp = nx.eig(A_plus)
    wm, Vm = nx.eig(A_minus)
    if not (_simple(wp) and _simple(wm)):
        return ProductReport(False, [list(range(n))], None, "inconclusive", "repeated eigenvalues")

    C = np.linalg.solve(Vp, Vm / np.linalg.norm(Vm, axis=0))
    C = C / np.linalg.norm(C, axis=0)
    edges = np.abs(C) > tol * np.max(np.abs(C))

    parent = list(range(2 * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        parent[find(a)] = find(b)

    for i, j in zip(*np.nonzero(edges)):
        union(i, n + j)
    for i in range(n):
        union(i, _conjugate_partner(wp, i))
        union(n + i, n + _conjugate_partner(wm, i))

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    blocks = sorted(groups.values())
    if len(blocks) == 1:
        return ProductReport(False, blocks, None, "none", "single invariant block")

    cols = []
    for blk in blocks:
        done = set()
        for i in blk:
            if i in done:
                continue
            j = _conjugate_partner(wp, i)
            v = Vp[:, i]
            if j == i:
                cols.append(v.real / np.linalg.norm(v.real))
            else:
                cols.extend([v.real, v.imag])
            done.update({i, j})
    Tb = np.column_stack(cols)
    sizes = [len(b) for b in blocks]
    off = _off_block_norm(np.linalg.solve(Tb, A_plus @ Tb), sizes) + _off_block_norm(
        np.linalg.solve(Tb, A_minus @ Tb), sizes
    )
    scale = nx.spectral_norm(A_plus) + nx.spectral_norm(A_minus)
    detail = f"{len(blocks)} blocks, off-block residual {off / scale:.1e}"
    return ProductReport(True, blocks, Tb, "product", detail)


def _off_block_norm(M, sizes):
    mask = np.ones(M.shape, dtype=bool)
    k = 0
    for s in sizes:
        mask[k:k + s, k:k + s] = False
        k += s
    return float(np.linalg.norm(M[mask]))


class _FlowModel:
    """Samples of the canonical Hamiltonian flow for a trial ``(K, Z)``.

    With ``Z = R^{-1}`` the canonical cost has Hamiltonian matrix
    ``[[A - B K, B Z B'], [0, -(A - B K)']]``.  Known endpoints fix the
    initial costate; otherwise each trajectory's initial ``(x, p)`` is
    eliminated by linear least squares.
    """

    def __init__(self, bundle, A, B):
        self.A, self.B = A, B
        self.n, self.m = B.shape
        self.h = bundle.step
        self.trajs = bundle.trajectories
        self.bds = bundle.boundaries
        self.N = max(x.shape[0] for x in self.trajs) - 1
        self.data = np.concatenate([x.ravel() for x in self.trajs])
        self.tril = np.tril_indices(self.m)

    def unpack(self, theta):
        n, m = self.n, self.m
        K = theta[: m * n].reshape(m, n)
        L = np.zeros((m, m))
        L[self.tril] = np.concatenate([[0.0], theta[m * n:]])
        d = np.diag_indices(m)
        L[d] = np.exp(L[d])
        return K, L @ L.T

    def pack(self, K, Z):
        L = np.linalg.cholesky(Z / Z[0, 0])
        L[np.diag_indices(self.m)] = np.log(np.diag(L))
        return np.concatenate([K.ravel(), L[self.tril][1:]])

    def predict(self, theta):
        n = self.n
        K, Z = self.unpack(theta)
        F = self.A - self.B @ K
        H = np.block([[F, self.B @ Z @ self.B.T], [np.zeros((n, n)), -F.T]])
        E = nx.expm(self.h * H)
        Phis = [np.eye(2 * n)]
        for _ in range(self.N):
            Phis.append(E @ Phis[-1])
        Phis = np.stack(Phis)
        out = []
        for k, x in enumerate(self.trajs):
            L = x.shape[0]
            top = Phis[:L, :n, :]
            if self.bds is not None:
                bd = self.bds[k]
                PT = Phis[L - 1]
                p0 = np.linalg.solve(PT[:n, n:], bd.x1 - PT[:n, :n] @ bd.x0)
                c = np.concatenate([bd.x0, p0])
            else:
                c = nx.lstsq(top.reshape(-1, 2 * n), x.ravel())
            out.append((top @ c).ravel())
        return np.concatenate(out)

    def residual(self, theta):
        return self.predict(theta) - self.data


def _lqr_start(A, B):
    problem = AutonomousLqProblem(A, B, np.eye(A.shape[0]), np.zeros(B.shape), np.eye(B.shape[1]))
    pair = synthesis_pair(problem)
    return feedback_gain(problem, pair.P_plus), np.eye(B.shape[1])


def _canonicalize(A, B, K, Z):
    R = nx.symmetrize(np.linalg.inv(Z))
    problem = AutonomousLqProblem.from_canonical(A, B, K, R)
    pair = synthesis_pair(problem)
    K_plus = feedback_gain(problem, pair.P_plus)
    R = nx.symmetrize(R / np.linalg.det(R) ** (1.0 / B.shape[1]))
    return CanonicalCost(K_plus, R), pair


def refine(bundle, A, B, starts=None, max_nfev=4000):
    """Fit ``(K, R)`` to the raw samples by nonlinear least squares.

    Each start is a ``CanonicalCost`` or ``(K, Z)`` pair; the LQR gain of
    ``(A, B, I, I)`` is always tried.  The best local optimum is mapped to
    its canonical representative.  Returns ``(cost, pair, info)``.

    Raises
    ------
    ReconstructionError
        ``stage='refine'`` if every start fails.
    """
    A = nx.as_matrix(A, "A")
    B = nx.as_matrix(B, "B")
    model = _FlowModel(bundle, A, B)
    candidates = [_lqr_start(A, B)]
    for s in starts or ():
        if isinstance(s, CanonicalCost):
            candidates.append((s.K, nx.symmetrize(np.linalg.inv(s.R))))
        else:
            candidates.append(s)
    best, reasons = None, []
    for K0, Z0 in candidates:
        try:
            with np.errstate(all="ignore"):
                fit = least_squares(model.residual, model.pack(K0, Z0), method="lm", max_nfev=max_nfev)
        except (np.linalg.LinAlgError, LqError, ValueError) as exc:
            reasons.append(str(exc))
            continue
        if fit.status <= 0 or not np.isfinite(fit.cost):
            reasons.append(fit.message)
            continue
        if best is None or fit.cost < best.cost:
            best = fit
    if best is None:
        raise ReconstructionError(f"no start converged ({'; '.join(reasons)})", stage="refine")
    K, Z = model.unpack(best.x)
    if np.linalg.cond(Z) > 1e12:
        raise ReconstructionError("fitted Z is numerically singular", stage="refine")
    try:
        cost, pair = _canonicalize(A, B, K, Z)
    except (LqError, np.linalg.LinAlgError) as exc:
        raise ReconstructionError(f"fitted cost has no valid synthesis: {exc}", stage="refine") from exc
    rms = float(np.sqrt(2 * best.cost / model.data.size))
    return cost, pair, {"rms_residual": rms, "nfev": int(best.nfev)}


def identify_and_reconstruct(bundle, A, B, refine_fit=False, modulus_tol=1e-6,
                             delta_tol=1e-8, product_tol=1e-7, lag=1):
    """Canonical cost from a trajectory bundle.

    Runs fit, split, delta and cost in order.  With ``refine_fit`` the
    result seeds :func:`refine`, and the run then fails only if that stage
    fails.  Diagnostics hold every residual and the product-structure report.
    ``lag`` is passed to :func:`fit_lifted_propagator`.

    Raises
    ------
    ReconstructionError
        Labelled with the failing stage.
    """
    A = nx.as_matrix(A, "A")
    B = nx.as_matrix(B, "B")
    if bundle.n != A.shape[0]:
        raise ReconstructionError(
            f"bundle dimension {bundle.n} does not match A ({A.shape[0]})", stage="fit"
        )
    diag = {}
    linear = None
    try:
        T, res = fit_lifted_propagator(bundle, lag=lag)
        diag["fit_residual"] = res
        A_plus, A_minus = split_propagator(T, bundle.step, modulus_tol, lag=lag)
        diag["product"] = detect_product_structure(A_plus, A_minus, product_tol)
        Delta, info = recover_delta(A_plus, A_minus, B, tol=delta_tol, strict=False)
        diag["delta_kernel_dim"] = info["kernel_dim"]
        diag["delta_singular_values"] = info["singular_values"]
        diag["synthesis_report"] = validate_synthesis(A_plus, A_minus, Delta, A, B)
        cost = reconstruct_cost(A_plus, Delta, A, B)
        linear = (cost, IdentifiedSynthesis(A_plus, A_minus, Delta, res))
    except ReconstructionError as exc:
        if not refine_fit:
            raise
        diag["linear_failure"] = str(exc)

    if not refine_fit:
        return Reconstruction(linear[0], linear[1], diag)

    starts = [linear[0]] if linear is not None else []
    cost, pair, info = refine(bundle, A, B, starts=starts)
    diag.update({f"refine_{k}": v for k, v in info.items()})
    synth = IdentifiedSynthesis(pair.A_plus, pair.A_minus, pair.Delta, info["rms_residual"])
    diag["product"] = detect_product_structure(pair.A_plus, pair.A_minus, product_tol)
    return Reconstruction(cost, synth, diag)


def bundle_from_boundaries(problem, boundaries, T, N, t0=0.0):
    """Exact optimal trajectories of ``problem`` on ``N`` uniform steps."""
    from .autonomous import optimal_trajectory

    pair = synthesis_pair(problem)
    grid = t0 + np.linspace(0.0, T, N + 1)
    bds = tuple(BoundaryData(t0, t0 + T, x0, x1) for x0, x1 in boundaries)
    trajs = [optimal_trajectory(pair, problem, bd, grid).states for bd in bds]
    return TrajectoryBundle(T / N, trajs, t0, bds)

