"""
Dense real linear algebra for the small matrices used by the aligners.

All functions are pure and take/return ``numpy`` arrays. The decompositions
are written out (one-sided Jacobi SVD, shifted power iteration, inverse
scaling-and-squaring logarithm) so results do not depend on which LAPACK
build numpy was linked against; numpy supplies the array arithmetic, linear
solves, determinants and quadrature nodes.
"""

import logging
import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from constants import LORENTZ_ALIGN_LOG_NAME, RANK_TOL
from errors import (
    ConvergenceError,
    Diagnostic,
    InvalidInputError,
    NotInIdentityComponentError,
)

logger = logging.getLogger(LORENTZ_ALIGN_LOG_NAME)


JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60

SYMMETRY_TOL = 1e-10
PROJECTOR_TOL = 1e-14
STAGNANT_START_TOL = 1e-8

EXP_SCALE_TARGET = 0.5
EXP_TAYLOR_TERMS = 18

LOG_SQRT_TARGET = 0.25
LOG_PADE_DEGREE = 7
LOG_MAX_SQUARE_ROOTS = 64
SQRT_MAX_ITER = 100
SQRT_TOL = 1e-14
NEGATIVE_AXIS_TOL = 1e-12
SINGULAR_TOL = 1e-13

EPS = np.finfo(float).eps


class SvdResult(NamedTuple):
    """Full SVD, ``m = u @ diag(singular_values) @ v.T`` (padded to m x n)."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def sigma_matrix(self) -> np.ndarray:
        sigma = np.zeros((self.u.shape[0], self.v.shape[0]))
        k = self.singular_values.size
        sigma[:k, :k] = np.diag(self.singular_values)
        return sigma

    def reconstruct(self) -> np.ndarray:
        return self.u @ self.sigma_matrix() @ self.v.T


class Pseudoinverse(NamedTuple):
    matrix: np.ndarray
    rank: int
    diagnostics: List[Diagnostic]


class _StagnantStartError(Exception):
    """Start vector (numerically) orthogonal to the dominant eigenvector."""


def as_finite_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.array(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _as_finite_square(m, name: str) -> np.ndarray:
    arr = as_finite_matrix(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    return arr


def _one_sided_jacobi(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthogonalize the columns of ``g`` by plane rotations.

    Returns (w, v) with ``g @ v = w``, ``v`` orthogonal and the columns of
    ``w`` mutually orthogonal.
    """
    w = g.copy()
    k = w.shape[1]
    v = np.eye(k)
    for sweep in range(1, JACOBI_MAX_SWEEPS + 1):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                alpha = float(w[:, p] @ w[:, p])
                beta = float(w[:, q] @ w[:, q])
                gamma = float(w[:, p] @ w[:, q])
                if gamma == 0.0 or abs(gamma) <= JACOBI_TOL * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                wp = w[:, p].copy()
                w[:, p] = c * wp - s * w[:, q]
                w[:, q] = s * wp + c * w[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            return w, v
    raise ConvergenceError(
        f"one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps",
        iterations=JACOBI_MAX_SWEEPS,
    )


def _complete_basis(columns: Sequence[np.ndarray], dim: int) -> List[np.ndarray]:
    """Extend orthonormal ``columns`` to an orthonormal basis of R^dim."""
    basis = list(columns)
    extra = []
    while len(basis) < dim:
        best = None
        for candidate in np.eye(dim):
            vec = candidate.copy()
            # twice is enough (Kahan)
            for _ in range(2):
                for b in basis:
                    vec -= (b @ vec) * b
            if best is None or np.linalg.norm(vec) > np.linalg.norm(best):
                best = vec
        best = best / np.linalg.norm(best)
        basis.append(best)
        extra.append(best)
    return extra


def svd(m) -> SvdResult:
    """
    Full singular value decomposition by one-sided Jacobi.

    Rotations act on the smaller dimension; singular values are returned
    nonincreasing and zero singular directions are completed to full
    orthogonal ``u`` (m x m) and ``v`` (n x n).
    """
    m = as_finite_matrix(m, "svd input")
    rows, cols = m.shape
    transposed = rows < cols
    g = m.T if transposed else m
    p, k = g.shape

    w, right = _one_sided_jacobi(g)
    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, w, right = sigma[order], w[:, order], right[:, order]

    zero_tol = sigma[0] * EPS * max(p, k) if sigma[0] > 0 else 0.0
    good = sigma > zero_tol
    left_cols = [w[:, j] / sigma[j] for j in range(k) if good[j]]
    fill = iter(_complete_basis(left_cols, p))
    left = np.empty((p, p))
    taken = iter(left_cols)
    for j in range(k):
        left[:, j] = next(taken) if good[j] else next(fill)
    for j in range(k, p):
        left[:, j] = next(fill)

    if transposed:
        return SvdResult(u=right, singular_values=sigma, v=left)
    return SvdResult(u=left, singular_values=sigma, v=right)


def numerical_rank(m, rank_tol: float = RANK_TOL) -> int:
    sigma = svd(m).singular_values
    if sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rank_tol * sigma[0]))


def pseudoinverse(x, rank_tol: float = RANK_TOL) -> Pseudoinverse:
    """
    Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rank_tol * sigma_1`` are treated as zero. A rank
    below the row count (4 for 4 x n data) attaches a rank-deficient
    diagnostic; the caller decides whether that is fatal.
    """
    x = as_finite_matrix(x, "pseudoinverse input")
    rows, cols = x.shape
    dec = svd(x)
    k = dec.singular_values.size
    sigma = dec.singular_values
    keep = sigma > rank_tol * sigma[0] if sigma[0] > 0 else np.zeros(k, dtype=bool)
    inv_sigma = np.zeros(k)
    np.divide(1.0, sigma, out=inv_sigma, where=keep)
    matrix = dec.v[:, :k] @ (inv_sigma[:, None] * dec.u[:, :k].T)

    rank = int(np.count_nonzero(keep))
    diagnostics = []
    if rank < rows:
        diagnostics.append(Diagnostic.RANK_DEFICIENT)
        logger.warning(
            {
                "operation": "pseudoinverse",
                "status": Diagnostic.RANK_DEFICIENT.value,
                "rank": rank,
                "shape": (rows, cols),
            }
        )
    return Pseudoinverse(matrix=matrix, rank=rank, diagnostics=diagnostics)


def _start_vectors(dim: int) -> List[np.ndarray]:
    first = np.ones(dim) / math.sqrt(dim)
    second = np.array([(-1.0) ** i * (i + 1) for i in range(dim)])
    return [first, second / np.linalg.norm(second)]


def _dominant_projector(shifted: np.ndarray, max_iter: int) -> Tuple[np.ndarray, int]:
    """Repeated squaring of the shifted matrix, i.e. power iteration 2^k steps at a time."""
    p = shifted / np.linalg.norm(shifted)
    for k in range(1, max_iter + 1):
        q = p @ p
        q /= np.linalg.norm(q)
        if np.linalg.norm(q - p) <= PROJECTOR_TOL:
            return q, k
        p = q
    raise ConvergenceError(
        f"power iteration did not settle within {max_iter} squarings", iterations=max_iter
    )


def _polish(
    s: np.ndarray,
    shifted: np.ndarray,
    projector: np.ndarray,
    start: np.ndarray,
    tol: float,
    budget: int,
) -> Tuple[float, np.ndarray, int]:
    x = projector @ start
    norm = np.linalg.norm(x)
    if norm <= STAGNANT_START_TOL:
        raise _StagnantStartError()
    e = x / norm
    s_norm = np.linalg.norm(s)
    for it in range(max(budget, 1)):
        lam = float(e @ s @ e)
        if np.linalg.norm(s @ e - lam * e) <= tol * s_norm:
            return lam, e, it
        y = shifted @ e
        e = y / np.linalg.norm(y)
    raise ConvergenceError(
        f"eigenpair residual above {tol:g} after {budget} power steps", iterations=budget
    )


def principal_eigenpair(
    s, tol: float = 1e-12, max_iter: int = 200
) -> Tuple[float, np.ndarray]:
    """
    Algebraically largest eigenvalue of a symmetric matrix and a unit eigenvector.

    Power iteration runs on ``S + mu*I`` with ``mu = ||S||_F + 1`` so the
    wanted eigenvalue dominates; ``mu`` is subtracted again through the
    Rayleigh quotient on ``S``. A start vector orthogonal to the dominant
    eigenvector is retried once from a fixed alternative.
    """
    s = _as_finite_square(s, "eigenproblem input")
    s_norm = np.linalg.norm(s)
    if np.linalg.norm(s - s.T) > SYMMETRY_TOL * s_norm:
        raise InvalidInputError("eigenproblem input is not symmetric")
    dim = s.shape[0]
    starts = _start_vectors(dim)
    if s_norm == 0.0:
        return 0.0, starts[0]

    s = (s + s.T) / 2.0
    shifted = s + (s_norm + 1.0) * np.eye(dim)
    projector, squarings = _dominant_projector(shifted, max_iter)

    retrying = Retrying(
        stop=stop_after_attempt(len(starts)),
        retry=retry_if_exception_type(_StagnantStartError),
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                start = starts[attempt.retry_state.attempt_number - 1]
                lam, e, _ = _polish(
                    s, shifted, projector, start, tol, max_iter - squarings
                )
    except _StagnantStartError:
        raise ConvergenceError(
            "every start vector is orthogonal to the dominant eigenvector",
            iterations=squarings,
        )
    return lam, e


def mat_exp_series(m) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a degree-18 Taylor polynomial."""
    m = _as_finite_square(m, "exponential input")
    dim = m.shape[0]
    norm = np.linalg.norm(m)
    squarings = 0
    if norm > EXP_SCALE_TARGET:
        squarings = max(0, math.ceil(math.log2(norm / EXP_SCALE_TARGET)))
        while norm / 2.0**squarings > EXP_SCALE_TARGET:
            squarings += 1
    x = m / 2.0**squarings
    ident = np.eye(dim)
    result = ident.copy()
    for k in range(EXP_TAYLOR_TERMS, 0, -1):
        result = ident + (x @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result


def _check_principal_log_exists(m: np.ndarray) -> None:
    scale = max(1.0, np.linalg.norm(m))
    for lam in np.linalg.eigvals(m):
        if abs(lam) <= SINGULAR_TOL * scale:
            raise NotInIdentityComponentError("matrix is singular; no logarithm exists")
        if lam.real < 0.0 and abs(lam.imag) <= NEGATIVE_AXIS_TOL * abs(lam):
            raise NotInIdentityComponentError(
                f"eigenvalue {lam.real:.6g} on the negative real axis; no principal real logarithm"
            )


def _sqrtm_denman_beavers(a: np.ndarray) -> np.ndarray:
    ident = np.eye(a.shape[0])
    y, z = a.copy(), ident
    previous = math.inf
    for _ in range(SQRT_MAX_ITER):
        try:
            y_inv = np.linalg.inv(y)
            z_inv = np.linalg.inv(z)
        except np.linalg.LinAlgError as exc:
            raise NotInIdentityComponentError(f"square root iteration broke down: {exc}")
        y_next = (y + z_inv) / 2.0
        z_next = (z + y_inv) / 2.0
        delta = np.linalg.norm(y_next - y) / np.linalg.norm(y_next)
        y, z = y_next, z_next
        if delta <= SQRT_TOL or (delta <= 1e-8 and delta >= previous):
            return y
        previous = delta
    raise NotInIdentityComponentError(
        f"square root iteration did not converge in {SQRT_MAX_ITER} steps"
    )


def _log_pade(x: np.ndarray) -> np.ndarray:
    """Diagonal Pade approximant of log(I + X) in Gauss-Legendre partial-fraction form."""
    ident = np.eye(x.shape[0])
    nodes, weights = np.polynomial.legendre.leggauss(LOG_PADE_DEGREE)
    nodes = (nodes + 1.0) / 2.0
    weights = weights / 2.0
    result = np.zeros_like(x)
    for node, weight in zip(nodes, weights):
        result += weight * np.linalg.solve(ident + node * x, x)
    return result


def mat_log_real(m) -> np.ndarray:
    """
    Principal real matrix logarithm by inverse scaling and squaring.

    Raises NotInIdentityComponentError when M is singular or has an
    eigenvalue on the closed negative real axis.
    """
    m = _as_finite_square(m, "logarithm input")
    _check_principal_log_exists(m)
    ident = np.eye(m.shape[0])
    root = m
    roots = 0
    while np.linalg.norm(root - ident) > LOG_SQRT_TARGET:
        if roots >= LOG_MAX_SQUARE_ROOTS:
            raise NotInIdentityComponentError(
                f"no convergence towards identity after {roots} square roots"
            )
        root = _sqrtm_denman_beavers(root)
        roots += 1
    return 2.0**roots * _log_pade(root - ident)
