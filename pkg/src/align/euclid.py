"""
Rotation alignment in Euclidean space.

``kabsch`` works in any dimension N from the SVD of the cross-covariance,
``horn`` is the N = 3 quaternion eigenvector solution, and
``align_rotation_lie`` is the least-squares-fit-then-project-onto-so(3)
method. All three take N x n matrices whose columns are paired vectors that
share an origin; no centering is done.
"""

import logging
import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from attrs import field, frozen

from constants import LORENTZ_ALIGN_LOG_NAME, ROTATION_TOL, UNIT_QUATERNION_TOL
from errors import (
    Diagnostic,
    InvalidInputError,
    NotARotationError,
    RankDeficientError,
    ShapeMismatchError,
)
from linalg.core import (
    as_finite_matrix,
    mat_log_real,
    principal_eigenpair,
    pseudoinverse,
    svd,
)

logger = logging.getLogger(LORENTZ_ALIGN_LOG_NAME)


AMBIGUITY_TOL = 1e-10


def _finite(instance, attribute, value) -> None:
    if not math.isfinite(value):
        raise InvalidInputError(f"{attribute.name} must be finite, got {value}")


@frozen
class Quaternion:
    q0: float = field(converter=float, validator=_finite)
    q1: float = field(converter=float, validator=_finite)
    q2: float = field(converter=float, validator=_finite)
    q3: float = field(converter=float, validator=_finite)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "Quaternion":
        arr = np.asarray(arr, dtype=float).reshape(-1)
        if arr.shape != (4,):
            raise InvalidInputError(f"expected 4 quaternion components, got {arr.shape[0]}")
        return cls(*arr)

    def as_array(self) -> np.ndarray:
        return np.array([self.q0, self.q1, self.q2, self.q3])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def canonical(self) -> "Quaternion":
        """Sign representative with q0 >= 0 (first nonzero component positive if q0 == 0)."""
        arr = self.as_array()
        nonzero = np.flatnonzero(arr)
        if nonzero.size and arr[nonzero[0]] < 0.0:
            arr = -arr
        return Quaternion.from_array(arr)


def _check_rotation(instance, attribute, value) -> None:
    dim = value.shape[0]
    ortho = np.linalg.norm(value.T @ value - np.eye(dim))
    if ortho > ROTATION_TOL:
        raise NotARotationError(f"matrix is not orthogonal (defect {ortho:.3g})")
    det = np.linalg.det(value)
    if abs(det - 1.0) > ROTATION_TOL:
        raise NotARotationError(f"matrix is not proper (det {det:.6g})")


def _square(value) -> np.ndarray:
    arr = as_finite_matrix(value, "rotation matrix")
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"rotation matrix must be square, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class RotationMatrix:
    m: np.ndarray = field(converter=_square, validator=_check_rotation)


class KabschResult(NamedTuple):
    rotation: RotationMatrix
    singular_values: np.ndarray
    diagnostics: List[Diagnostic]


class HornResult(NamedTuple):
    quaternion: Quaternion
    eigenvalue: float
    eigengap: float
    diagnostics: List[Diagnostic]


class LieRotationResult(NamedTuple):
    rotation: RotationMatrix
    rotation_vector: np.ndarray
    projection_residual: float
    diagnostics: List[Diagnostic]


def quat_mul(p: Quaternion, q: Quaternion) -> Quaternion:
    return Quaternion(
        p.q0 * q.q0 - p.q1 * q.q1 - p.q2 * q.q2 - p.q3 * q.q3,
        p.q0 * q.q1 + p.q1 * q.q0 + p.q2 * q.q3 - p.q3 * q.q2,
        p.q0 * q.q2 - p.q1 * q.q3 + p.q2 * q.q0 + p.q3 * q.q1,
        p.q0 * q.q3 + p.q1 * q.q2 - p.q2 * q.q1 + p.q3 * q.q0,
    )


def quat_conj(q: Quaternion) -> Quaternion:
    return Quaternion(q.q0, -q.q1, -q.q2, -q.q3)


def _require_unit(q: Quaternion) -> None:
    if abs(q.norm() - 1.0) > UNIT_QUATERNION_TOL:
        raise InvalidInputError(f"quaternion is not unit (norm {q.norm():.12g})")


def quat_rotate(q: Quaternion, r: Sequence[float]) -> np.ndarray:
    """Rotate a 3-vector as the imaginary part of q (0, r) q*."""
    _require_unit(q)
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.shape != (3,):
        raise InvalidInputError(f"expected a 3-vector, got {r.shape[0]} components")
    product = quat_mul(quat_mul(q, Quaternion(0.0, *r)), quat_conj(q))
    return np.array([product.q1, product.q2, product.q3])


def quat_to_matrix(q: Quaternion) -> RotationMatrix:
    _require_unit(q)
    return RotationMatrix(np.column_stack([quat_rotate(q, basis) for basis in np.eye(3)]))


def _paired(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = as_finite_matrix(a, "frame A vectors")
    b = as_finite_matrix(b, "frame B vectors")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"frame A is {a.shape} but frame B is {b.shape}")
    return a, b


def kabsch(a, b) -> KabschResult:
    """
    Rotation R in SO(N) maximizing tr(R^T B A^T), i.e. R a_i ~ b_i.

    R = U V^T from H = B A^T = U S V^T, with the last column of U negated when
    that is needed to make det R = +1.
    """
    a, b = _paired(a, b)
    dim = a.shape[0]
    h = b @ a.T
    dec = svd(h)
    u = dec.u.copy()
    if np.linalg.det(u @ dec.v.T) < 0.0:
        u[:, -1] = -u[:, -1]
    rotation = RotationMatrix(u @ dec.v.T)

    sigma = dec.singular_values
    diagnostics = []
    if dim >= 2 and sigma[-1] + sigma[-2] <= AMBIGUITY_TOL * sigma[0]:
        diagnostics.append(Diagnostic.AMBIGUOUS_ALIGNMENT)
        logger.warning(
            {
                "operation": "kabsch",
                "status": Diagnostic.AMBIGUOUS_ALIGNMENT.value,
                "singular_values": sigma.tolist(),
            }
        )
    logger.debug({"operation": "kabsch", "status": "ok", "n": a.shape[1], "dim": dim})
    return KabschResult(rotation=rotation, singular_values=sigma, diagnostics=diagnostics)


def horn_matrix(a, b) -> np.ndarray:
    """Symmetric 4x4 matrix whose top eigenvector is the optimal unit quaternion."""
    a, b = _paired(a, b)
    if a.shape[0] != 3:
        raise InvalidInputError(f"Horn's method needs 3-vectors, got dimension {a.shape[0]}")
    s = a @ b.T
    (sxx, sxy, sxz), (syx, syy, syz), (szx, szy, szz) = s
    return np.array(
        [
            [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
            [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
            [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
            [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
        ]
    )


def horn(a, b) -> HornResult:
    """Unit quaternion q (canonical sign) with quat_to_matrix(q) a_i ~ b_i."""
    n_matrix = horn_matrix(a, b)
    lam, e = principal_eigenpair(n_matrix)

    # push the found eigenvalue below the spectrum to read off the runner-up
    n_norm = float(np.linalg.norm(n_matrix))
    deflated = n_matrix - (lam + n_norm + 1.0) * np.outer(e, e)
    runner_up, _ = principal_eigenpair(deflated)
    gap = lam - runner_up

    diagnostics = []
    if gap <= AMBIGUITY_TOL * n_norm:
        diagnostics.append(Diagnostic.AMBIGUOUS_ALIGNMENT)
        logger.warning(
            {"operation": "horn", "status": Diagnostic.AMBIGUOUS_ALIGNMENT.value, "gap": gap}
        )
    q = Quaternion.from_array(e / np.linalg.norm(e)).canonical()
    logger.debug({"operation": "horn", "status": "ok", "eigenvalue": lam, "gap": gap})
    return HornResult(quaternion=q, eigenvalue=lam, eigengap=gap, diagnostics=diagnostics)


def hat(omega: Sequence[float]) -> np.ndarray:
    w1, w2, w3 = omega
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def rotation_from_vector(omega: Sequence[float]) -> RotationMatrix:
    """Rodrigues' formula for the rotation by |omega| about omega."""
    omega = np.asarray(omega, dtype=float).reshape(-1)
    angle = float(np.linalg.norm(omega))
    w = hat(omega)
    half_sinc = np.sinc(angle / (2.0 * math.pi))
    return RotationMatrix(np.eye(3) + np.sinc(angle / math.pi) * w + 0.5 * half_sinc**2 * (w @ w))


def rotation_to_vector(r) -> np.ndarray:
    """Rotation vector with angle in [0, pi]."""
    r = as_finite_matrix(r, "rotation matrix")
    s = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    c = (np.trace(r) - 1.0) / 2.0
    sin_norm = float(np.linalg.norm(s))
    angle = math.atan2(sin_norm, c)
    if sin_norm > 1e-7:
        return s * (angle / sin_norm)
    if c > 0.0:
        return s
    # angle ~ pi: (R + I) / 2 ~ axis axis^T
    outer = (r + np.eye(3)) / 2.0
    col = outer[:, int(np.argmax(np.diag(outer)))]
    axis = col / np.linalg.norm(col)
    if axis @ s < 0.0:
        axis = -axis
    return angle * axis


def align_rotation_lie(a, b) -> LieRotationResult:
    """
    Rotation by projection through so(3): R0 = B A^+, l0 = log R0, keep the
    antisymmetric part, exponentiate.
    """
    a, b = _paired(a, b)
    if a.shape[0] != 3:
        raise InvalidInputError(f"so(3) projection needs 3-vectors, got dimension {a.shape[0]}")
    pinv = pseudoinverse(a)
    if pinv.rank < 3:
        raise RankDeficientError(
            f"frame A vectors span rank {pinv.rank} < 3; linear fit is not unique",
            rank=pinv.rank,
        )
    r0 = b @ pinv.matrix
    l0 = mat_log_real(r0)
    skew = (l0 - l0.T) / 2.0
    omega = np.array([skew[2, 1], skew[0, 2], skew[1, 0]])
    residual = float(np.linalg.norm(skew - l0) ** 2)
    logger.debug({"operation": "align_rotation_lie", "status": "ok", "projection_residual": residual})
    return LieRotationResult(
        rotation=rotation_from_vector(omega),
        rotation_vector=omega,
        projection_residual=residual,
        diagnostics=[],
    )
