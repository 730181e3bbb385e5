"""
The Lorentz algebra so(3,1) and the proper orthochronous Lorentz group.

Components are ordered (t, x, y, z) with metric eta = diag(-1, +1, +1, +1).
An algebra element is a boost vector ``zeta`` and a rotation vector
``theta``; its matrix is

    [[0,   z1,  z2,  z3],
     [z1,  0,  -t3,  t2],
     [z2,  t3,  0,  -t1],
     [z3, -t2,  t1,  0 ]]

``exp_lorentz`` evaluates the exponential in closed form from the two
invariants a, b of the generator (its eigenvalues are +-b and +-ia):

    exp A = (f0 I + f1 A + f2 A^2 + f3 A^3) / (a^2 + b^2)
    f0 = b^2 cos a + a^2 cosh b
    f1 = b^2 sin(a)/a + a^2 sinh(b)/b
    f2 = cosh b - cos a
    f3 = sinh(b)/b - sin(a)/a

Note f3 pairs sinh b with b. A pure x-boost with velocity +beta, i.e. the
matrix with -beta*gamma off the diagonal, is exp of zeta = (-artanh beta, 0, 0).
"""

import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from attrs import field, frozen

from constants import (
    ALGEBRA_TOL,
    DET_DEFECT_TOL,
    ETA_DEFECT_TOL,
    METRIC_SIGNATURE,
    ORTHOCHRONOUS_SLACK,
)
from errors import InvalidInputError, NotALorentzMatrixError, NotAnAlgebraElementError
from linalg.core import as_finite_matrix, mat_exp_series, mat_log_real


ETA = np.diag(METRIC_SIGNATURE)

# below this a^2 + b^2 the closed form is 0/0; fall back to the series
DEGENERATE_LIMIT = 1e-8
SERIES_CUTOFF = 1e-2


def _vector3(value) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise InvalidInputError(f"expected a 3-vector, got {arr.shape[0]} components")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("3-vector has non-finite components")
    arr.setflags(write=False)
    return arr


def _finite(instance, attribute, value) -> None:
    if not math.isfinite(value):
        raise InvalidInputError(f"{attribute.name} must be finite, got {value}")


def _matrix4(value) -> np.ndarray:
    arr = as_finite_matrix(value, "Lorentz matrix")
    if arr.shape != (4, 4):
        raise InvalidInputError(f"Lorentz matrix must be 4x4, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@frozen(eq=False)
class LorentzAlgebraElement:
    zeta: np.ndarray = field(converter=_vector3)
    theta: np.ndarray = field(converter=_vector3)

    @classmethod
    def zero(cls) -> "LorentzAlgebraElement":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, params: Sequence[float]) -> "LorentzAlgebraElement":
        params = np.asarray(params, dtype=float).reshape(-1)
        if params.shape != (6,):
            raise InvalidInputError(f"expected 6 algebra coordinates, got {params.shape[0]}")
        return cls(params[:3], params[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.zeta, self.theta])

    def matrix(self) -> np.ndarray:
        return algebra_to_matrix(self)


@frozen
class FourVector:
    t: float = field(converter=float, validator=_finite)
    x: float = field(converter=float, validator=_finite)
    y: float = field(converter=float, validator=_finite)
    z: float = field(converter=float, validator=_finite)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "FourVector":
        arr = np.asarray(arr, dtype=float).reshape(-1)
        if arr.shape != (4,):
            raise InvalidInputError(f"expected 4 components, got {arr.shape[0]}")
        return cls(*arr)

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.x, self.y, self.z])


class LorentzDefect(NamedTuple):
    eta_defect: float
    det_defect: float
    orthochronous: bool


def lorentz_defect(m) -> LorentzDefect:
    """How far ``m`` is from SO(3,1)+: ||m^T eta m - eta||_F, |det m - 1|, m00 >= 0."""
    m = as_finite_matrix(m, "Lorentz defect input")
    return LorentzDefect(
        eta_defect=float(np.linalg.norm(m.T @ ETA @ m - ETA)),
        det_defect=float(abs(np.linalg.det(m) - 1.0)),
        orthochronous=bool(m[0, 0] >= 0.0),
    )


def _check_lorentz(instance, attribute, value) -> None:
    defect = lorentz_defect(value)
    if defect.eta_defect > ETA_DEFECT_TOL:
        raise NotALorentzMatrixError(
            f"matrix is not eta-orthogonal (defect {defect.eta_defect:.3g})"
        )
    if defect.det_defect > DET_DEFECT_TOL:
        raise NotALorentzMatrixError(f"matrix is improper (|det - 1| = {defect.det_defect:.3g})")
    if value[0, 0] < 1.0 - ORTHOCHRONOUS_SLACK:
        raise NotALorentzMatrixError(f"matrix is not orthochronous (m00 = {value[0, 0]:.6g})")


@frozen(eq=False)
class LorentzMatrix:
    m: np.ndarray = field(converter=_matrix4, validator=_check_lorentz)

    @classmethod
    def identity(cls) -> "LorentzMatrix":
        return cls(np.eye(4))

    def inverse(self) -> "LorentzMatrix":
        return LorentzMatrix(ETA @ self.m.T @ ETA)

    def compose(self, other: "LorentzMatrix") -> "LorentzMatrix":
        return LorentzMatrix(self.m @ other.m)


def _generator(zeta, theta) -> np.ndarray:
    z1, z2, z3 = zeta
    t1, t2, t3 = theta
    return np.array(
        [
            [0.0, z1, z2, z3],
            [z1, 0.0, -t3, t2],
            [z2, t3, 0.0, -t1],
            [z3, -t2, t1, 0.0],
        ]
    )


def algebra_to_matrix(e: LorentzAlgebraElement) -> np.ndarray:
    return _generator(e.zeta, e.theta)


def matrix_to_algebra(m, tol: float = ALGEBRA_TOL) -> LorentzAlgebraElement:
    m = as_finite_matrix(m, "algebra matrix")
    if m.shape != (4, 4):
        raise InvalidInputError(f"algebra matrix must be 4x4, got {m.shape}")
    e = LorentzAlgebraElement(m[0, 1:], (m[3, 2], m[1, 3], m[2, 1]))
    deviation = float(np.max(np.abs(algebra_to_matrix(e) - m)))
    if deviation > tol:
        raise NotAnAlgebraElementError(
            f"matrix deviates from so(3,1) form by {deviation:.3g} (tol {tol:g})"
        )
    return e


def project_to_algebra(l0) -> LorentzAlgebraElement:
    """
    Frobenius-nearest so(3,1) element: drop the diagonal, average the first
    row with the first column, keep the antisymmetric part of the spatial block.
    """
    m = as_finite_matrix(l0, "projection input")
    if m.shape != (4, 4):
        raise InvalidInputError(f"projection input must be 4x4, got {m.shape}")
    zeta = (m[0, 1:] + m[1:, 0]) / 2.0
    theta = (
        (m[3, 2] - m[2, 3]) / 2.0,
        (m[1, 3] - m[3, 1]) / 2.0,
        (m[2, 1] - m[1, 2]) / 2.0,
    )
    return LorentzAlgebraElement(zeta, theta)


def _sinc(x: float) -> float:
    if x < SERIES_CUTOFF:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0
    return math.sin(x) / x


def _sinhc(x: float) -> float:
    if x < SERIES_CUTOFF:
        x2 = x * x
        return 1.0 + x2 / 6.0 + x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0
    return math.sinh(x) / x


def _sinhc_minus_one(x: float) -> float:
    x2 = x * x
    if x < SERIES_CUTOFF:
        return x2 * (1.0 / 6.0 + x2 * (1.0 / 120.0 + x2 * (1.0 / 5040.0 + x2 / 362880.0)))
    return (math.sinh(x) - x) / x


def _one_minus_sinc(x: float) -> float:
    x2 = x * x
    if x < SERIES_CUTOFF:
        return x2 * (1.0 / 6.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0 - x2 / 362880.0)))
    return (x - math.sin(x)) / x


def invariants(zeta: np.ndarray, theta: np.ndarray) -> Tuple[float, float]:
    """Nonnegative a^2, b^2 of a generator, computed without cancellation."""
    diff = float(theta @ theta - zeta @ zeta)
    dot = float(theta @ zeta)
    root = math.hypot(diff, 2.0 * dot)
    if diff >= 0.0:
        a2 = (diff + root) / 2.0
        b2 = 2.0 * dot * dot / (diff + root) if root > 0.0 else 0.0
    else:
        b2 = (root - diff) / 2.0
        a2 = 2.0 * dot * dot / (root - diff)
    return a2, b2


def exp_lorentz_matrix(zeta: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Unchecked closed-form exponential; the inner loop of the direct solver."""
    zeta = np.asarray(zeta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    gen = _generator(zeta, theta)
    a2, b2 = invariants(zeta, theta)
    total = a2 + b2
    if total < DEGENERATE_LIMIT:
        return mat_exp_series(gen)

    a = math.sqrt(a2)
    b = math.sqrt(b2)
    # f2 and f3 rewritten so that no term cancels as a, b -> 0
    half_a = math.sin(a / 2.0)
    half_b = math.sinh(b / 2.0)
    c0 = (b2 * math.cos(a) + a2 * math.cosh(b)) / total
    c1 = (b2 * _sinc(a) + a2 * _sinhc(b)) / total
    c2 = 2.0 * (half_b * half_b + half_a * half_a) / total
    c3 = (_sinhc_minus_one(b) + _one_minus_sinc(a)) / total

    gen2 = gen @ gen
    gen3 = gen2 @ gen
    return c0 * np.eye(4) + c1 * gen + c2 * gen2 + c3 * gen3


def exp_lorentz(e: LorentzAlgebraElement) -> LorentzMatrix:
    return LorentzMatrix(exp_lorentz_matrix(e.zeta, e.theta))


def boost(beta: Sequence[float]) -> LorentzMatrix:
    """Pure boost taking the rest frame to a frame moving with velocity ``beta``."""
    beta = _vector3(beta)
    beta2 = float(beta @ beta)
    if beta2 >= 1.0:
        raise InvalidInputError(f"|beta| must be below 1, got {math.sqrt(beta2):.6g}")
    m = np.eye(4)
    if beta2 == 0.0:
        return LorentzMatrix(m)
    gamma = 1.0 / math.sqrt(1.0 - beta2)
    m[0, 0] = gamma
    m[0, 1:] = -gamma * beta
    m[1:, 0] = -gamma * beta
    m[1:, 1:] += (gamma - 1.0) * np.outer(beta, beta) / beta2
    return LorentzMatrix(m)


def lie_distance(lam: LorentzMatrix, lam0) -> float:
    """||log(lam^-1 lam0)||_F^2, the group form of the algebra projection objective."""
    return float(np.linalg.norm(mat_log_real(lam.inverse().m @ np.asarray(lam0, dtype=float))) ** 2)


def apply(lam: LorentzMatrix, v: FourVector) -> FourVector:
    return FourVector.from_array(lam.m @ v.as_array())


def minkowski_inner(u: FourVector, v: FourVector) -> float:
    return -u.t * v.t + u.x * v.x + u.y * v.y + u.z * v.z


def stack_vectors(vs: Sequence[FourVector]) -> np.ndarray:
    """4 x n matrix whose columns are the given vectors."""
    if len(vs) == 0:
        raise InvalidInputError("need at least one 4-vector")
    return np.column_stack([v.as_array() for v in vs])


def unstack_vectors(x: np.ndarray) -> List[FourVector]:
    return [FourVector.from_array(col) for col in np.asarray(x, dtype=float).T]
