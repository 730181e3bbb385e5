"""
Optimal Lorentz transformation between two frames.

Given 4 x n matrices X, Y whose columns are the same events/velocities as
measured in frames A and B, find Lambda in SO(3,1)+ with Lambda X ~ Y.

Two solvers:

  * ``align_direct`` minimizes sum_i ||y_i - exp(A(zeta, theta)) x_i||^2
    (Euclidean component norm) over the six algebra coordinates with a
    quasi-Newton iteration.
  * ``align_lie`` fits the unconstrained linear map Lambda0 = Y X^+, takes its
    logarithm, projects onto so(3,1) and exponentiates, either with the closed
    form or with the scaling-and-squaring series.

Files and the sanity case list vectors as rows; everything here takes
vectors as columns.
"""

import logging
import math
from enum import Enum
from functools import partial
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from attrs import field, frozen
from pydantic import BaseModel, validator

from constants import LORENTZ_ALIGN_LOG_NAME, RANK_TOL
from errors import (
    ConvergenceError,
    Diagnostic,
    InvalidInputError,
    LorentzAlignError,
    RankDeficientError,
    ShapeMismatchError,
)
from lie.lorentz import (
    LorentzAlgebraElement,
    LorentzMatrix,
    algebra_to_matrix,
    exp_lorentz,
    exp_lorentz_matrix,
    project_to_algebra,
)
from linalg.core import as_finite_matrix, mat_exp_series, mat_log_real, numerical_rank, pseudoinverse

logger = logging.getLogger(LORENTZ_ALIGN_LOG_NAME)


ARMIJO_C = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_LINE_SEARCH_FAILURES = 3
CURVATURE_TOL = 1e-12

# Nelder-Mead coefficients and initial simplex offsets
NM_REFLECT = 1.0
NM_EXPAND = 2.0
NM_CONTRACT = 0.5
NM_SHRINK = 0.5
NM_NONZERO_DELTA = 0.05
NM_ZERO_DELTA = 0.00025
NM_EVALS_PER_DIM = 200
NM_XATOL = 1e-10

PARAM_DIM = 6


class AlignmentMethod(str, Enum):
    DIRECT = "direct"
    LIE = "lie-algebra"
    LIE_SERIES = "lie-algebra-series"


class ExpPath(str, Enum):
    """How ``align_lie`` maps the projected algebra element back to the group."""

    HABER = "haber"
    SERIES = "series"


LIE_METHODS = {ExpPath.HABER: AlignmentMethod.LIE, ExpPath.SERIES: AlignmentMethod.LIE_SERIES}


class SolverOptions(BaseModel):
    """Controls for ``align_direct``."""

    grad_tol: float = 1e-12
    step_tol: float = 1e-14
    max_iters: int = 10000
    fd_step: float = 1e-6
    init: Optional[LorentzAlgebraElement] = None
    warm_start: bool = False

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @validator("grad_tol", "step_tol", "fd_step")
    def _positive(cls, value, field):
        if not value > 0.0:
            raise ValueError(f"{field.name} must be positive, got {value}")
        return value

    @validator("max_iters")
    def _at_least_one(cls, value):
        if value < 1:
            raise ValueError(f"max_iters must be at least 1, got {value}")
        return value

    def initial_params(self) -> np.ndarray:
        if self.init is None:
            return np.zeros(PARAM_DIM)
        return self.init.as_vector()


def _nonnegative(instance, attribute, value) -> None:
    if not value >= 0.0:
        raise InvalidInputError(f"{attribute.name} must be nonnegative, got {value}")


@frozen(eq=False)
class AlignmentResult:
    lorentz: LorentzMatrix
    algebra: LorentzAlgebraElement
    residual: float = field(validator=_nonnegative)
    method: AlignmentMethod
    iterations: int
    diagnostics: List[Diagnostic] = field(factory=list)
    converged: bool = True
    projection_residual: Optional[float] = None


class ErrorNorms(NamedTuple):
    frob: float
    max_abs: float


class _SolverState(NamedTuple):
    params: np.ndarray
    value: float
    iterations: int
    converged: bool
    stop: str


def _paired(x, y) -> Tuple[np.ndarray, np.ndarray]:
    x = as_finite_matrix(x, "frame A vectors")
    y = as_finite_matrix(y, "frame B vectors")
    if x.shape != y.shape:
        raise ShapeMismatchError(f"frame A is {x.shape} but frame B is {y.shape}")
    if x.shape[0] != 4:
        raise ShapeMismatchError(f"4-vectors expected as columns, got {x.shape[0]} rows")
    return x, y


def _objective_params(params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    try:
        lam = exp_lorentz_matrix(params[:3], params[3:])
    except OverflowError:
        return math.inf
    r = y - lam @ x
    value = float(np.sum(r * r))
    return value if math.isfinite(value) else math.inf


def objective(e: LorentzAlgebraElement, x, y) -> float:
    """sum_i ||y_i - exp_lorentz(e) x_i||^2 with the Euclidean component norm."""
    x, y = _paired(x, y)
    return _objective_params(e.as_vector(), x, y)


def fd_gradient(fun: Callable[[np.ndarray], float], params: np.ndarray, fd_step: float) -> np.ndarray:
    """Central differences with step fd_step * max(1, |param|)."""
    grad = np.empty(params.size)
    for i in range(params.size):
        h = fd_step * max(1.0, abs(params[i]))
        up = params.copy()
        down = params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fun(up) - fun(down)) / (up[i] - down[i])
    return grad


def _armijo(
    fun: Callable[[np.ndarray], float],
    params: np.ndarray,
    value: float,
    direction: np.ndarray,
    slope: float,
    step_tol: float,
) -> Tuple[Optional[float], float]:
    t = 1.0
    length = float(np.max(np.abs(direction)))
    floor = step_tol * max(1.0, float(np.max(np.abs(params))))
    while t * length > floor:
        trial = fun(params + t * direction)
        if trial <= value + ARMIJO_C * t * slope:
            return t, trial
        t *= BACKTRACK_FACTOR
    return None, value


def _nelder_mead(
    fun: Callable[[np.ndarray], float], start: np.ndarray, max_evals: int, fatol: float
) -> Tuple[np.ndarray, float]:
    dim = start.size
    simplex = [start.copy()]
    for k in range(dim):
        vertex = start.copy()
        vertex[k] = (1.0 + NM_NONZERO_DELTA) * vertex[k] if vertex[k] != 0.0 else NM_ZERO_DELTA
        simplex.append(vertex)
    simplex = np.array(simplex)
    values = np.array([fun(v) for v in simplex])
    evals = dim + 1

    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if (
            np.max(np.abs(simplex[1:] - simplex[0])) <= NM_XATOL
            and np.max(np.abs(values[1:] - values[0])) <= fatol
        ):
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = centroid + NM_REFLECT * (centroid - worst)
        f_reflected = fun(reflected)
        evals += 1
        if f_reflected < values[0]:
            expanded = centroid + NM_REFLECT * NM_EXPAND * (centroid - worst)
            f_expanded = fun(expanded)
            evals += 1
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
            continue
        if f_reflected < values[-2]:
            simplex[-1], values[-1] = reflected, f_reflected
            continue
        if f_reflected < values[-1]:
            contracted = centroid + NM_CONTRACT * NM_REFLECT * (centroid - worst)
            f_contracted = fun(contracted)
            accept = f_contracted <= f_reflected
        else:
            contracted = centroid - NM_CONTRACT * (centroid - worst)
            f_contracted = fun(contracted)
            accept = f_contracted < values[-1]
        evals += 1
        if accept:
            simplex[-1], values[-1] = contracted, f_contracted
            continue
        for j in range(1, dim + 1):
            simplex[j] = simplex[0] + NM_SHRINK * (simplex[j] - simplex[0])
            values[j] = fun(simplex[j])
        evals += dim

    best = int(np.argmin(values))
    return simplex[best], float(values[best])


def _minimize(fun: Callable[[np.ndarray], float], start: np.ndarray, opts: SolverOptions) -> _SolverState:
    """BFGS on the inverse Hessian with Armijo backtracking and a Nelder-Mead restart."""
    ident = np.eye(start.size)
    params = start.astype(float).copy()
    value = fun(params)
    grad = fd_gradient(fun, params, opts.fd_step)
    inv_hess = ident.copy()
    scaled = False
    failures = 0

    for iteration in range(opts.max_iters):
        if np.max(np.abs(grad)) <= opts.grad_tol * max(1.0, value):
            return _SolverState(params, value, iteration, True, "gradient")

        direction = -inv_hess @ grad
        slope = float(grad @ direction)
        if slope >= 0.0:
            inv_hess = ident.copy()
            direction = -grad
            slope = float(grad @ direction)

        t, new_value = _armijo(fun, params, value, direction, slope, opts.step_tol)
        if t is None:
            failures += 1
            inv_hess = ident.copy()
            scaled = False
            if failures < MAX_LINE_SEARCH_FAILURES:
                continue
            nm_params, nm_value = _nelder_mead(
                fun, params, NM_EVALS_PER_DIM * start.size, opts.grad_tol * max(1.0, value)
            )
            logger.debug(
                {
                    "operation": "nelder_mead_restart",
                    "status": "improved" if nm_value < value else "stalled",
                    "value": value,
                    "restart_value": nm_value,
                }
            )
            if nm_value < value:
                params, value = nm_params, nm_value
                grad = fd_gradient(fun, params, opts.fd_step)
                failures = 0
                continue
            # no step longer than step_tol decreases the objective
            return _SolverState(params, value, iteration + 1, True, "step")

        failures = 0
        step = t * direction
        params = params + step
        value = new_value
        new_grad = fd_gradient(fun, params, opts.fd_step)
        change = new_grad - grad
        grad = new_grad

        if np.max(np.abs(step)) <= opts.step_tol * max(1.0, float(np.max(np.abs(params)))):
            return _SolverState(params, value, iteration + 1, True, "step")

        curvature = float(step @ change)
        if curvature > CURVATURE_TOL * np.linalg.norm(step) * np.linalg.norm(change):
            if not scaled:
                inv_hess = (curvature / float(change @ change)) * ident
                scaled = True
            rho = 1.0 / curvature
            left = ident - rho * np.outer(step, change)
            inv_hess = left @ inv_hess @ left.T + rho * np.outer(step, step)

    return _SolverState(params, value, opts.max_iters, False, "max_iters")


def _input_diagnostics(x: np.ndarray) -> List[Diagnostic]:
    diagnostics = []
    if x.shape[1] < 3:
        diagnostics.append(Diagnostic.UNDERDETERMINED)
    if numerical_rank(x, RANK_TOL) < 4:
        diagnostics.append(Diagnostic.RANK_DEFICIENT)
    return diagnostics


def align_direct(x, y, opts: Optional[SolverOptions] = None) -> AlignmentResult:
    """
    Local minimizer of the least-squares objective over (zeta, theta).

    Raises ConvergenceError (with ``best`` set to the last iterate's result)
    when ``opts.max_iters`` runs out.
    """
    x, y = _paired(x, y)
    opts = opts or SolverOptions()
    diagnostics = _input_diagnostics(x)
    for diagnostic in diagnostics:
        logger.warning({"operation": "align_direct", "status": diagnostic.value, "n": x.shape[1]})

    start = opts.initial_params()
    if opts.warm_start:
        try:
            start = align_lie(x, y).algebra.as_vector()
        except LorentzAlignError as exc:
            diagnostics.append(Diagnostic.WARM_START_FAILED)
            logger.warning(
                {"operation": "align_direct", "status": Diagnostic.WARM_START_FAILED.value, "reason": str(exc)}
            )

    state = _minimize(partial(_objective_params, x=x, y=y), start, opts)
    element = LorentzAlgebraElement.from_vector(state.params)
    result = AlignmentResult(
        lorentz=exp_lorentz(element),
        algebra=element,
        residual=state.value,
        method=AlignmentMethod.DIRECT,
        iterations=state.iterations,
        diagnostics=diagnostics,
        converged=state.converged,
    )
    logger.debug(
        {
            "operation": "align_direct",
            "status": state.stop,
            "iterations": state.iterations,
            "residual": state.value,
        }
    )
    if not state.converged:
        raise ConvergenceError(
            f"direct minimization did not converge in {opts.max_iters} iterations",
            iterations=state.iterations,
            best=result,
        )
    return result


def _group_element(element: LorentzAlgebraElement, exp_path: ExpPath) -> LorentzMatrix:
    if exp_path == ExpPath.SERIES:
        return LorentzMatrix(mat_exp_series(algebra_to_matrix(element)))
    return exp_lorentz(element)


def align_lie(x, y, exp_path: ExpPath = ExpPath.HABER) -> AlignmentResult:
    """
    Lambda = exp(P(log(Y X^+))) with P the projection onto so(3,1).

    ``exp_path`` picks the final exponential: the closed form (default) or
    the series, which is reported as the ``lie-algebra-series`` method.
    """
    exp_path = ExpPath(exp_path)
    x, y = _paired(x, y)
    pinv = pseudoinverse(x)
    if pinv.rank < 4:
        raise RankDeficientError(
            f"frame A vectors have rank {pinv.rank} < 4; the linear fit is not unique",
            rank=pinv.rank,
        )
    lam0 = y @ pinv.matrix
    l0 = mat_log_real(lam0)
    element = project_to_algebra(l0)
    projection_residual = float(np.linalg.norm(algebra_to_matrix(element) - l0) ** 2)
    lam = _group_element(element, exp_path)
    r = y - lam.m @ x
    result = AlignmentResult(
        lorentz=lam,
        algebra=element,
        residual=float(np.sum(r * r)),
        method=LIE_METHODS[exp_path],
        iterations=0,
        diagnostics=list(pinv.diagnostics),
        projection_residual=projection_residual,
    )
    logger.debug(
        {
            "operation": "align_lie",
            "status": "ok",
            "exp_path": exp_path.value,
            "residual": result.residual,
            "projection_residual": projection_residual,
        }
    )
    return result


def align(x, y, method: AlignmentMethod, opts: Optional[SolverOptions] = None) -> AlignmentResult:
    if method == AlignmentMethod.DIRECT:
        return align_direct(x, y, opts)
    if method == AlignmentMethod.LIE:
        return align_lie(x, y)
    if method == AlignmentMethod.LIE_SERIES:
        return align_lie(x, y, ExpPath.SERIES)
    raise InvalidInputError(f"unknown alignment method {method!r}")


def error_norms(estimated, true) -> ErrorNorms:
    """Frobenius and max-entry norms of the difference of two 4x4 matrices."""
    est = estimated.m if isinstance(estimated, LorentzMatrix) else estimated
    ref = true.m if isinstance(true, LorentzMatrix) else true
    diff = as_finite_matrix(est, "estimated matrix") - as_finite_matrix(ref, "true matrix")
    return ErrorNorms(frob=float(np.linalg.norm(diff)), max_abs=float(np.max(np.abs(diff))))
