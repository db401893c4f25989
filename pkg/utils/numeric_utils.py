# numeric_utils.py - Shared numerical kernels for pricing, calibration and dynamics

from typing import Callable, Tuple

import numpy as np
from scipy import linalg
from scipy.special import ndtr, owens_t

from .exceptions import SingularSystem

# Owen's formula is singular at h = 0 or k = 0; those points are nudged.
_OWEN_NUDGE = 1e-12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def norm_cdf(x):
    """Standard normal distribution function."""
    return ndtr(x)


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def bivariate_normal_cdf(h, k, rho):
    """
    P(X <= h, Y <= k) for standard normals with correlation rho.

    Evaluated with Owen's T function, vectorized over broadcastable inputs.

    Args:
        h (array_like): Upper limit for the first coordinate
        k (array_like): Upper limit for the second coordinate
        rho (array_like): Correlation, strictly inside (-1, 1)

    Returns:
        numpy.ndarray: Orthant probabilities
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(rho, dtype=float)
    )
    h = np.where(h == 0.0, _OWEN_NUDGE, h)
    k = np.where(k == 0.0, _OWEN_NUDGE, k)

    delta_hk = np.where(h * k >= 0.0, 0.0, 1.0)
    den_rho = np.sqrt(1.0 - rho ** 2)
    q1 = (k / h - rho) / den_rho
    q2 = (h / k - rho) / den_rho
    cdf = 0.5 * (ndtr(h) + ndtr(k) - delta_hk) - owens_t(h, q1) - owens_t(k, q2)
    return np.clip(cdf, 0.0, 1.0)


def rotation_matrix(angle: float) -> np.ndarray:
    """Matrix O_phi rotating the plane clockwise by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]])


def solve_with_condition(matrix: np.ndarray, rhs: np.ndarray, max_condition: float = 1e14) -> Tuple[np.ndarray, float]:
    """
    Solve ``matrix @ x = rhs`` by partial-pivot LU and report the condition number.

    Args:
        matrix (numpy.ndarray): Square system matrix
        rhs (numpy.ndarray): Right-hand side, vector or matrix
        max_condition (float): Condition number above which the system is rejected

    Returns:
        tuple: (solution, 1-norm condition number)

    Raises:
        SingularSystem: if the matrix is singular or the condition number exceeds ``max_condition``
    """
    matrix = np.asarray(matrix, dtype=float)
    condition = condition_number(matrix)
    if not np.isfinite(condition) or condition > max_condition:
        raise SingularSystem(
            f"System matrix is singular to working precision (condition {condition:.3e})",
            {"condition_number": float(condition)},
        )
    lu_piv = linalg.lu_factor(matrix, check_finite=True)
    return linalg.lu_solve(lu_piv, np.asarray(rhs, dtype=float)), condition


def condition_number(matrix: np.ndarray) -> float:
    """1-norm condition number, +inf for singular matrices."""
    try:
        return float(np.linalg.cond(np.asarray(matrix, dtype=float), 1))
    except np.linalg.LinAlgError:
        return float("inf")


def lu_determinant(matrix: np.ndarray) -> float:
    """Determinant from the LU factors."""
    lu, piv = linalg.lu_factor(np.asarray(matrix, dtype=float), check_finite=False)
    sign = -1.0 if np.count_nonzero(piv != np.arange(len(piv))) % 2 else 1.0
    return float(sign * np.prod(np.diag(lu)))


def finite_difference_jacobian(fcn: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    Central finite-difference Jacobian of a vector function.

    Args:
        fcn (callable): Map from R^m to R^p
        x0 (numpy.ndarray): Evaluation point
        step (float): Absolute perturbation per coordinate

    Returns:
        numpy.ndarray: p x m matrix of partial derivatives
    """
    x0 = np.asarray(x0, dtype=float)
    columns = []
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = step
        columns.append((np.asarray(fcn(x0 + e)) - np.asarray(fcn(x0 - e))) / (2.0 * step))
    return np.column_stack(columns)


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    """Elementwise |a - b| / max(|b|, floor)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)
