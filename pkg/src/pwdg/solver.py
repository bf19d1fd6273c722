"""Direct sparse solve with residual and conditioning checks."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_RATIO_MIN = 1e-14
RESIDUAL_MAX = 1e-10
REFINEMENT_STEPS = 3


class SolverError(RuntimeError):
    """The factorisation broke down or the residual check failed.

    ``rcond`` holds the reciprocal condition estimate when one was available.
    """

    def __init__(self, message: str, rcond: float = float("nan")):
        super().__init__(message)
        self.rcond = rcond


@dataclass(frozen=True)
class SolveReport:
    residual: float
    rcond: float
    ndof: int
    seconds: float


@dataclass(frozen=True, eq=False)
class Solution:
    """Coefficients (n_elements, p) with the space they live in."""

    coeffs: np.ndarray
    space: object
    report: SolveReport

    def __getitem__(self, key):
        element, direction = key
        return self.coeffs[element, direction]

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def field(self):
        return self.space.field(self.coeffs)


def _onenorm_inverse(lu, n, max_iter=5):
    """Hager/Higham estimate of ||A^-1||_1 (deterministic start vector)."""
    x = np.full(n, 1.0 / n, dtype=complex)
    est = 0.0
    seen = -1
    for _ in range(max_iter):
        y = lu.solve(x)
        new = float(np.abs(y).sum())
        if new <= est:
            break
        est = new
        mag = np.abs(y)
        xi = np.where(mag > 0, y / np.where(mag > 0, mag, 1.0), 1.0)
        z = lu.solve(xi, trans="H")
        j = int(np.argmax(np.abs(z)))
        if j == seen:
            break
        seen = j
        x = np.zeros(n, dtype=complex)
        x[j] = 1.0
    # Higham's alternating-sign safeguard
    alt = np.array([(-1) ** i * (1 + i / max(n - 1, 1)) for i in range(n)], dtype=complex)
    alt_est = 2.0 * float(np.abs(lu.solve(alt)).sum()) / (3.0 * n)
    return max(est, alt_est)


def _factor(A):
    A = sp.csc_matrix(A, dtype=complex)
    try:
        lu = spla.splu(A, permc_spec="COLAMD", options={"SymmetricMode": False})
    except RuntimeError as exc:  # exactly singular
        raise SolverError(f"factorisation failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.max() == 0 or piv.min() / piv.max() < PIVOT_RATIO_MIN:
        raise SolverError("matrix numerically singular (pivot ratio below 1e-14)",
                          rcond=float(piv.min() / piv.max()) if piv.max() > 0 else 0.0)
    return A, lu


def _rcond(A, lu):
    anorm = float(abs(A).sum(axis=0).max())
    return 1.0 / (anorm * _onenorm_inverse(lu, A.shape[0])) if anorm > 0 else 0.0


def solve_linear(A, b) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` for a sparse or dense square ``A``.

    Raises
    ------
    SolverError
        If a pivot ratio falls below 1e-14 or the relative residual stays
        above 1e-10 after iterative refinement.
    """
    start = time.perf_counter()
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 0:
        raise SolverError("empty system (zero degrees of freedom)")
    b = np.asarray(b, dtype=complex).reshape(-1)
    if b.shape != (n,):
        raise ValueError("right-hand side has the wrong length")
    A, lu = _factor(A)
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    denom = bnorm if bnorm > 0 else 1.0
    r = b - A @ x
    for _ in range(REFINEMENT_STEPS):
        if np.linalg.norm(r) <= RESIDUAL_MAX * 1e-3 * denom:
            break
        x = x + lu.solve(r)
        r = b - A @ x
    residual = float(np.linalg.norm(r) / denom)
    rcond = _rcond(A, lu)
    if not np.isfinite(residual) or residual > RESIDUAL_MAX:
        raise SolverError(f"relative residual {residual:.3e} exceeds {RESIDUAL_MAX:g}"
                          f" (rcond {rcond:.3e})", rcond=rcond)
    return x, SolveReport(residual, rcond, n, time.perf_counter() - start)


def solve(system) -> tuple[Solution, SolveReport]:
    """Solve an assembled :class:`~pwdg.assembly.DGSystem`."""
    x, report = solve_linear(system.matrix, system.load)
    space = system.space
    return Solution(x.reshape(space.n_elements, space.p), space, report), report
