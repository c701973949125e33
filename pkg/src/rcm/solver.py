"""Preconditioned conjugate gradient for the lattice Poisson problems."""

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int | None = None
    precond: str = "diagonal"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("solver tolerance must be positive")
        if self.precond not in ("none", "diagonal"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")


def conjugate_gradient(apply_a, b, diag=None, tol=1e-10, max_iter=None, x0=None):
    """Solve A x = b for symmetric positive (semi)definite A.

    Stops when the true residual satisfies ||b - A x|| <= tol * ||b||.
    `diag` enables Jacobi preconditioning.  Returns (x, relative residual,
    iterations); raises SolverError if max_iter is exhausted first.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if max_iter is None:
        max_iter = max(1000, 30 * int(np.ceil(np.sqrt(n))))
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros_like(b), 0.0, 0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_a(x) if x0 is not None else b.copy()
    inv_diag = None if diag is None else 1.0 / np.asarray(diag, dtype=np.float64)
    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = float(np.dot(r, z))
    target = tol * norm_b
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        pap = float(np.dot(p, ap))
        if pap <= 0.0:
            raise SolverError("matrix not positive definite on the Krylov space",
                              float(np.linalg.norm(r)) / norm_b)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if float(np.linalg.norm(r)) <= target:
            # guard against drift of the recursive residual
            true_r = b - apply_a(x)
            true_norm = float(np.linalg.norm(true_r))
            if true_norm <= target:
                return x, true_norm / norm_b, it
            r = true_r
        z = r * inv_diag if inv_diag is not None else r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError("conjugate gradient did not converge",
                      float(np.linalg.norm(b - apply_a(x))) / norm_b)
