"""Dense symmetric linear algebra: Cholesky, log-determinant, Jacobi eigenvalues."""

import numpy as np

from .exceptions import DimensionError, NotPositiveDefiniteError


def _as_square(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def cholesky(M):
    """Lower-triangular ``L`` with ``L @ L.T == M``.

    Parameters
    ----------
    M : array-like of shape (n, n)
        Symmetric matrix. Only the lower triangle is read.

    Returns
    -------
    L : ndarray of shape (n, n)

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot is not strictly positive.
    """
    M = _as_square(M)
    if not np.all(np.isfinite(M)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    # LAPACK accepts tiny positive pivots that are pure rounding noise
    if np.any(np.diag(L) <= 0):
        raise NotPositiveDefiniteError("non-positive pivot")
    return L


def log_det(M):
    """Natural log-determinant of a symmetric positive-definite matrix."""
    L = cholesky(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def cho_solve(L, B):
    """Solve ``(L L^T) X = B`` given the lower Cholesky factor."""
    from scipy.linalg import solve_triangular

    Y = solve_triangular(L, B, lower=True, check_finite=False)
    return solve_triangular(L.T, Y, lower=False, check_finite=False)


def jacobi_eigvalsh(A, tol=1e-12, max_sweeps=100):
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all ``(p, q)`` pairs in row order until the off-diagonal
    Frobenius norm drops below ``tol * ||A||_F``.

    Returns
    -------
    w : ndarray of shape (n,)
        Eigenvalues in ascending order.
    """
    a = _as_square(A).copy()
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("jacobi_eigvalsh needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    threshold = tol * scale

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    # theta**2 would overflow; t ~ 1 / (2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
    else:
        raise np.linalg.LinAlgError(f"Jacobi did not converge in {max_sweeps} sweeps")
    return np.sort(np.diag(a))
