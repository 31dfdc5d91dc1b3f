"""Shared dense linear-algebra helpers: jitter policy, PSD repair, symmetric roots."""
from __future__ import annotations

import numpy as np
import scipy.linalg

JITTER_START = 1e-8
JITTER_MAX = 1e-2


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (a + a.T)/2."""
    return 0.5 * (a + a.swapaxes(-1, -2))


def chol_with_jitter(a: np.ndarray, lower: bool = True):
    """Cholesky factor of a symmetric PSD matrix under the escalating jitter policy.

    The matrix is tried as given first; on failure, jitter*mean(diag) is added
    with jitter escalating 1e-8 -> 1e-2 by factors of 10.  Returns (L, jitter)
    where jitter is the relative level actually used (0.0 if none was needed).
    Raises numpy.linalg.LinAlgError if 1e-2 still fails.
    """
    a = np.asarray(a, dtype=float)
    scale = float(np.mean(np.diag(a)))
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter = 0.0
    while True:
        try:
            m = a if jitter == 0.0 else a + (jitter * scale) * np.eye(a.shape[0])
            chol = scipy.linalg.cholesky(m, lower=lower, check_finite=False)
            return chol, jitter
        except scipy.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = JITTER_START
            elif jitter >= JITTER_MAX:
                raise np.linalg.LinAlgError(
                    "matrix not positive definite at jitter %.0e" % jitter
                )
            else:
                jitter *= 10.0


def solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric PSD a via the jittered Cholesky."""
    chol, _ = chol_with_jitter(a)
    return scipy.linalg.cho_solve((chol, True), b, check_finite=False)


def inv_psd(a: np.ndarray) -> np.ndarray:
    return solve_psd(a, np.eye(a.shape[0]))


def logdet_chol(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def psd_project(a: np.ndarray):
    """Symmetrize and clip negative eigenvalues to zero.

    Returns (repaired, min_eig_before).  Used to repair Monte Carlo kernel
    slices whose noise pushes a few eigenvalues slightly negative.
    """
    s = sym(np.asarray(a, dtype=float))
    w, v = np.linalg.eigh(s)
    min_eig = float(w[0])
    if min_eig >= 0.0:
        return s, min_eig
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T, min_eig


def sqrt_inv_psd(g: np.ndarray) -> np.ndarray:
    """Symmetric square root of the inverse of a symmetric PD matrix."""
    w, v = np.linalg.eigh(sym(np.asarray(g, dtype=float)))
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("matrix not positive definite")
    return (v / np.sqrt(w)) @ v.T
