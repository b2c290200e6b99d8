"""Sparse-plus-rank-one solves and smallest-singular-value probes.

The nonlocal terms of the mean-field and system linearizations are rank-one
corrections of sparse operators (an exponential-weighted averaging
functional).  Direct sparse factorization plus Sherman-Morrison-Woodbury
keeps every solve exact to factorization accuracy.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["Rank1Solver", "smallest_generalized_magnitude"]


class Rank1Solver:
    """Solver for A + sum_j u_j v_j^T with sparse A via Woodbury."""

    def __init__(self, a_sparse: sp.spmatrix, u: np.ndarray, v: np.ndarray):
        self.lu = spla.splu(sp.csc_matrix(a_sparse))
        self.u = np.atleast_2d(u.T).T  # (n, m)
        self.v = np.atleast_2d(v.T).T
        self.ainv_u = self.lu.solve(self.u)
        m = self.u.shape[1]
        self.cap = np.eye(m) + self.v.T @ self.ainv_u  # capacitance matrix

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self.lu.solve(b)
        return x - self.ainv_u @ np.linalg.solve(self.cap, self.v.T @ x)


def smallest_generalized_magnitude(
    a_sparse: sp.spmatrix,
    mass: sp.spmatrix,
    rank1: tuple[np.ndarray, np.ndarray] | None = None,
    n_eigs: int = 4,
    dense_limit: int = 2500,
) -> float:
    """Smallest |sigma| with (A + UV^T) x = sigma M x, A and M symmetric.

    This is the smallest singular value of the operator in the M-weighted
    metric.  Dense solve below ``dense_limit`` unknowns, otherwise ARPACK
    shift-invert around 0 with the rank-one update folded into the solves.
    """
    n = a_sparse.shape[0]
    if n <= dense_limit:
        from scipy.linalg import eigh

        a = a_sparse.toarray()
        if rank1 is not None:
            u, v = rank1
            a = a + np.outer(u, v)
            a = 0.5 * (a + a.T)
        m = mass.toarray() if sp.issparse(mass) else np.asarray(mass)
        vals = eigh(a, m, eigvals_only=True)
        return float(np.abs(vals).min())

    if rank1 is None:
        solver = spla.splu(sp.csc_matrix(a_sparse))
        solve = solver.solve
        matvec = lambda x: a_sparse @ x
    else:
        u, v = rank1
        r1 = Rank1Solver(a_sparse, u, v)
        solve = r1.solve
        matvec = lambda x: a_sparse @ x + u * (v @ x)

    a_op = spla.LinearOperator((n, n), matvec=matvec)
    op_inv = spla.LinearOperator((n, n), matvec=solve)
    vals = spla.eigsh(
        a_op, k=min(n_eigs, n - 2), M=sp.csc_matrix(mass), sigma=0.0,
        which="LM", OPinv=op_inv, return_eigenvectors=False,
    )
    return float(np.abs(vals).min())
