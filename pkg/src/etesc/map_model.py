"""Quadratic static map Q(theta) = Q* + 1/2 (theta - theta*)^T H* (theta - theta*)."""

import numpy as np

from .errors import ConfigError

SYM_TOL = 1e-9
RANK_TOL = 1e-10


class QuadraticMap:
    """Unknown map parameters. Immutable after construction.

    The Hessian is symmetrized on the way in; asymmetry larger than
    SYM_TOL per entry is treated as a real config error, not rounding.
    """

    def __init__(self, hessian, optimizer, extremum):
        H = np.atleast_2d(np.asarray(hessian, dtype=float))
        ts = np.atleast_1d(np.asarray(optimizer, dtype=float))
        n = ts.shape[0]
        if H.shape != (n, n):
            raise ConfigError(f"hessian shape {H.shape} does not match optimizer length {n}")
        if np.max(np.abs(H - H.T)) > SYM_TOL:
            raise ConfigError("hessian is not symmetric (correction exceeds 1e-9)")
        H = 0.5 * (H + H.T)
        lam = np.linalg.eigvalsh(H)
        big = np.max(np.abs(lam))
        if big == 0.0 or np.min(np.abs(lam)) <= RANK_TOL * big:
            raise ConfigError("hessian is rank deficient")
        if not (np.all(lam > 0) or np.all(lam < 0)):
            raise ConfigError("hessian is indefinite (eigenvalues of mixed sign)")
        H.setflags(write=False)
        ts.setflags(write=False)
        self.hessian = H
        self.optimizer = ts
        self.extremum = float(extremum)
        self.eigenvalues = lam

    @property
    def n(self):
        return self.optimizer.shape[0]

    @property
    def is_minimum(self):
        return bool(self.eigenvalues[0] > 0)

    def __repr__(self):
        return f"QuadraticMap(n={self.n}, extremum={self.extremum})"


def _check_dim(qmap, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (qmap.n,):
        raise ConfigError(f"theta has shape {theta.shape}, map expects ({qmap.n},)")
    return theta


def evaluate(qmap: QuadraticMap, theta) -> float:
    d = _check_dim(qmap, theta) - qmap.optimizer
    return qmap.extremum + 0.5 * float(d @ qmap.hessian @ d)


def true_gradient(qmap: QuadraticMap, theta) -> np.ndarray:
    # ground truth for tests; the controller never calls this
    return qmap.hessian @ (_check_dim(qmap, theta) - qmap.optimizer)
