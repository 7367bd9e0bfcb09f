"""Lyapunov certificate, convergence envelopes and dwell-time lower bounds."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError

RESIDUAL_TOL = 1e-10
QUAD_RTOL = 1e-10


def solve_lyapunov(A, Q):
    """Solve A^T P + P A = -Q by vectorization.

    With column-major vec, vec(A^T P) = (I kron A^T) vec P and
    vec(P A) = (A^T kron I) vec P. Dense n^2 x n^2 solve; fine for n <= ~20.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    lam = np.linalg.eigvals(A)
    bad = lam[lam.real >= 0]
    if bad.size:
        raise CertificateError(f"A is not Hurwitz: eigenvalue {bad[0]:.6g}")
    I = np.eye(n)
    L = np.kron(I, A.T) + np.kron(A.T, I)
    p = np.linalg.solve(L, -Q.reshape(-1, order="F"))
    P = p.reshape((n, n), order="F")
    P = 0.5 * (P + P.T)
    # one step of iterative refinement keeps the residual near roundoff for stiff A
    R = A.T @ P + P @ A + Q
    if np.linalg.norm(R, 2) > 0:
        dp = np.linalg.solve(L, -R.reshape(-1, order="F")).reshape((n, n), order="F")
        P = P + 0.5 * (dp + dp.T)
    return P


def lyapunov_residual(A, P, Q):
    return float(np.linalg.norm(A.T @ P + P @ A + Q, 2))


def alpha_beta(H_star, K, P, Q):
    """Tightest (alpha, beta): lambda_min(Q) and ||K^T H*^T P|| + ||P H* K|| (induced 2-norms)."""
    HK = np.asarray(H_star) @ np.asarray(K)
    alpha = float(np.linalg.eigvalsh(Q)[0])
    beta = float(np.linalg.norm(HK.T @ P, 2) + np.linalg.norm(P @ HK, 2))
    return alpha, beta


@dataclass
class CertificateSet:
    P: np.ndarray
    Q: np.ndarray
    alpha: float
    beta: float
    P_bar: np.ndarray
    alpha_tight: float = 0.0
    beta_tight: float = 0.0
    m: float = 0.0
    M_theta: float = 0.0
    M_y: float = 0.0
    tau_star: float = 0.0
    dwell_case: str = ""
    kappa: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def lam_P(self):
        lam = np.linalg.eigvalsh(self.P)
        return float(lam[0]), float(lam[-1])

    @property
    def lam_P_bar(self):
        lam = np.linalg.eigvalsh(self.P_bar)
        return float(lam[0]), float(lam[-1])


def build_certificate(H_star, K, Q=None, alpha=None, beta=None):
    """Solve for P and assemble the basic certificate.

    alpha/beta default to the tightest values; supplied values must respect
    alpha <= lambda_min(Q) and beta >= the tight bound or the decay
    argument does not go through.
    """
    H = np.asarray(H_star, dtype=float)
    HK = H @ np.asarray(K, dtype=float)
    n = H.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q)[0] <= 0:
        raise CertificateError("Q must be symmetric positive definite")
    P = solve_lyapunov(HK, Q)
    if lyapunov_residual(HK, P, Q) > RESIDUAL_TOL * np.linalg.norm(Q, 2):
        raise CertificateError("Lyapunov residual above tolerance")
    if np.linalg.eigvalsh(P)[0] <= 0:
        raise CertificateError("P is not positive definite")
    a_t, b_t = alpha_beta(H, K, P, Q)
    alpha = a_t if alpha is None else float(alpha)
    beta = b_t if beta is None else float(beta)
    if alpha > a_t * (1 + 1e-12):
        raise CertificateError(f"alpha={alpha} exceeds lambda_min(Q)={a_t:.6g}")
    if beta < b_t * (1 - 1e-12):
        raise CertificateError(f"beta={beta} is below the tight bound {b_t:.6g}")
    return CertificateSet(P=P, Q=Q, alpha=alpha, beta=beta, P_bar=H.T @ P @ H,
                          alpha_tight=a_t, beta_tight=b_t)


def _order_term(a, omega):
    # O(a + 1/omega) with its constant taken as 1; the true constant is not derivable
    return a + 1.0 / omega


def static_envelope(cert, sigma, theta0, theta_star, H_star, a=0.0, omega=math.inf):
    lmin, lmax = cert.lam_P
    pmin, pmax = cert.lam_P_bar
    m = cert.alpha * (1.0 - sigma) / (2.0 * lmax)
    d = float(np.linalg.norm(np.asarray(theta0) - np.asarray(theta_star)))
    Hn = float(np.linalg.norm(H_star, 2))
    r = pmax / pmin
    M_theta = math.sqrt(r) * d
    M_y = Hn * r * d * d + 2.0 * Hn * math.sqrt(r) * d * _order_term(a, omega)
    return m, M_theta, M_y


def kappa_for(cert, upsilon0, g_av0, override=None):
    """Smallest kappa with upsilon(0) <= kappa * G_av(0)^T P G_av(0); 0 when upsilon(0)=0."""
    if override is not None:
        return float(override)
    if upsilon0 == 0.0:
        return 0.0
    v = float(np.asarray(g_av0) @ cert.P @ np.asarray(g_av0))
    if v <= 0.0:
        raise CertificateError("kappa undefined: G_av(0) = 0 with upsilon(0) > 0; supply kappa explicitly")
    return upsilon0 / v


def dynamic_envelope(cert, sigma, mu, kappa, theta0, theta_star, H_star, a=0.0, omega=math.inf):
    lmin, lmax = cert.lam_P
    pmin, pmax = cert.lam_P_bar
    m = 0.5 * min((1.0 - sigma) * cert.alpha / lmax, mu)
    d = float(np.linalg.norm(np.asarray(theta0) - np.asarray(theta_star)))
    Hn = float(np.linalg.norm(H_star, 2))
    r = (1.0 + kappa) * pmax / pmin
    M_theta = math.sqrt(r) * d
    M_y = Hn * r * d * d + 2.0 * Hn * math.sqrt(r) * d * _order_term(a, omega)
    return m, M_theta, M_y


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _composite_gl(f, panels):
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return float(np.sum(w * f(x)))


def integrate_unit(coeffs, rtol=QUAD_RTOL):
    """int_0^1 dxi / (b0 + b1 xi + b2 xi^2 + ...) by panel-doubling Gauss-Legendre."""
    c = np.asarray(coeffs, dtype=float)

    def den(x):
        return np.polynomial.polynomial.polyval(x, c)

    probe = den(np.linspace(0.0, 1.0, 1025))
    if np.any(probe <= 0.0):
        raise CertificateError("dwell-time integrand denominator is not positive on [0, 1]")
    panels = 4
    prev = _composite_gl(lambda x: 1.0 / den(x), panels)
    while panels < 2**16:
        panels *= 2
        cur = _composite_gl(lambda x: 1.0 / den(x), panels)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    return cur


def dwell_coefficients_static(alpha, beta, sigma, hk_norm):
    return (beta * hk_norm / (alpha * sigma), 2.0 * hk_norm, alpha * sigma * hk_norm / beta)


def dwell_time_static(cert, sigma, H_star, K):
    hk = float(np.linalg.norm(np.asarray(H_star) @ np.asarray(K), 2))
    if hk <= 0:
        raise CertificateError("||H*K|| must be positive")
    return integrate_unit(dwell_coefficients_static(cert.alpha, cert.beta, sigma, hk))


def dwell_coefficients_dynamic(alpha, beta, sigma, mu, gamma, hk_norm):
    """(case, (b0, b1, b2, b3)) for the three regimes of the dynamic bound."""
    b0 = beta * hk_norm / (sigma * alpha)
    b2 = sigma * alpha * hk_norm / beta
    if hk_norm <= mu / 2.0:
        return "i", (b0, 2.0 * hk_norm, b2, 0.0)
    if gamma <= 1.0 / (2.0 * hk_norm - mu):
        return "ii", (b0, mu / 2.0 + hk_norm, b2, hk_norm - mu / 2.0)
    return "iii", (b0, 2.0 * hk_norm - 1.0 / (2.0 * gamma), b2, 1.0 / (2.0 * gamma))


def dwell_time_dynamic(cert, sigma, mu, gamma, H_star, K):
    """Returns (tau_star, case_id)."""
    hk = float(np.linalg.norm(np.asarray(H_star) @ np.asarray(K), 2))
    case, b = dwell_coefficients_dynamic(cert.alpha, cert.beta, sigma, mu, gamma, hk)
    return integrate_unit(b), case


def certify(qmap, gain, trigger, theta0, dither=None, Q=None, kappa=None):
    """Full certificate for a scenario: P, alpha/beta, envelopes and tau*."""
    H, K = qmap.hessian, gain.K
    cert = build_certificate(H, K, Q=Q, alpha=trigger.alpha, beta=trigger.beta)
    a = float(np.linalg.norm(dither.amplitudes)) if dither is not None else 0.0
    if dither is not None:
        from .dither import common_period
        omega = common_period(dither)[1]
    else:
        omega = math.inf
    if trigger.is_dynamic:
        g0 = H @ (np.asarray(theta0) - qmap.optimizer)
        cert.kappa = kappa_for(cert, trigger.upsilon0, g0, kappa)
        cert.m, cert.M_theta, cert.M_y = dynamic_envelope(
            cert, trigger.sigma, trigger.mu, cert.kappa, theta0, qmap.optimizer, H, a, omega)
        cert.tau_star, cert.dwell_case = dwell_time_dynamic(
            cert, trigger.sigma, trigger.mu, trigger.gamma, H, K)
        if trigger.upsilon0 == 0.0 and kappa is None:
            cert.notes.append("kappa set to 0 because upsilon(0) is 0")
    else:
        cert.m, cert.M_theta, cert.M_y = static_envelope(
            cert, trigger.sigma, theta0, qmap.optimizer, H, a, omega)
        cert.tau_star = dwell_time_static(cert, trigger.sigma, H, K)
        cert.dwell_case = "static"
    cert.notes.append("M_y order term O(a + 1/omega) evaluated with unit constant")
    return cert
