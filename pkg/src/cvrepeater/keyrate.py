"""Asymptotic CV-QKD key rates from covariance matrices.

Reverse reconciliation against collective attacks: the rate is the mutual
information of the two homodyne records minus the Holevo bound on the
eavesdropper's information about the reference side, both evaluated on the
Gaussian state with the same second moments.  Ideal reconciliation, no
sifting penalty, no excess noise: only channel loss is modeled.
"""

import math
from dataclasses import dataclass

import numpy as np

from .gauss import CovarianceMatrix, check_physical, symplectic_eigenvalues


@dataclass(frozen=True)
class RateReport:
    raw_rate: float
    mutual_info: float
    holevo: float
    n_qr: float
    normalized_by_resources: float
    insecure: bool


def fiber_tau(length_km: float, mu: float = 0.2) -> float:
    """Fiber intensity transmittance at mu dB per km."""
    if length_km < 0:
        raise ValueError("length must be non-negative")
    if mu <= 0:
        raise ValueError("attenuation must be positive")
    return 10.0 ** (-length_km * mu / 10.0)


@dataclass(frozen=True)
class FiberModel:
    mu: float = 0.2

    def tau(self, length_km: float) -> float:
        return fiber_tau(length_km, self.mu)


def bosonic_entropy(nu: float) -> float:
    """Entropy (bits) of a thermal mode with symplectic eigenvalue nu; exactly 0 at nu=1."""
    if nu <= 1.0 + 1e-13:
        return 0.0
    a = (nu + 1.0) / 2.0
    b = (nu - 1.0) / 2.0
    return a * math.log2(a) - b * math.log2(b)


def key_rate_from_cm(cm: CovarianceMatrix, bob_mode: int = 1) -> RateReport:
    """Devetak-Winter rate for homodyne key generation, reverse reconciliation.

    ``bob_mode`` picks the reference side (whose record the other party
    corrects toward); the eavesdropper holds a purification of the two-mode
    state.  Negative rates are reported as-is and flagged insecure.
    """
    if not check_physical(cm):
        raise ValueError("covariance matrix violates the uncertainty principle")
    if bob_mode not in (0, 1):
        raise ValueError("bob_mode must be 0 or 1")
    g = cm.matrix
    alice = 1 - bob_mode
    ia, ib = 2 * alice, 2 * bob_mode
    va, vb, cov = g[ia, ia], g[ib, ib], g[ia, ib]
    cond = va - cov * cov / vb
    mutual = 0.5 * math.log2(va / cond) if cond > 0 else math.inf
    s_ab = sum(bosonic_entropy(nu) for nu in symplectic_eigenvalues(cm))
    # Alice's conditional covariance after Bob's x homodyne
    keep = [2 * alice, 2 * alice + 1]
    m = [2 * bob_mode, 2 * bob_mode + 1]
    a_blk = g[np.ix_(keep, keep)]
    c_blk = g[np.ix_(keep, m)]
    b_blk = g[np.ix_(m, m)]
    pi = np.diag([1.0, 0.0])
    cond_cm = a_blk - c_blk @ pi @ np.linalg.pinv(pi @ b_blk @ pi) @ pi @ c_blk.T
    nu_c = math.sqrt(max(np.linalg.det(cond_cm), 1.0))
    holevo = float(s_ab - bosonic_entropy(nu_c))
    if -1e-10 < holevo < 0.0:
        holevo = 0.0
    rate = float(mutual - holevo)
    return RateReport(raw_rate=rate, mutual_info=float(mutual), holevo=holevo, n_qr=1.0,
                      normalized_by_resources=rate, insecure=bool(rate <= 0))


def symmetric_rate(c: float, s: float) -> float:
    """Closed form for the symmetric-loss correlation pattern: I = log2(C^2/(C^2-S^2))/2,
    Holevo = entropy at nu = sqrt(C^2-S^2)."""
    det = c * c - s * s
    if det <= 0:
        raise ValueError("covariance matrix not physical")
    return 0.5 * math.log2(c * c / det) - bosonic_entropy(math.sqrt(det))


def asymmetric_loss_cm(lam: float, tau: float) -> CovarianceMatrix:
    """Two-mode squeezed source with one lossless mode and one through loss tau."""
    cosh2r = (1.0 + lam * lam) / (1.0 - lam * lam)
    sinh2r = 2.0 * lam / (1.0 - lam * lam)
    a = cosh2r * np.eye(2)
    b = (1.0 + tau * (cosh2r - 1.0)) * np.eye(2)
    z = np.diag([1.0, -1.0])
    c = math.sqrt(tau) * sinh2r * z
    return CovarianceMatrix(np.block([[a, c], [c, b]]))


DEFAULT_LAMBDA_GRID = tuple(np.linspace(0.02, 0.96, 48))


def direct_transmission_rate(length_km: float, mu: float = 0.2, lam: float | None = None,
                             lambda_grid=None):
    """Best direct-transmission rate: source at the sender, one mode through fiber.

    With ``lam`` given, evaluates that squeezing; otherwise optimizes over a
    grid.  Returns (rate, lambda).
    """
    tau = fiber_tau(length_km, mu)
    if lam is not None:
        report = key_rate_from_cm(asymmetric_loss_cm(lam, tau), bob_mode=1)
        return report.raw_rate, lam
    best_rate, best_lam = -math.inf, 0.0
    for trial in (lambda_grid if lambda_grid is not None else DEFAULT_LAMBDA_GRID):
        rate, _ = direct_transmission_rate(length_km, mu, lam=float(trial))
        if rate > best_rate:
            best_rate, best_lam = rate, float(trial)
    return best_rate, best_lam


def repeater_rate(report: RateReport, n_qr: float) -> RateReport:
    """Normalize a raw rate by the average number of source states consumed."""
    if n_qr < 1.0:
        raise ValueError("resource count must be at least 1")
    return RateReport(raw_rate=report.raw_rate, mutual_info=report.mutual_info,
                      holevo=report.holevo, n_qr=n_qr,
                      normalized_by_resources=report.raw_rate / n_qr,
                      insecure=report.insecure)
