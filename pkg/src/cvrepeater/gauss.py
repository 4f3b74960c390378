"""Gaussification fixed-point analysis.

A symmetric two-mode state whose low-photon block has the sparse form of
``F1Matrix`` is driven by the iterative Gaussification protocol toward a
Gaussian state that is exactly a lossy two-mode squeezed state.  Its
covariance matrix is determined by two ratios of low-photon entries, and is
conveniently reported as the pair (lambda_inf, tau_inf): the squeezing and
the effective symmetric transmissivity of that fixed point.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergentFixedPoint, EpsilonUndefined
from .fock import F1Matrix

PHYSICALITY_TOL = 1e-10


@dataclass(frozen=True)
class CovarianceMatrix:
    """4x4 real symmetric second-moment matrix in (x1,p1,x2,p2) ordering, vacuum = identity."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValueError("covariance matrix must be 4x4")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise ValueError("covariance matrix must be symmetric")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_blocks(cls, c: float, s: float) -> "CovarianceMatrix":
        z = np.diag([1.0, -1.0])
        eye = np.eye(2)
        return cls(np.block([[c * eye, s * z], [s * z, c * eye]]))

    @property
    def c(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def s(self) -> float:
        return float(self.matrix[0, 2])


def symplectic_form(nmodes: int = 2) -> np.ndarray:
    j = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(nmodes), j)


def check_physical(cm: CovarianceMatrix, tol: float = PHYSICALITY_TOL) -> bool:
    """Uncertainty-principle test: Gamma + i*Omega must be positive semidefinite."""
    omega = symplectic_form(cm.matrix.shape[0] // 2)
    ev = np.linalg.eigvalsh(cm.matrix + 1j * omega)
    return bool(ev[0] >= -tol)


def symplectic_eigenvalues(cm: CovarianceMatrix) -> np.ndarray:
    omega = symplectic_form(cm.matrix.shape[0] // 2)
    ev = np.abs(np.linalg.eigvals(1j * omega @ cm.matrix))
    ev.sort()
    return ev[::2]


@dataclass(frozen=True)
class GaussParams:
    """Fixed-point summary of a structured state.

    ``epsilon`` is the purity ratio <10|rho|10> / <11|rho|00>; ``pair_ratio``
    is <11|rho|00> / <00|rho|00>.  ``lambda_inf`` and ``tau_inf`` are the
    squeezing and symmetric transmissivity of the Gaussification fixed point,
    and satisfy epsilon = lambda_inf * (1 - tau_inf).  ``valid`` is False when
    the reconstructed covariance matrix violates the uncertainty principle,
    i.e. the Gaussification iteration would not converge.
    """

    epsilon: float
    pair_ratio: float
    lambda_inf: float
    tau_inf: float
    valid: bool


def gauss_params(f1: F1Matrix) -> GaussParams:
    """Fixed-point parameters from the low-photon block."""
    if f1.vac <= 0:
        raise ValueError("vacuum weight must be positive")
    scale = max(abs(f1.vac), abs(f1.pair), abs(f1.one_left))
    if abs(f1.pair_coherence) < 1e-14 * scale:
        raise EpsilonUndefined("pair coherence vanishes; the purity ratio is undefined")
    eps = f1.one_left / f1.pair_coherence
    ratio = f1.pair_coherence / f1.vac
    lam_inf = eps + ratio * (1.0 - eps * eps)
    tau_inf = (1.0 - eps * eps) * ratio / lam_inf if lam_inf != 0 else 0.0
    valid = _fixed_point_physical(eps, ratio)
    return GaussParams(epsilon=float(eps), pair_ratio=float(ratio),
                       lambda_inf=float(lam_inf), tau_inf=float(tau_inf), valid=valid)


def params_from_fixed_point(lambda_inf: float, tau_inf: float) -> GaussParams:
    """Build parameters directly from a target (squeezing, transmissivity) pair."""
    if not 0.0 <= lambda_inf < 1.0:
        raise ValueError("lambda_inf must lie in [0, 1)")
    if not 0.0 < tau_inf <= 1.0:
        raise ValueError("tau_inf must lie in (0, 1]")
    eps = lambda_inf * (1.0 - tau_inf)
    ratio = tau_inf * lambda_inf / (1.0 - eps * eps)
    return GaussParams(epsilon=eps, pair_ratio=ratio, lambda_inf=lambda_inf,
                       tau_inf=tau_inf, valid=_fixed_point_physical(eps, ratio))


def _fixed_point_cs(eps: float, ratio: float):
    denom = (1.0 - eps * ratio) ** 2 - ratio * ratio
    if denom <= 0:
        return None
    c = (ratio * ratio * (1.0 - eps * eps) + 1.0) / denom
    s = 2.0 * ratio / denom
    return c, s


def _fixed_point_physical(eps: float, ratio: float) -> bool:
    """A usable fixed point needs a physical covariance matrix AND a
    non-degenerate lossy-source parametrization (squeezing strictly below 1,
    transmissivity in [0, 1])."""
    cs = _fixed_point_cs(eps, ratio)
    if cs is None:
        return False
    lam_inf = eps + ratio * (1.0 - eps * eps)
    if not 0.0 <= lam_inf < 1.0:
        return False
    tau_inf = (1.0 - eps * eps) * ratio / lam_inf if lam_inf > 0 else 0.0
    if not 0.0 <= tau_inf <= 1.0 + 1e-12:
        return False
    return check_physical(CovarianceMatrix.from_blocks(*cs))


def cm_from_gauss(params: GaussParams) -> CovarianceMatrix:
    """Covariance matrix of the Gaussification fixed point."""
    cs = _fixed_point_cs(params.epsilon, params.pair_ratio)
    if cs is None:
        raise DivergentFixedPoint(
            f"no fixed point for epsilon={params.epsilon:.4g}, ratio={params.pair_ratio:.4g}")
    return CovarianceMatrix.from_blocks(*cs)


def cm_from_fixed_point(lambda_inf: float, tau_inf: float) -> CovarianceMatrix:
    """Lossy two-mode squeezed state covariance matrix at the given parameters."""
    if not 0.0 <= lambda_inf < 1.0:
        raise ValueError("squeezing must lie in [0, 1)")
    cosh2r = (1.0 + lambda_inf**2) / (1.0 - lambda_inf**2)
    sinh2r = 2.0 * lambda_inf / (1.0 - lambda_inf**2)
    c = 1.0 + tau_inf * (cosh2r - 1.0)
    s = tau_inf * sinh2r
    return CovarianceMatrix.from_blocks(c, s)


def epsilon_identity_defect(params: GaussParams) -> float:
    """|epsilon - lambda_inf (1 - tau_inf)|; an exact identity of the parametrization."""
    return abs(params.epsilon - params.lambda_inf * (1.0 - params.tau_inf))


def fixed_point_f1(lambda_inf: float, tau_inf: float) -> F1Matrix:
    """Exact low-photon block of a lossy two-mode squeezed state (unnormalized trace 1 overall)."""
    lam, tau = lambda_inf, tau_inf
    x = lam * lam * (1.0 - tau) ** 2
    vac = (1.0 - lam * lam) / (1.0 - x)
    coh = (1.0 - lam * lam) * tau * lam / (1.0 - x) ** 2
    one = lam * (1.0 - tau) * coh
    pair = (1.0 - lam * lam) * tau * tau * lam * lam * (1.0 + x) / (1.0 - x) ** 3
    return F1Matrix(vac=vac, one_right=one, one_left=one, pair_coherence=coh, pair=pair)


def lossy_epr_mean_photons(lambda_inf: float, tau_inf: float) -> float:
    sinh2 = lambda_inf**2 / (1.0 - lambda_inf**2)
    return tau_inf * sinh2


def state_gauss_params(state) -> GaussParams:
    """Convenience: fixed-point parameters straight from a two-mode state."""
    from .fock import extract_f1

    return gauss_params(extract_f1(state))


def cm_distance(a: CovarianceMatrix, b: CovarianceMatrix) -> float:
    return float(np.max(np.abs(a.matrix - b.matrix)))
