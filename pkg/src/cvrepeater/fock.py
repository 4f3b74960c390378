"""Truncated Fock-space state representation and photon-level primitives.

States are density operators on n bosonic modes, each truncated at a common
photon-number cutoff.  The density operator is stored as a 2n-index tensor
with ket indices first and bra indices second, so a two-mode state has shape
(d, d, d, d) with d = cutoff + 1.  All operations are pure functions; tensors
are frozen after construction.

Quadrature convention: x = a + a^dag, p = -i(a - a^dag), so the vacuum has
unit variance in both quadratures.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from string import ascii_lowercase
from typing import NamedTuple

import numpy as np

from .errors import DisplacedState, ImprobableBranch

DEFAULT_CUTOFF = 8

# Tolerances used by the state invariants.
HERM_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class FockState:
    """Possibly sub-normalized density operator on a truncated Fock space.

    ``weight`` is the trace held by the tensor; pure truncation (e.g. a
    squeezed source above the cutoff) shows up as ``weight < 1`` and is the
    per-operation truncation diagnostic.
    """

    tensor: np.ndarray
    cutoff: int
    weight: float

    @property
    def nmodes(self) -> int:
        return self.tensor.ndim // 2

    @property
    def dim(self) -> int:
        return self.cutoff + 1

    def matrix(self) -> np.ndarray:
        d = self.dim ** self.nmodes
        return self.tensor.reshape(d, d)

    def normalized(self) -> "FockState":
        if self.weight <= 0:
            raise ImprobableBranch("cannot normalize a weightless state")
        return _state(self.tensor / self.weight, self.cutoff)


class Heralded(NamedTuple):
    """Normalized post-measurement state and the probability of the branch."""

    state: FockState
    p_succ: float


def _state(tensor: np.ndarray, cutoff: int) -> FockState:
    tensor = np.ascontiguousarray(tensor, dtype=complex)
    nmodes = tensor.ndim // 2
    d = cutoff + 1
    if tensor.shape != (d,) * (2 * nmodes):
        raise ValueError(f"tensor shape {tensor.shape} inconsistent with cutoff {cutoff}")
    weight = float(np.real(np.trace(tensor.reshape(d**nmodes, d**nmodes))))
    tensor.flags.writeable = False
    return FockState(tensor=tensor, cutoff=cutoff, weight=weight)


def state_from_matrix(matrix: np.ndarray, nmodes: int, cutoff: int) -> FockState:
    d = cutoff + 1
    return _state(np.asarray(matrix, dtype=complex).reshape((d,) * (2 * nmodes)), cutoff)


def pure_state(amplitudes: np.ndarray, cutoff: int) -> FockState:
    """Density operator |psi><psi| from a ket tensor with one index per mode."""
    psi = np.asarray(amplitudes, dtype=complex)
    rho = np.multiply.outer(psi, psi.conj())
    return _state(rho, cutoff)


def vacuum_state(nmodes: int, cutoff: int = DEFAULT_CUTOFF) -> FockState:
    psi = np.zeros((cutoff + 1,) * nmodes, dtype=complex)
    psi[(0,) * nmodes] = 1.0
    return pure_state(psi, cutoff)


def make_epr(lam: float, cutoff: int = DEFAULT_CUTOFF) -> FockState:
    """Two-mode squeezed vacuum with amplitude sqrt(1-lam^2) lam^k on |k,k>.

    The state is truncated, not renormalized: ``weight`` reports the captured
    norm so truncation error stays observable.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError("squeezing parameter must lie in [0, 1); lam -> 1 is the "
                         "infinite-energy limit")
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    d = cutoff + 1
    psi = np.zeros((d, d), dtype=complex)
    amp = math.sqrt(1.0 - lam * lam)
    for k in range(d):
        psi[k, k] = amp * lam**k
    return pure_state(psi, cutoff)


# ---------------------------------------------------------------------------
# index plumbing

def _axes_letters(nmodes: int):
    letters = ascii_lowercase
    kets = letters[:nmodes]
    bras = letters[nmodes:2 * nmodes]
    return kets, bras


def _apply_kraus(state: FockState, kraus: list, mode: int) -> FockState:
    """sum_j K_j rho K_j^dag acting on one mode."""
    n = state.nmodes
    kets, bras = _axes_letters(n)
    kn, bn = kets[mode], bras[mode]
    src = kets + bras
    out = src.replace(kn, "y").replace(bn, "z")
    spec = f"y{kn},{src},z{bn}->{out}"
    acc = np.zeros_like(state.tensor)
    for k in np.asarray(kraus):
        acc += np.einsum(spec, k, state.tensor, k.conj())
    return _state(acc, state.cutoff)


def tensor_product(a: FockState, b: FockState) -> FockState:
    if a.cutoff != b.cutoff:
        raise ValueError("cutoffs must match")
    na, nb = a.nmodes, b.nmodes
    ka, baa = _axes_letters(na)
    all_letters = ascii_lowercase
    kb = all_letters[2 * na:2 * na + nb]
    bb = all_letters[2 * na + nb:2 * na + 2 * nb]
    spec = f"{ka}{baa},{kb}{bb}->{ka}{kb}{baa}{bb}"
    return _state(np.einsum(spec, a.tensor, b.tensor), a.cutoff)


def partial_trace(state: FockState, keep) -> FockState:
    keep = sorted(keep)
    n = state.nmodes
    kets, bras = _axes_letters(n)
    src = list(kets + bras)
    for m in range(n):
        if m not in keep:
            src[n + m] = src[m]
    out = "".join(kets[m] for m in keep) + "".join(bras[m] for m in keep)
    return _state(np.einsum("".join(src) + "->" + out, state.tensor), state.cutoff)


# ---------------------------------------------------------------------------
# channels and circuits

def loss_kraus(tau: float, dim: int) -> list:
    """Pure-loss Kraus family: K_j drops j photons with binomial weights."""
    ops = []
    for j in range(dim):
        k = np.zeros((dim, dim))
        for n in range(j, dim):
            k[n - j, n] = math.sqrt(math.comb(n, j) * tau ** (n - j) * (1.0 - tau) ** j)
        ops.append(k)
    return ops


def apply_loss(state: FockState, tau: float, mode: int) -> FockState:
    """Transmit one mode through a pure-loss channel of intensity transmissivity tau.

    Exactly trace preserving on the truncated space (the Kraus family resolves
    the identity for every photon number up to the cutoff).
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    if tau == 1.0:
        return state
    return _apply_kraus(state, loss_kraus(tau, state.dim), mode)


def bs_coefficient(k: int, l: int, t: int, tau_bs: float) -> float:
    """Amplitude for |k,l> -> |k-t,l+t> at a beam splitter of intensity transmittance tau_bs."""
    if k < 0 or l < 0:
        raise ValueError("photon numbers must be non-negative")
    if not -l <= t <= k:
        raise ValueError(f"photon transfer t={t} out of range [{-l}, {k}]")
    if not 0.0 <= tau_bs <= 1.0:
        raise ValueError("transmittance must lie in [0, 1]")
    pref = math.sqrt(math.factorial(k - t) * math.factorial(l + t)
                     / (math.factorial(k) * math.factorial(l)))
    total = 0.0
    for m in range(max(0, -t), min(l, k - t) + 1):
        e_t = k + l - 2 * m - t
        e_r = 2 * m + t
        total += ((-1.0) ** (l - m) * math.comb(k, m + t) * math.comb(l, m)
                  * math.sqrt(tau_bs**e_t * (1.0 - tau_bs) ** e_r))
    return pref * total


@lru_cache(maxsize=64)
def bs_unitary(cutoff: int, tau_bs: float) -> np.ndarray:
    """Photon-number-conserving two-mode unitary as a (d,d,d,d) tensor U[k',l',k,l].

    Output pairs with k'+l' above the per-mode cutoff are dropped; the lost
    trace is the truncation deficit of the caller's state.
    """
    d = cutoff + 1
    u = np.zeros((d, d, d, d))
    for k in range(d):
        for l in range(d):
            for t in range(-l, k + 1):
                ko, lo = k - t, l + t
                if ko < d and lo < d:
                    u[ko, lo, k, l] = bs_coefficient(k, l, t, tau_bs)
    u.flags.writeable = False
    return u


def apply_bs(state: FockState, modes, tau_bs: float) -> FockState:
    """Mix two modes on a beam splitter; unitary within each photon-number sector."""
    m1, m2 = modes
    n = state.nmodes
    if m1 == m2 or not (0 <= m1 < n and 0 <= m2 < n):
        raise ValueError("modes must be distinct and in range")
    u = bs_unitary(state.cutoff, float(tau_bs))
    kets, bras = _axes_letters(n)
    src = kets + bras
    out = (src.replace(kets[m1], "w").replace(kets[m2], "x")
              .replace(bras[m1], "y").replace(bras[m2], "z"))
    spec = f"wx{kets[m1]}{kets[m2]},{src},yz{bras[m1]}{bras[m2]}->{out}"
    return _state(np.einsum(spec, u, state.tensor, u.conj(), optimize=True), state.cutoff)


def herald(state: FockState, mode: int, projector: np.ndarray) -> Heralded:
    """Project one mode onto a unit-norm single-mode ket and renormalize.

    Returns the reduced state on the remaining modes together with the branch
    probability (the trace of the unnormalized conditioned state).
    """
    v = np.asarray(projector, dtype=complex)
    if v.shape != (state.dim,):
        raise ValueError("projector must be a single-mode vector at the state cutoff")
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("projector must have unit norm")
    n = state.nmodes
    kets, bras = _axes_letters(n)
    src = kets + bras
    out = src.replace(kets[mode], "").replace(bras[mode], "")
    spec = f"{kets[mode]},{src},{bras[mode]}->{out}"
    branch = np.einsum(spec, v.conj(), state.tensor, v)
    cond = _state(branch, state.cutoff)
    if cond.weight < 1e-15:
        raise ImprobableBranch(f"herald branch probability {cond.weight:.3e} below 1e-15")
    return Heralded(cond.normalized(), cond.weight)


def number_basis_vector(n: int, dim: int) -> np.ndarray:
    v = np.zeros(dim)
    v[n] = 1.0
    return v


# ---------------------------------------------------------------------------
# observables

def _ladder(dim: int) -> np.ndarray:
    a = np.zeros((dim, dim))
    for n in range(1, dim):
        a[n - 1, n] = math.sqrt(n)
    return a


def quadrature_ops(dim: int):
    a = _ladder(dim)
    x = a + a.T
    p = -1j * (a - a.T)
    return x, p


def second_moments(state: FockState, first_moment_tol: float = 1e-8) -> np.ndarray:
    """Symmetrized 4x4 covariance matrix of (x1, p1, x2, p2) in shot-noise units.

    Requires a normalized zero-mean state; a displaced state is rejected
    because every protocol state here has vanishing first moments.
    """
    if state.nmodes != 2:
        raise ValueError("second_moments expects a two-mode state")
    if abs(state.weight - 1.0) > 1e-6:
        raise ValueError("state must be normalized before taking second moments")
    d = state.dim
    x, p = quadrature_ops(d)
    eye = np.eye(d)
    ops = [np.kron(x, eye), np.kron(p, eye), np.kron(eye, x), np.kron(eye, p)]
    rho = state.matrix()
    for r in ops:
        mean = np.trace(rho @ r)
        if abs(mean) > first_moment_tol:
            raise DisplacedState(f"first moment {abs(mean):.2e} exceeds {first_moment_tol:.0e}")
    gamma = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            sym = ops[i] @ ops[j] + ops[j] @ ops[i]
            gamma[i, j] = gamma[j, i] = 0.5 * np.real(np.trace(rho @ sym))
    return gamma


@dataclass(frozen=True)
class F1Matrix:
    """The five independent entries of the low-photon block of a symmetric state.

    ``vac`` = <00|rho|00>, ``one_left`` = <10|rho|10>, ``one_right`` = <01|rho|01>,
    ``pair_coherence`` = <11|rho|00>, ``pair`` = <11|rho|11>.
    ``off_pattern_max`` reports the largest low-photon entry outside this
    sparsity pattern (including imaginary residue on the pattern itself).
    """

    vac: float
    one_right: float
    one_left: float
    pair_coherence: float
    pair: float
    off_pattern_max: float = 0.0


_F1_PATTERN = {(0, 0, 0, 0), (0, 1, 0, 1), (1, 0, 1, 0), (1, 1, 0, 0), (0, 0, 1, 1), (1, 1, 1, 1)}


def extract_f1(state: FockState) -> F1Matrix:
    """Read off the low-photon block and how far it strays from the symmetric pattern."""
    if state.nmodes != 2:
        raise ValueError("extract_f1 expects a two-mode state")
    t = state.tensor
    off = 0.0
    for i1 in (0, 1):
        for i2 in (0, 1):
            for j1 in (0, 1):
                for j2 in (0, 1):
                    v = t[i1, i2, j1, j2]
                    if (i1, i2, j1, j2) in _F1_PATTERN:
                        off = max(off, abs(v.imag))
                    else:
                        off = max(off, abs(v))
    return F1Matrix(
        vac=float(t[0, 0, 0, 0].real),
        one_right=float(t[0, 1, 0, 1].real),
        one_left=float(t[1, 0, 1, 0].real),
        pair_coherence=float(t[1, 1, 0, 0].real),
        pair=float(t[1, 1, 1, 1].real),
        off_pattern_max=float(off),
    )


# ---------------------------------------------------------------------------
# invariant checks (used by tests and by defensive call sites)

def hermiticity_defect(state: FockState) -> float:
    m = state.matrix()
    return float(np.max(np.abs(m - m.conj().T)))


def min_eigenvalue_ratio(state: FockState) -> float:
    """Smallest eigenvalue over largest; >= -1e-10 for a physical state."""
    ev = np.linalg.eigvalsh(state.matrix())
    top = max(ev[-1], 1e-300)
    return float(ev[0] / top)


def check_state(state: FockState, herm_tol: float = HERM_TOL, psd_tol: float = PSD_TOL):
    if hermiticity_defect(state) > herm_tol:
        raise ValueError("state is not Hermitian within tolerance")
    if min_eigenvalue_ratio(state) < -psd_tol:
        raise ValueError("state is not positive semidefinite within tolerance")
