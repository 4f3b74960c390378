"""Heralded protocol maps on two-mode states.

Implements the building blocks of the repeater: iterative Gaussification,
symmetric photon-replacement distillation, the Mach-Zehnder filter gadget
and the purifying distillation built from it, heralded low-photon
entanglement swapping, and the deterministic covariance-level swap.

Success probabilities are the trace of the unnormalized conditioned branch.
For operations that end in a projection onto the superposition state
xi(q) = (q|0> + |1>)/sqrt(1+q^2), the branch is counted for both conditioning
phases (+q and -q give the same output, up to a correctable photon-number
parity, on states with the symmetric low-photon structure); concretely the
gadget Kraus carries a factor sqrt(2).  This is the normalization under which
the closed-form low-photon update laws hold with their standard prefactors.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ImprobableBranch, ParameterInfeasible, StructureLeak
from .fock import (DEFAULT_CUTOFF, F1Matrix, FockState, _state, bs_unitary,
                   extract_f1, second_moments)
from .gauss import (CovarianceMatrix, GaussParams, cm_distance, cm_from_gauss,
                    gauss_params)
from .errors import EpsilonUndefined


@dataclass(frozen=True)
class HeraldedOutcome:
    """Normalized output of a probabilistic operation plus its bookkeeping.

    ``consumed`` counts two-mode resource states eaten by the operation,
    ``ancillas`` counts single photons.  ``diverging`` warns that the output's
    Gaussification fixed point is unphysical (the iteration would not
    converge from this state).
    """

    state: FockState
    p_succ: float
    consumed: int
    ancillas: int = 0
    diverging: bool = False
    params: dict = field(default_factory=dict)
    level_probabilities: tuple = ()
    p_tree: float = 1.0
    cm_residual: float | None = None


@dataclass(frozen=True)
class XiState:
    """Single-photon/vacuum superposition (q|0> + |1>)/sqrt(1+q^2)."""

    q: float

    def vector(self, dim: int) -> np.ndarray:
        v = np.zeros(dim)
        norm = math.sqrt(1.0 + self.q * self.q)
        v[0] = self.q / norm
        v[1] = 1.0 / norm
        return v


def xi_vector(q: float, dim: int) -> np.ndarray:
    return XiState(q).vector(dim)


def _require_two_mode(state: FockState, who: str):
    if state.nmodes != 2:
        raise ValueError(f"{who} expects a two-mode state")


def _require_normalized(state: FockState, who: str, tol: float = 1e-9):
    if abs(state.weight - 1.0) > tol:
        raise ValueError(f"{who} expects a normalized state (weight={state.weight!r})")


def _outcome_params(state: FockState):
    try:
        return gauss_params(extract_f1(state))
    except EpsilonUndefined:
        return None


# ---------------------------------------------------------------------------
# photon replacement

def s_operator(cutoff: int) -> np.ndarray:
    """Kraus operator of balanced-beam-splitter photon replacement.

    Mix the mode with a fresh single photon on a balanced splitter and herald
    exactly one photon on the ancilla output.  The result is diagonal in the
    number basis with entries (n - 1)/sqrt(2^(n+1)); single-photon components
    are filtered out entirely.
    """
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2")
    u = bs_unitary(cutoff, 0.5)
    return np.array(u[:, 1, :, 1])


def pr_kraus(eta: float, cutoff: int) -> np.ndarray:
    """Single-mode Kraus of photon replacement at amplitude transmittance eta.

    The beam splitter's intensity transmittance is eta**2; the heralded map is
    diagonal in photon number.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("amplitude transmittance must lie in (0, 1]")
    u = bs_unitary(cutoff, eta * eta)
    return np.array(u[:, 1, :, 1])


def pr_beta(eta: float) -> float:
    """Scaling of the pair/vacuum ratio per photon-replacement round: (2 eta^2 - 1)/eta."""
    return (2.0 * eta * eta - 1.0) / eta


def pr_distill(rho: FockState, eta: float) -> HeraldedOutcome:
    """Symmetric photon replacement on both modes, heralded on one photon each.

    Leaves the purity ratio epsilon invariant and scales the pair/vacuum
    ratio by pr_beta(eta)**2; with small eta this boosts the fixed-point
    squeezing toward 1 at the cost of success probability.
    """
    _require_two_mode(rho, "pr_distill")
    _require_normalized(rho, "pr_distill")
    a = pr_kraus(eta, rho.cutoff)
    branch = np.einsum("ia,jb,abcd,kc,ld->ijkl", a, a, rho.tensor, a.conj(), a.conj(),
                       optimize=True)
    out = _state(branch, rho.cutoff)
    if out.weight < 1e-15:
        raise ImprobableBranch("photon replacement branch has vanishing probability")
    params = _outcome_params(out.normalized())
    return HeraldedOutcome(state=out.normalized(), p_succ=out.weight, consumed=1,
                           ancillas=2, diverging=params is None or not params.valid,
                           params={"eta": float(eta)})


# ---------------------------------------------------------------------------
# Mach-Zehnder filter gadget

def mz_gadget_kraus(q: float, cutoff: int) -> np.ndarray:
    """Two-mode -> one-mode Kraus of the filter gadget D.

    The circuit: balanced beam splitter, the photon-replacement filter S in
    each arm, the inverse balanced splitter, then conditioning one output
    port on xi(q).  Cross single-photon terms |01>, |10> are annihilated, so
    on the low-photon subspace the gadget maps |00> -> |0| and |11> -> |1>
    with fixed weights (see module docstring for the sqrt(2) convention).
    Returned with shape (d, d, d): W[out, in1, in2].
    """
    if q < 0:
        raise ValueError("conditioning parameter q must be non-negative")
    d = cutoff + 1
    u = bs_unitary(cutoff, 0.5).reshape(d * d, d * d)
    s = s_operator(cutoff)
    ss = np.kron(s, s)
    mz = u.conj().T @ ss @ u
    xi = xi_vector(q, d)
    w = np.einsum("p,opab->oab", xi.conj(), mz.reshape(d, d, d, d))
    return math.sqrt(2.0) * w


def d_gadget(state: FockState, modes, q: float) -> HeraldedOutcome:
    """Apply the filter gadget to a mode pair, replacing it with one output mode."""
    m1, m2 = modes
    _require_two_mode(state, "d_gadget")  # transient wider states stay internal
    if {m1, m2} != {0, 1}:
        raise ValueError("d_gadget on a two-mode state must consume both modes")
    _require_normalized(state, "d_gadget")
    w = mz_gadget_kraus(q, state.cutoff)
    branch = np.einsum("oab,abcd,pcd->op", w, state.tensor, w.conj(), optimize=True)
    out = _state(branch, state.cutoff)
    if out.weight < 1e-15:
        raise ImprobableBranch("filter gadget branch has vanishing probability")
    return HeraldedOutcome(state=out.normalized(), p_succ=out.weight, consumed=1,
                           ancillas=2, params={"q": float(q)})


def _node_pair_contraction(ta: np.ndarray, tb: np.ndarray, op: np.ndarray) -> np.ndarray:
    """Contract op (out, inA, inB) at both nodes of rho_A (x) rho_B.

    Node one holds the first mode of each copy, node two the second mode;
    the result is again a two-mode tensor.  Contracted pairwise so the
    intermediates stay at d^6 entries (the transient four-mode object is
    never materialized).
    """
    t1 = np.einsum("kac,abmn->kcbmn", op, ta, optimize=True)
    t2 = np.einsum("kcbmn,rmp->kcbnrp", t1, op.conj(), optimize=True)
    t3 = np.einsum("kcbnrp,cdpq->kbnrdq", t2, tb, optimize=True)
    t4 = np.einsum("kbnrdq,lbd->knrql", t3, op, optimize=True)
    return np.einsum("knrql,snq->klrs", t4, op.conj(), optimize=True)


# ---------------------------------------------------------------------------
# Gaussification

def _vacuum_herald_kraus(cutoff: int) -> np.ndarray:
    """K[out, a, b]: balanced splitter followed by vacuum on the second port."""
    u = bs_unitary(cutoff, 0.5)
    return np.array(u[:, 0, :, :])


def gaussify_step(rho: FockState) -> HeraldedOutcome:
    """One Gaussification round: two copies, balanced splitters at both nodes,
    heralded on vacuum at one output port per node.

    Fixed points are the lossy two-mode squeezed states; the fixed-point
    parameters (lambda_inf, tau_inf) of the input are preserved exactly.
    """
    _require_two_mode(rho, "gaussify_step")
    _require_normalized(rho, "gaussify_step")
    k = _vacuum_herald_kraus(rho.cutoff)
    branch = _node_pair_contraction(rho.tensor, rho.tensor, k)
    out = _state(branch, rho.cutoff)
    if out.weight < 1e-15:
        raise ImprobableBranch("vacuum herald branch has vanishing probability")
    return HeraldedOutcome(state=out.normalized(), p_succ=out.weight, consumed=2)


def gaussify(rho: FockState, iterations: int) -> HeraldedOutcome:
    """Iterate gaussify_step; the i-th round consumes two copies of round i-1.

    ``p_tree`` multiplies every step of the binary preparation tree
    (2^(iterations-i) runs of round i); the reported ``p_succ`` is the tree
    product normalized per consumed input copy, p_tree / 2**iterations, which
    is the convention the reference performance data uses for this stage.
    ``cm_residual`` reports how far the output's second moments sit from the
    fixed-point covariance predicted from the input.
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    _require_two_mode(rho, "gaussify")
    _require_normalized(rho, "gaussify")
    try:
        predicted = cm_from_gauss(gauss_params(extract_f1(rho)))
    except Exception:
        predicted = None
    state = rho
    levels = []
    p_tree = 1.0
    for i in range(iterations):
        step = gaussify_step(state)
        levels.append(step.p_succ)
        p_tree *= step.p_succ ** (2 ** (iterations - 1 - i))
        state = step.state
    consumed = 2**iterations
    residual = None
    if predicted is not None and iterations > 0:
        residual = cm_distance(CovarianceMatrix(second_moments(state)), predicted)
    return HeraldedOutcome(state=state, p_succ=p_tree / consumed if iterations else 1.0,
                           consumed=consumed, level_probabilities=tuple(levels),
                           p_tree=p_tree, cm_residual=residual)


# ---------------------------------------------------------------------------
# purifying distillation and entanglement swapping

F1_FORM_TOL = 1e-8


def _require_f1_form(state: FockState, who: str, tol: float = F1_FORM_TOL):
    leak = extract_f1(state).off_pattern_max
    if leak > tol:
        raise ValueError(f"{who} needs a structured low-photon block "
                         f"(off-pattern leakage {leak:.2e} > {tol:.0e})")


def purify_distill(rho: FockState, q: float) -> HeraldedOutcome:
    """Purifying distillation: the filter gadget applied to rho (x) rho at both nodes.

    Squares the purity ratio, epsilon -> epsilon**2, so the distilled state
    is strictly purer; q tunes the output fixed-point squeezing.
    """
    _require_two_mode(rho, "purify_distill")
    _require_normalized(rho, "purify_distill")
    _require_f1_form(rho, "purify_distill")
    w = mz_gadget_kraus(q, rho.cutoff)
    branch = _node_pair_contraction(rho.tensor, rho.tensor, w)
    out = _state(branch, rho.cutoff)
    if out.weight < 1e-15:
        raise ImprobableBranch("purifying distillation branch has vanishing probability")
    normalized = out.normalized()
    leak = extract_f1(normalized).off_pattern_max
    if leak > 1e-6:
        raise StructureLeak(f"purifying distillation leaked {leak:.2e} outside the "
                            "low-photon pattern")
    params = _outcome_params(normalized)
    return HeraldedOutcome(state=normalized, p_succ=out.weight, consumed=2, ancillas=4,
                           diverging=params is None or not params.valid,
                           params={"q": float(q)})


def ng_swap(left: FockState, right: FockState, q: float) -> HeraldedOutcome:
    """Heralded low-photon entanglement swap of two structured states.

    The middle modes (second of ``left``, first of ``right``) pass through
    the filter gadget and its one output mode is conditioned on xi(-q); the
    surviving end modes carry the swapped entanglement.  q tunes the output
    fixed-point squeezing.
    """
    for s, who in ((left, "ng_swap left"), (right, "ng_swap right")):
        _require_two_mode(s, who)
        _require_normalized(s, who)
        _require_f1_form(s, who)
    if left.cutoff != right.cutoff:
        raise ValueError("cutoffs must match")
    d = left.dim
    w = mz_gadget_kraus(q, left.cutoff)
    m = np.einsum("o,oab->ab", xi_vector(-q, d).conj(), w)
    branch = np.einsum("ab,cd,iarc,bjds->ijrs", m, m.conj(), left.tensor, right.tensor,
                       optimize=True)
    out = _state(branch, left.cutoff)
    if out.weight < 1e-15:
        raise ImprobableBranch("swap herald branch has vanishing probability")
    normalized = out.normalized()
    params = _outcome_params(normalized)
    return HeraldedOutcome(state=normalized, p_succ=out.weight, consumed=2, ancillas=4,
                           diverging=params is None or not params.valid,
                           params={"q": float(q)})


# ---------------------------------------------------------------------------
# closed-form low-photon update laws
#
# For every operation above, the low-photon block of the output depends only
# on the low-photon block of the input; these predictors implement that
# dependence in closed form (with the same normalization as the circuits) and
# back the parameter solvers.  The test suite checks them against the circuit
# contractions element by element.

def predict_pr_f1(f1: F1Matrix, eta: float, cutoff: int = DEFAULT_CUTOFF) -> F1Matrix:
    a = pr_kraus(eta, max(cutoff, 2))
    a0, a1 = a[0, 0], a[1, 1]
    return F1Matrix(
        vac=a0**4 * f1.vac,
        one_right=a1**2 * a0**2 * f1.one_right,
        one_left=a1**2 * a0**2 * f1.one_left,
        pair_coherence=a1**2 * a0**2 * f1.pair_coherence,
        pair=a1**4 * f1.pair,
    )


def gadget_weights(q: float):
    """Diagonal low-photon action of the filter gadget: (|00> weight, |11> weight)."""
    norm = math.sqrt(2.0 * (1.0 + q * q))
    return q / norm, -0.5 / norm


def predict_purify_f1(f1: F1Matrix, q: float) -> F1Matrix:
    u, v = gadget_weights(q)
    return F1Matrix(
        vac=u**4 * f1.vac**2,
        one_right=u**2 * v**2 * f1.one_right**2,
        one_left=u**2 * v**2 * f1.one_left**2,
        pair_coherence=u**2 * v**2 * f1.pair_coherence**2,
        pair=v**4 * f1.pair**2,
    )


def predict_swap_f1(left: F1Matrix, right: F1Matrix, q: float) -> F1Matrix:
    t = q * q
    w = 1.0 / (2.0 * (1.0 + t) ** 2)
    q4, quarter, cross = t * t, 0.25, 0.5 * t
    return F1Matrix(
        vac=w * (q4 * left.vac * right.vac + quarter * left.one_right * right.one_left),
        one_right=w * (q4 * left.vac * right.one_right + quarter * left.one_right * right.pair),
        one_left=w * (q4 * left.one_left * right.vac + quarter * left.pair * right.one_left),
        pair_coherence=w * cross * left.pair_coherence * right.pair_coherence,
        pair=w * (q4 * left.one_left * right.one_right + quarter * left.pair * right.pair),
    )


def predict_gaussify_f1(f1: F1Matrix) -> F1Matrix:
    return F1Matrix(
        vac=f1.vac**2,
        one_right=f1.one_right * f1.vac,
        one_left=f1.one_left * f1.vac,
        pair_coherence=f1.pair_coherence * f1.vac,
        pair=0.5 * (f1.pair * f1.vac + f1.pair_coherence**2
                    + f1.one_left * f1.one_right),
    )


# ---------------------------------------------------------------------------
# parameter solvers

def solve_pr_eta(f1: F1Matrix, lambda_target: float) -> float:
    """Amplitude transmittance that drives the fixed-point squeezing to the target."""
    params = gauss_params(f1)
    eps, ratio = params.epsilon, params.pair_ratio
    target_ratio = (lambda_target - eps) / (1.0 - eps * eps)
    if target_ratio <= 0:
        raise ParameterInfeasible(
            f"target squeezing {lambda_target} not reachable from epsilon={eps:.4g}")
    beta_sq = target_ratio / ratio
    beta = math.sqrt(beta_sq) if beta_sq <= 1.0 else -math.sqrt(beta_sq)
    eta = (beta + math.sqrt(beta * beta + 8.0)) / 4.0
    if not 0.0 < eta <= 1.0:
        raise ParameterInfeasible(f"no valid transmittance for beta^2={beta_sq:.4g}")
    return eta


def solve_purify_q(f1: F1Matrix, lambda_target: float) -> float:
    """Conditioning weight that keeps the purified squeezing at the target."""
    params = gauss_params(f1)
    eps2 = params.epsilon**2
    target_ratio = (lambda_target - eps2) / (1.0 - eps2 * eps2)
    if target_ratio <= 0:
        raise ParameterInfeasible(
            f"target squeezing {lambda_target} not reachable after purification")
    return params.pair_ratio / (2.0 * math.sqrt(target_ratio))


def _swap_lambda(left: F1Matrix, right: F1Matrix, t: float):
    try:
        p = gauss_params(predict_swap_f1(left, right, math.sqrt(t)))
    except (EpsilonUndefined, ValueError):
        return None
    if not 0.0 <= p.epsilon < 1.0 or p.pair_ratio <= 0:
        return None
    return p


def solve_swap_q(left: F1Matrix, right: F1Matrix, lambda_target: float,
                 tol: float = 1e-10) -> float:
    """Conditioning weight for the swap, on the branch past the squeezing peak.

    The output squeezing rises to a peak and then falls as q grows; the
    larger-q solution is taken (higher success probability).  Infeasible when
    even the peak squeezing, over all q, stays below the target.
    """
    ts = np.logspace(-6.0, 3.0, 331)
    lams = np.full(ts.shape, np.nan)
    for i, t in enumerate(ts):
        p = _swap_lambda(left, right, t)
        if p is not None:
            lams[i] = p.lambda_inf
    finite = np.where(np.isfinite(lams))[0]
    if finite.size == 0:
        raise ParameterInfeasible("swap output squeezing undefined everywhere")
    peak = finite[np.argmax(lams[finite])]
    if lams[peak] < lambda_target:
        raise ParameterInfeasible(
            f"swap cannot reach squeezing {lambda_target}; peak is {lams[peak]:.4f}")
    bracket = None
    for i in range(peak, len(ts) - 1):
        if not (np.isfinite(lams[i]) and np.isfinite(lams[i + 1])):
            break
        if (lams[i] - lambda_target) * (lams[i + 1] - lambda_target) <= 0:
            bracket = (ts[i], ts[i + 1])
            break
    if bracket is None:
        raise ParameterInfeasible(
            f"no decreasing-branch solution for target squeezing {lambda_target}")
    f = lambda t: _swap_lambda(left, right, t).lambda_inf - lambda_target
    t_root = brentq(f, *bracket, xtol=tol)
    return math.sqrt(t_root)


# ---------------------------------------------------------------------------
# covariance-level (deterministic) swap

def gaussian_swap_cm(left: CovarianceMatrix, right: CovarianceMatrix,
                     gain: float | None = None) -> CovarianceMatrix:
    """Deterministic swap at the covariance level.

    Balanced splitter on the middle modes, homodyne of x on one output and p
    on the other, displacement feedforward absorbed into the conditional
    update (outcome-independent covariance).  ``gain`` scales the feedforward
    relative to the conditional optimum; None or 1 gives the optimum.  A
    photon-number-parity phase correction on the second kept mode restores
    the standard correlation pattern.
    """
    from .gauss import check_physical

    for cm in (left, right):
        if not check_physical(cm):
            raise ValueError("input covariance matrix is unphysical")
    g8 = np.zeros((8, 8))
    g8[:4, :4] = left.matrix
    g8[4:, 4:] = right.matrix
    s = np.eye(8)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for off in (2, 3):  # x and p rows of modes 2 and 3
        i, j = off, off + 2
        s[i, i] = s[i, j] = inv_sqrt2
        s[j, i] = inv_sqrt2
        s[j, j] = -inv_sqrt2
    g8 = s @ g8 @ s.T
    kept = [0, 1, 6, 7]
    meas = [2, 5]  # x of the first middle output, p of the second
    a = g8[np.ix_(kept, kept)]
    c = g8[np.ix_(kept, meas)]
    b = g8[np.ix_(meas, meas)]
    b_inv = np.linalg.pinv(b)
    if gain is None:
        out = a - c @ b_inv @ c.T
    else:
        g_opt = -c @ b_inv
        g = gain * g_opt
        out = a + g @ b @ g.T + c @ g.T + g @ c.T
    flip = np.diag([1.0, 1.0, -1.0, -1.0])
    out = flip @ out @ flip.T
    return CovarianceMatrix(0.5 * (out + out.T))
