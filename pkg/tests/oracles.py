"""Independent reference implementations used as oracles by the test suite.

Everything here is rebuilt from the closed-form coefficient definitions with
scipy.special, sharing no contraction code with the package: beam-splitter
matrices assembled densely, heralds applied as explicit matrix projections,
and the four-mode circuits contracted step by step with tensordot.
"""

import numpy as np
from scipy.special import comb, factorial


def bs_coeff_ref(k, l, t, tau):
    pref = np.sqrt(factorial(k - t, exact=True) * factorial(l + t, exact=True)
                   / (factorial(k, exact=True) * factorial(l, exact=True)))
    total = 0.0
    for m in range(max(0, -t), min(l, k - t) + 1):
        total += ((-1.0) ** (l - m) * comb(k, m + t, exact=True) * comb(l, m, exact=True)
                  * np.sqrt(tau ** (k + l - 2 * m - t) * (1 - tau) ** (2 * m + t)))
    return pref * total


def bs_matrix_ref(cutoff, tau):
    """Dense (d^2, d^2) beam-splitter matrix, row-major two-mode indexing."""
    d = cutoff + 1
    u = np.zeros((d * d, d * d))
    for k in range(d):
        for l in range(d):
            for t in range(-l, k + 1):
                ko, lo = k - t, l + t
                if ko < d and lo < d:
                    u[ko * d + lo, k * d + l] = bs_coeff_ref(k, l, t, tau)
    return u


def s_diag_ref(cutoff):
    return np.diag([(n - 1.0) / np.sqrt(2.0 ** (n + 1)) for n in range(cutoff + 1)])


def xi_ref(q, dim):
    v = np.zeros(dim)
    v[0], v[1] = q, 1.0
    return v / np.sqrt(1.0 + q * q)


def gadget_kraus_ref(q, cutoff):
    """Filter gadget Kraus (d, d, d) from dense matrices, with the sqrt(2) convention."""
    d = cutoff + 1
    u = bs_matrix_ref(cutoff, 0.5)
    ss = np.kron(s_diag_ref(cutoff), s_diag_ref(cutoff))
    mz = (u.T @ ss @ u).reshape(d, d, d, d)
    xi = xi_ref(q, d)
    w = np.tensordot(xi, mz, axes=([0], [1]))  # project the second output port
    return np.sqrt(2.0) * w


def pr_kraus_ref(eta, cutoff):
    """Photon-replacement Kraus: mix with |1>, herald one photon, intensity eta^2."""
    d = cutoff + 1
    u = bs_matrix_ref(cutoff, eta * eta).reshape(d, d, d, d)
    return u[:, 1, :, 1].copy()


def swap_circuit_ref(rho_left, rho_right, q, cutoff):
    """Brute-force swap: dense four-mode density matrix and explicit projections.

    Returns the unnormalized two-mode output (kets first indexing).
    """
    d = cutoff + 1
    w = gadget_kraus_ref(q, cutoff)
    m_row = np.tensordot(xi_ref(-q, d), w, axes=([0], [0])).reshape(1, d * d)
    rho4 = np.kron(rho_left.reshape(d * d, d * d), rho_right.reshape(d * d, d * d))
    m_full = np.kron(np.eye(d), np.kron(m_row, np.eye(d)))
    out = m_full @ rho4 @ m_full.conj().T
    return out.reshape(d, d, d, d)


def purify_circuit_ref(rho_a, rho_b, q, cutoff):
    """Brute-force purifying distillation via stepwise tensordot contraction."""
    d = cutoff + 1
    w = gadget_kraus_ref(q, cutoff)
    ta = rho_a.reshape(d, d, d, d)
    tb = rho_b.reshape(d, d, d, d)
    rho8 = np.tensordot(ta, tb, axes=0)  # (a,b,m,n, c,d,p,q)
    t1 = np.tensordot(w, rho8, axes=([1, 2], [0, 4]))          # (k, b,m,n,d,p,q)
    t2 = np.tensordot(w, t1, axes=([1, 2], [1, 4]))            # (l, k,m,n,p,q)
    t3 = np.tensordot(w.conj(), t2, axes=([1, 2], [2, 4]))     # (r, l,k,n,q)
    t4 = np.tensordot(w.conj(), t3, axes=([1, 2], [3, 4]))     # (s, r,l,k)
    return np.transpose(t4, (3, 2, 1, 0))


def gaussify_circuit_ref(rho, cutoff):
    """Brute-force Gaussification round via dense four-mode matrices."""
    d = cutoff + 1
    u = bs_matrix_ref(cutoff, 0.5).reshape(d, d, d, d)
    k_node = u[:, 0, :, :].reshape(d, d * d)  # vacuum on the second output port
    rho4 = np.kron(rho.reshape(d * d, d * d), rho.reshape(d * d, d * d))
    # reorder modes (A1,A2,B1,B2) -> node pairing (A1,B1),(A2,B2)
    perm = np.zeros((d**4, d**4))
    for a1 in range(d):
        for a2 in range(d):
            for b1 in range(d):
                for b2 in range(d):
                    src = ((a1 * d + a2) * d + b1) * d + b2
                    dst = ((a1 * d + b1) * d + a2) * d + b2
                    perm[dst, src] = 1.0
    rho4 = perm @ rho4 @ perm.T
    k_full = np.kron(k_node, k_node)
    out = k_full @ rho4 @ k_full.conj().T
    return out.reshape(d, d, d, d)
