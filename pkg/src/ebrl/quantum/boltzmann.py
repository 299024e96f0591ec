"""Dense DBM / semi-transverse QBM Hamiltonians, clamped free energies and gradients.

Conventions: sigma_z|0> = +|0>, so a bit v carries the spin z = 1 - 2v.
Units are ordered [state, action, hidden] and basis states are indexed
big-endian (unit 0 is the most significant bit), so the full space is the
tensor product visible (x) hidden.

H = - sum_(l,l') w_ll' Z_l Z_l' - sum_l b_l Z_l - sum_k Gamma_k X_k,

with X terms on hidden units only. The parameter vector is the
concatenation [w (edge order), b (unit order), Gamma (hidden order)].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

MAX_QUBITS = 12


def spins(n_bits: int) -> np.ndarray:
    """(2^n, n) matrix of z eigenvalues, big-endian."""
    idx = np.arange(2**n_bits)[:, None]
    bits = (idx >> np.arange(n_bits - 1, -1, -1)[None, :]) & 1
    return 1.0 - 2.0 * bits


def bits_to_spins(bits) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


@dataclass
class PauliHamiltonian:
    n_state: int
    n_action: int
    n_hidden: int
    edges: list  # (l, l') unit pairs carrying Z_l Z_l'
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray = field(default=None)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.gamma = np.zeros(self.n_hidden) if self.gamma is None else np.asarray(self.gamma, dtype=float)
        self.edges = [tuple(e) for e in self.edges]
        if len(self.w) != len(self.edges) or len(self.b) != self.n_units or len(self.gamma) != self.n_hidden:
            raise ValueError("coefficient lengths do not match the unit roster")
        for l, m in self.edges:
            if not (0 <= l < self.n_units and 0 <= m < self.n_units) or l == m:
                raise ValueError(f"invalid coupling ({l}, {m})")

    @property
    def n_visible(self) -> int:
        return self.n_state + self.n_action

    @property
    def n_units(self) -> int:
        return self.n_visible + self.n_hidden

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.w, self.b, self.gamma])

    def with_theta(self, theta) -> "PauliHamiltonian":
        theta = np.asarray(theta, dtype=float)
        ne, nu = len(self.edges), self.n_units
        return PauliHamiltonian(
            self.n_state, self.n_action, self.n_hidden, self.edges,
            theta[:ne], theta[ne : ne + nu], theta[ne + nu :],
        )

    def terms(self) -> list:
        """Flat (coefficient, kind, units) list; coefficients already carry the minus sign."""
        out = [(-w, "zz", e) for w, e in zip(self.w, self.edges)]
        out += [(-b, "z", (l,)) for l, b in enumerate(self.b)]
        out += [(-g, "x", (self.n_visible + k,)) for k, g in enumerate(self.gamma)]
        return out

    # -- constructors --------------------------------------------------

    @classmethod
    def layered(cls, n_state, n_action, hidden_layers, rng=None, scale=1.0, transverse=0.0):
        """Visible units couple to the first hidden layer, each layer to the next."""
        rng = rng if rng is not None else np.random.default_rng(0)
        n_vis = n_state + n_action
        layers, start = [], n_vis
        for size in hidden_layers:
            layers.append(list(range(start, start + size)))
            start += size
        prev = list(range(n_vis))
        edges = []
        for layer in layers:
            edges += [(i, k) for i in prev for k in layer]
            prev = layer
        n_hidden = sum(hidden_layers)
        n_units = n_vis + n_hidden
        return cls(
            n_state, n_action, n_hidden, edges,
            rng.normal(0, scale, len(edges)),
            rng.normal(0, scale, n_units),
            transverse * rng.uniform(0.2, 1.0, n_hidden) if transverse else np.zeros(n_hidden),
        )


def _diagonal(H: PauliHamiltonian, Z: np.ndarray) -> np.ndarray:
    """Energies of the diagonal part for spin rows ``Z`` over all units."""
    e = -(Z @ H.b)
    for w, (l, m) in zip(H.w, H.edges):
        e -= w * Z[:, l] * Z[:, m]
    return e


def _add_transverse(M: np.ndarray, gammas, positions, n_bits: int) -> None:
    idx = np.arange(M.shape[0])
    for g, pos in zip(gammas, positions):
        if g:
            flip = idx ^ (1 << (n_bits - 1 - pos))
            M[idx, flip] -= g


def hamiltonian_matrix(H: PauliHamiltonian) -> np.ndarray:
    q = H.n_units
    if q > MAX_QUBITS:
        raise ValueError(f"{q} qubits exceeds the dense cap of {MAX_QUBITS}")
    M = np.diag(_diagonal(H, spins(q)))
    _add_transverse(M, H.gamma, range(H.n_visible, q), q)
    return M


def _visible_spins(H: PauliHamiltonian, s, a) -> np.ndarray:
    v = np.concatenate([np.asarray(s, dtype=float).ravel(), np.asarray(a, dtype=float).ravel()])
    if len(v) != H.n_visible:
        raise ValueError("clamped configuration has the wrong width")
    return bits_to_spins(v)


def _clamped_spins(H: PauliHamiltonian, s, a) -> np.ndarray:
    zv = _visible_spins(H, s, a)
    Zh = spins(H.n_hidden)
    return np.hstack([np.broadcast_to(zv, (len(Zh), len(zv))), Zh])


def clamp(H: PauliHamiltonian, s, a) -> np.ndarray:
    """Hidden-space operator <s,a| H |s,a> of dimension 2^K."""
    if H.n_hidden > MAX_QUBITS:
        raise ValueError("too many hidden units for a dense clamped operator")
    M = np.diag(_diagonal(H, _clamped_spins(H, s, a)))
    _add_transverse(M, H.gamma, range(H.n_hidden), H.n_hidden)
    return M


# ---------------------------------------------------------------------------
# Gibbs states and free energies


def _eigh(Hm):
    lam, V = np.linalg.eigh(Hm)
    return lam, V


def gibbs_state(Hm: np.ndarray, beta: float = 1.0) -> np.ndarray:
    lam, V = _eigh(Hm)
    p = softmax(-beta * lam)
    return (V * p) @ V.conj().T


def log_partition(Hm: np.ndarray, beta: float = 1.0) -> float:
    return float(logsumexp(-beta * np.linalg.eigvalsh(Hm)))


def von_neumann_term(rho: np.ndarray) -> float:
    """Tr[rho log rho]."""
    p = np.clip(np.linalg.eigvalsh(rho), 0.0, None)
    p = p[p > 0]
    return float(np.sum(p * np.log(p)))


def dbm_free_energy(H: PauliHamiltonian, s, a, beta: float = 1.0) -> float:
    if np.any(H.gamma):
        raise ValueError("DBM free energy needs a diagonal Hamiltonian (Gamma = 0)")
    if H.n_hidden > MAX_QUBITS:
        raise ValueError("hidden count exceeds the enumeration cap")
    energies = _diagonal(H, _clamped_spins(H, s, a))
    return float(-logsumexp(-beta * energies) / beta)


def dbm_free_energy_expanded(H: PauliHamiltonian, s, a, beta: float = 1.0) -> float:
    """Mean-energy plus entropy form: couplings and biases against <h>, <hh>, minus entropy."""
    if np.any(H.gamma):
        raise ValueError("DBM free energy needs a diagonal Hamiltonian (Gamma = 0)")
    nv = H.n_visible
    zv = _visible_spins(H, s, a)
    Z = _clamped_spins(H, s, a)
    P = softmax(-beta * _diagonal(H, Z))
    Zh = Z[:, nv:]
    mean_h = P @ Zh
    total = 0.0
    for w, (l, m) in zip(H.w, H.edges):
        if l < nv and m < nv:
            total -= w * zv[l] * zv[m]
        elif l < nv:
            total -= w * zv[l] * mean_h[m - nv]
        elif m < nv:
            total -= w * zv[m] * mean_h[l - nv]
        else:
            total -= w * float(P @ (Zh[:, l - nv] * Zh[:, m - nv]))
    total -= H.b[nv:] @ mean_h
    total -= H.b[:nv] @ zv
    nz = P[P > 0]
    return float(total + np.sum(nz * np.log(nz)) / beta)


def clamped_state(H: PauliHamiltonian, s, a, beta: float = 1.0) -> np.ndarray:
    """rho_{s,a}: the clamped block of the projected Gibbs state."""
    return gibbs_state(clamp(H, s, a), beta)


def qbm_free_energy(H: PauliHamiltonian, s, a, beta: float = 1.0) -> float:
    """Tr[rho H] + (1/beta) Tr[rho log rho] on the clamped block."""
    Hc = clamp(H, s, a)
    rho = gibbs_state(Hc, beta)
    return float(np.real(np.trace(rho @ Hc)) + von_neumann_term(rho) / beta)


def qbm_free_energy_logtrace(H: PauliHamiltonian, s, a, beta: float = 1.0) -> float:
    return -log_partition(clamp(H, s, a), beta) / beta


def projected_free_energy(H: PauliHamiltonian, s, a, beta: float = 1.0) -> float:
    """-(1/beta) log Tr[Lambda e^{-beta H}] from the full 2^q matrix (no clamping shortcut)."""
    M = hamiltonian_matrix(H)
    lam, V = _eigh(M)
    nv, K = H.n_visible, H.n_hidden
    v_index = int("".join(str(int(x)) for x in np.concatenate([np.ravel(s), np.ravel(a)])) or "0", 2)
    block = slice(v_index * 2**K, (v_index + 1) * 2**K)
    shift = lam.min()
    expo = (V[block] * np.exp(-beta * (lam - shift))) @ V[block].conj().T
    return float(-(np.log(np.real(np.trace(expo))) - beta * shift) / beta)


# ---------------------------------------------------------------------------
# gradients


def _operator_expectations(H: PauliHamiltonian, rho: np.ndarray, zv: np.ndarray):
    """<Z_l>, <Z_l Z_l'> per edge and <X_k> under rho on the clamped hidden space."""
    nv, K = H.n_visible, H.n_hidden
    diag = np.real(np.diag(rho))
    Zh = spins(K)
    z_mean = np.concatenate([zv, diag @ Zh])
    zz = np.empty(len(H.edges))
    for j, (l, m) in enumerate(H.edges):
        zl = zv[l] if l < nv else Zh[:, l - nv]
        zm = zv[m] if m < nv else Zh[:, m - nv]
        prod = zl * zm
        zz[j] = float(diag @ prod) if np.ndim(prod) else float(prod)
    idx = np.arange(2**K)
    x_mean = np.array([np.real(rho[idx, idx ^ (1 << (K - 1 - k))].sum()) for k in range(K)])
    return z_mean, zz, x_mean


def qbm_gradient(H: PauliHamiltonian, s, a, beta: float = 1.0) -> np.ndarray:
    """dF/dtheta = Tr[(dH/dtheta) rho_{s,a}] in the ``theta`` ordering."""
    rho = clamped_state(H, s, a, beta)
    z_mean, zz, x_mean = _operator_expectations(H, rho, _visible_spins(H, s, a))
    return -np.concatenate([zz, z_mean, x_mean])


def dbm_gradient(H: PauliHamiltonian, s, a, beta: float = 1.0) -> np.ndarray:
    """Closed form under P(h|s,a) for diagonal Hamiltonians; Gamma entries are <X> = 0 terms."""
    if np.any(H.gamma):
        raise ValueError("closed form only for Gamma = 0")
    nv = H.n_visible
    zv = _visible_spins(H, s, a)
    Z = _clamped_spins(H, s, a)
    P = softmax(-beta * _diagonal(H, Z))
    zz = np.array([P @ (Z[:, l] * Z[:, m]) for l, m in H.edges])
    z_mean = P @ Z
    z_mean[:nv] = zv
    return -np.concatenate([zz, z_mean, np.zeros(H.n_hidden)])


def hadamard_all(n_bits: int) -> np.ndarray:
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    out = np.ones((1, 1))
    for _ in range(n_bits):
        out = np.kron(out, h)
    return out


def sampled_gradient(H: PauliHamiltonian, s, a, shots: int, rng, beta: float = 1.0) -> np.ndarray:
    """Shot-based estimate: z-basis measurements for Z terms, Hadamard-rotated ones for X terms."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    nv, K = H.n_visible, H.n_hidden
    zv = _visible_spins(H, s, a)
    rho = clamped_state(H, s, a, beta)
    Zh = spins(K)

    def measure(state):
        p = np.clip(np.real(np.diag(state)), 0.0, None)
        return rng.multinomial(shots, p / p.sum()) / shots

    freq = measure(rho)
    z_mean = np.concatenate([zv, freq @ Zh])
    zz = np.empty(len(H.edges))
    for j, (l, m) in enumerate(H.edges):
        zl = zv[l] if l < nv else Zh[:, l - nv]
        zm = zv[m] if m < nv else Zh[:, m - nv]
        prod = zl * zm
        zz[j] = float(freq @ prod) if np.ndim(prod) else float(prod)
    Hd = hadamard_all(K)
    x_mean = measure(Hd @ rho @ Hd) @ Zh
    return -np.concatenate([zz, z_mean, x_mean])


def variational_free_energy(rho: np.ndarray, Hm: np.ndarray, beta: float = 1.0) -> float:
    if beta == 0:
        raise ValueError("beta must be non-zero")
    return float(np.real(np.trace(rho @ Hm)) + von_neumann_term(rho) / beta)


def is_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> bool:
    herm = np.abs(rho - rho.conj().T).max() <= tol
    trace = abs(np.trace(rho) - 1) <= tol
    psd = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -tol
    return bool(herm and trace and psd)
