"""Szegedy walk operators for reversible Markov chains, built densely."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from ..samplers import MarkovChain, chain_diagnostics

MAX_CHAIN_STATES = 2**6


def householder_to(target: np.ndarray) -> np.ndarray:
    """Real orthogonal reflection sending e_0 to the unit vector ``target``."""
    n = len(target)
    e0 = np.zeros(n)
    e0[0] = 1.0
    u = e0 - target
    norm = np.linalg.norm(u)
    if norm < 1e-15:
        return np.eye(n)
    u /= norm
    return np.eye(n) - 2.0 * np.outer(u, u)


def swap_operator(n: int) -> np.ndarray:
    idx = np.arange(n * n)
    i, j = np.divmod(idx, n)
    S = np.zeros((n * n, n * n))
    S[j * n + i, idx] = 1.0
    return S


def diffusion_operator(P: np.ndarray) -> np.ndarray:
    """U_P with U_P|i>|0> = |i> sum_j sqrt(P_ij)|j> (block-diagonal over i)."""
    n = len(P)
    U = np.zeros((n * n, n * n))
    for i in range(n):
        U[i * n : (i + 1) * n, i * n : (i + 1) * n] = householder_to(np.sqrt(P[i]))
    return U


@dataclass
class WalkOperator:
    W: np.ndarray
    U: np.ndarray
    V: np.ndarray
    ref_a: np.ndarray
    ref_b: np.ndarray
    chain: MarkovChain
    pi: np.ndarray
    delta: float

    @property
    def n(self) -> int:
        return self.chain.n

    def unitarity_error(self) -> float:
        return float(np.abs(self.W.conj().T @ self.W - np.eye(len(self.W))).max())

    def stationary_state(self) -> np.ndarray:
        """|pi>|0> carried into the walk frame by U_P."""
        n = self.n
        v = np.zeros(n * n)
        v[np.arange(n) * n] = np.sqrt(self.pi)
        return self.U @ v

    def busy_basis(self, tol: float = 1e-10) -> np.ndarray:
        n = self.n
        cols_a = self.U[:, np.arange(n) * n]
        cols_b = self.V[:, np.arange(n)]
        M = np.hstack([cols_a, cols_b])
        Q, sv, _ = np.linalg.svd(M, full_matrices=False)
        return Q[:, sv > tol * sv[0]]


def build_walk_operator(chain: MarkovChain, tol: float = 1e-10) -> WalkOperator:
    n = chain.n
    if n > MAX_CHAIN_STATES:
        raise ValueError(f"dense walks are capped at {MAX_CHAIN_STATES} chain states")
    diag = chain_diagnostics(chain, tol)
    if not diag.reversible:
        raise ValueError("Szegedy construction needs a reversible chain")
    U = diffusion_operator(chain.P)
    S = swap_operator(n)
    # reversible: P* = P, so V_P is U_P with the registers exchanged
    V = S @ U @ S
    ref0 = -np.eye(n)
    ref0[0, 0] = 1.0
    I = np.eye(n)
    ref_a = U @ np.kron(I, ref0) @ U.T
    ref_b = V @ np.kron(ref0, I) @ V.T
    W = ref_b @ ref_a
    walk = WalkOperator(W, U, V, ref_a, ref_b, chain, diag.pi, diag.delta)
    if walk.unitarity_error() > 1e-9:
        raise ArithmeticError("walk operator lost unitarity")
    return walk


@dataclass
class PhaseReport:
    phase_gap: float
    delta: float
    bound: float
    margin: float
    stationary_overlap: float
    unitarity_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def busy_spectrum(walk: WalkOperator):
    """Eigenvalues and eigenvectors of W restricted to the busy subspace."""
    Q = walk.busy_basis()
    Wb = Q.T @ walk.W @ Q
    T, Z = schur(Wb.astype(complex), output="complex")
    return np.diag(T), Q @ Z


def phase_gap(walk: WalkOperator, tol: float = 1e-8) -> PhaseReport:
    """Smallest non-zero |eigenphase| on the busy subspace, checked against sqrt(2 delta)."""
    if walk.delta <= 0:
        raise ValueError("non-ergodic chain: phase gap undefined")
    vals, vecs = busy_spectrum(walk)
    phases = np.angle(vals)
    zero = np.abs(phases) < tol
    if zero.sum() != 1:
        raise ValueError(f"busy subspace has {int(zero.sum())} eigenphase-0 vectors")
    gap = float(np.abs(phases[~zero]).min()) if (~zero).any() else float(np.pi)
    v0 = vecs[:, np.flatnonzero(zero)[0]]
    overlap = float(abs(np.vdot(v0, walk.stationary_state())) ** 2)
    bound = float(np.sqrt(2 * walk.delta))
    return PhaseReport(gap, walk.delta, bound, gap - bound, overlap, walk.unitarity_error())
