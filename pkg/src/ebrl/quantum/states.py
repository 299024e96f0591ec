"""Purified Gibbs states, coherent encodings and annealing overlaps."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import softmax


def gibbs_distribution(energies, beta: float) -> np.ndarray:
    return softmax(-beta * np.asarray(energies, dtype=float))


def purified_gibbs(energies, beta: float = 1.0) -> np.ndarray:
    """Amplitudes sqrt(p_beta(x)) in the computational basis."""
    return np.sqrt(gibbs_distribution(energies, beta)).astype(complex)


def coherent_encoding(Hm: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """sum_i sqrt(e^{-beta l_i} / Z) |phi_i>|conj(phi_i)> on the doubled register."""
    lam, V = np.linalg.eigh(Hm)
    p = softmax(-beta * lam)
    psi = np.zeros(len(lam) ** 2, dtype=complex)
    for i in range(len(lam)):
        psi += np.sqrt(p[i]) * np.kron(V[:, i], V[:, i].conj())
    return psi


def partial_trace_second(psi: np.ndarray, dim: int) -> np.ndarray:
    """Reduced density matrix of the first register of a bipartite pure state."""
    M = psi.reshape(dim, dim)
    return M @ M.conj().T


def measurement_distribution(psi: np.ndarray) -> np.ndarray:
    return np.abs(psi) ** 2


def geometric_schedule(beta_final: float, ratio: float, beta_first: float) -> list:
    """0, beta_first, beta_first*ratio, ... capped at beta_final."""
    if ratio <= 1 or beta_first <= 0 or beta_final < beta_first:
        raise ValueError("need ratio > 1 and 0 < beta_first <= beta_final")
    betas = [0.0, beta_first]
    while betas[-1] < beta_final:
        betas.append(min(betas[-1] * ratio, beta_final))
    return betas


def _spectrum(f_or_H) -> np.ndarray:
    arr = np.asarray(f_or_H)
    if arr.ndim == 2:
        return np.linalg.eigvalsh(arr)
    return arr.astype(float)


def annealing_overlaps(f_or_H, betas) -> np.ndarray:
    """|<psi_{b_i}|psi_{b_{i+1}}>|^2 for successive purified encodings.

    Diagonal energies use the purified state; a Hermitian matrix uses the
    coherent encoding, whose overlaps depend only on the spectrum.
    """
    betas = np.asarray(betas, dtype=float)
    if len(betas) < 2 or np.any(np.diff(betas) < 0):
        raise ValueError("schedule must be non-decreasing with at least two points")
    lam = _spectrum(f_or_H)
    out = []
    for b0, b1 in zip(betas[:-1], betas[1:]):
        p, q = gibbs_distribution(lam, b0), gibbs_distribution(lam, b1)
        out.append(float(np.sum(np.sqrt(p * q)) ** 2))
    return np.array(out)


def schedule_scaling(f_or_H, betas) -> dict:
    """Schedule length next to sqrt(beta * ||H||), reported descriptively."""
    lam = _spectrum(f_or_H)
    norm = float(np.abs(lam).max())
    return {
        "length": len(betas) - 1,
        "sqrt_beta_norm": math.sqrt(float(betas[-1]) * norm),
    }
