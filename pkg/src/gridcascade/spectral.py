"""Linearized closed-loop analysis under uniform parameters.

With unit inertia, uniform coupling k and damping gamma, linearizing the
fully controlled swing equations around an equilibrium gives

    x' = A_c x + P,   A_c = [[0, I], [-k L, -gamma I - k_c L]]

with L the unweighted Laplacian of the post-fault graph.  A_c decouples
along the eigenvectors of L, so each Laplacian eigenvalue lambda_i yields
the pair of roots of mu^2 + (gamma + k_c lambda_i) mu + k lambda_i.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, eigvals
from scipy.optimize import linear_sum_assignment

from .errors import DisconnectedError
from .grid import GridTopology, laplacian

ZERO_EIG_RTOL = 1e-9


@dataclass(frozen=True)
class LinearModelParams:
    coupling: float
    damping: float

    def __post_init__(self):
        if not self.coupling > 0:
            raise ValueError("coupling must be positive")
        if not self.damping >= 0:
            raise ValueError("damping must be nonnegative")


@dataclass(frozen=True)
class SpectralSummary:
    laplacian_eigenvalues: np.ndarray
    lambda2: float
    closed_loop_eigenvalues: np.ndarray  # shape (N, 2)


@dataclass(frozen=True)
class CriticalGain:
    value: float
    lambda2: float
    degenerate: bool  # lambda2 < gamma^2/k: value is the max over per-mode thresholds

    def __float__(self) -> float:
        return self.value


def laplacian_spectrum(topology: GridTopology) -> np.ndarray:
    """Sorted eigenvalues of the unweighted Laplacian."""
    if topology.node_count == 0:
        return np.zeros(0)
    return eigh(laplacian(topology, "unweighted"), eigvals_only=True)


def algebraic_connectivity(lambdas: np.ndarray) -> float:
    """Smallest eigenvalue treated as nonzero, or 0.0 if there is none."""
    lambdas = np.sort(np.asarray(lambdas, dtype=float))
    if lambdas.size < 2:
        return 0.0
    cutoff = ZERO_EIG_RTOL * max(1.0, float(lambdas[-1]))
    nonzero = lambdas[lambdas > cutoff]
    return float(nonzero[0]) if nonzero.size else 0.0


def closed_loop_eigenvalues(lambdas, params: LinearModelParams, gain: float) -> np.ndarray:
    """Roots of mu^2 + (gamma + k_c lambda) mu + k lambda for each lambda.

    Returns an (N, 2) complex array; column 0 takes the + branch of the
    square root.
    """
    lam = np.asarray(lambdas, dtype=float)
    b = params.damping + gain * lam
    disc = (b * b - 4.0 * params.coupling * lam).astype(complex)
    root = np.sqrt(disc)
    return np.stack([0.5 * (-b + root), 0.5 * (-b - root)], axis=-1)


def damping_ratio(lam: float, params: LinearModelParams, gain: float) -> float:
    """(gamma + k_c lambda) / (2 sqrt(k lambda)); above 1 means overdamped."""
    if not lam > 0:
        raise ValueError("damping ratio needs a positive Laplacian eigenvalue")
    return (params.damping + gain * lam) / (2.0 * np.sqrt(params.coupling * lam))


def mode_threshold(lam, params: LinearModelParams):
    """Gain at which the mode with eigenvalue ``lam`` becomes critically damped."""
    lam = np.asarray(lam, dtype=float)
    return 2.0 * np.sqrt(params.coupling / lam) - params.damping / lam


def critical_gain_details(topology: GridTopology, params: LinearModelParams) -> CriticalGain:
    lambdas = laplacian_spectrum(topology)
    lam2 = algebraic_connectivity(lambdas)
    if topology.node_count < 2:
        raise DisconnectedError("need at least two nodes for a critical gain")
    zero_count = int(np.sum(lambdas <= ZERO_EIG_RTOL * max(1.0, float(lambdas[-1]))))
    if zero_count > 1 or lam2 == 0.0:
        raise DisconnectedError("post-fault network is disconnected; no finite critical gain")
    value = float(mode_threshold(lam2, params))
    degenerate = lam2 < params.damping**2 / params.coupling
    if degenerate:
        value = float(np.max(mode_threshold(lambdas[zero_count:], params)))
        warnings.warn(
            f"lambda2 = {lam2:.6g} < gamma^2/k; critical gain taken as max over per-mode thresholds",
            RuntimeWarning,
            stacklevel=2,
        )
    return CriticalGain(value, lam2, degenerate)


def critical_gain(post_fault_topology: GridTopology, params: LinearModelParams) -> float:
    """Gain above which every nonzero linearized mode is overdamped:
    2 sqrt(k / lambda2) - gamma / lambda2."""
    return critical_gain_details(post_fault_topology, params).value


def spectral_summary(topology: GridTopology, params: LinearModelParams, gain: float) -> SpectralSummary:
    lambdas = laplacian_spectrum(topology)
    return SpectralSummary(lambdas, algebraic_connectivity(lambdas), closed_loop_eigenvalues(lambdas, params, gain))


def closed_loop_matrix(topology: GridTopology, params: LinearModelParams, gain: float) -> np.ndarray:
    lap = laplacian(topology, "unweighted")
    n = topology.node_count
    eye = np.eye(n)
    return np.block([
        [np.zeros((n, n)), eye],
        [-params.coupling * lap, -params.damping * eye - gain * lap],
    ])


def verify_spectrum_against_dense(topology: GridTopology, params: LinearModelParams, gain: float) -> float:
    """Largest distance between the numerical spectrum of A_c and the
    analytic eigenvalues, under the optimal one-to-one matching."""
    numeric = eigvals(closed_loop_matrix(topology, params, gain))
    analytic = closed_loop_eigenvalues(laplacian_spectrum(topology), params, gain).ravel()
    cost = np.abs(numeric[:, None] - analytic[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max()) if cost.size else 0.0
