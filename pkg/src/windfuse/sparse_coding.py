"""Accelerated proximal gradient sparse coding over complex dictionaries.

Solves, column-wise for every frame of ``S``::

    min_C  ||S - D C||_F^2 + lam * sum(|C|)

where the l1 term is the sum of complex magnitudes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CostBreakdown",
    "SolverState",
    "lipschitz_step",
    "complex_soft_threshold",
    "sparse_code",
    "evaluate_cost",
]

log = logging.getLogger(__name__)

POWER_MAX_ITER = 200
POWER_TOL = 1e-8
EARLY_EXIT_TOL = 1e-9
_TINY = 1e-30


@dataclass(frozen=True)
class CostBreakdown:
    j_rec: float
    j_spa: float
    lam: float

    @property
    def total(self) -> float:
        return self.j_rec + self.lam * self.j_spa


@dataclass
class SolverState:
    """Bookkeeping of one `sparse_code` call."""

    lipschitz: float
    step: float
    iterations: int = 0
    converged: bool = False


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def lipschitz_step(D: np.ndarray) -> tuple[float, float]:
    """Largest eigenvalue ``L`` of ``D^H D`` and the step ``1 / L``.

    Power iteration from an all-ones vector on the smaller of the two Gram
    matrices. If the iterate collapses, the Frobenius bound ``||D||_F^2``
    is used; if it does not settle within the iteration budget, the exact
    dense Hermitian eigensolver is used instead.
    """
    D = np.asarray(D)
    if D.ndim != 2:
        raise ValueError("dictionary must be a 2-D matrix")
    fro2 = float(np.vdot(D, D).real)
    if fro2 == 0.0:
        raise ValueError("dictionary is all zeros; Lipschitz constant undefined")
    _check_finite("dictionary", D)

    gram = D @ D.conj().T if D.shape[0] <= D.shape[1] else D.conj().T @ D
    v = np.ones(gram.shape[0], dtype=gram.dtype)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(POWER_MAX_ITER):
        u = gram @ v
        nrm = np.linalg.norm(u)
        if not np.isfinite(nrm) or nrm <= _TINY * fro2:
            log.debug("power iteration stagnated, using Frobenius bound")
            L = fro2
            break
        new_estimate = float(np.vdot(v, u).real)
        v = u / nrm
        if abs(new_estimate - estimate) <= POWER_TOL * abs(new_estimate):
            L = new_estimate
            break
        estimate = new_estimate
    else:
        L = float(np.linalg.eigvalsh(gram)[-1])
    return L, 1.0 / L


def complex_soft_threshold(Z: np.ndarray, tau: float) -> np.ndarray:
    """Shrink complex magnitudes by `tau`, keeping phase.

    Each entry becomes ``(1 - tau / max(|z|, tau)) * z``; entries with
    ``|z| <= tau`` are exactly zero.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    Z = np.asarray(Z)
    if tau == 0:
        return Z.copy()
    mag = np.abs(Z)
    return (1.0 - tau / np.maximum(mag, tau)) * Z


def evaluate_cost(S, D, C, lam: float) -> CostBreakdown:
    S, D, C = np.asarray(S), np.asarray(D), np.asarray(C)
    if D.shape[0] != S.shape[0] or D.shape[1] != C.shape[0] or C.shape[1] != S.shape[1]:
        raise ValueError(f"shape mismatch: S{S.shape}, D{D.shape}, C{C.shape}")
    R = S - D @ C
    return CostBreakdown(
        j_rec=float(np.vdot(R, R).real), j_spa=float(np.abs(C).sum()), lam=float(lam)
    )


def sparse_code(
    S,
    D,
    lam: float,
    C0=None,
    n_iter: int = 1000,
    *,
    tol: float | None = EARLY_EXIT_TOL,
    lipschitz: float | None = None,
    return_state: bool = False,
):
    """Estimate sparse codes of `S` over dictionary `D`.

    Runs `n_iter` accelerated proximal gradient iterations starting from
    `C0` (zeros if omitted), with extrapolation weight ``i / (i + 1)`` and
    the Lipschitz step ``1 / L``.

    Parameters
    ----------
    S : (F, T) complex array
    D : (F, N) complex array
    lam : float
        Weight of the l1 penalty.
    C0 : (N, T) complex array, optional
        Warm start. Also used as the code before the first iteration.
    n_iter : int
        Number of iterations.
    tol : float or None
        Stop early once the relative code change falls below `tol`.
        ``None`` or 0 runs all `n_iter` iterations.
    lipschitz : float, optional
        Precomputed largest eigenvalue of ``D^H D``.
    return_state : bool
        Also return a `SolverState`.

    Returns
    -------
    C : (N, T) complex array
    """
    S = np.asarray(S, dtype=np.complex128)
    D = np.asarray(D, dtype=np.complex128)
    if S.ndim != 2 or D.ndim != 2 or S.shape[0] != D.shape[0]:
        raise ValueError(f"shape mismatch: S{S.shape}, D{D.shape}")
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    n_atoms, n_frames = D.shape[1], S.shape[1]
    if C0 is None:
        C0 = np.zeros((n_atoms, n_frames), dtype=np.complex128)
    else:
        C0 = np.array(C0, dtype=np.complex128)
        if C0.shape != (n_atoms, n_frames):
            raise ValueError(f"initial code has shape {C0.shape}, expected {(n_atoms, n_frames)}")
    _check_finite("S", S)
    _check_finite("D", D)
    _check_finite("C0", C0)

    L = lipschitz_step(D)[0] if lipschitz is None else float(lipschitz)
    mu = 1.0 / L
    state = SolverState(lipschitz=L, step=mu)
    # data term has no 1/2 factor: its gradient is 2 D^H (D C - S), with
    # Lipschitz constant 2L, hence the halved threshold
    tau = 0.5 * mu * lam

    # ||S - DG||^2 gradient through the Gram form when it is cheaper
    if n_atoms < 2 * D.shape[0]:
        gram = D.conj().T @ D
        corr = D.conj().T @ S

        def grad(G):
            return gram @ G - corr
    else:
        Dh = D.conj().T

        def grad(G):
            return Dh @ (D @ G - S)

    prev = C0
    cur = C0
    for i in range(1, n_iter + 1):
        w = i / (i + 1.0)
        gamma = cur + w * (cur - prev)
        Z = gamma - mu * grad(gamma)
        prev, cur = cur, complex_soft_threshold(Z, tau)
        state.iterations = i
        if tol:
            change = np.linalg.norm(cur - prev)
            if change / max(np.linalg.norm(cur), _TINY) < tol:
                state.converged = True
                break

    if return_state:
        return cur, state
    return cur
