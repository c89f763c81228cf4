"""Two-microphone dictionary enhancer with alternating RTF estimation.

The acoustic channel ``Y_A`` and the contact channel ``Y_B`` are modelled as::

    Y_A = D_AX C_X + D_AN C_AN
    Y_B = H D_AX C_X + D_BN C_BN

with a diagonal relative transfer function ``H``. Codes and ``H`` are
estimated by alternating sparse coding of the stacked (composite) problem
with a closed-form per-bin update of ``H``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .sparse_coding import CostBreakdown, evaluate_cost, lipschitz_step, sparse_code
from .stft import as_matrix

__all__ = [
    "CompositeProblem",
    "EnhanceReport",
    "build_composite",
    "estimate_rtf_diagonal",
    "enhance_fused",
    "enhance_acoustic_only",
    "enhance_contact_only",
]

log = logging.getLogger(__name__)

ETA_DEFAULT = 0.4
N_OUTER_DEFAULT = 5
N_INNER_DEFAULT = 1000
RTF_GUARD_REL = 1e-12


def _atoms(D) -> np.ndarray:
    return np.asarray(getattr(D, "atoms", D), dtype=np.complex128)


def default_lambda(num_bins: int) -> float:
    return num_bins**-0.5


@dataclass
class CompositeProblem:
    y_tilde: np.ndarray
    d_tilde: np.ndarray
    block_sizes: tuple[int, int, int]
    eta: float

    @property
    def blocks(self) -> tuple[slice, slice, slice]:
        """Row slices of the speech, acoustic-noise and contact-noise codes."""
        nx, nan, nbn = self.block_sizes
        return slice(0, nx), slice(nx, nx + nan), slice(nx + nan, nx + nan + nbn)


@dataclass
class EnhanceReport:
    x_hat: np.ndarray
    rtf: np.ndarray
    history: list[CostBreakdown] = field(default_factory=list)
    sparsity: dict[str, float] = field(default_factory=dict)
    code: np.ndarray | None = None


def _check_eta(eta: float):
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")


def build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta: float) -> CompositeProblem:
    """Stack both channels and dictionaries into one weighted problem.

    ``y_tilde = [sqrt(eta) Y_A; sqrt(1-eta) Y_B]`` and::

        d_tilde = [[sqrt(eta) D_AX,         sqrt(eta) D_AN, 0              ],
                   [sqrt(1-eta) H D_AX,     0,              sqrt(1-eta) D_BN]]
    """
    _check_eta(eta)
    Y_A, Y_B = as_matrix(Y_A), as_matrix(Y_B)
    D_AX, D_AN, D_BN = _atoms(D_AX), _atoms(D_AN), _atoms(D_BN)
    H = np.asarray(H, dtype=np.complex128).reshape(-1)
    F = Y_A.shape[0]
    if Y_B.shape != Y_A.shape:
        raise ValueError(f"channel shapes differ: {Y_A.shape} vs {Y_B.shape}")
    for name, D in (("D_AX", D_AX), ("D_AN", D_AN), ("D_BN", D_BN)):
        if D.ndim != 2 or D.shape[0] != F:
            raise ValueError(f"{name} has shape {D.shape}, expected {F} rows")
    if H.shape != (F,):
        raise ValueError(f"RTF has length {H.shape[0]}, expected {F}")

    a, b = np.sqrt(eta), np.sqrt(1.0 - eta)
    nx, nan, nbn = D_AX.shape[1], D_AN.shape[1], D_BN.shape[1]
    d_tilde = np.zeros((2 * F, nx + nan + nbn), dtype=np.complex128)
    d_tilde[:F, :nx] = a * D_AX
    d_tilde[:F, nx : nx + nan] = a * D_AN
    d_tilde[F:, :nx] = b * (H[:, None] * D_AX)
    d_tilde[F:, nx + nan :] = b * D_BN
    y_tilde = np.vstack([a * Y_A, b * Y_B])
    return CompositeProblem(y_tilde, d_tilde, (nx, nan, nbn), float(eta))


def estimate_rtf_diagonal(Y_B, N_B_hat, X_A_hat, previous=None) -> np.ndarray:
    """Per-bin least-squares RTF ``sum_t (Y_B - N_B) conj(X_A) / sum_t |X_A|^2``.

    Bins whose speech energy is below ``1e-12`` times the largest bin
    energy keep the value from `previous` (ones if not given).
    """
    Y_B, N_B_hat, X_A_hat = as_matrix(Y_B), as_matrix(N_B_hat), as_matrix(X_A_hat)
    if not (Y_B.shape == N_B_hat.shape == X_A_hat.shape):
        raise ValueError(
            f"shape mismatch: Y_B{Y_B.shape}, N_B{N_B_hat.shape}, X_A{X_A_hat.shape}"
        )
    F = Y_B.shape[0]
    if previous is None:
        previous = np.ones(F, dtype=np.complex128)
    previous = np.asarray(previous, dtype=np.complex128).reshape(-1)
    if previous.shape != (F,):
        raise ValueError("previous RTF has wrong length")
    energy = np.sum(np.abs(X_A_hat) ** 2, axis=1)
    peak = energy.max()
    if peak == 0.0:
        raise ValueError("speech estimate is identically zero; RTF not estimable")
    cross = np.sum((Y_B - N_B_hat) * X_A_hat.conj(), axis=1)
    ok = energy >= RTF_GUARD_REL * peak
    h = previous.copy()
    h[ok] = cross[ok] / energy[ok]
    return h


def _block_sparsity(code: np.ndarray, blocks: dict[str, slice]) -> dict[str, float]:
    return {
        name: float(np.mean(code[sl] == 0)) if code[sl].size else 1.0
        for name, sl in blocks.items()
    }


def _validate_counts(n_outer, n_inner):
    if n_outer < 1 or n_inner < 1:
        raise ValueError("iteration counts must be at least 1")


def enhance_fused(
    Y_A,
    Y_B,
    D_AX,
    D_AN,
    D_BN,
    eta: float = ETA_DEFAULT,
    lam: float | None = None,
    n_outer: int = N_OUTER_DEFAULT,
    n_inner: int = N_INNER_DEFAULT,
    H0=None,
    *,
    update_rtf: bool = True,
    tol: float | None = 1e-9,
) -> EnhanceReport:
    """Estimate the acoustic speech spectrogram from both channels.

    Alternates `n_outer` times between (i) rebuilding the composite
    dictionary with the current RTF and warm-started sparse coding of the
    composite code, and (ii) the closed-form diagonal RTF update from the
    speech and contact-noise estimates.

    `lam` defaults to ``F ** -0.5``; `H0` defaults to all ones.
    """
    _check_eta(eta)
    _validate_counts(n_outer, n_inner)
    Y_A, Y_B = as_matrix(Y_A), as_matrix(Y_B)
    D_AX, D_BN = _atoms(D_AX), _atoms(D_BN)
    F = Y_A.shape[0]
    lam = default_lambda(F) if lam is None else float(lam)
    H = np.ones(F, dtype=np.complex128) if H0 is None else np.array(H0, dtype=np.complex128)

    problem = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta)
    sx, san, sbn = problem.blocks
    code = np.zeros((problem.d_tilde.shape[1], Y_A.shape[1]), dtype=np.complex128)
    history = []
    x_hat = np.zeros_like(Y_A)
    for i in range(1, n_outer + 1):
        if i > 1:
            problem = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta)
        L = lipschitz_step(problem.d_tilde)[0]
        code = sparse_code(problem.y_tilde, problem.d_tilde, lam, code, n_inner, tol=tol,
                           lipschitz=L)
        x_hat = D_AX @ code[sx]
        if update_rtf and eta < 1.0 and np.any(x_hat):
            n_b_hat = D_BN @ code[sbn]
            H = estimate_rtf_diagonal(Y_B, n_b_hat, x_hat, previous=H)
            problem = build_composite(Y_A, Y_B, D_AX, D_AN, D_BN, H, eta)
        cost = evaluate_cost(problem.y_tilde, problem.d_tilde, code, lam)
        log.debug("fused iteration %d: cost %.6g", i, cost.total)
        history.append(cost)

    return EnhanceReport(
        x_hat=x_hat,
        rtf=H,
        history=history,
        sparsity=_block_sparsity(
            code, {"speech": sx, "noise_acoustic": san, "noise_contact": sbn}
        ),
        code=code,
    )


def enhance_acoustic_only(
    Y_A,
    D_AX,
    D_AN,
    lam: float | None = None,
    n_inner: int = N_INNER_DEFAULT,
    *,
    tol: float | None = 1e-9,
    return_report: bool = False,
):
    """Single-channel variant: one sparse coding solve over ``[D_AX, D_AN]``."""
    _validate_counts(1, n_inner)
    Y_A = as_matrix(Y_A)
    D_AX, D_AN = _atoms(D_AX), _atoms(D_AN)
    if D_AX.shape[0] != Y_A.shape[0] or D_AN.shape[0] != Y_A.shape[0]:
        raise ValueError("dictionary rows must match the number of bins")
    lam = default_lambda(Y_A.shape[0]) if lam is None else float(lam)
    D = np.hstack([D_AX, D_AN])
    code = sparse_code(Y_A, D, lam, None, n_inner, tol=tol)
    nx = D_AX.shape[1]
    x_hat = D_AX @ code[:nx]
    if not return_report:
        return x_hat
    return EnhanceReport(
        x_hat=x_hat,
        rtf=np.ones(Y_A.shape[0], dtype=np.complex128),
        history=[evaluate_cost(Y_A, D, code, lam)],
        sparsity=_block_sparsity(code, {"speech": slice(0, nx), "noise_acoustic": slice(nx, None)}),
        code=code,
    )


def enhance_contact_only(
    Y_B,
    D_AX,
    D_BN,
    lam: float | None = None,
    n_outer: int = N_OUTER_DEFAULT,
    n_inner: int = N_INNER_DEFAULT,
    H0=None,
    *,
    update_rtf: bool = True,
    tol: float | None = 1e-9,
) -> EnhanceReport:
    """Contact-channel variant over ``[H D_AX, D_BN]`` with RTF re-estimation.

    Returns the speech estimate at the acoustic microphone, ``D_AX C_X``
    (not transformed by the RTF).
    """
    _validate_counts(n_outer, n_inner)
    Y_B = as_matrix(Y_B)
    D_AX, D_BN = _atoms(D_AX), _atoms(D_BN)
    F = Y_B.shape[0]
    if D_AX.shape[0] != F or D_BN.shape[0] != F:
        raise ValueError("dictionary rows must match the number of bins")
    lam = default_lambda(F) if lam is None else float(lam)
    H = np.ones(F, dtype=np.complex128) if H0 is None else np.array(H0, dtype=np.complex128)
    if H.shape != (F,):
        raise ValueError(f"RTF has length {H.shape[0]}, expected {F}")
    nx = D_AX.shape[1]
    code = np.zeros((nx + D_BN.shape[1], Y_B.shape[1]), dtype=np.complex128)
    history = []
    x_hat = np.zeros_like(Y_B)
    for _ in range(n_outer):
        D = np.hstack([H[:, None] * D_AX, D_BN])
        code = sparse_code(Y_B, D, lam, code, n_inner, tol=tol)
        x_hat = D_AX @ code[:nx]
        if update_rtf and np.any(x_hat):
            H = estimate_rtf_diagonal(Y_B, D_BN @ code[nx:], x_hat, previous=H)
            D = np.hstack([H[:, None] * D_AX, D_BN])
        history.append(evaluate_cost(Y_B, D, code, lam))
    return EnhanceReport(
        x_hat=x_hat,
        rtf=H,
        history=history,
        sparsity=_block_sparsity(code, {"speech": slice(0, nx), "noise_contact": slice(nx, None)}),
        code=code,
    )
