"""Classical two-channel components: energy VAD, noise covariance,
covariance-whitening RTF estimate, MVDR beamformer and color correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stft import as_matrix

__all__ = [
    "SpatialCovariance",
    "energy_vad",
    "estimate_noise_covariance",
    "spatial_covariance",
    "cw_rtf",
    "mvdr_weights",
    "mvdr_enhance",
    "color_correction",
]

VAD_NOISE_FRACTION = 0.4
LOADING_REL = 1e-10
INVERSE_GUARD_REL = 1e-6


@dataclass
class SpatialCovariance:
    """Per-bin 2x2 Hermitian covariance matrices, shape (F, 2, 2)."""

    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.complex128)
        if self.matrices.ndim != 3 or self.matrices.shape[1:] != (2, 2):
            raise ValueError("expected an (F, 2, 2) array of covariance matrices")

    @property
    def num_bins(self) -> int:
        return self.matrices.shape[0]

    @classmethod
    def identity(cls, num_bins: int, scale: float = 1.0) -> "SpatialCovariance":
        return cls(np.broadcast_to(scale * np.eye(2), (num_bins, 2, 2)).copy())


def energy_vad(Y, noise_fraction: float = VAD_NOISE_FRACTION) -> np.ndarray:
    """Boolean speech-presence flag per frame of one channel's spectrogram.

    The ``floor(noise_fraction * T)`` frames with the lowest log-energy
    (ties broken by frame index) are flagged as noise-only.
    """
    Y = as_matrix(Y)
    T = Y.shape[1]
    if T < 5:
        raise ValueError(f"energy VAD needs at least 5 frames, got {T}")
    log_energy = np.log10(np.sum(np.abs(Y) ** 2, axis=0) + 1e-300)
    order = np.argsort(log_energy, kind="stable")
    flags = np.ones(T, dtype=bool)
    flags[order[: int(np.floor(noise_fraction * T))]] = False
    return flags


def spatial_covariance(Y_A, Y_B, frames, loading: float = LOADING_REL) -> SpatialCovariance:
    """Sample covariance of ``[Y_A; Y_B]`` over the selected frames.

    Symmetrized to exact Hermitian and diagonally loaded with
    ``loading * trace``.
    """
    Y_A, Y_B = as_matrix(Y_A), as_matrix(Y_B)
    if Y_A.shape != Y_B.shape:
        raise ValueError(f"channel shapes differ: {Y_A.shape} vs {Y_B.shape}")
    frames = np.asarray(frames, dtype=bool)
    if frames.shape != (Y_A.shape[1],):
        raise ValueError("frame mask length does not match the number of frames")
    Y = np.stack([Y_A[:, frames], Y_B[:, frames]], axis=1)  # F x 2 x T'
    phi = np.einsum("fit,fjt->fij", Y, Y.conj()) / max(int(frames.sum()), 1)
    phi = 0.5 * (phi + np.conj(np.swapaxes(phi, 1, 2)))
    trace = np.real(phi[:, 0, 0] + phi[:, 1, 1])
    phi[:, 0, 0] += loading * trace
    phi[:, 1, 1] += loading * trace
    return SpatialCovariance(phi)


def estimate_noise_covariance(Y_A, Y_B, mask) -> SpatialCovariance:
    mask = np.asarray(mask, dtype=bool)
    if np.count_nonzero(~mask) < 2:
        raise ValueError("need at least two noise-only frames")
    return spatial_covariance(Y_A, Y_B, ~mask)


def _eigh_2x2(phi: np.ndarray):
    """Closed-form eigendecomposition of Hermitian 2x2 matrices, shape (F, 2, 2).

    Returns eigenvalues (F, 2) in descending order and unit eigenvectors
    (F, 2, 2) stored in columns.
    """
    a = np.real(phi[:, 0, 0])
    d = np.real(phi[:, 1, 1])
    b = phi[:, 0, 1]
    half_gap = 0.5 * (a - d)
    radius = np.hypot(half_gap, np.abs(b))
    mean = 0.5 * (a + d)
    vals = np.stack([mean + radius, mean - radius], axis=1)

    # principal vector: [b, lmax - a] or [lmax - d, conj(b)], whichever is better scaled
    lmax = vals[:, 0]
    v1 = np.stack([b, (lmax - a).astype(np.complex128)], axis=1)
    v2 = np.stack([(lmax - d).astype(np.complex128), np.conj(b)], axis=1)
    n1 = np.linalg.norm(v1, axis=1)
    n2 = np.linalg.norm(v2, axis=1)
    use2 = n2 > n1
    v = np.where(use2[:, None], v2, v1)
    nv = np.maximum(n1, n2)
    diagonal = nv == 0  # b == 0 and a == d: any basis works
    v[diagonal] = np.array([1.0, 0.0])
    nv[diagonal] = 1.0
    v = v / nv[:, None]
    # second eigenvector is orthogonal to the first
    w = np.stack([-np.conj(v[:, 1]), np.conj(v[:, 0])], axis=1)
    vecs = np.stack([v, w], axis=2)
    return vals, vecs


def _sqrt_and_inv_sqrt(phi: np.ndarray):
    vals, vecs = _eigh_2x2(phi)
    if np.any(vals[:, 1] <= 0):
        raise ValueError("noise covariance is singular beyond diagonal loading")
    vh = np.conj(np.swapaxes(vecs, 1, 2))
    sq = np.einsum("fij,fj,fjk->fik", vecs, np.sqrt(vals), vh)
    isq = np.einsum("fij,fj,fjk->fik", vecs, 1.0 / np.sqrt(vals), vh)
    return sq, isq


def cw_rtf(Y_A, Y_B, mask) -> np.ndarray:
    """Covariance-whitening RTF estimate, acoustic channel as reference.

    Uses the speech-present frames of `mask` for the noisy covariance and
    the remaining frames for the noise covariance. The principal
    eigenvector of the whitened noisy covariance is de-whitened and
    normalized to its first (acoustic) entry.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any() or mask.all():
        raise ValueError("covariance whitening needs both speech and noise frames")
    phi_n = estimate_noise_covariance(Y_A, Y_B, mask).matrices
    phi_y = spatial_covariance(Y_A, Y_B, mask).matrices
    sq, isq = _sqrt_and_inv_sqrt(phi_n)
    whitened = isq @ phi_y @ isq
    whitened = 0.5 * (whitened + np.conj(np.swapaxes(whitened, 1, 2)))
    _, vecs = _eigh_2x2(whitened)
    g = np.einsum("fij,fj->fi", sq, vecs[:, :, 0])
    if np.any(g[:, 0] == 0):
        raise ValueError("degenerate reference-channel component in CW estimate")
    return g[:, 1] / g[:, 0]


def mvdr_weights(phi_n, H0) -> np.ndarray:
    """MVDR weights ``Phi^-1 h / (h^H Phi^-1 h)`` with ``h = [1, H0]``; shape (F, 2)."""
    phi = phi_n.matrices if isinstance(phi_n, SpatialCovariance) else np.asarray(phi_n)
    H0 = np.asarray(H0, dtype=np.complex128).reshape(-1)
    if H0.shape[0] != phi.shape[0]:
        raise ValueError("RTF length does not match the covariance")
    det = np.real(phi[:, 0, 0] * phi[:, 1, 1] - phi[:, 0, 1] * phi[:, 1, 0])
    scale = np.real(phi[:, 0, 0] + phi[:, 1, 1]) ** 2
    if np.any(det <= 1e-14 * scale) or np.any(scale == 0):
        raise ValueError("noise covariance is singular")
    h = np.stack([np.ones_like(H0), H0], axis=1)
    num = np.linalg.solve(phi, h[:, :, None])[:, :, 0]
    den = np.einsum("fi,fi->f", h.conj(), num)
    return num / den[:, None]


def mvdr_enhance(Y_A, Y_B, phi_n, H0) -> np.ndarray:
    """Apply the stationary MVDR beamformer, ``w^H [Y_A; Y_B]`` per bin."""
    Y_A, Y_B = as_matrix(Y_A), as_matrix(Y_B)
    if Y_A.shape != Y_B.shape:
        raise ValueError(f"channel shapes differ: {Y_A.shape} vs {Y_B.shape}")
    w = mvdr_weights(phi_n, H0)
    return np.conj(w[:, 0])[:, None] * Y_A + np.conj(w[:, 1])[:, None] * Y_B


def color_correction(Y_B, H0) -> np.ndarray:
    """Equalize the contact channel by the inverse RTF.

    Bins with ``|H0| < 1e-6 * max|H0|`` are set to zero.
    """
    Y_B = as_matrix(Y_B)
    H0 = np.asarray(H0, dtype=np.complex128).reshape(-1)
    if H0.shape[0] != Y_B.shape[0]:
        raise ValueError("RTF length does not match the number of bins")
    mag = np.abs(H0)
    if mag.max() == 0:
        raise ValueError("RTF is identically zero")
    ok = mag >= INVERSE_GUARD_REL * mag.max()
    out = np.zeros_like(Y_B)
    out[ok] = Y_B[ok] / H0[ok, None]
    return out
