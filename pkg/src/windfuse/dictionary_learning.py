"""Alternating dictionary training: sparse coding step + closed-form dictionary update."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .sparse_coding import sparse_code
from .stft import as_matrix

__all__ = [
    "DictKind",
    "Dictionary",
    "TrainConfig",
    "init_dictionary",
    "dictionary_update",
    "normalize_columns",
    "train_dictionary",
]

log = logging.getLogger(__name__)

RIDGE_REL = 1e-10
# reciprocal condition number below which the ridge on C C^H is engaged
RCOND_LIMIT = 1e-12


class DictKind(enum.IntEnum):
    SPEECH_ACOUSTIC = 0
    NOISE_ACOUSTIC = 1
    NOISE_CONTACT = 2


@dataclass
class Dictionary:
    """Complex dictionary with unit-norm columns (atoms)."""

    atoms: np.ndarray
    kind: DictKind = DictKind.SPEECH_ACOUSTIC

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.complex128)
        if self.atoms.ndim != 2:
            raise ValueError("dictionary atoms must be a 2-D matrix")
        self.kind = DictKind(self.kind)

    @property
    def num_bins(self) -> int:
        return self.atoms.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass
class TrainConfig:
    num_atoms: int = 1000
    lam: float | None = None  # None -> num_bins ** -0.5
    n_outer: int = 25
    n_inner: int = 1000
    seed: int = 0
    tol: float | None = 1e-9
    reinit_dead_atoms: bool = True

    def __post_init__(self):
        for name in ("num_atoms", "n_outer", "n_inner"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("lam must be positive")

    def sparsity(self, num_bins: int) -> float:
        return num_bins**-0.5 if self.lam is None else float(self.lam)


def normalize_columns(D: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot normalize an all-zero column")
    return D / norms[None, :]


def _draw_frames(S: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` nonzero frames of S uniformly at random, unit-normalized.

    Sampling is without replacement unless there are fewer nonzero frames
    than requested.
    """
    usable = np.flatnonzero(np.linalg.norm(S, axis=0) > 0)
    if usable.size == 0:
        raise ValueError("all training frames are zero")
    picks = rng.choice(usable, size=count, replace=usable.size < count)
    return normalize_columns(S[:, picks])


def init_dictionary(S, num_atoms: int, seed: int = 0, kind=DictKind.SPEECH_ACOUSTIC) -> Dictionary:
    """Dictionary of randomly chosen, unit-normalized STFT frames of `S`.

    All-zero frames are never chosen; frames repeat only when there are
    fewer nonzero frames than atoms. Deterministic for a given seed.
    """
    S = as_matrix(S)
    if S.ndim != 2 or S.shape[1] < 1:
        raise ValueError("need at least one frame")
    if num_atoms < 1:
        raise ValueError("num_atoms must be at least 1")
    rng = np.random.default_rng(seed)
    return Dictionary(_draw_frames(S, num_atoms, rng), kind)


def dictionary_update(S, C) -> np.ndarray:
    """Least-squares dictionary ``S C^H (C C^H)^-1`` for fixed codes, not normalized.

    A ridge of ``1e-10 * trace(C C^H) / N`` is added when ``C C^H`` is
    numerically singular (e.g. unused atoms).
    """
    S = as_matrix(S)
    C = np.asarray(C, dtype=np.complex128)
    if C.shape[1] != S.shape[1]:
        raise ValueError(f"shape mismatch: S{S.shape}, C{C.shape}")
    CCh = C @ C.conj().T
    tr = float(np.trace(CCh).real)
    if tr == 0.0:
        raise ValueError("all-zero code: dictionary update undefined")
    SCh = S @ C.conj().T
    eig = np.linalg.eigvalsh(CCh)
    if eig[0] <= RCOND_LIMIT * eig[-1]:
        CCh = CCh + (RIDGE_REL * tr / C.shape[0]) * np.eye(C.shape[0])
    # D = SCh CCh^-1  <=>  CCh^H D^H = SCh^H, CCh Hermitian
    return np.linalg.solve(CCh, SCh.conj().T).conj().T


def train_dictionary(S, cfg: TrainConfig | None = None, kind=DictKind.SPEECH_ACOUSTIC,
                     callback=None) -> Dictionary:
    """Train a dictionary on spectrogram `S` by alternating minimization.

    Each outer iteration sparse-codes `S` (warm-started from the previous
    code), solves the dictionary in closed form and renormalizes its
    columns. Atoms left unused by the sparse coding step are redrawn from
    random training frames.

    `callback(i, D, C)` is invoked after every outer iteration if given.
    """
    cfg = cfg or TrainConfig()
    S = as_matrix(S)
    if not np.any(S):
        raise ValueError("training spectrogram is all zeros")
    lam = cfg.sparsity(S.shape[0])
    rng = np.random.default_rng(cfg.seed)
    D = _draw_frames(S, cfg.num_atoms, rng)
    C = np.zeros((cfg.num_atoms, S.shape[1]), dtype=np.complex128)
    for i in range(1, cfg.n_outer + 1):
        C = sparse_code(S, D, lam, C, cfg.n_inner, tol=cfg.tol)
        dead = np.flatnonzero(~np.any(C, axis=1))
        if dead.size == cfg.num_atoms:
            raise ValueError("sparse coding returned an all-zero code; lam too large")
        D_new = dictionary_update(S, C)
        if dead.size:
            # unused atoms get no least-squares information
            if cfg.reinit_dead_atoms:
                log.debug("iteration %d: redrawing %d unused atoms", i, dead.size)
                D_new[:, dead] = _draw_frames(S, dead.size, rng)
            else:
                D_new[:, dead] = D[:, dead]
        D = normalize_columns(D_new)
        if callback is not None:
            callback(i, D, C)
    return Dictionary(D, kind)
