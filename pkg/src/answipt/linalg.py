"""Complex linear algebra helpers and the Hermitian -> real symmetric embedding."""

from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12


def as_hermitian(H, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Return ``(H + H^H) / 2`` after checking ``H`` is Hermitian to ``rtol``.

    The residual is measured relative to the Frobenius norm of ``H``.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(np.linalg.norm(H), 1.0)
    resid = np.linalg.norm(H - H.conj().T)
    if resid > rtol * scale:
        raise ValueError(f"matrix is not Hermitian (residual {resid:.3e})")
    return 0.5 * (H + H.conj().T)


def hermitian_embed(H) -> np.ndarray:
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``.

    The embedding is PSD iff ``H`` is, every eigenvalue of ``H`` appears twice
    and the trace doubles.
    """
    H = as_hermitian(H)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def hermitian_unembed(S) -> np.ndarray:
    """Inverse of :func:`hermitian_embed` (projects onto embedded structure)."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0] // 2
    A, B = S[:n, :n], S[:n, n:]
    C, D = S[n:, :n], S[n:, n:]
    return 0.5 * (A + D) + 0.5j * (C - B)


def embedded_dual(Z) -> np.ndarray:
    """Complex matrix ``Zc`` with ``<Z, embed(X)> = Re tr(Zc X)`` for Hermitian X.

    Used to read complex dual multipliers off embedded real PSD blocks.
    """
    return 2.0 * hermitian_unembed(Z)


def schur_2x2_psd(a: float, b: float, c: float) -> bool:
    """True iff ``[[a, b], [b, c]]`` is positive semidefinite."""
    return a >= 0 and c >= 0 and a * c >= b * b


def eigvalsh(H) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian (or real symmetric) matrix."""
    H = np.asarray(H)
    if np.iscomplexobj(H):
        H = as_hermitian(H)
    else:
        H = 0.5 * (H + H.T)
    return np.linalg.eigvalsh(H)


def min_eigenvalue(H) -> float:
    return float(eigvalsh(H)[0])


def rank_eps(H, tol: float = 1e-6) -> int:
    """Number of eigenvalues above ``tol * lambda_max`` (0 if ``lambda_max <= 0``)."""
    w = eigvalsh(H)
    lmax = w[-1]
    if lmax <= 0:
        return 0
    return int(np.count_nonzero(w > tol * lmax))


def psd_sqrt(H, clip: float = 1e-12) -> np.ndarray:
    """Hermitian square root of a PSD matrix.

    Eigenvalues in ``[-clip * max(1, lambda_max), 0)`` are clipped to zero;
    anything more negative is rejected.
    """
    H = as_hermitian(H)
    w, U = np.linalg.eigh(H)
    floor = -clip * max(1.0, abs(w[-1]) if w.size else 1.0)
    if w.size and w[0] < floor:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.conj().T


def dominant_eigpair(H) -> tuple[float, np.ndarray]:
    w, U = np.linalg.eigh(as_hermitian(H))
    return float(w[-1]), U[:, -1]


def fix_phase(q: np.ndarray) -> np.ndarray:
    """Rotate ``q`` so its largest-magnitude entry is real and non-negative."""
    q = np.asarray(q, dtype=complex)
    if not q.size:
        return q
    i = int(np.argmax(np.abs(q)))
    if abs(q[i]) == 0:
        return q
    return q * np.exp(-1j * np.angle(q[i]))


def outer(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return np.outer(h, h.conj())


def quad(h: np.ndarray, X: np.ndarray) -> float:
    """Real part of ``h^H X h``."""
    h = np.asarray(h, dtype=complex)
    return float(np.real(h.conj() @ X @ h))
