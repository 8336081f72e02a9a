"""Classical structured low-rank recovery on small signals (numpy).

This is the iteratively reweighted least-squares scheme that the low-rank
subnetwork unrolls. It works on 1D or 2D complex arrays of modest size and is
used to validate the lifting/commutation algebra, not for image-scale work.

Measurement model here mirrors :mod:`mcunet.mri_ops` but in plain numpy and
for any number of spatial axes: ``csm`` has shape ``(C, *shape)``, ``mask``
has ``shape``, and FFTs are centred and orthonormal over every spatial axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConvergenceError, ValidationError


def _window(x: np.ndarray, window) -> tuple[int, ...]:
    w = (window,) if np.isscalar(window) else tuple(window)
    if len(w) != x.ndim:
        raise ValidationError(f"window {w} does not match signal rank {x.ndim}")
    if any(wi < 1 or wi > n for wi, n in zip(w, x.shape)):
        raise ValidationError(f"window {w} does not fit inside signal of shape {x.shape}")
    return tuple(int(v) for v in w)


def hankel_lift(x: np.ndarray, window) -> np.ndarray:
    """Block-Hankel patch matrix: one row per patch position, patches row-major."""
    x = np.asarray(x)
    w = _window(x, window)
    patches = sliding_window_view(x, w)
    return patches.reshape(-1, int(np.prod(w))).copy()


def _patch_index(shape: tuple[int, ...], w: tuple[int, ...]) -> np.ndarray:
    """Integer matrix ``idx`` with ``hankel_lift(x)[p, t] == x.ravel()[idx[p, t]]``."""
    flat = np.arange(int(np.prod(shape))).reshape(shape)
    return hankel_lift(flat, w)


def hankel_adjoint(T: np.ndarray, shape, window) -> np.ndarray:
    """Adjoint of :func:`hankel_lift`: scatter-add patch entries back onto the grid."""
    shape = tuple(shape)
    w = _window(np.empty(shape), window)
    idx = _patch_index(shape, w)
    out = np.zeros(int(np.prod(shape)), dtype=np.result_type(T.dtype, np.complex128))
    np.add.at(out, idx.ravel(), T.ravel())
    return out.reshape(shape)


def q_update(x: np.ndarray, window, eps_q: float) -> np.ndarray:
    """Reweighting matrix ``[(T^H T) + eps I]^(-1/4)`` with ``T = hankel_lift(x)``."""
    if not eps_q > 0:
        raise ValidationError(f"eps_q must be positive, got {eps_q}")
    T = hankel_lift(x, window)
    G = T.conj().T @ T
    G = 0.5 * (G + G.conj().T)
    evals, evecs = np.linalg.eigh(G + eps_q * np.eye(G.shape[0]))
    return (evecs * evals ** -0.25) @ evecs.conj().T


def build_J(Q: np.ndarray, shape, window) -> np.ndarray:
    """Stack of matrices ``D(q_j)`` with ``D(q_j) x = hankel_lift(x) q_j``.

    Each ``D(q_j)`` has one row per patch position and places the entries of
    column ``q_j`` at the positions that patch covers.
    """
    shape = tuple(shape)
    w = _window(np.empty(shape), window)
    idx = _patch_index(shape, w)
    n_patch, n_tap = idx.shape
    if Q.shape[0] != n_tap:
        raise ValidationError(f"Q has {Q.shape[0]} rows, window has {n_tap} taps")
    N = int(np.prod(shape))
    blocks = []
    rows = np.repeat(np.arange(n_patch), n_tap)
    for j in range(Q.shape[1]):
        D = np.zeros((n_patch, N), dtype=np.result_type(Q.dtype, np.complex128))
        np.add.at(D, (rows, idx.ravel()), np.tile(Q[:, j], n_patch))
        blocks.append(D)
    return np.vstack(blocks)


def commutation_check(x: np.ndarray, Q: np.ndarray, window) -> tuple[float, float]:
    """Return ``(||T(x) Q||_F, ||J(Q) x||_2)``; the two agree for every ``x, Q``."""
    x = np.asarray(x)
    lhs = np.linalg.norm(hankel_lift(x, window) @ Q)
    rhs = np.linalg.norm(build_J(Q, x.shape, window) @ x.ravel())
    return float(lhs), float(rhs)


def gram_apply(x: np.ndarray, Q: np.ndarray, window) -> np.ndarray:
    """``J(Q)^H J(Q) x`` computed through the lift, without forming ``J``."""
    T = hankel_lift(x, window)
    return hankel_adjoint(T @ (Q @ Q.conj().T), x.shape, window)


def _axes(ndim: int) -> tuple[int, ...]:
    return tuple(range(-ndim, 0))


def fftnc(x: np.ndarray, ndim: int) -> np.ndarray:
    ax = _axes(ndim)
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(x, axes=ax), axes=ax, norm="ortho"), axes=ax)


def ifftnc(x: np.ndarray, ndim: int) -> np.ndarray:
    ax = _axes(ndim)
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(x, axes=ax), axes=ax, norm="ortho"), axes=ax)


def forward_op(x: np.ndarray, csm: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return mask * fftnc(csm * x, x.ndim)


def adjoint_op(y: np.ndarray, csm: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return (csm.conj() * ifftnc(mask * y, mask.ndim)).sum(axis=0)


def irls_objective(x, y, csm, mask, lambda_2: float, window, eps_q: float) -> float:
    """Smoothed objective ``||Ax - y||^2 + 2 lambda sum_i sqrt(s_i^2 + eps)``.

    ``s_i`` are the singular values of the lifted matrix. The reweighted
    gradient step majorizes this function, so it is non-increasing along the
    iterates whenever the step size is below the inverse Lipschitz constant of
    the surrogate.
    """
    r = forward_op(x, csm, mask) - y
    s = np.linalg.svd(hankel_lift(x, window), compute_uv=False)
    n = hankel_lift(x, window).shape[1]
    s = np.concatenate([s, np.zeros(n - s.size)]) if s.size < n else s
    return float(np.vdot(r, r).real + 2 * lambda_2 * np.sqrt(s**2 + eps_q).sum())


@dataclass
class IRLSResult:
    x: np.ndarray
    objective: list[float] = field(default_factory=list)


def irls_iterate(
    x: np.ndarray,
    y: np.ndarray,
    csm: np.ndarray,
    mask: np.ndarray,
    lambda_2: float,
    alpha_l: float,
    eps_q: float,
    iters: int,
    window,
    track_objective: bool = False,
) -> IRLSResult:
    """Alternate ``Q`` updates with reweighted gradient steps.

    Each iteration recomputes ``Q`` from the current iterate, forms
    ``r = lambda_2 J(Q)^H J(Q) x`` and steps
    ``x <- x - alpha_l (A^H (A x - y) + 2 r)``.
    """
    if iters < 1:
        raise ValidationError(f"iters must be >= 1, got {iters}")
    if lambda_2 < 0:
        raise ValidationError("lambda_2 must be nonnegative")
    x = np.asarray(x, dtype=np.complex128).copy()
    scale = max(np.linalg.norm(x), np.linalg.norm(adjoint_op(y, csm, mask)), 1e-300)
    res = IRLSResult(x)
    if track_objective:
        res.objective.append(irls_objective(x, y, csm, mask, lambda_2, window, eps_q))
    for it in range(iters):
        Q = q_update(x, window, eps_q)
        r = lambda_2 * gram_apply(x, Q, window)
        x = x - alpha_l * (adjoint_op(forward_op(x, csm, mask) - y, csm, mask) + 2 * r)
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm > 1e6 * scale:
            raise ConvergenceError(f"IRLS diverged at iteration {it + 1}: |x| = {nrm:.3e}")
        if track_objective:
            res.objective.append(irls_objective(x, y, csm, mask, lambda_2, window, eps_q))
    res.x = x
    return res
