"""Reference implementations used to check the distributed solvers.

Everything here is deliberately simple and single-host: unblocked
factorizations, explicit substitution loops, a cyclic Jacobi eigensolver,
and a column-dealing simulation of the block-cyclic layout.  None of it
shares code with the solver stack, so agreement between the two is
evidence, not tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConvergenceError, Structure

__all__ = [
    "DenseMatrix",
    "ref_cholesky",
    "ref_solve",
    "ref_inverse",
    "ref_eigh",
    "ref_placement",
    "ref_redistribute",
]


@dataclass(frozen=True)
class DenseMatrix:
    """Host matrix with its structure tag, for building oracle inputs."""

    data: np.ndarray
    structure: Structure = Structure.general

    @classmethod
    def from_array(cls, array: np.ndarray, structure: Structure = Structure.general):
        return cls(np.asfortranarray(array), structure)

    def hermitian_defect(self) -> float:
        """max |A - A^H|, zero for exactly Hermitian/symmetric data."""
        return float(np.abs(self.data - self.data.conj().T).max())


def ref_cholesky(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Unblocked lower Cholesky of a Hermitian matrix.

    Only the lower triangle of ``a`` is read.  Returns ``(L, pivot)`` where
    ``pivot`` is 0 on success or the 1-based column at which the matrix
    stopped being positive definite, in which case ``L`` holds the partial
    factor and must not be used.
    """
    n = a.shape[0]
    L = np.zeros_like(a, order="F")
    for j in range(n):
        d = a[j, j].real - np.real(np.vdot(L[j, :j], L[j, :j]))
        if d <= 0.0 or not math.isfinite(d):
            return L, j + 1
        L[j, j] = math.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j].conj()) / L[j, j]
    return L, 0


def _forward_substitute(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = b.astype(L.dtype, copy=True)
    n = L.shape[0]
    for i in range(n):
        if i:
            y[i] -= L[i, :i] @ y[:i]
        y[i] /= L[i, i]
    return y


def _backward_substitute_conj(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    # solves L^H x = y
    x = y.copy()
    n = L.shape[0]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] -= L[i + 1 :, i].conj() @ x[i + 1 :]
        x[i] /= L[i, i].conj()
    return x


def ref_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a positive-definite system by explicit substitution."""
    L, pivot = ref_cholesky(a)
    if pivot:
        raise ArithmeticError(f"not positive definite at pivot {pivot}")
    b2 = b if b.ndim == 2 else b.reshape(-1, 1)
    x = _backward_substitute_conj(L, _forward_substitute(L, b2))
    return x if b.ndim == 2 else x[:, 0]


def _lower_triangular_inverse(L: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    W = np.zeros_like(L, order="F")
    for j in range(n):
        W[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            W[i, j] = -(L[i, j:i] @ W[j:i, j]) / L[i, i]
    return W


def ref_inverse(a: np.ndarray) -> np.ndarray:
    """Full inverse of a positive-definite matrix via W = L^-1, A^-1 = W^H W."""
    L, pivot = ref_cholesky(a)
    if pivot:
        raise ArithmeticError(f"not positive definite at pivot {pivot}")
    W = _lower_triangular_inverse(L)
    inv = W.conj().T @ W
    # exact Hermitian symmetry, to match mirrored storage
    return np.asfortranarray((inv + inv.conj().T) / 2)


def ref_eigh(a: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    ``A @ V == V @ diag(w)``.  Work happens at float64/complex128 precision
    regardless of input dtype; results are returned at that precision.
    Rotations stop when the off-diagonal Frobenius norm falls below
    ``n * eps * ||A||_F``.
    """
    n = a.shape[0]
    work_dtype = np.complex128 if np.iscomplexobj(a) else np.float64
    A = np.array(a, dtype=work_dtype, order="F")
    V = np.eye(n, dtype=work_dtype, order="F")
    if n == 1:
        return A.real.diagonal().copy(), V
    norm = np.linalg.norm(A)
    stop = n * np.finfo(np.float64).eps * norm
    for sweep in range(max_sweeps + 1):
        # norm of the off-diagonal part, measured directly: subtracting
        # squared norms would cancel catastrophically near convergence
        off = np.linalg.norm(A - np.diag(np.diagonal(A)))
        if off <= stop or norm == 0.0:
            break
        if sweep == max_sweeps:
            raise ConvergenceError(
                f"Jacobi sweep budget of {max_sweeps} exhausted"
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = A[p, q]
                if abs(g) == 0.0:
                    continue
                # unitary phase that makes the (p, q) entry real, then a
                # real Jacobi rotation that zeroes it
                u = np.conj(g) / abs(g)
                tau = (A[q, q].real - A[p, p].real) / (2.0 * abs(g))
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                # J restricted to (p, q): [[c, s], [-s*u, c*u]]
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * u * cq
                A[:, q] = s * cp + c * u * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * np.conj(u) * rq
                A[q, :] = s * rp + c * np.conj(u) * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * u * vq
                V[:, q] = s * vp + c * u * vq
    w = np.real(np.diagonal(A)).copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.asfortranarray(V[:, order])


def ref_placement(
    n_cols: int, tile_width: int, num_devices: int
) -> list[tuple[int, int]]:
    """Home (device, local column) of every global column, by dealing.

    Walks the columns once, dealing whole tiles round-robin and counting
    local positions as they fill, with no closed-form index arithmetic.
    """
    homes: list[tuple[int, int]] = []
    next_local = [0] * num_devices
    device = 0
    in_tile = 0
    for _ in range(n_cols):
        homes.append((device, next_local[device]))
        next_local[device] += 1
        in_tile += 1
        if in_tile == tile_width:
            in_tile = 0
            device = (device + 1) % num_devices
    return homes


def ref_redistribute(
    columns: np.ndarray, tile_width: int, num_devices: int
) -> np.ndarray:
    """Rearrange contiguous columns into dealt order, out of place.

    Column p of the input lands where the dealing walk of
    :func:`ref_placement` puts it, counted in device order: all of device
    0's local columns first, then device 1's, and so on.  Shares no index
    arithmetic with the code under test.
    """
    n_cols = columns.shape[1]
    homes = ref_placement(n_cols, tile_width, num_devices)
    per_device = [0] * num_devices
    for device, _ in homes:
        per_device[device] += 1
    base = [0] * num_devices
    for d in range(1, num_devices):
        base[d] = base[d - 1] + per_device[d - 1]
    out = np.empty_like(columns, order="F")
    for p, (device, local) in enumerate(homes):
        out[:, base[device] + local] = columns[:, p]
    return out
