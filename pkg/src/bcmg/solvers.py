"""Distributed dense solvers over the simulated device mesh.

Matrices are split into fixed-width column tiles dealt round-robin over the
devices.  Factorizations are right-looking and blocked: the tile owner
factors the diagonal block and its panel, the panel is broadcast to the
other devices as one contiguous block, and every device applies the
trailing update to the tiles it owns.  Only the lower triangle of a
Hermitian matrix is stored meaningfully; the strictly upper part of each
shard is stale except where a routine explicitly mirrors it.

The coordinator drives everything through buffer views (the stand-in for
launching device kernels) and logged peer copies (the stand-in for
device-to-device and host transfers).  Host-bound data, such as right-hand
sides and tridiagonal output, travels through the scratch arena.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .core import (
    ConvergenceError,
    DescriptorError,
    ElementType,
    MatrixDescriptor,
    RhsDescriptor,
    Structure,
    TileSpec,
    validate_descriptor,
    validate_tile,
)
from .layout import (
    build_permutation,
    decompose_cycles,
    device_column_counts,
    execute_plan,
    invert_plan,
)
from .runtime import SCRATCH_DEVICE, BufferHandle, DeviceMesh

__all__ = [
    "NotPositiveDefiniteError",
    "ConvergenceError",
    "DistributedMatrix",
    "FactorizationResult",
    "Timings",
    "create_distributed",
    "free_distributed",
    "write_array",
    "gather_array",
    "redistribute_in",
    "redistribute_out",
    "workspace_nbytes",
    "allocate_panel_workspace",
    "potrf",
    "potrs",
    "potri",
    "syevd",
    "solve_positive_definite",
    "invert_positive_definite",
    "eigh_hermitian",
]


class NotPositiveDefiniteError(ArithmeticError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the 1-based global column at which the leading minor
    stopped being positive definite, following LAPACK info semantics.
    """

    def __init__(self, pivot: int):
        super().__init__(
            f"matrix is not positive definite: leading minor of order "
            f"{pivot} (pivot={pivot})"
        )
        self.pivot = pivot


@dataclass(frozen=True)
class DistributedMatrix:
    """A dense matrix split over the mesh by column tiles.

    ``layout`` is ``"contiguous"`` (device d holds a contiguous run of
    global columns, sized to its block-cyclic count) or ``"block_cyclic"``
    (tiles dealt round-robin).  Redistribution flips between the two
    without changing per-device storage sizes.
    """

    descriptor: MatrixDescriptor
    tile: TileSpec
    shards: tuple[BufferHandle, ...]
    layout: str = "contiguous"

    @property
    def num_devices(self) -> int:
        return len(self.shards)


@dataclass(frozen=True)
class FactorizationResult:
    """Outcome of :func:`potrf`, LAPACK info semantics.

    ``info`` is 0 on success or the 1-based global column of the first
    non-positive pivot; in that case the leading (info-1) columns hold a
    valid partial factor and the rest is unspecified.
    """

    factor: DistributedMatrix
    info: int


@dataclass(frozen=True)
class Timings:
    """Wall-clock split of one routine run, nanosecond clock, in seconds.

    alloc_seconds covers device buffer allocation; solve_seconds covers
    upload, redistribution, compute and download.
    """

    alloc_seconds: float
    solve_seconds: float


def _tiles(n: int, width: int):
    for k in range((n + width - 1) // width):
        start = k * width
        yield k, start, min(start + width, n)


def _require_layout(dmat: DistributedMatrix, layout: str) -> None:
    if dmat.layout != layout:
        raise ValueError(f"expected {layout} layout, matrix is {dmat.layout}")


def _counts(dmat: DistributedMatrix) -> list[int]:
    return device_column_counts(
        dmat.descriptor.n_cols, dmat.tile, dmat.num_devices
    )


def _shard_views(mesh: DeviceMesh, dmat: DistributedMatrix) -> list[np.ndarray]:
    n = dmat.descriptor.n_rows
    dt = dmat.descriptor.element_type.dtype
    return [
        mesh.view(h, dt, (n, c)) for h, c in zip(dmat.shards, _counts(dmat))
    ]


# -- distribution ---------------------------------------------------------


def create_distributed(
    mesh: DeviceMesh, desc: MatrixDescriptor, tile: TileSpec
) -> DistributedMatrix:
    """Allocate shards for a matrix, each by its own device worker."""
    validate_descriptor(desc)
    validate_tile(tile, desc.n_cols)
    counts = device_column_counts(desc.n_cols, tile, mesh.num_devices)
    shards = mesh.allocate_on_devices([c * desc.column_nbytes for c in counts])
    return DistributedMatrix(
        descriptor=desc, tile=tile, shards=tuple(shards), layout="contiguous"
    )


def free_distributed(mesh: DeviceMesh, dmat: DistributedMatrix) -> None:
    for handle in dmat.shards:
        mesh.free(handle)


def _upload(mesh: DeviceMesh, handle: BufferHandle, array: np.ndarray) -> None:
    """Host array -> scratch -> one peer copy into the target buffer."""
    dt = array.dtype
    stage = mesh.allocate(SCRATCH_DEVICE, array.nbytes)
    try:
        mesh.view(stage, dt, array.shape)[...] = array
        mesh.peer_copy(stage, 0, handle, 0, array.nbytes)
    finally:
        mesh.free(stage)


def _download(mesh: DeviceMesh, handle: BufferHandle, dtype, shape) -> np.ndarray:
    """Target buffer -> one peer copy to scratch -> host array."""
    nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
    stage = mesh.allocate(SCRATCH_DEVICE, nbytes)
    try:
        mesh.peer_copy(handle, 0, stage, 0, nbytes)
        return np.array(mesh.view(stage, dtype, shape), order="F")
    finally:
        mesh.free(stage)


def _broadcast(
    mesh: DeviceMesh, handles: Sequence[BufferHandle], array: np.ndarray
) -> None:
    """Stage a host array once and copy it into every listed buffer."""
    stage = mesh.allocate(SCRATCH_DEVICE, array.nbytes)
    try:
        mesh.view(stage, array.dtype, array.shape)[...] = array
        for handle in handles:
            mesh.peer_copy(stage, 0, handle, 0, array.nbytes)
    finally:
        mesh.free(stage)


def write_array(mesh: DeviceMesh, dmat: DistributedMatrix, array: np.ndarray) -> None:
    """Load a host array into a contiguous-layout distributed matrix."""
    _require_layout(dmat, "contiguous")
    desc = dmat.descriptor
    if array.shape != desc.shape:
        raise DescriptorError(
            "dimension-mismatch",
            f"array shape {array.shape} does not match descriptor {desc.shape}",
        )
    data = np.asfortranarray(array, dtype=desc.element_type.dtype)
    offset = 0
    for handle, count in zip(dmat.shards, _counts(dmat)):
        _upload(mesh, handle, data[:, offset : offset + count])
        offset += count


def gather_array(mesh: DeviceMesh, dmat: DistributedMatrix) -> np.ndarray:
    """Assemble a contiguous-layout distributed matrix on the host."""
    _require_layout(dmat, "contiguous")
    desc = dmat.descriptor
    dt = desc.element_type.dtype
    out = np.empty(desc.shape, dtype=dt, order="F")
    offset = 0
    for handle, count in zip(dmat.shards, _counts(dmat)):
        out[:, offset : offset + count] = _download(
            mesh, handle, dt, (desc.n_rows, count)
        )
        offset += count
    return out


def _scatter_cyclic(
    mesh: DeviceMesh, dmat: DistributedMatrix, array: np.ndarray
) -> None:
    """Load a host array into a block_cyclic-layout distributed matrix."""
    _require_layout(dmat, "block_cyclic")
    desc = dmat.descriptor
    n = desc.n_rows
    width = dmat.tile.tile_width
    num_devices = dmat.num_devices
    data = np.asfortranarray(array, dtype=desc.element_type.dtype)
    for d, (handle, count) in enumerate(zip(dmat.shards, _counts(dmat))):
        local = np.empty((n, count), dtype=data.dtype, order="F")
        for k, start, stop in _tiles(desc.n_cols, width):
            if k % num_devices == d:
                loc = (k // num_devices) * width
                local[:, loc : loc + (stop - start)] = data[:, start:stop]
        _upload(mesh, handle, local)


def redistribute_in(mesh: DeviceMesh, dmat: DistributedMatrix) -> DistributedMatrix:
    """Contiguous per-device columns -> block-cyclic, in place."""
    _require_layout(dmat, "contiguous")
    perm = build_permutation(dmat.descriptor.n_cols, dmat.tile, dmat.num_devices)
    return execute_plan(dmat, decompose_cycles(perm), mesh)


def redistribute_out(mesh: DeviceMesh, dmat: DistributedMatrix) -> DistributedMatrix:
    """Block-cyclic -> contiguous per-device columns, in place."""
    _require_layout(dmat, "block_cyclic")
    perm = build_permutation(dmat.descriptor.n_cols, dmat.tile, dmat.num_devices)
    return execute_plan(dmat, invert_plan(decompose_cycles(perm)), mesh)


# -- workspace ------------------------------------------------------------


def workspace_nbytes(
    routine: str,
    desc: MatrixDescriptor,
    tile: TileSpec,
    num_devices: int,
    n_rhs: int = 1,
) -> list[int]:
    """Total device bytes each routine needs per device, shards included.

    The eigensolver needs the most (two broadcast panels plus two work
    vectors per device), the inverse comes next (a fetch panel plus an
    accumulator), and the solve needs the least (a factorization panel
    plus the replicated right-hand side).
    """
    esz = desc.element_type.width
    n = desc.n_rows
    panel = n * tile.tile_width * esz
    shards = [
        c * desc.column_nbytes
        for c in device_column_counts(desc.n_cols, tile, num_devices)
    ]
    if routine == "potrs":
        extra = panel + n * n_rhs * esz
    elif routine == "potri":
        extra = 2 * panel
    elif routine == "syevd":
        extra = 2 * panel + 2 * n * esz
    else:
        raise ValueError(f"unknown routine {routine!r}")
    return [s + extra for s in shards]


def allocate_panel_workspace(
    mesh: DeviceMesh, desc: MatrixDescriptor, tile: TileSpec
) -> list[BufferHandle]:
    """One full-height panel buffer per device (broadcast destination)."""
    nbytes = desc.n_rows * tile.tile_width * desc.element_type.width
    return mesh.allocate_on_devices([nbytes] * mesh.num_devices)


# -- Cholesky factorization ------------------------------------------------


def _factor_diag_block(block: np.ndarray, global_offset: int) -> None:
    """Unblocked in-place lower Cholesky of one diagonal tile.

    Reads only the lower triangle.  Raises with the 1-based global pivot
    on the first non-positive leading minor.
    """
    tc = block.shape[0]
    for j in range(tc):
        d = block[j, j].real - np.vdot(block[j, :j], block[j, :j]).real
        if not (d > 0.0) or not math.isfinite(d):
            raise NotPositiveDefiniteError(global_offset + j + 1)
        ljj = math.sqrt(d)
        block[j, j] = ljj
        if j + 1 < tc:
            block[j + 1 :, j] = (
                block[j + 1 :, j] - block[j + 1 :, :j] @ block[j, :j].conj()
            ) / ljj


def potrf(
    mesh: DeviceMesh,
    dmat: DistributedMatrix,
    panel_workspace: Sequence[BufferHandle],
) -> FactorizationResult:
    """Blocked right-looking Cholesky; the lower triangle becomes L.

    Per tile: the owner factors the diagonal block, solves the panel
    below it against L11^H, and the whole factored panel is sent to every
    other device with a single contiguous copy.  Each device then updates
    the trailing tiles it owns, one tile-shaped matrix product at a time,
    so the arithmetic (and therefore the bits of the result) depends only
    on the tile width, never on the device count.

    A non-positive pivot is reported through ``info``, not raised.
    """
    _require_layout(dmat, "block_cyclic")
    desc = dmat.descriptor
    if desc.structure is not Structure.positive_definite:
        raise DescriptorError(
            "type-structure",
            f"potrf requires positive_definite structure, got {desc.structure.name}",
        )
    n = desc.n_rows
    width = dmat.tile.tile_width
    num_devices = dmat.num_devices
    dt = desc.element_type.dtype
    col_bytes = desc.column_nbytes
    views = _shard_views(mesh, dmat)
    n_tiles = (n + width - 1) // width

    for k, start, stop in _tiles(n, width):
        owner = k % num_devices
        tc = stop - start
        loc = (k // num_devices) * width
        panel = views[owner][:, loc : loc + tc]
        try:
            _factor_diag_block(panel[start:stop, :], start)
        except NotPositiveDefiniteError as exc:
            return FactorizationResult(dmat, exc.pivot)
        if stop < n:
            xh = solve_triangular(
                panel[start:stop, :], panel[stop:, :].conj().T,
                lower=True, check_finite=False,
            )
            panel[stop:, :] = xh.conj().T
        else:
            continue
        for d in range(num_devices):
            if d != owner:
                mesh.peer_copy(
                    dmat.shards[owner], loc * col_bytes,
                    panel_workspace[d], 0, tc * col_bytes,
                )
        panel_views = [
            panel if d == owner else mesh.view(panel_workspace[d], dt, (n, tc))
            for d in range(num_devices)
        ]
        for m in range(k + 1, n_tiles):
            mo = m % num_devices
            ms = m * width
            me = min(ms + width, n)
            mloc = (m // num_devices) * width
            pv = panel_views[mo]
            views[mo][:, mloc : mloc + (me - ms)] -= pv @ pv[ms:me, :].conj().T
    return FactorizationResult(dmat, 0)


# -- triangular solve ------------------------------------------------------


def _fetch_panel(
    mesh: DeviceMesh,
    dmat: DistributedMatrix,
    k: int,
    stage: BufferHandle,
) -> np.ndarray:
    """Copy tile k's full-height panel into a staging buffer and view it."""
    desc = dmat.descriptor
    width = dmat.tile.tile_width
    start = k * width
    tc = min(width, desc.n_cols - start)
    owner = k % dmat.num_devices
    loc = (k // dmat.num_devices) * width
    col_bytes = desc.column_nbytes
    mesh.peer_copy(dmat.shards[owner], loc * col_bytes, stage, 0, tc * col_bytes)
    return mesh.view(stage, desc.element_type.dtype, (desc.n_rows, tc))


def potrs(
    mesh: DeviceMesh,
    factored: DistributedMatrix,
    rhs_replicas: Sequence[BufferHandle],
    n_rhs: int,
) -> None:
    """Solve L L^H x = b given the factor from :func:`potrf`.

    ``rhs_replicas`` holds one copy of the right-hand-side block per
    device; on return every replica holds the solution.  The substitution
    itself runs in scratch space, pulling each column panel of L from its
    owner with one contiguous copy per pass.
    """
    _require_layout(factored, "block_cyclic")
    desc = factored.descriptor
    n = desc.n_rows
    width = factored.tile.tile_width
    dt = desc.element_type.dtype
    esz = desc.element_type.width
    sol = mesh.allocate(SCRATCH_DEVICE, n * n_rhs * esz)
    stage = mesh.allocate(SCRATCH_DEVICE, n * width * esz)
    try:
        mesh.peer_copy(rhs_replicas[0], 0, sol, 0, n * n_rhs * esz)
        x = mesh.view(sol, dt, (n, n_rhs))
        tiles = list(_tiles(n, width))
        for k, start, stop in tiles:
            panel = _fetch_panel(mesh, factored, k, stage)
            x[start:stop] = solve_triangular(
                panel[start:stop, :], x[start:stop], lower=True, check_finite=False
            )
            if stop < n:
                x[stop:] -= panel[stop:, :] @ x[start:stop]
        for k, start, stop in reversed(tiles):
            panel = _fetch_panel(mesh, factored, k, stage)
            if stop < n:
                x[start:stop] -= panel[stop:, :].conj().T @ x[stop:]
            x[start:stop] = solve_triangular(
                panel[start:stop, :], x[start:stop],
                lower=True, trans="C", check_finite=False,
            )
        for replica in rhs_replicas:
            mesh.peer_copy(sol, 0, replica, 0, n * n_rhs * esz)
    finally:
        mesh.free(stage)
        mesh.free(sol)


# -- inverse ---------------------------------------------------------------


def _global_tril_mask(panel: np.ndarray, row0: int, col0: int) -> np.ndarray:
    """Zero panel entries whose global row is above the global diagonal."""
    rows = np.arange(row0, row0 + panel.shape[0])[:, None]
    cols = np.arange(col0, col0 + panel.shape[1])[None, :]
    return np.where(rows >= cols, panel, 0)


def potri(
    mesh: DeviceMesh,
    factored: DistributedMatrix,
    panel_workspace: Sequence[BufferHandle],
    acc_workspace: Sequence[BufferHandle],
) -> DistributedMatrix:
    """Full inverse from the Cholesky factor, in place.

    Three sweeps: invert L tile-by-tile from the last tile backwards
    (W = L^-1), multiply W^H W tile-by-tile forwards, then mirror the
    lower triangle into the upper one block at a time.  The first two
    sweeps run on the tile owners against panels fetched from their
    peers; the mirror stages each transposed block through scratch.
    """
    _require_layout(factored, "block_cyclic")
    desc = factored.descriptor
    n = desc.n_rows
    width = factored.tile.tile_width
    num_devices = factored.num_devices
    dt = desc.element_type.dtype
    esz = desc.element_type.width
    col_bytes = desc.column_nbytes
    views = _shard_views(mesh, factored)
    tiles = list(_tiles(n, width))
    eye = np.eye(width, dtype=dt)

    def peer_panel(s: int, into_device: int) -> np.ndarray:
        so = s % num_devices
        ss, se = tiles[s][1], tiles[s][2]
        sloc = (s // num_devices) * width
        if so == into_device:
            return views[so][:, sloc : sloc + (se - ss)]
        mesh.peer_copy(
            factored.shards[so], sloc * col_bytes,
            panel_workspace[into_device], 0, (se - ss) * col_bytes,
        )
        return mesh.view(panel_workspace[into_device], dt, (n, se - ss))

    # W = L^-1, last tile first so the trailing inverse is ready when used
    for k, start, stop in reversed(tiles):
        owner = k % num_devices
        tc = stop - start
        loc = (k // num_devices) * width
        panel = views[owner][:, loc : loc + tc]
        w11 = solve_triangular(
            np.tril(panel[start:stop, :]), eye[:tc, :tc],
            lower=True, check_finite=False,
        )
        if stop < n:
            acc = mesh.view(acc_workspace[owner], dt, (n, width))[:, :tc]
            acc[stop:, :] = 0
            l21 = np.array(panel[stop:, :])
            for s in range(k + 1, len(tiles)):
                ss, se = tiles[s][1], tiles[s][2]
                pv = peer_panel(s, owner)
                ws = _global_tril_mask(pv[stop:, :], stop, ss)
                acc[stop:, :] += ws @ l21[ss - stop : se - stop, :]
            panel[stop:, :] = -(np.array(acc[stop:, :]) @ w11)
        panel[start:stop, :] = w11

    # A^-1 = W^H W, first tile first; each step consumes only tiles >= it
    for j, js, je in tiles:
        owner = j % num_devices
        tcj = je - js
        loc = (j // num_devices) * width
        acc = mesh.view(acc_workspace[owner], dt, (n, width))[:, :tcj]
        acc[...] = 0
        wj = _global_tril_mask(np.array(views[owner][:, loc : loc + tcj]), 0, js)
        for s in range(j, len(tiles)):
            ss, se = tiles[s][1], tiles[s][2]
            if s == j:
                ws = wj[:, :]
            else:
                ws = _global_tril_mask(np.array(peer_panel(s, owner)), 0, ss)
            acc[ss:se, :] += ws.conj().T @ wj
        views[owner][:, loc : loc + tcj] = acc

    # mirror the lower triangle into the upper one, block by block
    fetch = mesh.allocate(SCRATCH_DEVICE, n * width * esz)
    block_stage = mesh.allocate(SCRATCH_DEVICE, width * width * esz)
    try:
        for j, js, je in tiles:
            tcj = je - js
            pj = np.array(_fetch_panel(mesh, factored, j, fetch))
            for i, is_, ie in tiles[j:]:
                io = i % num_devices
                tci = ie - is_
                iloc = (i // num_devices) * width
                block = pj[is_:ie, :]
                if i == j:
                    staged = np.tril(block, -1) + np.triu(block.conj().T, 1)
                    # herk-style contract: the diagonal is exactly real,
                    # killing rounding residue in its imaginary part
                    np.fill_diagonal(staged, block.diagonal().real)
                else:
                    staged = np.asfortranarray(block.conj().T)
                sview = mesh.view(block_stage, dt, (tcj, tci))
                sview[...] = staged
                for c in range(tci):
                    mesh.peer_copy(
                        block_stage, c * tcj * esz,
                        factored.shards[io], ((iloc + c) * n + js) * esz,
                        tcj * esz,
                    )
    finally:
        mesh.free(block_stage)
        mesh.free(fetch)
    return factored


# -- Hermitian eigendecomposition -------------------------------------------


def _householder(x: np.ndarray) -> tuple[np.ndarray, complex, float]:
    """Reflector (v, tau, beta) with v[0] = 1 and H^H x = beta e1.

    H = I - tau v v^H.  beta is always real, which is what makes the
    reduced tridiagonal matrix real even for complex input; the trailing
    update A - v w^H - w v^H then realizes H^H A H.  tau = 0 means x was
    already in reduced form and no reflection is needed.
    """
    v = np.zeros_like(x)
    v[0] = 1
    alpha = complex(x[0])
    tail = float(np.linalg.norm(x[1:])) if len(x) > 1 else 0.0
    if tail == 0.0 and alpha.imag == 0.0:
        return v, 0.0, alpha.real
    beta = -math.copysign(math.hypot(abs(alpha), tail), alpha.real or 1.0)
    if np.iscomplexobj(x):
        v[1:] = x[1:] / (alpha - beta)
        tau = (beta - alpha) / beta
    else:
        v[1:] = x[1:] / (alpha.real - beta)
        tau = (beta - alpha.real) / beta
    return v, tau, beta


@dataclass(frozen=True)
class _EigenWorkspace:
    """Per-device buffer holding U panel, W panel, v and y vectors."""

    handles: tuple[BufferHandle, ...]
    n: int
    width: int

    def panels(self, mesh, device, dtype, tc):
        esz = np.dtype(dtype).itemsize
        nw = self.n * self.width
        u = mesh.view(self.handles[device], dtype, (self.n, self.width))[:, :tc]
        w = mesh.view(
            self.handles[device], dtype, (self.n, self.width), offset=nw * esz
        )[:, :tc]
        return u, w

    def vectors(self, mesh, device, dtype):
        esz = np.dtype(dtype).itemsize
        base = 2 * self.n * self.width * esz
        v = mesh.view(self.handles[device], dtype, (self.n,), offset=base)
        y = mesh.view(
            self.handles[device], dtype, (self.n,), offset=base + self.n * esz
        )
        return v, y

    def offsets(self, dtype):
        esz = np.dtype(dtype).itemsize
        nw = self.n * self.width * esz
        return {"u": 0, "w": nw, "v": 2 * nw, "y": 2 * nw + self.n * esz}


def _allocate_eigen_workspace(
    mesh: DeviceMesh, desc: MatrixDescriptor, tile: TileSpec
) -> _EigenWorkspace:
    n = desc.n_rows
    width = tile.tile_width
    nbytes = (2 * n * width + 2 * n) * desc.element_type.width
    handles = mesh.allocate_on_devices([nbytes] * mesh.num_devices)
    return _EigenWorkspace(handles=tuple(handles), n=n, width=width)


def _tridiagonalize(
    mesh: DeviceMesh, dmat: DistributedMatrix, ws: _EigenWorkspace
) -> tuple[np.ndarray, np.ndarray, list]:
    """Blocked Householder reduction to real tridiagonal form.

    Processes one tile at a time: reflectors are computed on the owner,
    the reflector vector is broadcast so each device can form its slice of
    the symmetric matrix-vector product (lower-triangle storage, so each
    owned column contributes both its column and its mirrored row), and
    the accumulated rank-2T update is applied to the trailing tiles once
    per tile.  Returns (d, e, reflectors); reflectors stay on the host for
    the later back-transformation.
    """
    desc = dmat.descriptor
    n = desc.n_rows
    width = dmat.tile.tile_width
    num_devices = dmat.num_devices
    et = desc.element_type
    dt = et.dtype
    esz = et.width
    views = _shard_views(mesh, dmat)
    counts = _counts(dmat)
    offs = ws.offsets(dt)
    d_out = np.zeros(n, dtype=et.real_dtype)
    e_out = np.zeros(max(n - 1, 0), dtype=et.real_dtype)
    reflectors: list = []
    vstage = mesh.allocate(SCRATCH_DEVICE, n * esz)
    ystage = mesh.allocate(SCRATCH_DEVICE, n * esz)
    tiles = list(_tiles(n, width))
    try:
        for k, start, stop in tiles:
            owner = k % num_devices
            tc = stop - start
            loc = (k // num_devices) * width
            panel = views[owner][:, loc : loc + tc]
            u_own, w_own = ws.panels(mesh, owner, dt, tc)
            u_own[...] = 0
            w_own[...] = 0
            for jj in range(tc):
                c = start + jj
                if jj:
                    panel[c:, jj] -= (
                        u_own[c:, :jj] @ w_own[c, :jj].conj()
                        + w_own[c:, :jj] @ u_own[c, :jj].conj()
                    )
                d_out[c] = panel[c, jj].real
                if c == n - 1:
                    continue
                v_local, tau, beta = _householder(np.array(panel[c + 1 :, jj]))
                e_out[c] = beta
                reflectors.append((c, v_local, tau))
                if tau == 0:
                    continue
                v_full = np.zeros(n, dtype=dt)
                v_full[c + 1 :] = v_local
                mesh.view(vstage, dt, (n,))[...] = v_full
                for dd in range(num_devices):
                    mesh.peer_copy(
                        vstage, 0, ws.handles[dd], offs["v"], n * esz
                    )
                y = np.zeros(n, dtype=dt)
                for dd in range(num_devices):
                    vv, yy = ws.vectors(mesh, dd, dt)
                    yy[...] = 0
                    for m in range(k, len(tiles)):
                        if m % num_devices != dd:
                            continue
                        ms, me = tiles[m][1], tiles[m][2]
                        g0 = max(ms, c + 1)
                        if g0 >= me:
                            continue
                        l0 = (m // num_devices) * width + (g0 - ms)
                        block = views[dd][:, l0 : l0 + (me - g0)]
                        mask = _global_tril_mask(np.array(block), 0, g0)
                        strict = mask.copy()
                        cols = np.arange(g0, me)
                        strict[cols, np.arange(me - g0)] = 0
                        yy[...] += mask @ vv[g0:me]
                        yy[g0:me] += strict.conj().T @ vv
                    mesh.peer_copy(ws.handles[dd], offs["y"], ystage, 0, n * esz)
                    y += np.array(mesh.view(ystage, dt, (n,)))
                if jj:
                    vt = v_full[c + 1 :]
                    y[c + 1 :] -= u_own[c + 1 :, :jj] @ (
                        w_own[c + 1 :, :jj].conj().T @ vt
                    ) + w_own[c + 1 :, :jj] @ (u_own[c + 1 :, :jj].conj().T @ vt)
                yt = y[c + 1 :]
                sigma = 0.5 * (abs(tau) ** 2) * np.vdot(v_local, yt)
                u_own[c + 1 :, jj] = v_local
                w_own[c + 1 :, jj] = tau * yt - sigma * v_local
            if stop >= n:
                continue
            for dd in range(num_devices):
                if dd != owner:
                    mesh.peer_copy(
                        ws.handles[owner], offs["u"],
                        ws.handles[dd], offs["u"], n * tc * esz,
                    )
                    mesh.peer_copy(
                        ws.handles[owner], offs["w"],
                        ws.handles[dd], offs["w"], n * tc * esz,
                    )
            for dd in range(num_devices):
                ud, wd = ws.panels(mesh, dd, dt, tc)
                for m in range(k + 1, len(tiles)):
                    if m % num_devices != dd:
                        continue
                    ms, me = tiles[m][1], tiles[m][2]
                    mloc = (m // num_devices) * width
                    views[dd][:, mloc : mloc + (me - ms)] -= (
                        ud @ wd[ms:me, :].conj().T + wd @ ud[ms:me, :].conj().T
                    )
    finally:
        mesh.free(ystage)
        mesh.free(vstage)
    return d_out, e_out, reflectors


def _tridiag_eig(
    d_in: np.ndarray, e_in: np.ndarray, max_iter: int = 30
) -> tuple[np.ndarray, np.ndarray]:
    """Implicit-shift QL on a real symmetric tridiagonal matrix.

    Standard bulge-chasing iteration with the Wilkinson shift taken from
    the trailing 2x2 block, accumulating the rotations into the returned
    eigenvector matrix.  ``max_iter`` bounds the steps spent per
    eigenvalue, as in the classic EISPACK budget.
    """
    n = len(d_in)
    d = d_in.astype(np.float64).copy()
    e = np.zeros(n, dtype=np.float64)
    e[: n - 1] = e_in[: n - 1] if n > 1 else 0.0
    z = np.eye(n)
    eps = np.finfo(np.float64).eps
    for l in range(n):
        iters = 0
        while True:
            for m in range(l, n - 1):
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
            else:
                m = n - 1
            if m == l:
                break
            iters += 1
            if iters > max_iter:
                raise ConvergenceError(
                    f"tridiagonal eigensolver exceeded {max_iter} "
                    f"iterations at index {l}"
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * zi + c * zi1
                z[:, i] = c * zi - s * zi1
            else:
                d[l] -= p
                e[l] = g
                e[m] = 0.0
    return d, z


def syevd(
    mesh: DeviceMesh,
    dmat: DistributedMatrix,
    ws: _EigenWorkspace,
) -> tuple[np.ndarray, DistributedMatrix]:
    """Eigenvalues and eigenvectors of a Hermitian distributed matrix.

    Householder-reduces to a real tridiagonal matrix, solves that on the
    host with implicit-shift QL, scatters the tridiagonal eigenvectors
    over the mesh, and applies the stored reflectors in reverse to turn
    them into eigenvectors of the original matrix, which overwrite the
    input shards.  Eigenvalues come back ascending; each eigenvector is
    scaled so its largest-magnitude component is real and positive.
    """
    _require_layout(dmat, "block_cyclic")
    desc = dmat.descriptor
    if desc.structure is Structure.general:
        raise DescriptorError(
            "type-structure",
            "eigendecomposition requires symmetric, hermitian or "
            "positive_definite structure",
        )
    n = desc.n_rows
    et = desc.element_type
    dt = et.dtype
    esz = et.width
    num_devices = dmat.num_devices
    offs = ws.offsets(dt)
    d_arr, e_arr, reflectors = _tridiagonalize(mesh, dmat, ws)
    w, z = _tridiag_eig(d_arr, e_arr)
    order = np.argsort(w, kind="stable")
    w = w[order]
    z = np.asfortranarray(z[:, order].astype(dt))
    _scatter_cyclic(mesh, dmat, z)
    views = _shard_views(mesh, dmat)
    vstage = mesh.allocate(SCRATCH_DEVICE, n * esz)
    try:
        for c, v_local, tau in reversed(reflectors):
            if tau == 0:
                continue
            v_full = np.zeros(n, dtype=dt)
            v_full[c + 1 :] = v_local
            mesh.view(vstage, dt, (n,))[...] = v_full
            for dd in range(num_devices):
                mesh.peer_copy(vstage, 0, ws.handles[dd], offs["v"], n * esz)
                vv, _ = ws.vectors(mesh, dd, dt)
                vt = vv[c + 1 :]
                block = views[dd][c + 1 :, :]
                block -= tau * np.outer(vt, vt.conj() @ block)
    finally:
        mesh.free(vstage)
    for dd in range(num_devices):
        block = views[dd]
        if block.shape[1] == 0:
            continue
        idx = np.argmax(np.abs(block), axis=0)
        lead = block[idx, np.arange(block.shape[1])]
        scale = np.abs(lead)
        safe = np.where(scale == 0, 1, scale)
        phase = np.where(scale == 0, 1, lead / safe)
        block *= np.conj(phase)[None, :]
    return w.astype(et.real_dtype), dmat


# -- end-to-end pipelines ----------------------------------------------------


def _matrix_descriptor(a: np.ndarray, structure: Structure) -> MatrixDescriptor:
    if a.ndim != 2:
        raise DescriptorError(
            "dimension-mismatch", f"expected a 2-D matrix, got ndim={a.ndim}"
        )
    et = ElementType.from_dtype(a.dtype)
    desc = MatrixDescriptor(a.shape[0], a.shape[1], et, structure)
    validate_descriptor(desc)
    return desc


def _hermitian_structure(et: ElementType) -> Structure:
    return Structure.hermitian if et.is_complex else Structure.symmetric


def solve_positive_definite(
    mesh: DeviceMesh, a: np.ndarray, b: np.ndarray, tile: TileSpec
) -> tuple[np.ndarray, Timings]:
    """Factor A once and solve A x = b for one or more right-hand sides.

    ``b`` is replicated on every device, mirroring how callers hand the
    right-hand side to each worker; the solution replaces the replicas and
    is returned as a host array shaped like ``b``.
    """
    desc = _matrix_descriptor(a, Structure.positive_definite)
    validate_tile(tile, desc.n_cols)
    if np.iscomplexobj(b) and not desc.element_type.is_complex:
        raise DescriptorError(
            "type-structure",
            "complex right-hand side with a real matrix",
        )
    b_arr = np.asfortranarray(b, dtype=desc.element_type.dtype)
    one_dim = b_arr.ndim == 1
    if one_dim:
        b_arr = b_arr.reshape(-1, 1)
    if b_arr.ndim != 2 or b_arr.shape[0] != desc.n_rows:
        raise DescriptorError(
            "dimension-mismatch",
            f"right-hand side shape {b.shape} does not match a {desc.n_rows}-row matrix",
        )
    n_rhs = b_arr.shape[1]
    RhsDescriptor(b_arr.shape[0], n_rhs, desc.element_type)

    def body():
        t0 = time.perf_counter_ns()
        dmat = create_distributed(mesh, desc, tile)
        panels = allocate_panel_workspace(mesh, desc, tile)
        replicas = mesh.allocate_on_devices(
            [b_arr.nbytes] * mesh.num_devices
        )
        t1 = time.perf_counter_ns()
        try:
            write_array(mesh, dmat, a)
            _broadcast(mesh, replicas, b_arr)
            cyclic = redistribute_in(mesh, dmat)
            fact = potrf(mesh, cyclic, panels)
            if fact.info:
                raise NotPositiveDefiniteError(fact.info)
            potrs(mesh, cyclic, replicas, n_rhs)
            x = _download(
                mesh, replicas[0], desc.element_type.dtype, b_arr.shape
            )
            t2 = time.perf_counter_ns()
            return x, Timings((t1 - t0) * 1e-9, (t2 - t1) * 1e-9)
        finally:
            for h in [*dmat.shards, *panels, *replicas]:
                mesh.free(h)

    x, timings = mesh.run_coordinated(body)
    return (x[:, 0] if one_dim else x), timings


def invert_positive_definite(
    mesh: DeviceMesh, a: np.ndarray, tile: TileSpec
) -> tuple[np.ndarray, Timings]:
    """Full inverse of a positive-definite matrix, both triangles filled."""
    desc = _matrix_descriptor(a, Structure.positive_definite)
    validate_tile(tile, desc.n_cols)

    def body():
        t0 = time.perf_counter_ns()
        dmat = create_distributed(mesh, desc, tile)
        panels = allocate_panel_workspace(mesh, desc, tile)
        acc = allocate_panel_workspace(mesh, desc, tile)
        t1 = time.perf_counter_ns()
        try:
            write_array(mesh, dmat, a)
            cyclic = redistribute_in(mesh, dmat)
            fact = potrf(mesh, cyclic, panels)
            if fact.info:
                raise NotPositiveDefiniteError(fact.info)
            potri(mesh, cyclic, panels, acc)
            out = redistribute_out(mesh, cyclic)
            inv = gather_array(mesh, out)
            t2 = time.perf_counter_ns()
            return inv, Timings((t1 - t0) * 1e-9, (t2 - t1) * 1e-9)
        finally:
            for h in [*dmat.shards, *panels, *acc]:
                mesh.free(h)

    return mesh.run_coordinated(body)


def eigh_hermitian(
    mesh: DeviceMesh, a: np.ndarray, tile: TileSpec
) -> tuple[np.ndarray, np.ndarray, Timings]:
    """Ascending eigenvalues and eigenvectors of a Hermitian matrix."""
    et = ElementType.from_dtype(np.asarray(a).dtype)
    desc = _matrix_descriptor(a, _hermitian_structure(et))
    validate_tile(tile, desc.n_cols)

    def body():
        t0 = time.perf_counter_ns()
        dmat = create_distributed(mesh, desc, tile)
        ws = _allocate_eigen_workspace(mesh, desc, tile)
        t1 = time.perf_counter_ns()
        try:
            write_array(mesh, dmat, a)
            cyclic = redistribute_in(mesh, dmat)
            w, vecs = syevd(mesh, cyclic, ws)
            out = redistribute_out(mesh, vecs)
            v = gather_array(mesh, out)
            t2 = time.perf_counter_ns()
            return w, v, Timings((t1 - t0) * 1e-9, (t2 - t1) * 1e-9)
        finally:
            for h in [*dmat.shards, *ws.handles]:
                mesh.free(h)

    return mesh.run_coordinated(body)
