"""1D block-cyclic column layout.

Columns are assigned to devices in fixed-width tiles, round-robin over the
devices.  Converting between contiguous per-device column storage and the
block-cyclic layout is a column permutation; this module builds that
permutation, decomposes it into disjoint cycles, and executes the cycles
in place with peer copies and two one-column staging buffers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .core import TileSpec, validate_tile

if TYPE_CHECKING:
    from .runtime import DeviceMesh
    from .solvers import DistributedMatrix

__all__ = [
    "STAGING_BUFFER_COUNT",
    "ColumnPlacement",
    "ColumnPermutation",
    "RedistributionPlan",
    "device_column_counts",
    "device_column_offsets",
    "map_column",
    "build_permutation",
    "decompose_cycles",
    "invert_plan",
    "serialize_plan",
    "execute_plan",
]

# One buffer holds the active cycle's head column; the second lets the next
# cycle's head save overlap the tail of the previous rotation.
STAGING_BUFFER_COUNT = 2


@dataclass(frozen=True)
class ColumnPlacement:
    """Home of one global column under the block-cyclic layout."""

    device_index: int
    local_column: int


@dataclass(frozen=True)
class ColumnPermutation:
    """Mapping from contiguous-layout positions to block-cyclic positions.

    Positions index the device-concatenated column storage (device 0's
    columns first, then device 1's, ...), which is identical for both
    layouts because per-device column counts are preserved.
    """

    size: int
    dest_of: np.ndarray  # int64, dest_of[src] = destination position

    def is_identity(self) -> bool:
        return bool(np.all(self.dest_of == np.arange(self.size)))


@dataclass(frozen=True)
class RedistributionPlan:
    """Disjoint permutation cycles plus the staging-buffer schedule.

    Each cycle lists positions in rotation order: the column at the first
    position moves to the second, and so on, wrapping around.  Fixed points
    are omitted and every cycle has length >= 2.
    """

    size: int
    cycles: tuple[tuple[int, ...], ...]
    staging_buffer_count: int = STAGING_BUFFER_COUNT
    staging_buffer_width: int = 1  # columns per staging buffer


def device_column_counts(n_cols: int, tile: TileSpec, num_devices: int) -> list[int]:
    """Columns owned by each device under the block-cyclic layout.

    Tile ``t`` goes to device ``t mod num_devices``; the final tile may be
    narrower when ``n_cols`` is not a tile multiple.  Counts differ across
    devices by at most one tile width.
    """
    _check_grid(n_cols, tile, num_devices)
    width = tile.tile_width
    counts = [0] * num_devices
    for start in range(0, n_cols, width):
        t = start // width
        counts[t % num_devices] += min(width, n_cols - start)
    return counts


def device_column_offsets(n_cols: int, tile: TileSpec, num_devices: int) -> list[int]:
    """Start position of each device's block in device-concatenated storage."""
    counts = device_column_counts(n_cols, tile, num_devices)
    offsets = [0] * num_devices
    for d in range(1, num_devices):
        offsets[d] = offsets[d - 1] + counts[d - 1]
    return offsets


def map_column(
    global_col: int, n_cols: int, tile: TileSpec, num_devices: int
) -> ColumnPlacement:
    """Block-cyclic home of one global column.

    With tile width ``w``: tile index ``t = global_col // w``, device
    ``t mod num_devices``, local column ``(t // num_devices) * w +
    global_col mod w``.  The formula covers a partial final tile unchanged.
    """
    _check_grid(n_cols, tile, num_devices)
    if not 0 <= global_col < n_cols:
        raise IndexError(f"column {global_col} out of range for {n_cols} columns")
    width = tile.tile_width
    t = global_col // width
    device = t % num_devices
    local = (t // num_devices) * width + global_col % width
    return ColumnPlacement(device_index=device, local_column=local)


def build_permutation(
    n_cols: int, tile: TileSpec, num_devices: int
) -> ColumnPermutation:
    """Permutation taking contiguous per-device storage to block-cyclic.

    Under the contiguous layout device ``d`` owns a contiguous run of
    global columns sized to its cyclic column count, so position ``p``
    holds global column ``p``; its destination is the concatenated position
    of column ``p``'s cyclic home.
    """
    _check_grid(n_cols, tile, num_devices)
    width = tile.tile_width
    offsets = np.asarray(
        device_column_offsets(n_cols, tile, num_devices), dtype=np.int64
    )
    cols = np.arange(n_cols, dtype=np.int64)
    t = cols // width
    local = (t // num_devices) * width + cols % width
    dest = offsets[t % num_devices] + local
    return ColumnPermutation(size=n_cols, dest_of=dest)


def decompose_cycles(perm: ColumnPermutation) -> RedistributionPlan:
    """Decompose a column permutation into disjoint cycles.

    Fixed points are dropped.  Each cycle starts at its smallest member and
    cycles are ordered by that member, which fixes the execution order.
    """
    dest = np.asarray(perm.dest_of, dtype=np.int64)
    n = perm.size
    if dest.shape != (n,) or not np.array_equal(np.sort(dest), np.arange(n)):
        raise ValueError("dest_of is not a bijection on [0, size)")
    seen = np.zeros(n, dtype=bool)
    cycles: list[tuple[int, ...]] = []
    for start in range(n):
        if seen[start] or dest[start] == start:
            seen[start] = True
            continue
        cycle = [start]
        seen[start] = True
        p = int(dest[start])
        while p != start:
            cycle.append(p)
            seen[p] = True
            p = int(dest[p])
        cycles.append(tuple(cycle))
    return RedistributionPlan(size=n, cycles=tuple(cycles))


def invert_plan(plan: RedistributionPlan) -> RedistributionPlan:
    """Plan for the inverse permutation: each cycle reversed in place.

    The head stays first so cycles remain in ascending-head order.
    """
    inverted = tuple(
        (cycle[0],) + tuple(reversed(cycle[1:])) for cycle in plan.cycles
    )
    return replace(plan, cycles=inverted)


def serialize_plan(plan: RedistributionPlan) -> str:
    """Diagnostic text form: one cycle per line, comma-separated positions."""
    return "".join(",".join(str(p) for p in cycle) + "\n" for cycle in plan.cycles)


def execute_plan(
    matrix: "DistributedMatrix", plan: RedistributionPlan, runtime: "DeviceMesh"
) -> "DistributedMatrix":
    """Apply a redistribution plan to a distributed matrix in place.

    Every rotation saves its head column into a staging buffer, shifts the
    remaining columns backwards along the cycle, and finally writes the
    saved column into the freed slot, so no column is overwritten before
    its original content has been copied out.  All movement goes through
    the runtime's peer-copy primitive; the two staging buffers live in
    coordinator scratch space and are used alternately.

    Returns the matrix with its layout tag flipped (contiguous <->
    block_cyclic).  The shard storage is reused.
    """
    from .runtime import SCRATCH_DEVICE

    desc = matrix.descriptor
    if plan.size != desc.n_cols:
        raise ValueError(
            f"plan built for {plan.size} columns, matrix has {desc.n_cols}"
        )
    num_devices = len(matrix.shards)
    offsets = device_column_offsets(desc.n_cols, matrix.tile, num_devices)
    ends = [
        offsets[d] + c
        for d, c in enumerate(device_column_counts(desc.n_cols, matrix.tile, num_devices))
    ]
    col_bytes = desc.column_nbytes

    def locate(position: int) -> tuple[int, int]:
        # device owning this concatenated position, and the byte offset of
        # the column inside that device's shard
        for d in range(num_devices):
            if offsets[d] <= position < ends[d]:
                return d, (position - offsets[d]) * col_bytes
        raise IndexError(f"position {position} out of range")

    staging = [
        runtime.allocate(SCRATCH_DEVICE, col_bytes)
        for _ in range(plan.staging_buffer_count)
    ]
    try:
        for index, cycle in enumerate(plan.cycles):
            buf = staging[index % len(staging)]
            head_dev, head_off = locate(cycle[0])
            runtime.peer_copy(
                matrix.shards[head_dev], head_off, buf, 0, col_bytes
            )
            m = len(cycle)
            for i in range(m - 1, 0, -1):
                src_dev, src_off = locate(cycle[i])
                dst_dev, dst_off = locate(cycle[(i + 1) % m])
                runtime.peer_copy(
                    matrix.shards[src_dev], src_off,
                    matrix.shards[dst_dev], dst_off,
                    col_bytes,
                )
            dst_dev, dst_off = locate(cycle[1])
            runtime.peer_copy(buf, 0, matrix.shards[dst_dev], dst_off, col_bytes)
    finally:
        for buf in staging:
            runtime.free(buf)

    flipped = "block_cyclic" if matrix.layout == "contiguous" else "contiguous"
    return replace(matrix, layout=flipped)


def _check_grid(n_cols: int, tile: TileSpec, num_devices: int) -> None:
    if num_devices < 1:
        raise ValueError(f"need at least one device, got {num_devices}")
    validate_tile(tile, n_cols)
