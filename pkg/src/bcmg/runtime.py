"""Simulated multi-device runtime.

Each device is a byte arena.  Data moves between arenas only through
``peer_copy``, which is logged, so tests can audit copy ordering and replay
a transcript.  Buffer handles are tagged with the namespace that created
them; in ``isolated`` mode a handle must be published by its worker and
reopened by the coordinator before the coordinator may touch it, modeling
per-process device memory with IPC export.  In ``shared_address`` mode all
participants share one namespace, modeling threads in a single process.

Device index -1 is a host-side scratch arena for staging buffers; it is
exempt from per-device capacity limits and from the copy-order audit.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import queue
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "SCRATCH_DEVICE",
    "MODES",
    "ArenaExhaustedError",
    "HandleDomainError",
    "StaleHandleError",
    "ConcurrentCallError",
    "RegistryError",
    "BufferHandle",
    "HandleToken",
    "CopyRecord",
    "DeviceArena",
    "HandleRegistry",
    "WorkerContext",
    "DeviceMesh",
    "audit_copy_order",
    "replay_log",
    "write_trace",
]

SCRATCH_DEVICE = -1
MODES = ("shared_address", "isolated")


class ArenaExhaustedError(MemoryError):
    """Device arena capacity would be exceeded."""


class HandleDomainError(RuntimeError):
    """Handle used outside the namespace that owns it."""


class StaleHandleError(RuntimeError):
    """Handle or token refers to freed storage."""


class ConcurrentCallError(RuntimeError):
    """A second caller entered a coordinated section."""


class RegistryError(RuntimeError):
    """Handle registry misuse: double publish or incomplete registry."""


@dataclass(frozen=True)
class BufferHandle:
    """Reference to one arena allocation, valid only in its namespace."""

    namespace: str
    device_index: int
    alloc_id: int
    nbytes: int


@dataclass(frozen=True)
class HandleToken:
    """Opaque cross-namespace ticket produced by publish_handle."""

    token_id: int
    device_index: int
    nbytes: int


@dataclass(frozen=True)
class CopyRecord:
    """One peer copy; offsets are absolute within each arena's space."""

    src_device: int
    src_offset: int
    dst_device: int
    dst_offset: int
    nbytes: int


class _Allocation:
    __slots__ = ("alloc_id", "offset", "buf", "alive")

    def __init__(self, alloc_id: int, offset: int, nbytes: int):
        self.alloc_id = alloc_id
        self.offset = offset
        self.buf = bytearray(nbytes)
        self.alive = True


class DeviceArena:
    """Bump allocator for one device.

    Offsets are virtual and never reused, so every allocation has a stable
    address for the copy log.  The capacity limit applies to live bytes,
    so alloc/free churn does not exhaust a capped arena.
    """

    def __init__(self, device_index: int, capacity: int | None = None):
        self.device_index = device_index
        self.capacity = capacity
        self.used_bytes = 0
        self.peak_bytes = 0
        self.watermark = 0
        self._allocations: dict[int, _Allocation] = {}
        self._ids = itertools.count()

    def allocate(self, nbytes: int) -> _Allocation:
        if nbytes < 0:
            raise ValueError(f"allocation size must be >= 0, got {nbytes}")
        if self.capacity is not None and self.used_bytes + nbytes > self.capacity:
            raise ArenaExhaustedError(
                f"device {self.device_index}: {nbytes} bytes requested, "
                f"{self.capacity - self.used_bytes} of {self.capacity} free"
            )
        alloc = _Allocation(next(self._ids), self.watermark, nbytes)
        self.watermark += nbytes
        self.used_bytes += nbytes
        self.peak_bytes = max(self.peak_bytes, self.used_bytes)
        self._allocations[alloc.alloc_id] = alloc
        return alloc

    def free(self, alloc_id: int) -> None:
        alloc = self.get(alloc_id)
        alloc.alive = False
        self.used_bytes -= len(alloc.buf)

    def get(self, alloc_id: int) -> _Allocation:
        alloc = self._allocations.get(alloc_id)
        if alloc is None or not alloc.alive:
            raise StaleHandleError(
                f"allocation {alloc_id} on device {self.device_index} "
                "is unknown or freed"
            )
        return alloc

    def image(self) -> bytes:
        """Flat snapshot of the virtual space.

        Freed allocations keep their last bytes (offsets are never reused),
        so replaying the copy log over a pre-execution image reproduces the
        post-execution image even when staging buffers were freed.
        """
        out = bytearray(self.watermark)
        for alloc in self._allocations.values():
            out[alloc.offset : alloc.offset + len(alloc.buf)] = alloc.buf
        return bytes(out)


class _TokenChannel:
    """Message channel carrying published handles between namespaces."""

    def __init__(self) -> None:
        self._entries: dict[int, tuple[int, int, int]] = {}
        self._ids = itertools.count()
        self._lock = threading.Lock()

    def register(self, device_index: int, alloc_id: int, nbytes: int) -> HandleToken:
        with self._lock:
            token_id = next(self._ids)
            self._entries[token_id] = (device_index, alloc_id, nbytes)
        return HandleToken(token_id=token_id, device_index=device_index, nbytes=nbytes)

    def resolve(self, token: HandleToken) -> tuple[int, int, int]:
        entry = self._entries.get(token.token_id)
        if entry is None:
            raise StaleHandleError(f"token {token.token_id} was never published")
        return entry


class HandleRegistry:
    """Per-device handle slots filled by workers, read by the coordinator.

    Workers publish exactly one handle each; the coordinator may collect
    them only once every slot is filled.  In shared_address mode the slot
    stores the handle itself (one namespace for everyone); in isolated
    mode publishing exports the handle over the mesh's token channel and
    collection re-materializes it in the coordinator's namespace.
    Publication may happen concurrently from all workers.
    """

    def __init__(self, mesh: "DeviceMesh"):
        self._mesh = mesh
        self.mode = mesh.mode
        self._slots: list[BufferHandle | HandleToken | None] = [None] * mesh.num_devices
        self._lock = threading.Lock()

    def publish(self, device_index: int, handle: BufferHandle) -> None:
        if not 0 <= device_index < len(self._slots):
            raise ValueError(f"no slot for device {device_index}")
        entry = (
            self._mesh.publish_handle(handle) if self.mode == "isolated" else handle
        )
        with self._lock:
            if self._slots[device_index] is not None:
                raise RegistryError(f"device {device_index} already published")
            self._slots[device_index] = entry

    @property
    def missing(self) -> list[int]:
        return [d for d, slot in enumerate(self._slots) if slot is None]

    @property
    def complete(self) -> bool:
        return not self.missing

    def coordinator_handles(self) -> list[BufferHandle]:
        """All device handles, usable from the coordinator's namespace."""
        if not self.complete:
            raise RegistryError(f"incomplete registry: missing devices {self.missing}")
        if self.mode == "isolated":
            return [self._mesh.open_handle(token) for token in self._slots]
        return list(self._slots)


class WorkerContext:
    """Per-device view handed to run_workers callables."""

    def __init__(self, mesh: "DeviceMesh", device_index: int, namespace: str):
        self._mesh = mesh
        self.device_index = device_index
        self.namespace = namespace

    def allocate(self, nbytes: int) -> BufferHandle:
        """Allocate on this worker's own device."""
        return self._mesh._allocate_as(self.namespace, self.device_index, nbytes)

    def publish(self, handle: BufferHandle) -> HandleToken:
        return self._mesh.publish_handle(handle)

    def view(self, handle: BufferHandle, dtype, shape=None, offset: int = 0):
        return self._mesh._view_as(self.namespace, handle, dtype, shape, offset)


class DeviceMesh:
    """A set of simulated devices plus the coordination rules between them."""

    def __init__(
        self,
        num_devices: int,
        mode: str = "shared_address",
        arena_capacity: int | None = None,
    ):
        if num_devices < 1:
            raise ValueError(f"need at least one device, got {num_devices}")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.num_devices = num_devices
        self.mode = mode
        self._arenas = {
            d: DeviceArena(d, capacity=arena_capacity) for d in range(num_devices)
        }
        self._arenas[SCRATCH_DEVICE] = DeviceArena(SCRATCH_DEVICE, capacity=None)
        self._channel = _TokenChannel()
        self.copy_log: list[CopyRecord] = []
        self._tls = threading.local()
        self._coordination_lock = threading.Lock()

    # -- namespaces ------------------------------------------------------

    def _current_namespace(self) -> str:
        if self.mode == "shared_address":
            return "shared"
        return getattr(self._tls, "namespace", "coordinator")

    def _check_namespace(self, handle: BufferHandle) -> None:
        current = self._current_namespace()
        if handle.namespace != current:
            raise HandleDomainError(
                f"handle from namespace {handle.namespace!r} used in "
                f"{current!r}; publish and reopen it instead"
            )

    # -- memory ----------------------------------------------------------

    def _arena(self, device_index: int) -> DeviceArena:
        try:
            return self._arenas[device_index]
        except KeyError:
            raise ValueError(f"no device {device_index}") from None

    def _allocate_as(
        self, namespace: str, device_index: int, nbytes: int
    ) -> BufferHandle:
        alloc = self._arena(device_index).allocate(nbytes)
        return BufferHandle(
            namespace=namespace,
            device_index=device_index,
            alloc_id=alloc.alloc_id,
            nbytes=nbytes,
        )

    def allocate(self, device_index: int, nbytes: int) -> BufferHandle:
        return self._allocate_as(self._current_namespace(), device_index, nbytes)

    def free(self, handle: BufferHandle) -> None:
        self._check_namespace(handle)
        self._arena(handle.device_index).free(handle.alloc_id)

    def _resolve(self, handle: BufferHandle) -> _Allocation:
        self._check_namespace(handle)
        return self._arena(handle.device_index).get(handle.alloc_id)

    def _view_as(self, namespace, handle, dtype, shape, offset):
        current = self._current_namespace()
        if namespace != current:
            raise HandleDomainError(
                f"worker context for {namespace!r} used from {current!r}"
            )
        return self.view(handle, dtype, shape=shape, offset=offset)

    def view(self, handle: BufferHandle, dtype, shape=None, offset: int = 0):
        """Writable column-major array over an allocation's bytes.

        This is the analog of running device code against the buffer; only
        peer_copy moves bytes between devices.
        """
        alloc = self._resolve(handle)
        dt = np.dtype(dtype)
        if shape is None:
            count = (handle.nbytes - offset) // dt.itemsize
        else:
            count = int(np.prod(shape))
        if offset < 0 or offset + count * dt.itemsize > handle.nbytes:
            raise ValueError("view exceeds allocation bounds")
        arr = np.frombuffer(alloc.buf, dtype=dt, count=count, offset=offset)
        if shape is not None:
            arr = arr.reshape(shape, order="F")
        return arr

    def peer_copy(
        self,
        src: BufferHandle,
        src_offset: int,
        dst: BufferHandle,
        dst_offset: int,
        nbytes: int,
    ) -> None:
        """Copy bytes between allocations on any pair of devices."""
        src_alloc = self._resolve(src)
        dst_alloc = self._resolve(dst)
        if nbytes < 0:
            raise ValueError(f"copy length must be >= 0, got {nbytes}")
        if src_offset < 0 or src_offset + nbytes > src.nbytes:
            raise ValueError("source range exceeds allocation bounds")
        if dst_offset < 0 or dst_offset + nbytes > dst.nbytes:
            raise ValueError("destination range exceeds allocation bounds")
        if (
            src_alloc is dst_alloc
            and nbytes > 0
            and src_offset < dst_offset + nbytes
            and dst_offset < src_offset + nbytes
        ):
            raise ValueError("overlapping same-device copy ranges are disallowed")
        dst_alloc.buf[dst_offset : dst_offset + nbytes] = src_alloc.buf[
            src_offset : src_offset + nbytes
        ]
        self.copy_log.append(
            CopyRecord(
                src_device=src.device_index,
                src_offset=src_alloc.offset + src_offset,
                dst_device=dst.device_index,
                dst_offset=dst_alloc.offset + dst_offset,
                nbytes=nbytes,
            )
        )

    # -- handle exchange ---------------------------------------------------

    def publish_handle(self, handle: BufferHandle) -> HandleToken:
        """Export a handle so another namespace may open it."""
        self._resolve(handle)  # ownership and liveness check
        return self._channel.register(
            handle.device_index, handle.alloc_id, handle.nbytes
        )

    def open_handle(self, token: HandleToken) -> BufferHandle:
        """Materialize a published handle in the caller's namespace."""
        device_index, alloc_id, nbytes = self._channel.resolve(token)
        self._arena(device_index).get(alloc_id)  # liveness check
        return BufferHandle(
            namespace=self._current_namespace(),
            device_index=device_index,
            alloc_id=alloc_id,
            nbytes=nbytes,
        )

    # -- execution ---------------------------------------------------------

    def run_workers(self, fn: Callable[[WorkerContext], object]) -> list:
        """Run fn once per device, each on its own thread.

        Results come back in device order; if workers fail, the lowest
        device's exception is re-raised as-is.  Worker-allocated handles
        cross back to the caller only as published tokens (isolated mode
        keeps a namespace per worker, so returning a raw handle makes it
        unusable).
        """
        results: queue.Queue = queue.Queue()

        def body(device_index: int) -> None:
            if self.mode == "isolated":
                self._tls.namespace = f"worker:{device_index}"
            ctx = WorkerContext(self, device_index, self._current_namespace())
            try:
                results.put((device_index, fn(ctx), None))
            except BaseException as exc:  # noqa: BLE001 - reported to caller
                results.put((device_index, None, exc))

        threads = [
            threading.Thread(target=body, args=(d,), name=f"device-worker-{d}")
            for d in range(self.num_devices)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        out: list = [None] * self.num_devices
        errors: list[tuple[int, BaseException]] = []
        while not results.empty():
            device_index, value, exc = results.get()
            if exc is not None:
                errors.append((device_index, exc))
            out[device_index] = value
        if errors:
            raise min(errors, key=lambda e: e[0])[1]
        return out

    def run_coordinated(self, fn: Callable, *args, registry=None, **kwargs):
        """Run fn as the single coordinator; concurrent entry is an error.

        When a registry is given it must be complete: every worker has
        published its handle before the coordinator may touch any device.
        """
        if registry is not None and not registry.complete:
            raise RegistryError(
                f"incomplete registry: missing devices {registry.missing}"
            )
        if not self._coordination_lock.acquire(blocking=False):
            raise ConcurrentCallError(
                "a coordinated call is already in progress on this mesh"
            )
        try:
            return fn(*args, **kwargs)
        finally:
            self._coordination_lock.release()

    def allocate_on_devices(self, nbytes_by_device: Sequence[int]) -> list[BufferHandle]:
        """One allocation per device, made by that device's worker.

        The workers fill a HandleRegistry and the caller collects the
        handles from it, so the publish/collect handshake runs in both
        modes.
        """
        if len(nbytes_by_device) != self.num_devices:
            raise ValueError(
                f"expected {self.num_devices} sizes, got {len(nbytes_by_device)}"
            )
        registry = HandleRegistry(self)

        def worker(ctx: WorkerContext) -> None:
            registry.publish(
                ctx.device_index, ctx.allocate(nbytes_by_device[ctx.device_index])
            )

        self.run_workers(worker)
        return registry.coordinator_handles()

    # -- observability -----------------------------------------------------

    def used_bytes(self, device_index: int) -> int:
        return self._arena(device_index).used_bytes

    def peak_bytes(self, device_index: int) -> int:
        return self._arena(device_index).peak_bytes

    def snapshot(self) -> dict[int, bytes]:
        """Flat byte image of every arena, keyed by device index."""
        return {d: arena.image() for d, arena in self._arenas.items()}


class _IntervalSet:
    """Sorted disjoint half-open intervals with merge-on-add."""

    def __init__(self) -> None:
        self._starts: list[int] = []
        self._ends: list[int] = []

    def add(self, start: int, end: int) -> None:
        if end <= start:
            return
        i = bisect.bisect_left(self._ends, start)
        j = bisect.bisect_right(self._starts, end)
        if i < j:
            start = min(start, self._starts[i])
            end = max(end, self._ends[j - 1])
        self._starts[i:j] = [start]
        self._ends[i:j] = [end]

    def intersects(self, start: int, end: int) -> bool:
        i = bisect.bisect_right(self._starts, start) - 1
        if i >= 0 and self._ends[i] > start:
            return True
        i += 1
        return i < len(self._starts) and self._starts[i] < end

    def covers(self, start: int, end: int) -> bool:
        if end <= start:
            return True
        i = bisect.bisect_right(self._starts, start) - 1
        return i >= 0 and self._ends[i] >= end


def audit_copy_order(
    records: Iterable[CopyRecord], *, scratch_device: int = SCRATCH_DEVICE
) -> list[str]:
    """Check that a copy sequence never destroys data it still needs.

    Two rules, applied to device arenas only (scratch is staging space and
    exempt): a copy must not read bytes that an earlier copy overwrote, and
    a copy must not overwrite bytes that were never read out first.  An
    empty return means the transcript is safe to execute in order with no
    hidden buffering beyond scratch.
    """
    violations: list[str] = []
    written: dict[int, _IntervalSet] = {}
    read: dict[int, _IntervalSet] = {}
    for index, rec in enumerate(records):
        if rec.src_device != scratch_device:
            w = written.setdefault(rec.src_device, _IntervalSet())
            if w.intersects(rec.src_offset, rec.src_offset + rec.nbytes):
                violations.append(
                    f"record {index}: reads device {rec.src_device} bytes "
                    f"[{rec.src_offset}, {rec.src_offset + rec.nbytes}) "
                    "after they were overwritten"
                )
            r = read.setdefault(rec.src_device, _IntervalSet())
            r.add(rec.src_offset, rec.src_offset + rec.nbytes)
        if rec.dst_device != scratch_device:
            r = read.setdefault(rec.dst_device, _IntervalSet())
            if not r.covers(rec.dst_offset, rec.dst_offset + rec.nbytes):
                violations.append(
                    f"record {index}: overwrites device {rec.dst_device} bytes "
                    f"[{rec.dst_offset}, {rec.dst_offset + rec.nbytes}) "
                    "before reading them"
                )
            w = written.setdefault(rec.dst_device, _IntervalSet())
            w.add(rec.dst_offset, rec.dst_offset + rec.nbytes)
    return violations


def replay_log(
    initial: dict[int, bytes], records: Iterable[CopyRecord]
) -> dict[int, bytearray]:
    """Re-apply a copy transcript to snapshot images.

    Images are zero-extended on demand: a record may touch an allocation
    made after the snapshot was taken, and fresh arena space is zeroed, so
    extension preserves the arena semantics instead of shifting offsets.
    """
    images = {d: bytearray(b) for d, b in initial.items()}

    def _span(device: int, end: int) -> bytearray:
        buf = images.setdefault(device, bytearray())
        if len(buf) < end:
            buf.extend(bytes(end - len(buf)))
        return buf

    for rec in records:
        src = _span(rec.src_device, rec.src_offset + rec.nbytes)
        chunk = src[rec.src_offset : rec.src_offset + rec.nbytes]
        dst = _span(rec.dst_device, rec.dst_offset + rec.nbytes)
        dst[rec.dst_offset : rec.dst_offset + rec.nbytes] = chunk
    return images


def write_trace(records: Iterable[CopyRecord], path) -> None:
    """Copy transcript as CSV: src_device,src_offset,dst_device,dst_offset,nbytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["src_device", "src_offset", "dst_device", "dst_offset", "nbytes"]
        )
        for rec in records:
            writer.writerow(
                [rec.src_device, rec.src_offset, rec.dst_device, rec.dst_offset, rec.nbytes]
            )
