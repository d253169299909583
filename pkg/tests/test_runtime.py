"""Device arenas, peer copies, handle coordination, and the copy-log tools.

The two coordination modes are exercised side by side wherever the
behavior is supposed to be indistinguishable; the isolated-mode-only
tests pin down the token transport that shared-address mode skips.
"""

import threading

import numpy as np
import pytest

from bcmg import (
    ArenaExhaustedError,
    BufferHandle,
    ConcurrentCallError,
    CopyRecord,
    DeviceMesh,
    ElementType,
    HandleDomainError,
    HandleRegistry,
    MatrixDescriptor,
    RegistryError,
    StaleHandleError,
    TileSpec,
    audit_copy_order,
    build_permutation,
    decompose_cycles,
    execute_plan,
    replay_log,
    write_trace,
)
from bcmg.runtime import SCRATCH_DEVICE
from bcmg.solvers import create_distributed, write_array

from conftest import device_concat, numbered_columns


# ---------------------------------------------------------------------------
# arenas and allocation
# ---------------------------------------------------------------------------


def test_allocate_within_capacity():
    mesh = DeviceMesh(1, arena_capacity=1 << 20)
    handle = mesh.allocate(0, 1024)
    assert handle.nbytes == 1024
    assert mesh.used_bytes(0) == 1024


def test_allocate_beyond_capacity():
    mesh = DeviceMesh(1, arena_capacity=1024)
    mesh.allocate(0, 1000)
    with pytest.raises(ArenaExhaustedError):
        mesh.allocate(0, 100)


def test_allocate_capacity_counts_live_bytes_only():
    mesh = DeviceMesh(1, arena_capacity=1024)
    h = mesh.allocate(0, 1000)
    mesh.free(h)
    mesh.allocate(0, 1000)  # fits again after the free
    assert mesh.peak_bytes(0) == 1000


def test_allocations_do_not_overlap():
    mesh = DeviceMesh(1)
    a = mesh.allocate(0, 64)
    b = mesh.allocate(0, 64)
    assert a.alloc_id != b.alloc_id
    va = mesh.view(a, np.uint8)
    vb = mesh.view(b, np.uint8)
    va[:] = 1
    vb[:] = 2
    assert va.tobytes() == b"\x01" * 64
    assert vb.tobytes() == b"\x02" * 64


def test_scratch_arena_uncapped():
    mesh = DeviceMesh(1, arena_capacity=64)
    mesh.allocate(SCRATCH_DEVICE, 1 << 16)  # far over the device cap


# ---------------------------------------------------------------------------
# peer_copy
# ---------------------------------------------------------------------------


def test_peer_copy_across_devices():
    mesh = DeviceMesh(2)
    src = mesh.allocate(0, 64)
    dst = mesh.allocate(1, 64)
    col = np.arange(8, dtype=np.float64)
    mesh.view(src, np.float64)[:] = col
    mesh.peer_copy(src, 0, dst, 0, 64)
    assert mesh.view(dst, np.float64).tobytes() == col.tobytes()
    rec = mesh.copy_log[-1]
    assert (rec.src_device, rec.dst_device, rec.nbytes) == (0, 1, 64)


def test_peer_copy_same_device_disjoint():
    mesh = DeviceMesh(1)
    buf = mesh.allocate(0, 32)
    view = mesh.view(buf, np.uint8)
    view[:16] = 7
    mesh.peer_copy(buf, 0, buf, 16, 16)
    assert view.tobytes() == b"\x07" * 32


def test_peer_copy_rejects_overlap():
    mesh = DeviceMesh(1)
    buf = mesh.allocate(0, 32)
    with pytest.raises(ValueError, match="overlap"):
        mesh.peer_copy(buf, 0, buf, 8, 16)
    # zero-length copies of the same range are vacuously fine
    mesh.peer_copy(buf, 8, buf, 8, 0)


def test_peer_copy_rejects_out_of_bounds():
    mesh = DeviceMesh(2)
    src = mesh.allocate(0, 16)
    dst = mesh.allocate(1, 16)
    with pytest.raises(ValueError):
        mesh.peer_copy(src, 8, dst, 0, 16)
    with pytest.raises(ValueError):
        mesh.peer_copy(src, 0, dst, 8, 16)


def test_peer_copy_rejects_stale_handle():
    mesh = DeviceMesh(1)
    buf = mesh.allocate(0, 16)
    other = mesh.allocate(0, 16)
    mesh.free(buf)
    with pytest.raises(StaleHandleError):
        mesh.peer_copy(buf, 0, other, 0, 16)


def test_foreign_namespace_handle_rejected():
    mesh = DeviceMesh(2, mode="isolated")

    def worker(ctx):
        return ctx.allocate(16)

    handles = mesh.run_workers(worker)

    # worker-namespace handles must not resolve in the coordinator's space
    with pytest.raises(HandleDomainError):
        mesh.view(handles[0], np.uint8)


# ---------------------------------------------------------------------------
# handle registry
# ---------------------------------------------------------------------------


def test_registry_complete_after_each_publishes():
    mesh = DeviceMesh(4, mode="shared_address")
    registry = HandleRegistry(mesh)

    def worker(ctx):
        registry.publish(ctx.device_index, ctx.allocate(8))

    mesh.run_workers(worker)
    assert registry.complete
    assert registry.missing == []
    assert len(registry.coordinator_handles()) == 4


def test_registry_double_publish():
    mesh = DeviceMesh(4)
    registry = HandleRegistry(mesh)
    handle = mesh.allocate(2, 8)
    registry.publish(2, handle)
    with pytest.raises(RegistryError):
        registry.publish(2, handle)


def test_registry_unknown_device():
    mesh = DeviceMesh(2)
    registry = HandleRegistry(mesh)
    with pytest.raises(ValueError):
        registry.publish(5, mesh.allocate(0, 8))


def test_registry_incomplete_blocks_coordinator():
    mesh = DeviceMesh(3)
    registry = HandleRegistry(mesh)
    registry.publish(1, mesh.allocate(1, 8))
    assert not registry.complete
    assert registry.missing == [0, 2]
    with pytest.raises(RegistryError):
        registry.coordinator_handles()
    with pytest.raises(RegistryError):
        mesh.run_coordinated(lambda: None, registry=registry)


def test_isolated_publish_round_trips_bytes():
    mesh = DeviceMesh(2, mode="isolated")
    registry = HandleRegistry(mesh)
    sentinel = bytes(range(16))

    def worker(ctx):
        handle = ctx.allocate(16)
        ctx.view(handle, np.uint8)[:] = np.frombuffer(sentinel, np.uint8)
        registry.publish(ctx.device_index, handle)

    mesh.run_workers(worker)
    opened = registry.coordinator_handles()

    def body():
        return [mesh.view(h, np.uint8).tobytes() for h in opened]

    assert mesh.run_coordinated(body, registry=registry) == [sentinel, sentinel]


def test_stale_token_rejected():
    mesh = DeviceMesh(1, mode="isolated")
    from bcmg.runtime import HandleToken

    with pytest.raises(StaleHandleError):
        mesh.open_handle(HandleToken(token_id=999, device_index=0, nbytes=8))


# ---------------------------------------------------------------------------
# coordinated execution
# ---------------------------------------------------------------------------


def test_coordinator_sums_first_elements():
    mesh = DeviceMesh(2)
    registry = HandleRegistry(mesh)

    def worker(ctx):
        handle = ctx.allocate(8 * 4)
        ctx.view(handle, np.float64)[:] = float(10 + ctx.device_index)
        registry.publish(ctx.device_index, handle)

    mesh.run_workers(worker)
    handles = registry.coordinator_handles()

    def body():
        return sum(float(mesh.view(h, np.float64)[0]) for h in handles)

    assert mesh.run_coordinated(body, registry=registry) == 21.0


def test_concurrent_coordinators_rejected():
    mesh = DeviceMesh(1)
    inside = threading.Event()
    release = threading.Event()
    errors = []

    def long_body():
        inside.set()
        release.wait(timeout=5)

    def second():
        inside.wait(timeout=5)
        try:
            mesh.run_coordinated(lambda: None)
        except ConcurrentCallError as exc:
            errors.append(exc)
        finally:
            release.set()

    t2 = threading.Thread(target=second)
    t2.start()
    mesh.run_coordinated(long_body)
    t2.join()
    assert len(errors) == 1


def test_worker_exception_propagates():
    mesh = DeviceMesh(3)

    def worker(ctx):
        if ctx.device_index == 1:
            raise RuntimeError("shard setup failed")

    with pytest.raises(RuntimeError, match="shard setup failed"):
        mesh.run_workers(worker)


# ---------------------------------------------------------------------------
# mode equivalence and replay
# ---------------------------------------------------------------------------


def _run_redistribution(mode):
    mesh = DeviceMesh(3, mode=mode)
    a = numbered_columns(6, 11, ElementType.complex64)
    desc = MatrixDescriptor(6, 11, ElementType.complex64)
    dmat = create_distributed(mesh, desc, TileSpec(2))
    write_array(mesh, dmat, a)
    plan = decompose_cycles(build_permutation(11, TileSpec(2), 3))
    mark = len(mesh.copy_log)
    out = mesh.run_coordinated(execute_plan, dmat, plan, mesh)
    return mesh, out, mesh.copy_log[mark:]


def test_modes_bit_identical_on_execute_plan():
    mesh_a, out_a, log_a = _run_redistribution("shared_address")
    mesh_b, out_b, log_b = _run_redistribution("isolated")
    assert log_a == log_b
    snap_a, snap_b = mesh_a.snapshot(), mesh_b.snapshot()
    for d in range(3):
        assert snap_a[d] == snap_b[d]
    assert device_concat(mesh_a, out_a).tobytes() == device_concat(
        mesh_b, out_b
    ).tobytes()


def test_replay_reproduces_post_state():
    mesh = DeviceMesh(3)
    a = numbered_columns(4, 10, ElementType.real64)
    desc = MatrixDescriptor(4, 10, ElementType.real64)
    dmat = create_distributed(mesh, desc, TileSpec(1))
    write_array(mesh, dmat, a)
    plan = decompose_cycles(build_permutation(10, TileSpec(1), 3))
    pre = mesh.snapshot()
    mark = len(mesh.copy_log)
    execute_plan(dmat, plan, mesh)
    post = mesh.snapshot()
    replayed = replay_log(pre, mesh.copy_log[mark:])
    for d, want in post.items():
        got = bytes(replayed[d])
        # allocations made after the snapshot start zeroed; pad to compare
        assert got.ljust(len(want), b"\x00") == want


# ---------------------------------------------------------------------------
# copy-order audit
# ---------------------------------------------------------------------------


def _rec(src, soff, dst, doff, n=8):
    return CopyRecord(src, soff, dst, doff, n)


def test_audit_clean_staged_swap():
    records = [
        _rec(0, 0, SCRATCH_DEVICE, 0),   # save column 0
        _rec(0, 8, 0, 0),                # shift 1 -> 0
        _rec(SCRATCH_DEVICE, 0, 0, 8),   # staged -> 1
    ]
    assert audit_copy_order(records) == []


def test_audit_flags_read_after_overwrite():
    records = [
        _rec(0, 8, 0, 0),  # reads 8..16, overwrites 0..8 unread
        _rec(0, 0, 1, 0),  # reads the clobbered range
    ]
    problems = audit_copy_order(records)
    assert any("after they were overwritten" in p for p in problems)


def test_audit_flags_write_before_read():
    records = [_rec(0, 8, 0, 0)]
    problems = audit_copy_order(records)
    assert len(problems) == 1
    assert "before reading them" in problems[0]


def test_audit_scratch_exempt_as_destination():
    # saving to scratch counts as the read that licenses the overwrite
    records = [
        _rec(0, 0, SCRATCH_DEVICE, 0),
        _rec(SCRATCH_DEVICE, 0, 0, 0),
    ]
    assert audit_copy_order(records) == []


def test_audit_execute_plan_transcript_clean():
    mesh = DeviceMesh(4)
    desc = MatrixDescriptor(3, 13, ElementType.real64)
    dmat = create_distributed(mesh, desc, TileSpec(2))
    write_array(mesh, dmat, numbered_columns(3, 13, ElementType.real64))
    plan = decompose_cycles(build_permutation(13, TileSpec(2), 4))
    mark = len(mesh.copy_log)
    execute_plan(dmat, plan, mesh)
    assert audit_copy_order(mesh.copy_log[mark:]) == []


# ---------------------------------------------------------------------------
# trace output
# ---------------------------------------------------------------------------


def test_write_trace_schema(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace([_rec(0, 0, 1, 16, 32)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "src_device,src_offset,dst_device,dst_offset,nbytes"
    assert lines[1] == "0,0,1,16,32"
