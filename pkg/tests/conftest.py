"""Shared fixtures and small host-side helpers for the test suite."""

import numpy as np
import pytest

from bcmg import DeviceMesh, ElementType, TileSpec
from bcmg.cli import make_matrix
from bcmg.oracle import ref_redistribute

ALL_TYPES = [
    ElementType.real32,
    ElementType.real64,
    ElementType.complex64,
    ElementType.complex128,
]


def fmat(array, dtype=None) -> np.ndarray:
    """Column-major copy, optionally cast, of any array-like."""
    return np.asfortranarray(np.asarray(array, dtype=dtype))


def numbered_columns(n_rows: int, n_cols: int, et: ElementType) -> np.ndarray:
    """Matrix whose every element is distinct, for bit-exact comparisons.

    Complex variants get a different imaginary pattern so that real/imag
    byte lanes cannot be confused by a transposed or shifted copy.
    """
    base = np.arange(n_rows * n_cols, dtype=np.float64).reshape(
        n_rows, n_cols, order="F"
    )
    if et.is_complex:
        return fmat(base - 1j * (base + 0.5), et.dtype)
    return fmat(base, et.dtype)


def cyclic_host(a: np.ndarray, tile_width: int, num_devices: int) -> np.ndarray:
    """Host-side picture of the device-concatenated block-cyclic order."""
    return ref_redistribute(np.asfortranarray(a), tile_width, num_devices)


def device_concat(mesh, dmat) -> np.ndarray:
    """Shard contents side by side in device order, regardless of layout."""
    desc = dmat.descriptor
    dt = desc.element_type.dtype
    parts = []
    for handle in dmat.shards:
        count = handle.nbytes // desc.column_nbytes
        parts.append(np.array(mesh.view(handle, dt, (desc.n_rows, count))))
    return np.asfortranarray(np.hstack(parts))


def random_spd(n: int, et: ElementType, seed: int = 1) -> np.ndarray:
    return make_matrix("random_spd", n, et, seed)


@pytest.fixture
def mesh2():
    return DeviceMesh(2)


@pytest.fixture
def mesh4():
    return DeviceMesh(4)


@pytest.fixture(params=["shared_address", "isolated"])
def any_mode_mesh(request):
    return DeviceMesh(2, mode=request.param)
