"""Shared domain types: element types, matrix descriptors, tile widths, and
the binary matrix file format used by the CLI and the reference oracles.

All matrices in this library are dense and column-major.  Symmetric and
Hermitian matrices are stored full (both triangles); solver routines read
the lower triangle.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "STORAGE_ORDER",
    "MATRIX_FILE_MAGIC",
    "DescriptorError",
    "MatrixFileError",
    "ConvergenceError",
    "ElementType",
    "Structure",
    "MatrixDescriptor",
    "TileSpec",
    "RhsDescriptor",
    "validate_descriptor",
    "validate_tile",
    "write_matrix",
    "read_matrix",
]

STORAGE_ORDER = "column-major"

MATRIX_FILE_MAGIC = b"BCMG"
# magic (4s), element-type code (u8), 3 reserved bytes, n_rows/n_cols (u32 LE)
_FILE_HEADER = struct.Struct("<4sB3xII")


class DescriptorError(ValueError):
    """A descriptor violates one of its invariants.

    ``kind`` is one of ``"dimension-mismatch"``, ``"type-structure"`` or
    ``"tile-width"``.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class MatrixFileError(ValueError):
    """A matrix file has a malformed header or inconsistent payload."""


class ConvergenceError(ArithmeticError):
    """An eigenvalue iteration exceeded its step budget."""


class ElementType(enum.Enum):
    """The four supported element types.

    Complex elements are stored as interleaved (real, imaginary) pairs of
    the matching real width, so the widths are 4, 8, 8 and 16 bytes.  The
    enum value is also the element-type code in the matrix file header.
    """

    real32 = 0
    real64 = 1
    complex64 = 2
    complex128 = 3

    @property
    def code(self) -> int:
        return self.value

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[self]

    @property
    def real_dtype(self) -> np.dtype:
        """The matching real dtype (identity for real element types)."""
        return _REAL_DTYPES[self]

    @property
    def width(self) -> int:
        """Bytes per element."""
        return self.dtype.itemsize

    @property
    def is_complex(self) -> bool:
        return self in (ElementType.complex64, ElementType.complex128)

    @property
    def eps(self) -> float:
        """Machine epsilon of the matching real width."""
        return float(np.finfo(self.real_dtype).eps)

    @classmethod
    def from_code(cls, code: int) -> "ElementType":
        try:
            return cls(code)
        except ValueError:
            raise MatrixFileError(f"unknown element-type code {code}") from None

    @classmethod
    def from_dtype(cls, dtype) -> "ElementType":
        dtype = np.dtype(dtype)
        for et, dt in _DTYPES.items():
            if dt == dtype:
                return et
        raise ValueError(f"unsupported dtype {dtype}")

    @classmethod
    def from_name(cls, name: str) -> "ElementType":
        try:
            return _NAMES[name]
        except KeyError:
            raise ValueError(f"unknown element type {name!r}") from None


_DTYPES = {
    ElementType.real32: np.dtype("<f4"),
    ElementType.real64: np.dtype("<f8"),
    ElementType.complex64: np.dtype("<c8"),
    ElementType.complex128: np.dtype("<c16"),
}

_REAL_DTYPES = {
    ElementType.real32: np.dtype("<f4"),
    ElementType.real64: np.dtype("<f8"),
    ElementType.complex64: np.dtype("<f4"),
    ElementType.complex128: np.dtype("<f8"),
}

_NAMES = {
    "f32": ElementType.real32,
    "f64": ElementType.real64,
    "c64": ElementType.complex64,
    "c128": ElementType.complex128,
}


class Structure(enum.Enum):
    """Structural tag of a matrix.

    ``positive_definite`` covers both the real-symmetric and the
    complex-Hermitian positive-definite cases.
    """

    general = "general"
    symmetric = "symmetric"
    hermitian = "hermitian"
    positive_definite = "pd"


@dataclass(frozen=True)
class MatrixDescriptor:
    """Global shape, element type and structure of a dense matrix.

    Storage order is fixed column-major everywhere in the library.
    """

    n_rows: int
    n_cols: int
    element_type: ElementType
    structure: Structure = Structure.general

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise DescriptorError(
                "dimension-mismatch",
                f"matrix dimensions must be positive, got {self.n_rows}x{self.n_cols}",
            )

    @property
    def storage_order(self) -> str:
        return STORAGE_ORDER

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nbytes(self) -> int:
        return self.n_rows * self.n_cols * self.element_type.width

    @property
    def column_nbytes(self) -> int:
        return self.n_rows * self.element_type.width


@dataclass(frozen=True)
class TileSpec:
    """Width, in columns, of the tiles of the block-cyclic layout."""

    tile_width: int

    def __post_init__(self):
        if self.tile_width < 1:
            raise DescriptorError(
                "tile-width", f"tile width must be positive, got {self.tile_width}"
            )


@dataclass(frozen=True)
class RhsDescriptor:
    """Shape and element type of a right-hand-side block."""

    n_rows: int
    n_rhs: int
    element_type: ElementType

    def __post_init__(self):
        if self.n_rows < 1 or self.n_rhs < 1:
            raise DescriptorError(
                "dimension-mismatch",
                f"right-hand side must be non-empty, got {self.n_rows}x{self.n_rhs}",
            )


def validate_descriptor(desc: MatrixDescriptor) -> None:
    """Check every descriptor invariant, raising ``DescriptorError``.

    Symmetric, Hermitian and positive-definite matrices must be square;
    ``hermitian`` pairs only with complex element types and ``symmetric``
    only with real ones.
    """
    if desc.structure is not Structure.general and desc.n_rows != desc.n_cols:
        raise DescriptorError(
            "dimension-mismatch",
            f"{desc.structure.name} matrix must be square, got {desc.n_rows}x{desc.n_cols}",
        )
    if desc.structure is Structure.hermitian and not desc.element_type.is_complex:
        raise DescriptorError(
            "type-structure",
            f"hermitian structure requires a complex element type, got {desc.element_type.name}",
        )
    if desc.structure is Structure.symmetric and desc.element_type.is_complex:
        raise DescriptorError(
            "type-structure",
            f"symmetric structure requires a real element type, got {desc.element_type.name}",
        )


def validate_tile(tile: TileSpec, n_cols: int) -> None:
    """A tile must be at least one column and at most the matrix width."""
    if not 1 <= tile.tile_width <= n_cols:
        raise DescriptorError(
            "tile-width",
            f"tile width {tile.tile_width} out of range for {n_cols} columns",
        )


def write_matrix(path, array: np.ndarray) -> None:
    """Write a 2-D array to ``path`` in the binary matrix format.

    Layout: 16-byte header (magic ``BCMG``, element-type code, three
    reserved bytes, ``n_rows`` and ``n_cols`` as little-endian u32),
    followed by column-major element data with complex values stored as
    (real, imaginary) pairs.
    """
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D array, got ndim={array.ndim}")
    et = ElementType.from_dtype(array.dtype)
    n_rows, n_cols = array.shape
    header = _FILE_HEADER.pack(MATRIX_FILE_MAGIC, et.code, n_rows, n_cols)
    payload = np.asfortranarray(array.astype(et.dtype, copy=False)).tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_matrix(path) -> np.ndarray:
    """Read a matrix file written by :func:`write_matrix`.

    Returns a writable column-major array.  Raises ``MatrixFileError`` on a
    bad magic, unknown element-type code, or a payload whose size does not
    match the header.
    """
    with open(path, "rb") as fh:
        header = fh.read(_FILE_HEADER.size)
        if len(header) != _FILE_HEADER.size:
            raise MatrixFileError(f"truncated header in {path}")
        magic, code, n_rows, n_cols = _FILE_HEADER.unpack(header)
        if magic != MATRIX_FILE_MAGIC:
            raise MatrixFileError(f"bad magic {magic!r} in {path}")
        et = ElementType.from_code(code)
        if n_rows < 1 or n_cols < 1:
            raise MatrixFileError(f"bad dimensions {n_rows}x{n_cols} in {path}")
        payload = fh.read()
    expected = n_rows * n_cols * et.width
    if len(payload) != expected:
        raise MatrixFileError(
            f"payload of {len(payload)} bytes does not match header "
            f"({n_rows}x{n_cols} {et.name}, expected {expected}) in {path}"
        )
    data = np.frombuffer(payload, dtype=et.dtype).copy()
    return data.reshape((n_rows, n_cols), order="F")
