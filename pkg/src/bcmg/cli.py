"""Verification and benchmarking command line.

Three subcommands: ``verify`` runs a routine over a tile/device sweep and
checks named invariants (exit 0 when all pass, 1 with the failing check
named on stderr, 2 for configuration errors), ``bench`` times repeated
runs and emits a CSV row per repetition, and ``gen`` writes test matrices
in the binary matrix format.  ``verify`` and ``bench`` share the same
residual functions and render values with ``repr``, so a residual printed
by one matches the other bit for bit under the same configuration.

Random matrices come from a Philox 4x64 counter-based generator keyed by
--seed, so the same seed reproduces the same matrix everywhere.
"""

from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
from dataclasses import dataclass

import numpy as np

from .core import (
    DescriptorError,
    ElementType,
    MatrixFileError,
    TileSpec,
    read_matrix,
    write_matrix,
)
from .runtime import ArenaExhaustedError, DeviceMesh, write_trace
from .solvers import (
    ConvergenceError,
    NotPositiveDefiniteError,
    eigh_hermitian,
    invert_positive_definite,
    solve_positive_definite,
)

__all__ = [
    "ROUTINES",
    "MATRIX_KINDS",
    "CLI_MODES",
    "MODE_ENV_VAR",
    "BENCH_COLUMNS",
    "BenchConfig",
    "make_generator",
    "make_matrix",
    "solve_residual",
    "inverse_residual",
    "eigen_residual",
    "orthonormality_defect",
    "main",
]

ROUTINES = ("potrs", "potri", "syevd")
MATRIX_KINDS = ("diag", "random_spd")
MODE_ENV_VAR = "BCMG_MODE"
# CLI mode names; spmd shares one address space, mpmd isolates workers.
CLI_MODES = ("spmd", "mpmd")
_RUNTIME_MODE = {"spmd": "shared_address", "mpmd": "isolated"}
BENCH_COLUMNS = [
    "routine", "n", "tile", "devices", "dtype", "mode", "rep",
    "alloc_seconds", "solve_seconds", "residual",
]

_DTYPE_NAMES = {
    ElementType.real32: "f32",
    ElementType.real64: "f64",
    ElementType.complex64: "c64",
    ElementType.complex128: "c128",
}


# -- test-problem generation -------------------------------------------------


def make_generator(seed: int) -> np.random.Generator:
    """Counter-based generator, reproducible across platforms."""
    return np.random.Generator(np.random.Philox(key=seed))


def make_matrix(kind: str, n: int, element_type: ElementType, seed: int) -> np.ndarray:
    """A positive-definite test matrix.

    ``diag`` is diag(1..n); ``random_spd`` is B B^H + n I with B uniform
    on [-1, 1), made exactly Hermitian.
    """
    dt = element_type.dtype
    if kind == "diag":
        return np.asfortranarray(np.diag(np.arange(1, n + 1)).astype(dt))
    if kind == "random_spd":
        gen = make_generator(seed)
        b = gen.uniform(-1.0, 1.0, (n, n))
        if element_type.is_complex:
            b = b + 1j * gen.uniform(-1.0, 1.0, (n, n))
        a = b @ b.conj().T + n * np.eye(n)
        a = (a + a.conj().T) / 2
        return np.asfortranarray(a.astype(dt))
    raise ValueError(f"unknown matrix kind {kind!r}")


# -- residual metrics (always evaluated at 64-bit precision) ------------------


def _f64(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.complex128 if np.iscomplexobj(arr) else np.float64)


def solve_residual(a: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    """||A x - b||_F / (||A||_F ||x||_F + ||b||_F)."""
    a64, x64, b64 = _f64(a), _f64(x), _f64(b)
    num = np.linalg.norm(a64 @ x64 - b64)
    den = np.linalg.norm(a64) * np.linalg.norm(x64) + np.linalg.norm(b64)
    return float(num / den) if den else float(num)


def inverse_residual(a: np.ndarray, inv: np.ndarray) -> float:
    """||A X - I||_F / sqrt(n)."""
    a64 = _f64(a)
    n = a64.shape[0]
    return float(np.linalg.norm(a64 @ _f64(inv) - np.eye(n)) / np.sqrt(n))


def eigen_residual(a: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """||A V - V diag(w)||_F / ||A||_F."""
    a64, v64 = _f64(a), _f64(v)
    num = np.linalg.norm(a64 @ v64 - v64 * np.asarray(w, dtype=np.float64))
    den = np.linalg.norm(a64)
    return float(num / den) if den else float(num)


def orthonormality_defect(v: np.ndarray) -> float:
    """||V^H V - I||_F."""
    v64 = _f64(v)
    n = v64.shape[1]
    return float(np.linalg.norm(v64.conj().T @ v64 - np.eye(n)))


def _residual_tol(element_type: ElementType, n: int) -> float:
    return 100.0 * n * element_type.eps


def _elementwise_tol(element_type: ElementType) -> float:
    return 1e-12 if element_type.eps < 1e-10 else 1e-4


def _eigen_diag_tol(element_type: ElementType) -> float:
    return 1e-10 if element_type.eps < 1e-10 else 1e-4


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark run: problem, distribution and repetition settings."""

    routine: str
    n: int
    tile_width: int
    devices: int
    element_type: ElementType
    mode: str
    reps: int
    seed: int
    matrix_source: str = "diag"
    n_rhs: int = 1
    arena_cap: int | None = None


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tile", type=_int_list, default=None,
                        help="tile width(s), comma list (default min(64, n))")
    parser.add_argument("--devices", type=_int_list, default=[1],
                        help="simulated device count(s), comma list")
    parser.add_argument("--dtype", choices=sorted(_DTYPE_NAMES.values()),
                        default="f64", help="element type")
    parser.add_argument("--mode", choices=CLI_MODES, default=None,
                        help=f"coordination mode (default ${MODE_ENV_VAR} or spmd)")
    parser.add_argument("--matrix", default="diag", metavar="SOURCE",
                        help="diag, random_spd, or file:PATH")
    parser.add_argument("--seed", type=int, default=1,
                        help="seed for generated matrices")
    parser.add_argument("--nrhs", type=int, default=1,
                        help="right-hand-side columns (potrs)")
    parser.add_argument("--trace", metavar="PATH",
                        help="write the peer-copy transcript as CSV")
    parser.add_argument("--arena-cap", type=int, default=None, metavar="BYTES",
                        help="per-device memory limit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcmg",
        description="Distributed dense linear algebra on simulated devices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="run a routine and check invariants")
    verify.add_argument("--routine", required=True, choices=ROUTINES)
    verify.add_argument("--n", type=int, help="matrix order")
    verify.add_argument("--rhs", metavar="PATH",
                        help="read the right-hand side from a file (potrs)")
    verify.add_argument("--result-out", metavar="PATH",
                        help="write the solution/inverse/eigenvectors")
    verify.add_argument("--eigenvalues-out", metavar="PATH",
                        help="write eigenvalues as an n x 1 matrix (syevd)")
    verify.add_argument("--tolerance", type=float, default=None,
                        help="override every check tolerance")
    _common_arguments(verify)

    bench = sub.add_parser("bench", help="time repeated runs, CSV per rep")
    bench.add_argument("--routine", required=True, choices=ROUTINES)
    bench.add_argument("--n", type=int, required=True)
    bench.add_argument("--reps", type=int, default=5)
    bench.add_argument("--out", default="-", metavar="PATH",
                       help="CSV destination (default stdout)")
    _common_arguments(bench)

    gen = sub.add_parser("gen", help="write a test matrix file")
    gen.add_argument("--kind", required=True, choices=(*MATRIX_KINDS, "ones"))
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--nrhs", type=int, default=1, help="columns for --kind ones")
    gen.add_argument("--dtype", choices=sorted(_DTYPE_NAMES.values()),
                     default="f64")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--out", required=True, metavar="PATH")
    return parser


def _resolve_mode(args) -> str:
    mode = args.mode if args.mode is not None else os.environ.get(MODE_ENV_VAR, "spmd")
    if mode not in CLI_MODES:
        raise DescriptorError(
            "type-structure", f"{MODE_ENV_VAR}={mode!r} is not one of {CLI_MODES}"
        )
    return mode


def _make_mesh(devices: int, mode: str, arena_cap: int | None) -> DeviceMesh:
    if devices < 1:
        raise DescriptorError(
            "dimension-mismatch", f"--devices must be >= 1, got {devices}"
        )
    return DeviceMesh(devices, mode=_RUNTIME_MODE[mode], arena_capacity=arena_cap)


def _tile_sweep(args, n: int) -> list[int]:
    return args.tile if args.tile else [min(64, n)]


def _load_problem(args, parser):
    """The input matrix plus its element type and generator kind."""
    source = args.matrix
    if source.startswith("file:"):
        a = read_matrix(source[len("file:"):])
        if a.shape[0] != a.shape[1]:
            raise DescriptorError(
                "dimension-mismatch",
                f"input matrix must be square, got {a.shape[0]}x{a.shape[1]}",
            )
        return a, ElementType.from_dtype(a.dtype), None
    if source not in MATRIX_KINDS:
        raise DescriptorError(
            "type-structure",
            f"--matrix must be one of {MATRIX_KINDS} or file:PATH, got {source!r}",
        )
    if args.n is None:
        parser.error("--n is required unless --matrix file:PATH is given")
    et = ElementType.from_name(args.dtype)
    return make_matrix(source, args.n, et, args.seed), et, source


# -- verify -------------------------------------------------------------------


def _verify_one(args, a, et, kind, tile_width, devices, mode):
    """Run one configuration; returns [(check, value, tol)] plus outputs."""
    n = a.shape[0]
    tile = TileSpec(tile_width)
    mesh = _make_mesh(devices, mode, args.arena_cap)
    override = args.tolerance
    res_tol = override if override is not None else _residual_tol(et, n)
    elem_tol = override if override is not None else _elementwise_tol(et)
    checks: list[tuple[str, float, float]] = []

    if args.routine == "potrs":
        if args.rhs:
            b = read_matrix(args.rhs)
            if ElementType.from_dtype(b.dtype) is not et:
                raise DescriptorError(
                    "type-structure",
                    "right-hand side element type does not match the matrix",
                )
            generated_rhs = False
        else:
            b = np.ones((n, args.nrhs), dtype=et.dtype, order="F")
            generated_rhs = True
        x, _ = solve_positive_definite(mesh, a, b, tile)
        checks.append(("solve-residual", solve_residual(a, x, b), res_tol))
        if kind == "diag" and generated_rhs:
            expected = 1.0 / np.arange(1, n + 1, dtype=np.float64)
            err = float(np.abs(_f64(x) - expected[:, None]).max())
            checks.append(("diag-solution", err, elem_tol))
        result = x
    elif args.routine == "potri":
        inv, _ = invert_positive_definite(mesh, a, tile)
        checks.append(("inverse-residual", inverse_residual(a, inv), res_tol))
        if kind == "diag":
            expected = np.diag(1.0 / np.arange(1, n + 1, dtype=np.float64))
            err = float(np.abs(_f64(inv) - expected).max())
            checks.append(("diag-inverse", err, elem_tol))
        result = inv
    else:
        w, v, _ = eigh_hermitian(mesh, a, tile)
        checks.append(("eigen-residual", eigen_residual(a, w, v), res_tol))
        checks.append(("orthonormal", orthonormality_defect(v), res_tol))
        ascent = float(max(0.0, np.max(w[:-1] - w[1:]))) if n > 1 else 0.0
        checks.append(("ascending", ascent, 0.0))
        if kind == "diag":
            idx = np.arange(1, n + 1, dtype=np.float64)
            err = float(np.max(np.abs(w.astype(np.float64) - idx)))
            diag_tol = override if override is not None else _eigen_diag_tol(et)
            checks.append(("diag-eigenvalues", err, diag_tol))
        if args.eigenvalues_out:
            write_matrix(args.eigenvalues_out, w.reshape(-1, 1))
        result = v

    if args.result_out:
        write_matrix(args.result_out, result)
    if args.trace:
        write_trace(mesh.copy_log, args.trace)
    return checks


def _cmd_verify(args, parser) -> int:
    a, et, kind = _load_problem(args, parser)
    n = a.shape[0]
    mode = _resolve_mode(args)
    failed: list[str] = []
    for tile_width in _tile_sweep(args, n):
        for devices in args.devices:
            checks = _verify_one(args, a, et, kind, tile_width, devices, mode)
            for name, value, tol in checks:
                ok = value <= tol  # False for NaN as well
                if not ok:
                    failed.append(name)
                print(
                    f"{'PASS' if ok else 'FAIL'} {name} tile={tile_width} "
                    f"devices={devices} value={value!r} tol={tol!r}"
                )
    if failed:
        print(f"failed: {failed[0]}", file=sys.stderr)
        return 1
    return 0


# -- bench --------------------------------------------------------------------


def _bench_once(cfg: BenchConfig, a: np.ndarray, trace_path=None):
    tile = TileSpec(cfg.tile_width)
    mesh = _make_mesh(cfg.devices, cfg.mode, cfg.arena_cap)
    if cfg.routine == "potrs":
        b = np.ones((cfg.n, cfg.n_rhs), dtype=cfg.element_type.dtype, order="F")
        x, timings = solve_positive_definite(mesh, a, b, tile)
        residual = solve_residual(a, x, b)
    elif cfg.routine == "potri":
        inv, timings = invert_positive_definite(mesh, a, tile)
        residual = inverse_residual(a, inv)
    else:
        w, v, timings = eigh_hermitian(mesh, a, tile)
        residual = eigen_residual(a, w, v)
    if trace_path:
        write_trace(mesh.copy_log, trace_path)
    return timings, residual


def _cmd_bench(args, parser) -> int:
    if args.reps < 1:
        parser.error("--reps must be >= 1")
    a, et, kind = _load_problem(args, parser)
    n = a.shape[0]
    mode = _resolve_mode(args)
    source = kind if kind is not None else args.matrix
    close_out = args.out != "-"
    stream = open(args.out, "w", newline="") if close_out else sys.stdout
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        sweep = [
            (t, d) for t in _tile_sweep(args, n) for d in args.devices
        ]
        for tile_width, devices in sweep:
            cfg = BenchConfig(
                routine=args.routine,
                n=n,
                tile_width=tile_width,
                devices=devices,
                element_type=et,
                mode=mode,
                reps=args.reps,
                seed=args.seed,
                matrix_source=source,
                n_rhs=args.nrhs,
                arena_cap=args.arena_cap,
            )
            allocs, solves = [], []
            for rep in range(cfg.reps):
                last = (tile_width, devices) == sweep[-1] and rep == cfg.reps - 1
                timings, residual = _bench_once(
                    cfg, a, trace_path=args.trace if last else None
                )
                allocs.append(timings.alloc_seconds)
                solves.append(timings.solve_seconds)
                writer.writerow([
                    cfg.routine, cfg.n, cfg.tile_width, cfg.devices,
                    _DTYPE_NAMES[cfg.element_type], cfg.mode, rep,
                    repr(timings.alloc_seconds), repr(timings.solve_seconds),
                    repr(residual),
                ])
            print(
                f"{cfg.routine} n={cfg.n} tile={cfg.tile_width} "
                f"devices={cfg.devices} dtype={_DTYPE_NAMES[cfg.element_type]} "
                f"mode={cfg.mode} reps={cfg.reps}: "
                f"alloc min={min(allocs):.9f} "
                f"median={statistics.median(allocs):.9f} s; "
                f"solve min={min(solves):.9f} "
                f"median={statistics.median(solves):.9f} s",
                file=sys.stderr,
            )
    finally:
        if close_out:
            stream.close()
    return 0


# -- gen ----------------------------------------------------------------------


def _cmd_gen(args) -> int:
    et = ElementType.from_name(args.dtype)
    if args.kind == "ones":
        arr = np.ones((args.n, args.nrhs), dtype=et.dtype, order="F")
    else:
        arr = make_matrix(args.kind, args.n, et, args.seed)
    write_matrix(args.out, arr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return _cmd_verify(args, parser)
        if args.command == "bench":
            return _cmd_bench(args, parser)
        return _cmd_gen(args)
    except (DescriptorError, MatrixFileError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NotPositiveDefiniteError as exc:
        print(f"not positive definite: pivot={exc.pivot}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return 1
    except ArenaExhaustedError as exc:
        print(f"out of device memory: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
