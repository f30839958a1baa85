"""Plain-text matrix serialization shared by all modules.

A matrix block is

    matrix <name> <rows> <cols>
    <row 0, space-separated, 17 significant digits>
    ...

Synthesis result files start with a header of `key: value` lines (vertex
count, epsilon, margin) followed by the matrix blocks F, G, P and the
controller weights C0, D0, D0_HAT the simulator needs; lines beginning
with '#' are comments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


def write_matrix(stream, name, matrix):
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    stream.write(f"matrix {name} {m.shape[0]} {m.shape[1]}\n")
    for row in m:
        stream.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _parse_blocks(lines):
    header = {}
    matrices = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("matrix "):
            parts = line.split()
            if len(parts) != 4:
                raise ContractError(f"malformed matrix header: {line!r}")
            name, rows, cols = parts[1], int(parts[2]), int(parts[3])
            data = []
            for _ in range(rows):
                if i >= len(lines):
                    raise ContractError(f"matrix {name!r} truncated")
                data.append([float(v) for v in lines[i].split()])
                if len(data[-1]) != cols:
                    raise ContractError(f"matrix {name!r} row width mismatch")
                i += 1
            matrices[name] = np.array(data)
        elif ":" in line:
            key, _, value = line.partition(":")
            header[key.strip()] = value.strip()
        else:
            raise ContractError(f"unrecognized line: {line!r}")
    return header, matrices


@dataclass
class SynthesisFile:
    """In-memory form of a serialized synthesis result."""

    f: np.ndarray
    g: np.ndarray
    p: np.ndarray
    c0: np.ndarray
    d0: np.ndarray
    d0_hat: np.ndarray
    margin: float
    eps: float
    vertex_count: int


def save_synthesis(path, result, c0, d0, d0_hat):
    """Write a SynthesisResult plus the controller weights it was designed for."""
    with open(path, "w") as fh:
        fh.write("# robust SPR synthesis result\n")
        fh.write(f"vertices: {result.vertex_count}\n")
        fh.write(f"epsilon: {result.eps:.17g}\n")
        fh.write(f"margin: {result.margin:.17g}\n")
        write_matrix(fh, "F", result.f)
        write_matrix(fh, "G", result.g)
        write_matrix(fh, "P", result.p)
        write_matrix(fh, "C0", c0)
        write_matrix(fh, "D0", d0)
        write_matrix(fh, "D0_HAT", d0_hat)


def load_synthesis(path) -> SynthesisFile:
    with open(path) as fh:
        lines = fh.readlines()
    header, matrices = _parse_blocks(lines)
    try:
        return SynthesisFile(
            f=matrices["F"], g=matrices["G"], p=matrices["P"],
            c0=matrices["C0"], d0=matrices["D0"], d0_hat=matrices["D0_HAT"],
            margin=float(header["margin"]),
            eps=float(header["epsilon"]),
            vertex_count=int(header["vertices"]),
        )
    except KeyError as exc:
        raise ContractError(f"synthesis file missing block {exc}") from exc


__all__ = ["write_matrix", "save_synthesis", "load_synthesis", "SynthesisFile"]
