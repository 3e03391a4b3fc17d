"""File formats: hermitian forms, potentials, generators and reports.

Hermitian forms are JSON objects ``{"N": N, "entries": [[re, im], ...]}``
with entries in row-major order. Generators use the same layout under
``"matrix"``, or ``{"eigenvalues": [...], "unitary": {...}}`` with an optional
unitary (identity when absent); ``"integral"`` flags an integral spectrum.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .bergman import GeodesicGenerator
from .model import Potential


def hermitian_to_json(H) -> dict:
    H = np.asarray(H, dtype=complex)
    N = H.shape[0]
    return {"N": int(N), "entries": [[float(z.real), float(z.imag)] for z in H.reshape(-1)]}


def hermitian_from_json(obj: dict) -> np.ndarray:
    N = int(obj["N"])
    ent = np.asarray(obj["entries"], dtype=float)
    if ent.shape != (N * N, 2):
        raise ValueError(f"expected {N * N} [re, im] pairs, got array of shape {ent.shape}")
    return (ent[:, 0] + 1j * ent[:, 1]).reshape(N, N)


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def save_hermitian(path, H):
    Path(path).write_text(dumps(hermitian_to_json(H)))


def load_hermitian(path) -> np.ndarray:
    return hermitian_from_json(json.loads(Path(path).read_text()))


def potential_to_csv(phi: Potential) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["index", "value"])
    for i, x in enumerate(np.asarray(phi.values, dtype=float)):
        wr.writerow([i, repr(float(x))])
    return buf.getvalue()


def potential_from_csv(text: str) -> Potential:
    rows = list(csv.reader(io.StringIO(text)))
    vals = [float(r[1]) for r in rows[1:] if r]
    return Potential(np.asarray(vals))


def generator_to_json(gen: GeodesicGenerator) -> dict:
    out = hermitian_to_json(gen.A)
    return {"matrix": out, "integral": bool(gen.integral)}


def generator_from_json(obj: dict) -> GeodesicGenerator:
    integral = bool(obj.get("integral", False))
    if "matrix" in obj:
        return GeodesicGenerator(hermitian_from_json(obj["matrix"]), integral)
    if "eigenvalues" not in obj:
        raise ValueError("generator JSON needs 'matrix' or 'eigenvalues'")
    lam = np.asarray(obj["eigenvalues"], dtype=float)
    if "unitary" not in obj:
        return GeodesicGenerator.diagonal(lam, integral)
    U = hermitian_from_json(obj["unitary"])
    if np.abs(U.conj().T @ U - np.eye(len(lam))).max() > 1e-10:
        raise ValueError("'unitary' is not unitary")
    return GeodesicGenerator((U * lam) @ U.conj().T, integral)


def load_generator(path) -> GeodesicGenerator:
    return generator_from_json(json.loads(Path(path).read_text()))


def save_generator(path, gen: GeodesicGenerator):
    Path(path).write_text(dumps(generator_to_json(gen)))
