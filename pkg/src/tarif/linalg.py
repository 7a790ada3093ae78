"""Dense matrix primitives: products, numerical rank, row normalization,
between-class scatter, and the CSV/JSON matrix formats used by the
diagnostics dumps.

A "matrix" throughout the package is a 2-D float64 numpy array with finite
entries.  These wrappers add the shape/finiteness contracts the rest of the
code relies on; the heavy lifting is LAPACK via numpy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, NumericalError, ShapeError

_EPS = float(np.finfo(np.float64).eps)


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError(f"{name} contains non-finite entries")
    return m


def _check_finite(m: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise NumericalError(f"{op} produced non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape contract."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return _check_finite(a @ b, "matmul")


@dataclass
class RankEstimate:
    """Numerical rank together with the full singular spectrum."""

    numerical_rank: int
    singular_values: np.ndarray  # descending, all >= 0
    tolerance: float


def numerical_rank(m, rel_tol: float | None = None) -> RankEstimate:
    """Count singular values above ``sigma_max * max(rows, cols) * rel_tol``.

    ``rel_tol`` defaults to machine epsilon, the standard numerical-rank
    convention.  Raises on empty input or SVD non-convergence.
    """
    m = as_matrix(m)
    if m.size == 0:
        raise DegenerateInputError("cannot estimate the rank of an empty matrix")
    if rel_tol is None:
        rel_tol = _EPS
    if not 0.0 < rel_tol < 1.0:
        raise DegenerateInputError(f"rel_tol must be in (0, 1), got {rel_tol}")
    try:
        s = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge within the LAPACK sweep limit for shape {m.shape}: {exc}"
        ) from exc
    tol = float(s[0]) * max(m.shape) * rel_tol
    rank = int(np.count_nonzero(s > tol))
    return RankEstimate(numerical_rank=rank, singular_values=s, tolerance=tol)


def row_normalize(m) -> np.ndarray:
    """Scale each row to sum to one.

    Entries must be non-negative and every row must have positive mass.
    """
    m = as_matrix(m)
    if np.any(m < 0):
        i, j = np.argwhere(m < 0)[0]
        raise DegenerateInputError(f"row_normalize requires non-negative entries; m[{i},{j}] < 0")
    sums = m.sum(axis=1)
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise DegenerateInputError(f"row {bad[0]} sums to zero and cannot be normalized")
    return m / sums[:, None]


def scatter_trace(features, labels) -> float:
    """Trace of the unweighted between-class scatter of ``features``.

    Computed as ``(1/K) * sum_k ||mu_k - mu||^2`` where ``mu_k`` is the
    class-k mean row and ``mu`` the global mean row.
    """
    features = as_matrix(features, "features")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
        raise ShapeError(
            f"labels length {labels.shape} does not match {features.shape[0]} feature rows"
        )
    if labels.size == 0:
        raise DegenerateInputError("scatter_trace needs at least one labeled row")
    classes = np.unique(labels)
    mu = features.mean(axis=0)
    total = 0.0
    for k in classes:
        mu_k = features[labels == k].mean(axis=0)
        diff = mu_k - mu
        total += float(diff @ diff)
    return total / classes.size


# ---------------------------------------------------------------------------
# Serialization: CSV (one row per line, no header) and the JSON dump format.

def save_csv(m, path) -> None:
    m = as_matrix(m)
    with open(path, "w", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_csv(path) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise NumericalError(f"{path}:{lineno}: unparseable matrix row") from exc
            if len(rows[-1]) != len(rows[0]):
                raise ShapeError(
                    f"{path}:{lineno}: ragged row of width {len(rows[-1])}, expected {len(rows[0])}"
                )
    if not rows:
        raise DegenerateInputError(f"{path}: empty matrix file")
    return as_matrix(np.array(rows, dtype=np.float64), str(path))


def to_json_dict(m) -> dict:
    m = as_matrix(m)
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": [float(v) for v in m.ravel()]}


def from_json_dict(d: dict) -> np.ndarray:
    rows, cols = int(d["rows"]), int(d["cols"])
    data = np.asarray(d["data"], dtype=np.float64)
    if data.size != rows * cols:
        raise ShapeError(f"JSON matrix claims {rows}x{cols} but carries {data.size} values")
    return as_matrix(data.reshape(rows, cols), "json matrix")


def save_json(m, path) -> None:
    Path(path).write_text(json.dumps(to_json_dict(m)), encoding="utf-8")


def load_json(path) -> np.ndarray:
    return from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))
