"""Dataset loaders, synthetic generators and solution/trace persistence."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError, DataFormatError
from .objective import Dataset

SCHEMA_VERSION = 1
TRACE_COLUMNS = ("k", "eta_k", "psi", "g", "inner_iters", "dual_est", "stat_resid", "cs_resid", "elapsed_s")


# ---------------------------------------------------------------------- libsvm
def parse_libsvm(lines, dim: Optional[int] = None) -> Dataset:
    """Parse ``label idx:val ...`` lines (1-based indices) into a CSR dataset.

    Blank lines and ``#`` comments are skipped.  ``dim`` fixes the feature
    count; otherwise the largest index seen is used.
    """
    labels, indptr, indices, data = [], [0], [], []
    max_idx = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise DataFormatError(f"bad label {tokens[0]!r}", line=lineno) from None
        seen = set()
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DataFormatError(f"expected idx:value, got {tok!r}", line=lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise DataFormatError(f"malformed feature {tok!r}", line=lineno) from None
            if idx <= 0:
                raise DataFormatError(f"feature index must be >= 1, got {idx}", line=lineno)
            if idx in seen:
                raise DataFormatError(f"duplicate feature index {idx}", line=lineno)
            if not math.isfinite(val):
                raise DataFormatError(f"non-finite value in {tok!r}", line=lineno)
            seen.add(idx)
            indices.append(idx - 1)
            data.append(val)
            max_idx = max(max_idx, idx)
        indptr.append(len(indices))
    if dim is None:
        dim = max_idx
    elif max_idx > dim:
        raise DataFormatError(f"feature index {max_idx} exceeds the requested dimension {dim}")
    A = sp.csr_matrix((np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
                      shape=(len(labels), dim))
    A.sort_indices()
    return Dataset(A, np.asarray(labels, dtype=float))


def load_libsvm(path, dim: Optional[int] = None) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, dim=dim)


def _fmt(v: float) -> str:
    # repr round-trips doubles exactly
    return repr(float(v))


def save_libsvm(path, data: Dataset):
    A = sp.csr_matrix(data.A)
    A.sort_indices()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            feats = " ".join(f"{j + 1}:{_fmt(v)}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            fh.write(f"{_fmt(data.b[i])} {feats}".rstrip() + "\n")


# ------------------------------------------------------------------------- csv
def load_csv(path, label_col: int = 0) -> Dataset:
    """Dense CSV with one sample per row; the label sits in column ``label_col``."""
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if arr.shape[1] < 1:
        raise DataFormatError(f"{path}: no columns")
    b = arr[:, label_col]
    A = np.delete(arr, label_col, axis=1)
    return Dataset(A, b)


def save_csv(path, data: Dataset):
    A = data.A.toarray() if sp.issparse(data.A) else data.A
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        for bi, row in zip(data.b, A):
            w.writerow([_fmt(bi)] + [_fmt(v) for v in row])


def load_dataset(path, dim: Optional[int] = None) -> Dataset:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return load_csv(p)
    return load_libsvm(p, dim=dim)


# ------------------------------------------------------------------- synthetic
@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1000
    d: int = 500
    k_true: int = 20
    noise_sigma: float = 0.1
    design: str = "gaussian"
    rho: float = 0.5
    task: str = "classification"
    seed: int = 0
    min_signal: float = 0.5

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ConfigurationError("n and d must be positive")
        if not 0 <= self.k_true <= self.d:
            raise ConfigurationError(f"k_true must lie in [0, d], got {self.k_true}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be nonnegative")
        if self.design not in ("gaussian", "ar"):
            raise ConfigurationError(f"unknown design {self.design!r} (expected gaussian or ar)")
        if self.design == "ar" and not -1 < self.rho < 1:
            raise ConfigurationError("AR correlation must lie in (-1, 1)")
        if self.task not in ("classification", "regression"):
            raise ConfigurationError(f"unknown task {self.task!r} (expected classification or regression)")


def generate(spec: SyntheticSpec):
    """Draw ``(Dataset, x_true)``; deterministic for a given spec.

    Nonzero entries of ``x_true`` have random signs and magnitudes in
    ``[min_signal, 2*min_signal]``.  The AR design has
    ``corr(a_j, a_l) = rho^|j-l|``.  Classification labels are
    ``sign(a.x + noise)``; exact zeros are replaced by fair coin flips.
    """
    rng = np.random.default_rng(spec.seed)
    Z = rng.standard_normal((spec.n, spec.d))
    if spec.design == "ar":
        A = np.empty_like(Z)
        A[:, 0] = Z[:, 0]
        s = math.sqrt(1.0 - spec.rho ** 2)
        for j in range(1, spec.d):
            A[:, j] = spec.rho * A[:, j - 1] + s * Z[:, j]
    else:
        A = Z
    x_true = np.zeros(spec.d)
    support = rng.choice(spec.d, size=spec.k_true, replace=False)
    mags = spec.min_signal * (1.0 + rng.random(spec.k_true))
    x_true[support] = mags * rng.choice((-1.0, 1.0), size=spec.k_true)
    noise = spec.noise_sigma * rng.standard_normal(spec.n)
    z = A @ x_true + noise
    if spec.task == "regression":
        b = z
    else:
        b = np.sign(z)
        zero = b == 0
        b[zero] = rng.choice((-1.0, 1.0), size=int(zero.sum()))
    return Dataset(A, b), x_true


# ------------------------------------------------------------------ solutions
def save_solution(path, x, meta: Optional[dict] = None):
    doc = {"schema": SCHEMA_VERSION, "x": [float(v) for v in np.asarray(x, dtype=float)]}
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_solution(path):
    """Return ``(x, meta)`` from a solution file or a full JSON report."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc.msg})", line=exc.lineno) from None
    if not isinstance(doc, dict) or "schema" not in doc:
        raise DataFormatError(f"{path}: missing schema field")
    if doc["schema"] != SCHEMA_VERSION:
        raise DataFormatError(f"{path}: schema {doc['schema']!r} is not supported (expected {SCHEMA_VERSION})")
    x, meta = doc.get("x"), doc.get("meta", {})
    if x is None and isinstance(doc.get("solution"), dict):
        x = doc["solution"].get("x")
        if doc["solution"].get("dual") is not None:
            meta = {"dual": doc["solution"]["dual"]}
    if not isinstance(x, list):
        raise DataFormatError(f"{path}: no solution vector")
    return np.asarray(x, dtype=float), meta


# ---------------------------------------------------------------------- traces
def save_trace(path, records: Sequence, columns: Sequence[str] = TRACE_COLUMNS):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for rec in records:
            row = rec if isinstance(rec, dict) else {f.name: getattr(rec, f.name) for f in fields(rec)}
            w.writerow([_cell(row[c]) for c in columns])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def load_trace(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames[: len(TRACE_COLUMNS)]) != TRACE_COLUMNS:
            raise DataFormatError(f"{path}: unexpected trace header {reader.fieldnames!r}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append({k: (int(v) if k in ("k", "inner_iters") else float(v) if v != "" else None)
                            for k, v in row.items()})
            except (TypeError, ValueError):
                raise DataFormatError("malformed trace row", line=lineno) from None
    return out


def spec_dict(spec: SyntheticSpec) -> dict:
    return asdict(spec)
