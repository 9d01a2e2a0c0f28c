"""Sentence-embedding matrices: file I/O, PCA reduction and a hashing embedder for tests.

Binary layout (little-endian)::

    b"EMB1" | rows: u64 | dims: u32 | rows*dims float32, row-major

The JSONL alternative holds one JSON array of numbers per line.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .metrics import tokenize

__all__ = [
    "EmbeddingError",
    "EmbeddingMatrix",
    "PcaModel",
    "as_matrix",
    "load_embeddings",
    "save_embeddings",
    "jacobi_eigh",
    "fit_pca",
    "apply_pca",
    "hash_embed",
]

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sQI")

# cyclic Jacobi is used up to this size; larger covariances go to LAPACK
JACOBI_MAX_DIM = 256


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Row-major float32 matrix; row ``i`` belongs to corpus id ``i``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise EmbeddingError(f"embedding matrix must be 2-D, got shape {data.shape}")
        if data.size and not np.isfinite(data).all():
            bad = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise EmbeddingError(f"non-finite value in row {bad}")
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.rows

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def as_matrix(m) -> EmbeddingMatrix:
    return m if isinstance(m, EmbeddingMatrix) else EmbeddingMatrix(np.asarray(m))


def load_embeddings(path, format: str | None = None) -> EmbeddingMatrix:
    """Read an embedding file; ``format`` is ``"binary"`` or ``"jsonl"`` (guessed from the suffix)."""
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix in (".jsonl", ".json") else "binary"
    if format == "binary":
        with open(path, "rb") as f:
            head = f.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise EmbeddingError(f"{path}: truncated header")
            magic, rows, dims = _HEADER.unpack(head)
            if magic != MAGIC:
                raise EmbeddingError(f"{path}: bad magic {magic!r}")
            body = f.read()
        expected = rows * dims * 4
        if len(body) != expected:
            raise EmbeddingError(f"{path}: expected {expected} payload bytes for {rows}x{dims}, got {len(body)}")
        data = np.frombuffer(body, dtype="<f4").reshape(rows, dims)
        return EmbeddingMatrix(data)
    if format == "jsonl":
        rows_out = []
        dims = None
        with open(path, encoding="utf-8") as f:
            for i, line in enumerate(f):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as e:
                    raise EmbeddingError(f"{path}: row {i}: invalid JSON ({e.msg})") from None
                if not isinstance(row, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in row
                ):
                    raise EmbeddingError(f"{path}: row {i}: expected an array of numbers")
                if dims is None:
                    dims = len(row)
                elif len(row) != dims:
                    raise EmbeddingError(f"{path}: row {i}: has {len(row)} dims, expected {dims}")
                arr = np.asarray(row, dtype=np.float64)
                if not np.isfinite(arr).all():
                    raise EmbeddingError(f"{path}: row {i}: non-finite value")
                rows_out.append(arr)
        if not rows_out:
            return EmbeddingMatrix(np.zeros((0, 0), dtype=np.float32))
        return EmbeddingMatrix(np.vstack(rows_out))
    raise ValueError(f"unknown embedding format {format!r}")


def save_embeddings(m, path, format: str = "binary") -> None:
    m = as_matrix(m)
    if format == "binary":
        with atomic_open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, m.rows, m.dims))
            f.write(m.data.astype("<f4", copy=False).tobytes())
    elif format == "jsonl":
        with atomic_open(path) as f:
            for row in m.data:
                f.write(json.dumps([float(v) for v in row]) + "\n")
    else:
        raise ValueError(f"unknown embedding format {format!r}")


# ---------------------------------------------------------------- PCA


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns, in
    the order the rotations leave them (unsorted).
    """
    a = np.array(a, dtype=np.float64, copy=True)
    d = a.shape[0]
    if a.shape != (d, d):
        raise ValueError("jacobi_eigh needs a square matrix")
    v = np.eye(d)
    scale = np.sqrt(np.sum(a * a))
    if d < 2 or scale == 0.0:
        return np.diag(a).copy(), v
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray                # (d,)
    components: np.ndarray          # (k, d), variance-descending rows
    explained_variance: np.ndarray  # (k,)

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dims(self) -> int:
        return self.mean.shape[0]

    def save(self, path) -> None:
        with atomic_open(path, "wb") as f:
            np.savez(f, mean=self.mean, components=self.components, explained_variance=self.explained_variance)

    @classmethod
    def load(cls, path) -> "PcaModel":
        with np.load(path) as z:
            return cls(z["mean"], z["components"], z["explained_variance"])


def fit_pca(
    m,
    k: int = 32,
    sample_size: int = 500_000,
    seed: int = 0,
    method: str = "auto",
) -> PcaModel:
    """Fit PCA on a seeded uniform row sample (all rows if fewer than ``sample_size``).

    The sample covariance uses ``1/(n-1)``. ``method`` picks the eigensolver:
    ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to 256 dims). Each
    component is sign-normalized so its largest-magnitude entry is positive.
    """
    m = as_matrix(m)
    n, d = m.rows, m.dims
    if k < 0 or k > d:
        raise EmbeddingError(f"k={k} must be in 0..{d}")
    if sample_size < k:
        raise EmbeddingError(f"sample_size={sample_size} must be >= k={k}")
    if n > sample_size:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=sample_size, replace=False))
        x = m.data[idx].astype(np.float64)
    else:
        x = m.data.astype(np.float64)
    if x.shape[0] < 2:
        raise EmbeddingError("PCA needs at least 2 sample rows")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / (x.shape[0] - 1)
    cov = (cov + cov.T) / 2.0

    if method == "auto":
        method = "jacobi" if d <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        evals, evecs = jacobi_eigh(cov)
    elif method == "lapack":
        evals, evecs = np.linalg.eigh(cov)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")

    order = np.argsort(-evals, kind="stable")[:k]
    comps = evecs[:, order].T.copy()
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    var = np.clip(evals[order], 0.0, None)
    return PcaModel(mean, comps, var)


def apply_pca(model: PcaModel, m) -> EmbeddingMatrix:
    """Project rows onto the model's components: ``(row - mean) @ components.T``."""
    m = as_matrix(m)
    if m.rows and m.dims != model.dims:
        raise EmbeddingError(f"matrix has {m.dims} dims, PCA model expects {model.dims}")
    if m.rows == 0:
        return EmbeddingMatrix(np.zeros((0, model.k), dtype=np.float32))
    out = (m.data.astype(np.float64) - model.mean) @ model.components.T
    return EmbeddingMatrix(out)


# ---------------------------------------------------------------- hashing embedder


def _token_slot(token: str, dims: int, key: bytes) -> tuple[int, float]:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    v = int.from_bytes(h, "little")
    return (v >> 1) % dims, (1.0 if v & 1 else -1.0)


def hash_embed(texts: Sequence[str], dims: int = 64, seed: int = 0) -> EmbeddingMatrix:
    """Deterministic bag-of-tokens embedding: signed feature hashing, L2-normalized rows.

    Only meant as a stand-in for a real sentence encoder in tests and demos.
    Texts with no tokens map to the zero vector.
    """
    if dims < 1:
        raise EmbeddingError("dims must be >= 1")
    key = seed.to_bytes(8, "little", signed=True)
    out = np.zeros((len(texts), dims), dtype=np.float64)
    cache: dict[str, tuple[int, float]] = {}
    for i, text in enumerate(texts):
        row = out[i]
        for tok in tokenize(text):
            slot = cache.get(tok)
            if slot is None:
                slot = cache[tok] = _token_slot(tok, dims, key)
            row[slot[0]] += slot[1]
        norm = np.linalg.norm(row)
        if norm > 0:
            row /= norm
    return EmbeddingMatrix(out)
