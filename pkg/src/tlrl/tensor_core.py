"""PARAFAC (CP) tensors: entry and fiber evaluation, matricization, ALS, NFE.

All indices are zero-based. A rank-``K`` model over shape ``(N_1, ..., N_D)``
stores ``D`` factor matrices, factor ``d`` of shape ``(N_d, K)``, and

    X[i_1, ..., i_D] = sum_k prod_d F_d[i_d, k].

Dense tensors are row-major (last index fastest).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_DENSE = 10**7
_MAGIC = b"TLRT"
_VERSION = 1


class CapacityError(ValueError):
    """Raised when a dense materialization would exceed ``MAX_DENSE`` entries."""


def _check_shape(dims):
    dims = tuple(int(n) for n in dims)
    if len(dims) < 1 or any(n < 1 for n in dims):
        raise ValueError(f"invalid tensor shape {dims}")
    return dims


def _check_index(dims, idx):
    idx = tuple(int(i) for i in idx)
    if len(idx) != len(dims):
        raise IndexError(f"index {idx} has {len(idx)} entries, expected {len(dims)}")
    for i, n in zip(idx, dims):
        if not 0 <= i < n:
            raise IndexError(f"index {idx} out of range for shape {dims}")
    return idx


@dataclass(frozen=True)
class ParafacModel:
    """Rank-``K`` PARAFAC tensor given by its factor matrices.

    The factors are copied to read-only float64 arrays on construction, so a
    model can be shared freely; updates go through :meth:`with_factors`.
    """

    factors: tuple

    def __post_init__(self):
        fs = []
        for f in self.factors:
            a = np.array(f, dtype=np.float64)
            if a.ndim != 2:
                raise ValueError("each factor must be a matrix")
            a.setflags(write=False)
            fs.append(a)
        if not fs:
            raise ValueError("a PARAFAC model needs at least one factor")
        K = fs[0].shape[1]
        if K < 1 or any(f.shape[1] != K for f in fs):
            raise ValueError("all factors must share the same positive column count")
        if any(f.shape[0] < 1 for f in fs):
            raise ValueError("factor with zero rows")
        if not all(np.all(np.isfinite(f)) for f in fs):
            raise ValueError("non-finite factor entries")
        object.__setattr__(self, "factors", tuple(fs))

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def rank(self):
        return self.factors[0].shape[1]

    @property
    def ndim(self):
        return len(self.factors)

    @property
    def size(self):
        """Number of free parameters, ``sum_d N_d K``."""
        return sum(f.size for f in self.factors)

    @classmethod
    def random(cls, dims, rank, rng, low=-1.0, high=1.0):
        dims = _check_shape(dims)
        if rank < 1:
            raise ValueError("rank must be positive")
        return cls(tuple(rng.uniform(low, high, size=(n, rank)) for n in dims))

    def with_factors(self, factors):
        return ParafacModel(tuple(factors))

    def flat(self):
        """Concatenate the factors mode-major, row-major, column fastest."""
        return np.concatenate([f.ravel() for f in self.factors])

    def from_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {vec.shape}")
        out, pos = [], 0
        for f in self.factors:
            out.append(vec[pos:pos + f.size].reshape(f.shape))
            pos += f.size
        return ParafacModel(tuple(out))

    def entry(self, idx):
        return parafac_entry(self, idx)

    def full(self):
        return reconstruct(self)


@dataclass(frozen=True)
class DenseTensor:
    """Dense tensor stored as a flat row-major float64 array."""

    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        dims = _check_shape(self.dims)
        data = np.array(self.data, dtype=np.float64).ravel()
        if data.size != int(np.prod(dims)):
            raise ValueError(f"data has {data.size} entries, shape {dims} needs {np.prod(dims)}")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr.ravel())

    def array(self):
        return self.data.reshape(self.dims)

    def norm(self):
        return float(np.linalg.norm(self.data))


def parafac_entry(model, idx):
    """Evaluate one entry ``sum_k prod_d F_d[i_d, k]``."""
    idx = _check_index(model.shape, idx)
    prod = np.ones(model.rank)
    for f, i in zip(model.factors, idx):
        prod = prod * f[i]
    return float(prod.sum())


def parafac_fiber_last_mode(model, prefix):
    """Return the fiber along the last mode with the first ``D-1`` indices fixed.

    The rank-length product over the leading modes is formed once and then
    multiplied into the last factor, so the cost is ``O(K (D + N_D))``.
    """
    prefix = _check_index(model.shape[:-1], prefix)
    prod = np.ones(model.rank)
    for f, i in zip(model.factors[:-1], prefix):
        prod = prod * f[i]
    return model.factors[-1] @ prod


def khatri_rao(A, B):
    """Column-wise Kronecker product; rows of ``A`` vary slowest."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"khatri_rao needs equal column counts, got {A.shape} and {B.shape}")
    return (A[:, None, :] * B[None, :, :]).reshape(-1, A.shape[1])


def _khatri_rao_chain(mats):
    out = mats[0]
    for m in mats[1:]:
        out = khatri_rao(out, m)
    return out


def matricize(model, mode):
    """Mode-``mode`` matricization ``(F_1 . ... F_{d-1} . F_{d+1} ... F_D) F_d^T``.

    Rows enumerate the remaining modes with the earliest mode varying slowest,
    i.e. the result equals ``moveaxis(X, mode, -1).reshape(-1, N_mode)``.
    """
    D = model.ndim
    if not 0 <= mode < D:
        raise ValueError(f"mode {mode} out of range for a {D}-mode tensor")
    _check_capacity(model.shape)
    others = [model.factors[j] for j in range(D) if j != mode]
    if not others:
        return model.factors[mode].sum(axis=1)[None, :]
    return _khatri_rao_chain(others) @ model.factors[mode].T


def _check_capacity(dims):
    if int(np.prod(dims, dtype=np.float64)) > MAX_DENSE:
        raise CapacityError(f"dense tensor of shape {dims} exceeds {MAX_DENSE} entries")


def reconstruct(model):
    """Materialize the model as a :class:`DenseTensor`."""
    _check_capacity(model.shape)
    if model.ndim == 1:
        return DenseTensor(model.shape, model.factors[0].sum(axis=1))
    flat = _khatri_rao_chain(list(model.factors)).sum(axis=1)
    return DenseTensor(model.shape, flat)


def nfe(x, xhat):
    """Normalized Frobenius error ``||X - Xhat|| / ||X||``.

    A zero reference gives 0 when ``xhat`` is zero too and ``inf`` otherwise.
    """
    if tuple(x.dims) != tuple(xhat.dims):
        raise ValueError(f"shape mismatch {x.dims} vs {xhat.dims}")
    denom = np.linalg.norm(x.data)
    diff = np.linalg.norm(x.data - xhat.data)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / denom)


# ----------------------------------------------------------------------------
# Alternating least squares


def _unfold(arr, mode):
    return np.moveaxis(arr, mode, -1).reshape(-1, arr.shape[mode])


def _als_sweep(X, factors, ridge):
    D = len(factors)
    for d in range(D):
        others = [factors[j] for j in range(D) if j != d]
        gram = np.ones((factors[0].shape[1],) * 2)
        for f in others:
            gram *= f.T @ f
        kr = _khatri_rao_chain(others) if others else np.ones((1, gram.shape[0]))
        rhs = _unfold(X, d).T @ kr
        reg = ridge * max(np.trace(gram), 1e-300) / gram.shape[0]
        lhs = gram + reg * np.eye(gram.shape[0])
        factors[d] = np.linalg.solve(lhs, rhs.T).T
    return factors


def _model_nfe(X, normX, factors):
    approx = _khatri_rao_chain(factors).sum(axis=1) if len(factors) > 1 else factors[0].sum(axis=1)
    diff = np.linalg.norm(X.ravel() - approx)
    if normX == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / normX)


def als_fit(target, rank, max_iters=500, tol=1e-10, restarts=1, seed=0, init=None, ridge=1e-9):
    """Fit a rank-``rank`` PARAFAC model by alternating least squares.

    Each restart starts from i.i.d. uniform ``[-1, 1]`` factors drawn from the
    stream ``(seed, restart)``; ``init`` adds one extra start from the given
    factors. Every mode update solves the normal equations of the
    matricization identity with a trace-scaled ridge. A run stops when the
    relative NFE improvement falls below ``tol``. The best iterate over all
    starts is returned as ``(model, nfe)``.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    X = target.array()
    if X.size == 0:
        raise ValueError("empty target tensor")
    if not np.all(np.isfinite(X)):
        raise ValueError("target has non-finite entries")
    normX = float(np.linalg.norm(X))
    if normX == 0.0:
        return ParafacModel(tuple(np.zeros((n, rank)) for n in target.dims)), 0.0

    starts = []
    if init is not None:
        starts.append([np.array(f, dtype=np.float64) for f in init])
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        starts.append([rng.uniform(-1.0, 1.0, size=(n, rank)) for n in target.dims])

    best, best_err = None, np.inf
    for factors in starts:
        err = _model_nfe(X, normX, factors)
        run_best, run_err = [f.copy() for f in factors], err
        for _ in range(max_iters):
            factors = _als_sweep(X, factors, ridge)
            new_err = _model_nfe(X, normX, factors)
            if new_err < run_err:
                run_best, run_err = [f.copy() for f in factors], new_err
            if err - new_err < tol * max(err, 1e-300):
                break
            err = new_err
        if run_err < best_err:
            best, best_err = run_best, run_err
    return ParafacModel(tuple(best)), float(best_err)


def best_rank_one(target, iters=50, seed=0):
    """Rank-one approximation by higher-order power iterations, optimally scaled."""
    X = target.array()
    rng = np.random.default_rng(seed)
    vecs = [rng.standard_normal(n) for n in target.dims]
    vecs = [v / np.linalg.norm(v) for v in vecs]
    D = len(vecs)
    for _ in range(iters):
        for d in range(D):
            t = X
            for j in range(D - 1, -1, -1):
                if j != d:
                    t = np.tensordot(t, vecs[j], axes=([j], [0]))
            nrm = np.linalg.norm(t)
            if nrm == 0.0:
                break
            vecs[d] = t / nrm
    proj = X
    for j in range(D - 1, -1, -1):
        proj = np.tensordot(proj, vecs[j], axes=([j], [0]))
    vecs[0] = vecs[0] * float(proj)
    return [v[:, None] for v in vecs]


# ----------------------------------------------------------------------------
# Serialization


def dense_to_bytes(tensor):
    header = struct.pack("<4sII", _MAGIC, _VERSION, len(tensor.dims))
    header += struct.pack(f"<{len(tensor.dims)}I", *tensor.dims)
    return header + tensor.data.astype("<f8").tobytes()


def dense_from_bytes(buf, offset=0):
    """Decode one tensor starting at ``offset``; return ``(tensor, end_offset)``."""
    magic, version, D = struct.unpack_from("<4sII", buf, offset)
    if magic != _MAGIC:
        raise ValueError("not a TLRT tensor block")
    if version != _VERSION:
        raise ValueError(f"unsupported TLRT version {version}")
    offset += 12
    dims = struct.unpack_from(f"<{D}I", buf, offset)
    offset += 4 * D
    count = int(np.prod(dims))
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return DenseTensor(dims, data), offset + 8 * count


def save_dense(tensor, path):
    Path(path).write_bytes(dense_to_bytes(tensor))


def load_dense(path):
    """Load a tensor from the ``TLRT`` binary layout or a JSON fixture."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == _MAGIC:
        tensor, _ = dense_from_bytes(raw)
        return tensor
    doc = json.loads(raw.decode("utf-8"))
    return DenseTensor(tuple(doc["dims"]), np.asarray(doc["data"], dtype=np.float64))


def save_dense_json(tensor, path):
    Path(path).write_text(json.dumps({"dims": list(tensor.dims), "data": tensor.data.tolist()}))
