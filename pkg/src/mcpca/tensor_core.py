"""Dense covariance-tensor representation, flattening and contractions.

A covariance tensor stacks one symmetric p x p matrix per context into a
p x p x k array that is symmetric under swapping its first two indices.
Every other module works through the operations here: flattening to the
p x (p*k) matrix whose column blocks are the individual slices,
mode-3 contractions, and arithmetic with partially symmetric rank-one
terms a (x) a (x) b.

Vectorization convention: a p x k matrix ``D`` and a vector in R^{p*k}
are identified by ``vec(D)[i*p + alpha] = D[alpha, i]`` (variable index
fastest, context index slowest).  This matches the column-block order of
the flattening and is part of the on-disk contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AsymmetricInputError, DimensionMismatchError

# Relative tolerance for the symmetry check on input slices.  Inputs that
# pass are symmetrized exactly so drift cannot accumulate downstream.
SYMMETRY_RTOL = 1e-12

# Orthonormality tolerance for subspace bases.
ORTHONORMALITY_TOL = 1e-10


def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class CovarianceTensor:
    """Stack of k symmetric p x p covariance matrices.

    ``slices`` has shape (k, p, p); slice i is the covariance matrix of
    context i.  Slices are validated to be symmetric within
    ``SYMMETRY_RTOL`` (relative to the largest entry magnitude) and then
    symmetrized exactly.  Instances are immutable and safe to share.
    """

    slices: np.ndarray
    context_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        slices = _as_float_array(self.slices, "slices")
        if slices.ndim != 3 or slices.shape[1] != slices.shape[2]:
            raise DimensionMismatchError(
                f"expected a (k, p, p) stack of square matrices, got shape {slices.shape}"
            )
        k, p, _ = slices.shape
        if k < 1 or p < 1:
            raise DimensionMismatchError("need k >= 1 contexts and p >= 1 variables")
        for i in range(k):
            s = slices[i]
            scale = max(1.0, float(np.abs(s).max()))
            dev = float(np.abs(s - s.T).max())
            if dev > SYMMETRY_RTOL * scale:
                raise AsymmetricInputError(
                    f"slice {i} is asymmetric: max |S - S^T| = {dev:.3e} "
                    f"exceeds {SYMMETRY_RTOL:.0e} * {scale:.3e}"
                )
        slices = 0.5 * (slices + slices.transpose(0, 2, 1))
        slices.setflags(write=False)
        object.__setattr__(self, "slices", slices)
        if self.context_ids is not None:
            ids = tuple(str(c) for c in self.context_ids)
            if len(ids) != k:
                raise DimensionMismatchError(
                    f"got {len(ids)} context ids for {k} slices"
                )
            object.__setattr__(self, "context_ids", ids)

    @property
    def p(self) -> int:
        return self.slices.shape[1]

    @property
    def k(self) -> int:
        return self.slices.shape[0]

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.slices))


@dataclass(frozen=True)
class Flattening:
    """The p x (p*k) matrix [S_1 ... S_k] and its singular values."""

    matrix: np.ndarray
    singular_values: np.ndarray
    p: int
    k: int

    def __post_init__(self):
        m = _as_float_array(self.matrix, "matrix")
        sv = _as_float_array(self.singular_values, "singular_values")
        if m.shape != (self.p, self.p * self.k):
            raise DimensionMismatchError(
                f"flattening must be {self.p} x {self.p * self.k}, got {m.shape}"
            )
        if sv.shape != (min(self.p, self.p * self.k),):
            raise DimensionMismatchError("wrong number of singular values")
        if np.any(sv < 0) or np.any(np.diff(sv) > 0):
            raise ValueError("singular values must be nonincreasing and non-negative")
        m.setflags(write=False)
        sv.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "singular_values", sv)


@dataclass(frozen=True)
class RankOneTerm:
    """A partially symmetric rank-one term a (x) a (x) b."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _as_float_array(self.a, "a")
        b = _as_float_array(self.b, "b")
        if a.ndim != 1 or b.ndim != 1:
            raise DimensionMismatchError("a and b must be vectors")
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("a must have unit norm within 1e-12")
        if np.any(b < 0):
            raise ValueError("b must be entrywise non-negative")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def to_tensor(self) -> CovarianceTensor:
        outer = np.outer(self.a, self.a)
        return CovarianceTensor(self.b[:, None, None] * outer[None, :, :])


@dataclass(frozen=True)
class SubspaceTensor:
    """Orthonormal basis of an r-dimensional subspace of p x k matrices.

    ``basis`` has shape (r, p, k); the vectorized rows (see module
    docstring) are pairwise orthonormal.  ``source_singular_values`` are
    the singular values of the flattening the subspace was extracted
    from.  The contiguous (p, k*r) unfolding used by power iterations is
    cached at construction.
    """

    basis: np.ndarray
    source_singular_values: np.ndarray
    _unfold_p: np.ndarray = field(init=False, repr=False, compare=False)
    _flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        basis = _as_float_array(self.basis, "basis")
        sv = _as_float_array(self.source_singular_values, "source_singular_values")
        if basis.ndim != 3:
            raise DimensionMismatchError("basis must have shape (r, p, k)")
        r, p, k = basis.shape
        if r > min(p, p * k):
            raise DimensionMismatchError(f"r={r} exceeds min(p, p*k)={min(p, p * k)}")
        flat = np.ascontiguousarray(basis.transpose(0, 2, 1).reshape(r, p * k))
        gram_dev = float(np.abs(flat @ flat.T - np.eye(r)).max())
        if gram_dev > ORTHONORMALITY_TOL:
            raise ValueError(
                f"basis is not orthonormal: max Gram deviation {gram_dev:.3e}"
            )
        unfold_p = np.ascontiguousarray(basis.transpose(1, 2, 0).reshape(p, k * r))
        for arr in (basis, sv, flat, unfold_p):
            arr.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "source_singular_values", sv)
        object.__setattr__(self, "_flat", flat)
        object.__setattr__(self, "_unfold_p", unfold_p)

    @property
    def r(self) -> int:
        return self.basis.shape[0]

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    @property
    def k(self) -> int:
        return self.basis.shape[2]


def stack_covariances(matrices, context_ids=None) -> CovarianceTensor:
    """Stack symmetric p x p matrices, in order, into a covariance tensor.

    Raises ``DimensionMismatchError`` if the matrices are not all square
    with a shared p, and ``AsymmetricInputError`` if any is asymmetric
    beyond tolerance.
    """
    mats = [_as_float_array(m, f"matrix {i}") for i, m in enumerate(matrices)]
    if not mats:
        raise DimensionMismatchError("need at least one covariance matrix")
    p = None
    for i, m in enumerate(mats):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"matrix {i} is not square: shape {m.shape}")
        if p is None:
            p = m.shape[0]
        elif m.shape[0] != p:
            raise DimensionMismatchError(
                f"matrix {i} is {m.shape[0]} x {m.shape[0]}, expected {p} x {p}"
            )
    return CovarianceTensor(np.stack(mats), context_ids=context_ids)


def tensor_from_factors(A, B, context_ids=None) -> CovarianceTensor:
    """Build the exact tensor with slices A @ diag(B[i]) @ A.T.

    ``A`` is p x r with unit-norm columns, ``B`` is k x r non-negative.
    """
    A = _as_float_array(A, "A")
    B = _as_float_array(B, "B")
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(
            f"incompatible factor shapes {A.shape} and {B.shape}"
        )
    slices = np.einsum("pj,qj,ij->ipq", A, A, B, optimize=True)
    return CovarianceTensor(slices, context_ids=context_ids)


def flatten(t: CovarianceTensor) -> Flattening:
    """Concatenate the slices into M = [S_1 ... S_k] and take its SVD."""
    m = np.ascontiguousarray(t.slices.transpose(1, 0, 2).reshape(t.p, t.k * t.p))
    sv = np.linalg.svd(m, compute_uv=False)
    return Flattening(matrix=m, singular_values=sv, p=t.p, k=t.k)


def unflatten(matrix, p, k) -> CovarianceTensor:
    """Inverse of :func:`flatten`: split column blocks back into slices."""
    m = _as_float_array(matrix, "matrix")
    if m.shape != (p, p * k):
        raise DimensionMismatchError(f"expected {p} x {p * k}, got {m.shape}")
    return CovarianceTensor(m.reshape(p, k, p).transpose(1, 0, 2))


def vec_to_matrix(v, p, k) -> np.ndarray:
    """Reshape a vector in R^{p*k} to a p x k matrix (variable-fastest)."""
    v = _as_float_array(v, "v")
    if v.shape != (p * k,):
        raise DimensionMismatchError(f"expected length {p * k}, got {v.shape}")
    return v.reshape(k, p).T


def matrix_to_vec(m) -> np.ndarray:
    """Vectorize a p x k matrix (variable-fastest); inverse of vec_to_matrix."""
    m = _as_float_array(m, "m")
    if m.ndim != 2:
        raise DimensionMismatchError("expected a matrix")
    return m.T.ravel()


def contract_mode3(t: CovarianceTensor, v) -> np.ndarray:
    """Weighted sum of slices: sum_i v[i] * S_i.  Symmetric by construction."""
    v = _as_float_array(v, "v")
    if v.shape != (t.k,):
        raise DimensionMismatchError(f"expected length {t.k}, got {v.shape}")
    return np.tensordot(v, t.slices, axes=(0, 0))


def contract_pair(ts: SubspaceTensor, a, b) -> np.ndarray:
    """Contract the subspace tensor with a length-p and a length-k vector.

    Entry l is a^T @ basis[l] @ b, i.e. the coefficient of the l-th basis
    element in the projection of a (x) b onto the subspace.
    """
    a = _as_float_array(a, "a")
    b = _as_float_array(b, "b")
    if a.shape != (ts.p,):
        raise DimensionMismatchError(f"expected a of length {ts.p}, got {a.shape}")
    if b.shape != (ts.k,):
        raise DimensionMismatchError(f"expected b of length {ts.k}, got {b.shape}")
    return (a @ ts._unfold_p).reshape(ts.k, ts.r).T @ b
