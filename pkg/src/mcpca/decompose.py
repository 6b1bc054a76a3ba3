"""Rank-r partially symmetric decomposition of a covariance tensor.

The fit proceeds in three stages:

1. extract the r-dimensional working subspace spanned by the top right
   singular vectors of the flattening [S_1 ... S_k];
2. find component directions one at a time: power iterations maximize
   F(a, b) = ||T_A(a, b, *)||^2, the squared norm of the projection of
   the unit rank-one matrix a (x) b onto the working subspace.  Each
   discovered pair is refined on the original (undeflated) subspace and
   then projected out of the working basis before the next component is
   sought.  Refinement matters: with non-orthogonal components the
   deflated subspace no longer contains the remaining rank-one
   generators exactly, so maximizers drift by an amount that grows with
   the component correlations; re-running the iteration on the original
   subspace from the discovered point removes that bias.
3. recompute all loadings globally by non-negative least squares against
   the original tensor, discarding the loadings implied by the power
   iterations.

Fits are deterministic given (tensor, rank, config): restart points are
drawn up front from a seeded generator, and ties between restarts are
broken by the earliest restart index.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import nnls as _nnls

from .exceptions import (
    DegenerateStartError,
    DimensionMismatchError,
    GramSingularityError,
    RankDeficiencyError,
)
from .tensor_core import (
    CovarianceTensor,
    Flattening,
    SubspaceTensor,
    flatten,
)

# Singular values below RANK_RTOL * sigma_1 do not count toward the
# numerical rank of the flattening.
RANK_RTOL = 1e-12

# Contractions with norm at or below this are treated as exactly zero
# (degenerate start), not as tiny-but-usable directions.
_DEGENERATE_NORM = 1e-150

# Maximum admissible condition number of the NNLS Gram matrix.
GRAM_COND_LIMIT = 1e12

# Restart objectives within this of the best are ties, broken by the
# earliest restart index.  Keeps the winner independent of evaluation
# order when maximizers share the same objective value exactly.
_RESTART_TIE_TOL = 1e-9

# Extra refinement iterations run after the stopping rule fires.  The
# iteration contracts linearly, so stopping on a step-size tolerance
# leaves an error of the same order as the last step; a tail of further
# iterations drives each component to its floating-point fixed point
# (noiseless generators become exact to machine precision).  The tail
# exits early once an iteration no longer moves the iterates at all.
_POLISH_ITERS = 300


@dataclass(frozen=True)
class FitConfig:
    """Knobs for :func:`fit_mcpca`.

    ``tol`` bounds the successive cosine gap 1 - |<x_new, x_old>| of both
    unit-vector iterates; ``restarts_per_component`` random starts are
    drawn per component from ``seed``.
    """

    seed: int = 0
    restarts_per_component: int = 10
    tol: float = 1e-10
    max_iter: int = 500

    def __post_init__(self):
        if self.restarts_per_component < 1:
            raise ValueError("restarts_per_component must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class McpcaModel:
    """Fitted components A (p x r, unit columns) and loadings B (k x r, >= 0).

    Columns are ordered by nonincreasing column sums of B and sign-fixed
    so each column of A has a positive entry of maximum magnitude.
    """

    A: np.ndarray
    B: np.ndarray
    context_ids: tuple[str, ...]
    ordering_rule: str
    sign_rule: str
    seed: int
    converged: tuple[bool, ...]

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
            raise DimensionMismatchError(
                f"incompatible A {A.shape} and B {B.shape}"
            )
        norms = np.linalg.norm(A, axis=0)
        if np.abs(norms - 1.0).max() > 1e-10:
            raise ValueError("columns of A must have unit norm within 1e-10")
        if np.any(B < 0):
            raise ValueError("B must be entrywise non-negative")
        colsums = B.sum(axis=0)
        if np.any(np.diff(colsums) > 1e-12 * max(1.0, float(colsums.max(initial=0.0)))):
            raise ValueError("columns must be ordered by nonincreasing B column sums")
        for j in range(A.shape[1]):
            if A[np.argmax(np.abs(A[:, j])), j] < 0:
                raise ValueError(f"column {j} violates the sign convention")
        if len(self.context_ids) != B.shape[0]:
            raise DimensionMismatchError("one context id per row of B required")
        if len(self.converged) != A.shape[1]:
            raise DimensionMismatchError("one converged flag per component required")
        A = A.copy()
        B = B.copy()
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "context_ids", tuple(self.context_ids))
        object.__setattr__(self, "converged", tuple(bool(c) for c in self.converged))

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.A.shape[1]

    @property
    def k(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True)
class FitReport:
    """Per-fit diagnostics.

    ``objective_trace[j]`` lists the objective value at every iteration
    of component j's best restart (discovery followed by refinement, in
    final column order); it is nondecreasing within floating-point slack.
    ``non_identifiable_suspect`` is None unless the fit was asked to run
    the cross-seed identifiability probe.
    """

    reconstruction_error: float
    per_context_error: np.ndarray
    objective_trace: tuple[tuple[float, ...], ...]
    restarts_used: tuple[int, ...]
    iterations: tuple[int, ...]
    elapsed_seconds: float
    seed: int
    non_identifiable_suspect: bool | None = None
    metadata: tuple[tuple[str, str], ...] = ()


class PowerIterationResult(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    objective: float
    iterations: int


def extract_subspace(f: Flattening, r: int) -> SubspaceTensor:
    """Top-r right singular vectors of the flattening, as p x k slices.

    Raises ``RankDeficiencyError`` (carrying the largest admissible rank)
    when sigma_r falls below RANK_RTOL * sigma_1.
    """
    if not 1 <= r <= min(f.p, f.p * f.k):
        raise ValueError(
            f"rank must be in [1, min(p, p*k)] = [1, {min(f.p, f.p * f.k)}], got {r}"
        )
    _, s, vt = np.linalg.svd(f.matrix, full_matrices=False)
    if s[0] <= 0.0:
        raise RankDeficiencyError("flattening is identically zero", max_rank=0)
    numerical_rank = int(np.count_nonzero(s > RANK_RTOL * s[0]))
    if r > numerical_rank:
        raise RankDeficiencyError(
            f"requested rank {r} exceeds the numerical rank {numerical_rank} "
            f"of the flattening; the largest admissible rank is {numerical_rank}",
            max_rank=numerical_rank,
        )
    basis = vt[:r].reshape(r, f.k, f.p).transpose(0, 2, 1)
    return SubspaceTensor(basis=basis, source_singular_values=s[:r].copy())


def _unit(v):
    norm = float(np.linalg.norm(v))
    if norm <= _DEGENERATE_NORM:
        raise DegenerateStartError("contraction vanished during power iteration")
    return v / norm, norm


def _power_step(unfold_p, k, r, a, b, trace):
    m_a = (a @ unfold_p).reshape(k, r)
    c, sigma = _unit(b @ m_a)
    trace.append(sigma * sigma)
    a_new, _ = _unit(unfold_p @ np.outer(b, c).ravel())
    m_a = (a_new @ unfold_p).reshape(k, r)
    b_new, _ = _unit(m_a @ c)
    return a_new, b_new


def _power_iterate(unfold_p, k, r, a0, b0, tol, max_iter, polish_iters=0):
    """Alternating normalized contractions on one (p, k*r) unfolding.

    Returns (a, b, objective, iterations, trace, converged).  The trace
    holds the objective at the start of every iteration plus the final
    value.  ``polish_iters`` extra iterations run after the stopping rule
    fires (or the budget is exhausted), without a convergence test.
    """
    a = a0
    b = b0
    trace = []
    iterations = 0
    converged = False
    while iterations < max_iter:
        a_new, b_new = _power_step(unfold_p, k, r, a, b, trace)
        step_a = 1.0 - abs(float(a_new @ a))
        step_b = 1.0 - abs(float(b_new @ b))
        a, b = a_new, b_new
        iterations += 1
        if step_a < tol and step_b < tol:
            converged = True
            break
    for _ in range(polish_iters):
        a_new, b_new = _power_step(unfold_p, k, r, a, b, trace)
        stationary = np.array_equal(a_new, a) and np.array_equal(b_new, b)
        a, b = a_new, b_new
        if stationary:
            break
    m_a = (a @ unfold_p).reshape(k, r)
    final = float(np.linalg.norm(b @ m_a)) ** 2
    trace.append(final)
    return a, b, final, iterations, trace, converged


def power_iterate(
    ts: SubspaceTensor, a0, b0, tol: float = 1e-10, max_iter: int = 500
) -> PowerIterationResult:
    """Fixed-point iteration for one rank-one element of the subspace.

    Repeats c <- normalize(T_A(a, b, *)), a <- normalize(T_A(*, b, c)),
    b <- normalize(T_A(a, *, c)) until the successive cosine gaps of both
    iterates drop below ``tol`` or ``max_iter`` is reached.  The returned
    objective is ||T_A(a, b, *)||^2, in [0, 1].  Raises
    ``DegenerateStartError`` if any contraction vanishes.
    """
    a0 = np.asarray(a0, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    if a0.shape != (ts.p,) or b0.shape != (ts.k,):
        raise DimensionMismatchError(
            f"start vectors must have lengths {ts.p} and {ts.k}"
        )
    if abs(np.linalg.norm(a0) - 1.0) > 1e-8 or abs(np.linalg.norm(b0) - 1.0) > 1e-8:
        raise ValueError("start vectors must have unit norm")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b, objective, iterations, _, _ = _power_iterate(
        ts._unfold_p, ts.k, ts.r, a0, b0, tol, max_iter
    )
    return PowerIterationResult(a=a, b=b, objective=objective, iterations=iterations)


def _householder_complement(u):
    """Rows form an orthonormal basis of the hyperplane orthogonal to u."""
    m = u.shape[0]
    sign = 1.0 if u[0] >= 0 else -1.0
    w = u.copy()
    w[0] += sign
    w /= np.linalg.norm(w)
    q = -2.0 * np.outer(w[1:], w)
    q[np.arange(m - 1), np.arange(1, m)] += 1.0
    return q


def _deflate(flat, direction):
    """Remove one vectorized rank-one direction from an orthonormal basis.

    ``flat`` is (m, p*k) with orthonormal rows; the projection of
    ``direction`` onto the span is removed and the remaining (m-1)-dim
    basis returned.
    """
    coeffs = flat @ direction
    norm = float(np.linalg.norm(coeffs))
    if norm <= _DEGENERATE_NORM:
        # Direction has no presence in the span; drop the trailing basis
        # vector so the dimension bookkeeping stays correct.
        return flat[:-1]
    return _householder_complement(coeffs / norm) @ flat


def _unfold_from_flat(flat, p, k):
    m = flat.shape[0]
    return np.ascontiguousarray(flat.reshape(m, k, p).transpose(2, 1, 0).reshape(p, k * m))


def _sphere(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def solve_nnls(t: CovarianceTensor, A) -> np.ndarray:
    """Non-negative loadings B minimizing ||S_i - sum_j B[i,j] a_j a_j^T||_F.

    The objective separates over contexts; each row is solved by the
    Lawson-Hanson active-set method (scipy.optimize.nnls) on the design
    matrix whose columns are the vectorized a_j a_j^T.  Raises
    ``GramSingularityError`` naming the most collinear column pair when
    the Gram matrix of the design is numerically singular.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != t.p:
        raise DimensionMismatchError(f"A must be {t.p} x r, got {A.shape}")
    norms = np.linalg.norm(A, axis=0)
    if np.abs(norms - 1.0).max() > 1e-8:
        raise ValueError("columns of A must have unit norm")
    r = A.shape[1]
    cross = A.T @ A
    gram = cross**2
    if r > 1 and np.linalg.cond(gram) > GRAM_COND_LIMIT:
        off = np.abs(cross) - 2.0 * np.eye(r)
        i, j = np.unravel_index(np.argmax(off), off.shape)
        pair = (min(i, j), max(i, j))
        raise GramSingularityError(
            f"components {pair[0]} and {pair[1]} are near-duplicates "
            f"(|cos| = {abs(cross[i, j]):.6f}); loadings are not determined",
            columns=pair,
        )
    design = np.einsum("pj,qj->pqj", A, A).reshape(t.p * t.p, r)
    B = np.empty((t.k, r))
    for i in range(t.k):
        B[i], _ = _nnls(design, t.slices[i].ravel())
    return B


def reconstruction_error(t: CovarianceTensor, m: McpcaModel):
    """Frobenius residuals per context and in total.

    Returns (total, per_context) with total = sqrt(sum of squares), the
    Frobenius distance between the tensor and the model.
    """
    if m.p != t.p or m.k != t.k:
        raise DimensionMismatchError(
            f"model is ({m.p}, {m.k}), tensor is ({t.p}, {t.k})"
        )
    fitted = np.einsum("pj,qj,ij->ipq", m.A, m.A, m.B, optimize=True)
    residual = t.slices - fitted
    per_context = np.linalg.norm(residual, axis=(1, 2))
    total = float(np.linalg.norm(per_context))
    return total, per_context


def fit_mcpca(
    t: CovarianceTensor,
    r: int,
    cfg: FitConfig = FitConfig(),
    identifiability_probe: bool = False,
) -> tuple[McpcaModel, FitReport]:
    """Fit the rank-r model: components by deflated power iterations with
    refinement, loadings by global non-negative least squares.

    With ``identifiability_probe`` a second fit at a derived seed is run
    and the report's ``non_identifiable_suspect`` flag set when any
    greedily matched component pair between the two fits has absolute
    cosine below 0.8 (collinear loading columns show up this way).
    """
    started = time.perf_counter()
    if not 1 <= r <= t.p:
        raise ValueError(f"rank must satisfy 1 <= r <= p = {t.p}, got {r}")
    ts = extract_subspace(flatten(t), r)
    rng = np.random.default_rng(cfg.seed)
    p, k = t.p, t.k

    work_flat = ts._flat.copy()
    orig_unfold = ts._unfold_p
    components = []
    for j in range(r):
        starts = [
            (_sphere(rng, p), _sphere(rng, k))
            for _ in range(cfg.restarts_per_component)
        ]
        work_unfold = _unfold_from_flat(work_flat, p, k)
        m = work_flat.shape[0]
        best = None
        used = 0
        for a0, b0 in starts:
            try:
                result = _power_iterate(
                    work_unfold, k, m, a0, b0, cfg.tol, cfg.max_iter
                )
            except DegenerateStartError:
                continue
            used += 1
            if best is None or result[2] > best[2] + _RESTART_TIE_TOL:
                best = result
        if best is None:
            raise DegenerateStartError(
                f"all {cfg.restarts_per_component} restarts degenerate "
                f"for component {j}"
            )
        a, b, _, disc_iters, disc_trace, disc_conv = best
        try:
            a, b, _, ref_iters, ref_trace, ref_conv = _power_iterate(
                orig_unfold, k, r, a, b, cfg.tol, cfg.max_iter,
                polish_iters=_POLISH_ITERS,
            )
            trace = disc_trace + ref_trace
            iters = disc_iters + ref_iters
            conv = disc_conv and ref_conv
        except DegenerateStartError:
            trace = disc_trace
            iters = disc_iters
            conv = disc_conv
        components.append((a, b, trace, iters, conv, used))
        if j < r - 1:
            work_flat = _deflate(work_flat, np.outer(b, a).ravel())

    A = np.column_stack([c[0] for c in components])
    B = solve_nnls(t, A)

    for j in range(r):
        if A[np.argmax(np.abs(A[:, j])), j] < 0:
            A[:, j] *= -1.0
    colsums = B.sum(axis=0)
    order = sorted(
        range(r),
        key=lambda j: (-colsums[j], int(np.argmax(np.abs(A[:, j]))), j),
    )
    A = A[:, order]
    B = B[:, order]
    components = [components[j] for j in order]

    context_ids = t.context_ids or tuple(f"c{i}" for i in range(k))
    model = McpcaModel(
        A=A,
        B=B,
        context_ids=context_ids,
        ordering_rule="loading-column-sum-desc",
        sign_rule="max-abs-entry-positive",
        seed=cfg.seed,
        converged=tuple(c[4] for c in components),
    )
    total, per_context = reconstruction_error(t, model)

    suspect = None
    if identifiability_probe:
        from .model_select import ascore, mix_seed

        probe_cfg = FitConfig(
            seed=mix_seed(cfg.seed, 0x1D),
            restarts_per_component=cfg.restarts_per_component,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
        )
        probe_model, _ = fit_mcpca(t, r, probe_cfg)
        match = ascore(model.A, probe_model.A)
        suspect = bool(min(match.per_pair_cosines) < 0.8)

    report = FitReport(
        reconstruction_error=total,
        per_context_error=per_context,
        objective_trace=tuple(tuple(c[2]) for c in components),
        restarts_used=tuple(c[5] for c in components),
        iterations=tuple(c[3] for c in components),
        elapsed_seconds=time.perf_counter() - started,
        seed=cfg.seed,
        non_identifiable_suspect=suspect,
    )
    return model, report
