"""Component matching, cross-seed stability and rank selection.

The similarity between two component matrices is the mean absolute
cosine over greedily matched column pairs: true columns are visited in
order and each claims the unmatched recovered column with the largest
absolute cosine.  Greedy (not optimal-assignment) matching is used
deliberately so reported scores stay comparable across tools that do the
same.

Rank selection scores each candidate rank by the average match score
over pairs of fits run from independent seeds, and picks the largest
candidate whose average reaches the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decompose import FitConfig, fit_mcpca
from .exceptions import DimensionMismatchError, McpcaError
from .tensor_core import CovarianceTensor, flatten

DEFAULT_THRESHOLD = 0.8
DEFAULT_SEED_PAIRS = 5

_MASK64 = (1 << 64) - 1

# Matched-cosine ties within this are broken by recovered-column index.
_TIE_TOL = 1e-12


def mix_seed(base: int, *indices: int) -> int:
    """Deterministically derive a seed from a base seed and indices.

    Folds each index into the state and applies the splitmix64 finalizer,
    so nearby (base, index) combinations give unrelated streams.  Pure
    integer arithmetic; stable across platforms.
    """
    x = base & _MASK64
    for v in indices:
        x = (x + 0x9E3779B97F4A7C15 + (v & _MASK64)) & _MASK64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        x = z ^ (z >> 31)
    return x


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of recovered to true columns.

    ``permutation[j]`` is the recovered column matched to true column j
    (0-based); ``signs[i]`` is the flip that makes recovered column i's
    matched cosine positive; ``per_pair_cosines`` are the matched
    absolute cosines in true-column order and ``ascore`` their mean.
    """

    permutation: tuple[int, ...]
    signs: tuple[int, ...]
    per_pair_cosines: tuple[float, ...]
    ascore: float


def ascore(A_true, A_rec) -> MatchResult:
    """Mean absolute cosine similarity under greedy column matching."""
    A_true = np.asarray(A_true, dtype=float)
    A_rec = np.asarray(A_rec, dtype=float)
    if A_true.ndim != 2 or A_true.shape != A_rec.shape:
        raise DimensionMismatchError(
            f"shapes {A_true.shape} and {A_rec.shape} must match"
        )
    for name, m in (("A_true", A_true), ("A_rec", A_rec)):
        if np.abs(np.linalg.norm(m, axis=0) - 1.0).max() > 1e-8:
            raise ValueError(f"columns of {name} must have unit norm")
    r = A_true.shape[1]
    cosines = A_true.T @ A_rec
    available = np.ones(r, dtype=bool)
    permutation = []
    signs = [1] * r
    matched = []
    for j in range(r):
        row = np.abs(cosines[j])
        best = max(row[i] for i in range(r) if available[i])
        choice = next(
            i for i in range(r) if available[i] and best - row[i] <= _TIE_TOL
        )
        available[choice] = False
        permutation.append(choice)
        signs[choice] = 1 if cosines[j, choice] >= 0 else -1
        matched.append(float(row[choice]))
    return MatchResult(
        permutation=tuple(permutation),
        signs=tuple(signs),
        per_pair_cosines=tuple(matched),
        ascore=float(np.mean(matched)),
    )


@dataclass(frozen=True)
class RankSelectionReport:
    """Stability per candidate rank plus the scree of the flattening."""

    candidates: tuple[int, ...]
    stability: tuple[float, ...]
    chosen: int | None
    threshold: float
    n_seed_pairs: int
    scree: tuple[float, ...]


def stability_score(
    t: CovarianceTensor,
    r: int,
    n_seed_pairs: int = DEFAULT_SEED_PAIRS,
    cfg: FitConfig = FitConfig(),
) -> float:
    """Mean match score over pairs of fits from independent seeds.

    Pair seeds come from ``mix_seed(cfg.seed, pair, run)``.  Any fit
    failure (for example a rank-deficient flattening) scores 0: rank
    candidates near the numerical rank degrade instead of aborting.
    """
    if n_seed_pairs < 1:
        raise ValueError("n_seed_pairs must be >= 1")
    scores = []
    for pair in range(n_seed_pairs):
        models = []
        try:
            for run in range(2):
                run_cfg = FitConfig(
                    seed=mix_seed(cfg.seed, pair, run),
                    restarts_per_component=cfg.restarts_per_component,
                    tol=cfg.tol,
                    max_iter=cfg.max_iter,
                )
                models.append(fit_mcpca(t, r, run_cfg)[0])
        except McpcaError:
            return 0.0
        scores.append(ascore(models[0].A, models[1].A).ascore)
    return float(np.mean(scores))


def select_rank(
    t: CovarianceTensor,
    candidates,
    threshold: float = DEFAULT_THRESHOLD,
    n_seed_pairs: int = DEFAULT_SEED_PAIRS,
    cfg: FitConfig = FitConfig(),
) -> RankSelectionReport:
    """Pick the largest candidate rank whose stability reaches the threshold.

    Absence of a qualifying rank is a valid outcome (``chosen`` is None).
    The scree (singular values of the flattening) is attached for
    shortlisting candidates; no elbow detection is attempted.
    """
    candidates = [int(c) for c in candidates]
    if not candidates:
        raise ValueError("candidate list is empty")
    for c in candidates:
        if not 1 <= c <= t.p:
            raise ValueError(f"candidate rank {c} outside [1, p={t.p}]")
    stability = tuple(
        stability_score(t, c, n_seed_pairs=n_seed_pairs, cfg=cfg)
        for c in candidates
    )
    qualifying = [c for c, s in zip(candidates, stability) if s >= threshold]
    chosen = max(qualifying) if qualifying else None
    scree = tuple(float(s) for s in flatten(t).singular_values)
    return RankSelectionReport(
        candidates=tuple(candidates),
        stability=stability,
        chosen=chosen,
        threshold=float(threshold),
        n_seed_pairs=int(n_seed_pairs),
        scree=scree,
    )
