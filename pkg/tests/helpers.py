"""Shared test utilities: identifiable planted models and exact datasets."""

import numpy as np

from mcpca import PlantedModel, generate_planted

# Reject planted draws whose loading columns are nearly collinear or
# vanish; such instances are non-identifiable by construction and are
# excluded wherever a test requires a generic identifiable model.
MAX_B_COLUMN_COS = 0.98


def generate_identifiable(p, k, r, density, seed, orthonormal=False):
    """First planted model at or after `seed` with well-separated loadings."""
    attempt = seed
    while True:
        pm = generate_planted(p, k, r, density, orthonormal=orthonormal, seed=attempt)
        norms = np.linalg.norm(pm.B_true, axis=0)
        if norms.min() > 1e-9:
            unit = pm.B_true / norms
            off = np.abs(unit.T @ unit - np.eye(r)).max()
            if off < MAX_B_COLUMN_COS:
                return pm
        attempt += 1


def duplicated_column_model(p, k, r, density, seed, scale=2.0):
    """Identifiable draw with one loading column replaced by a multiple of
    another, making the pair collinear (non-identifiable)."""
    pm = generate_identifiable(p, k, r, density, seed)
    B = pm.B_true.copy()
    B[:, 1] = scale * B[:, 0]
    return PlantedModel(A_true=pm.A_true, B_true=B, seed=pm.seed)


def exact_sample_matrix(cov, rows_per_eigvec=2):
    """Rows whose sample covariance equals `cov` exactly.

    Uses +/- pairs of scaled eigenvectors, so columns have zero mean and
    X^T X / (n - 1) reproduces the eigendecomposition.
    """
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    p = cov.shape[0]
    n = 2 * p
    rows = []
    for j in range(p):
        row = np.sqrt(eigvals[j] * (n - 1) / 2.0) * eigvecs[:, j]
        rows.append(row)
        rows.append(-row)
    return np.asarray(rows)
