"""Synthetic benchmark generators.

Each generator is deterministic in ``seed`` and returns plain arrays.
"""

import numpy as np


def make_heteroscedastic(n, seed=0, n_features=3):
    """``y = 2 x0 + sin(2 pi x1) + eps`` with ``sd(eps) = 0.1 + x0``.

    Extra features are pure noise. Returns ``(X, y, noise_sd)``.
    """
    if n_features < 2:
        raise ValueError("need at least two features")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, n_features))
    sd = 0.1 + X[:, 0]
    y = 2.0 * X[:, 0] + np.sin(2 * np.pi * X[:, 1]) + sd * rng.standard_normal(n)
    return X, y, sd


def make_overlapping_gaussians(n, seed=0, separation=2.0, n_features=2):
    """Two unit-variance Gaussian classes offset along the first axis."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.standard_normal((n, n_features))
    X[:, 0] += np.where(y == 1, separation / 2, -separation / 2)
    return X, y


def gaussian_overlap_mask(X, half_width=1.0):
    """Points within ``half_width`` of the decision boundary ``x0 = 0``."""
    return np.abs(np.asarray(X)[:, 0]) < half_width


def make_noisy_moons(n, seed=0, noise=0.2, flip=0.1):
    """Two interleaving half circles with Gaussian jitter and label flips."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    t = rng.uniform(0.0, np.pi, size=n)
    X = np.where(
        (y == 0)[:, None],
        np.c_[np.cos(t), np.sin(t)],
        np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)],
    )
    X = X + noise * rng.standard_normal(X.shape)
    flipped = rng.uniform(size=n) < flip
    y = np.where(flipped, 1 - y, y)
    return X, y


GENERATORS = {
    "heteroscedastic": ("regression", make_heteroscedastic),
    "gaussians": ("classification", make_overlapping_gaussians),
    "moons": ("classification", make_noisy_moons),
}
