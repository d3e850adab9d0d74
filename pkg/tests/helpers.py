"""Shared helpers for the test suite: random tensors and small oracles."""

import numpy as np

from voidlayer.tensors import ElasticTensor4, voigt_pairs


def random_spd_tensor(dim: int, rng: np.random.Generator) -> ElasticTensor4:
    """Random coercive, bounded elasticity tensor (built in the Mandel basis)."""
    n = len(voigt_pairs(dim))
    R = rng.normal(size=(n, n))
    mandel = R @ R.T + 0.1 * np.eye(n)
    s = np.array([1.0 if i == j else np.sqrt(2.0) for (i, j) in voigt_pairs(dim)])
    voigt = mandel / np.outer(s, s)
    return ElasticTensor4(dim, voigt)


def random_sym(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim))
    return 0.5 * (a + a.T)


def apply_by_summation(tensor: ElasticTensor4, strain: np.ndarray) -> np.ndarray:
    """Brute-force 4-index constitutive product (independent oracle)."""
    a = tensor.as_array4()
    return np.einsum("ijkh,kh->ij", a, strain)
