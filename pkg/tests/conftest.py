"""Shared oracles and generators for the test suite."""

import numpy as np
import pytest

from hermiflow import function_space as fs
from hermiflow import hermite as hm
from hermiflow import tensor_index as ti


def tensor_grid(q: int, n_nodes: int):
    """Tensor Gauss-Hermite grid: points (n^q, q) and product weights."""
    x, w = hm.gauss_hermite(n_nodes)
    grids = np.meshgrid(*([x] * q), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * q), indexing="ij")
    wts = np.ones(len(pts))
    for wg in wgrids:
        wts *= wg.ravel()
    return pts, wts


def quad_inner(f: fs.HermiteFunction, g: fs.HermiteFunction, n_nodes: int = None):
    """E[f g] by tensor Gauss-Hermite quadrature, independent of coefficients."""
    if n_nodes is None:
        n_nodes = max(f.degree + g.degree + 2, 8)
    pts, wts = tensor_grid(f.q, n_nodes)
    vals = fs.evaluate(f, pts) * fs.evaluate(g, pts)
    return float(np.sum(vals * wts))


def random_function(rng, q: int, deg: int, n_terms: int = 6) -> fs.HermiteFunction:
    idx = []
    for k in range(deg + 1):
        idx += ti.enumerate_degree(q, k)
    pick = rng.choice(len(idx), size=min(n_terms, len(idx)), replace=False)
    return fs.from_coeffs(q, {idx[i]: rng.normal() for i in pick})


def random_contraction(rng, q_out: int, q_in: int) -> np.ndarray:
    A = rng.normal(size=(q_out, q_in))
    return A / (np.linalg.norm(A, 2) * (1.0 + rng.uniform(0.0, 0.5)))


def random_orthogonal(rng, q: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(q, q)))
    return Q * np.sign(np.diag(R))


def random_frame(rng, d: int, r: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.normal(size=(d, r)))
    return Q * np.sign(np.diag(R))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
