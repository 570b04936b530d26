"""Isotropic Hermite reproducing kernel: evaluation, random features, and
the population ridge shrinkage.

The kernel spectrum depends only on the total degree, so the kernel is
rotation invariant and ridge regression in the induced space acts on a
target as a degree-wise multiplier on Hermite coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import function_space as fs
from . import tensor_index as ti
from .errors import DegreeExceedsSpectrum
from .hermite import HermiteEval

# slack allowed in the decay surrogate c_k <= C (1+k)^(-(q+1))
DECAY_SLACK = 16.0


@dataclass(frozen=True)
class KernelSpectrum:
    """Degree-indexed kernel spectrum c_0..c_kmax with ridge parameter mu."""

    q: int
    c: np.ndarray
    mu: float = 0.0

    @property
    def k_max(self) -> int:
        return len(self.c) - 1


def make_spectrum(q: int, c=None, mu: float = 0.0, k_max: int = 64) -> KernelSpectrum:
    """Build and validate a spectrum; default c_k = (1+k)^(-(q+2)).

    The summability surrogate c_k <= C (1+k)^(-(q+1)) is enforced with
    C = DECAY_SLACK * c_0, which admits the default and geometric spectra of
    moderate ratio while rejecting flat or growing ones.
    """
    if c is None:
        k = np.arange(k_max + 1, dtype=float)
        c = (1.0 + k) ** (-(q + 2))
    c = np.asarray(c, dtype=float).ravel()
    if np.any(c <= 0):
        raise ValueError("spectrum entries must be positive")
    if mu < 0:
        raise ValueError("ridge parameter must be >= 0")
    k = np.arange(len(c), dtype=float)
    bound = DECAY_SLACK * c[0] * (1.0 + k) ** (-(q + 1))
    if np.any(c > bound):
        worst = int(np.argmax(c / bound))
        raise ValueError(
            f"spectrum decays too slowly at k={worst}: "
            f"c_k={c[worst]} > {bound[worst]}"
        )
    return KernelSpectrum(q=int(q), c=c, mu=float(mu))


def _shell_sum(spec: KernelSpectrum, k: int, hx: np.ndarray, hy: np.ndarray) -> float:
    """sum over |beta| = k of H_beta(x) H_beta(y), from univariate tables."""
    total = 0.0
    for beta in ti.enumerate_degree(spec.q, k):
        px = py = 1.0
        for i, b in enumerate(beta):
            px *= hx[i, b]
            py *= hy[i, b]
        total += px * py
    return total


def kernel_eval(spec: KernelSpectrum, x, y, return_tail: bool = False):
    """Kernel value sum_k c_k sum_{|beta|=k} H_beta(x) H_beta(y), truncated
    at k_max.

    With return_tail=True also returns the magnitude of the last shell term,
    a proxy for the truncation error.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    he = HermiteEval(spec.k_max)
    hx = he.eval_all(x)
    hy = he.eval_all(y)
    total = 0.0
    last = 0.0
    for k in range(spec.k_max + 1):
        term = spec.c[k] * _shell_sum(spec, k, hx, hy)
        total += term
        last = abs(term)
    if return_tail:
        return float(total), float(last)
    return float(total)


def degree_probabilities(spec: KernelSpectrum) -> np.ndarray:
    """Probability of each total degree under the random-feature law:
    proportional to the shell size binom(k+q-1, k) times c_k."""
    sizes = np.array(
        [ti.count_degree(spec.q, k) for k in range(spec.k_max + 1)], dtype=float
    )
    w = sizes * spec.c
    return w / w.sum()


def sample_features(spec: KernelSpectrum, n: int, seed) -> list:
    """n i.i.d. multi-indices: degree k with probability proportional to
    binom(k+q-1,k) c_k, then uniform on the degree-k shell."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(
        np.random.Philox(int(seed))
    )
    probs = degree_probabilities(spec)
    degrees = rng.choice(len(probs), size=n, p=probs)
    out = []
    shell_cache: dict = {}
    for k in degrees:
        k = int(k)
        if k not in shell_cache:
            shell_cache[k] = ti.enumerate_degree(spec.q, k)
        shell = shell_cache[k]
        out.append(shell[int(rng.integers(len(shell)))])
    return out


def feature_estimate(spec: KernelSpectrum, betas, x, y) -> float:
    """Random-feature kernel estimate (||c||_1 shell-weighted) / n times
    sum_i H_beta_i(x) H_beta_i(y)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    sizes = np.array(
        [ti.count_degree(spec.q, k) for k in range(spec.k_max + 1)], dtype=float
    )
    c_mass = float((sizes * spec.c).sum())
    he = HermiteEval(spec.k_max)
    hx = he.eval_all(x)
    hy = he.eval_all(y)
    total = 0.0
    for beta in betas:
        px = py = 1.0
        for i, b in enumerate(beta):
            px *= hx[i, b]
            py *= hy[i, b]
        total += px * py
    return c_mass * total / len(betas)


def shrink_multiplier(spec: KernelSpectrum, k: int, mode: str) -> float:
    """Degree-k multiplier: sqrt(c/(c+mu)) in target mode, c/(c+mu) in link
    mode."""
    c = spec.c[k]
    ratio = c / (c + spec.mu)
    if mode == "target":
        return float(np.sqrt(ratio))
    if mode == "link":
        return float(ratio)
    raise ValueError(f"mode must be 'target' or 'link', got {mode!r}")


def ridge_shrink(
    f: fs.HermiteFunction, spec: KernelSpectrum, mode: str = "target"
) -> fs.HermiteFunction:
    """Isotropic spectral shrinkage of a band-limited function.

    Target mode scales each degree-k shell by sqrt(c_k/(c_k+mu)) (the
    regularized target entering the fast kernel loss); link mode applies
    c_k/(c_k+mu) (the optimal link profile).  Commutes with rotations since
    the multiplier depends on the degree only.
    """
    if f.degree > spec.k_max:
        raise DegreeExceedsSpectrum(
            f"function degree {f.degree} exceeds spectrum k_max {spec.k_max}"
        )
    out = {
        beta: alpha * shrink_multiplier(spec, ti.degree(beta), mode)
        for beta, alpha in f.coeffs.items()
    }
    return fs.from_coeffs(f.q, out)


def rkhs_norm2(f: fs.HermiteFunction, spec: KernelSpectrum) -> float:
    """Squared norm in the reproducing space: sum c_{|beta|}^{-1} alpha^2."""
    if f.degree > spec.k_max:
        raise DegreeExceedsSpectrum(
            f"function degree {f.degree} exceeds spectrum k_max {spec.k_max}"
        )
    return float(
        sum(a * a / spec.c[ti.degree(b)] for b, a in f.coeffs.items())
    )
