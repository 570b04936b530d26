"""Time integration of the manifold gradient flows and its instrumentation.

The integrator runs classical RK4 on the ambient matrix with a QR retraction
after each accepted step.  Adaptive control compares one full step against
two half steps and also enforces the structural guards (correlation ascent,
eigenvalue monotonicity on the Grassmann flow), so long saddle plateaus are
crossed with large steps while transitions stay resolved.  Randomness comes
from the counter-based Philox generator so every experiment is reproducible
bit for bit from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import betainc, gammaln

from . import landscape as ls
from .errors import (
    BlowUp,
    NonFiniteState,
    OutOfDomain,
    StepRejected,
    TooFewPoints,
)

RNG_NAME = "philox"


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator; the seed fully determines the stream."""
    return np.random.Generator(np.random.Philox(int(seed)))


def init_uniform(d: int, r: int, seed) -> np.ndarray:
    """Uniform draw from the Grassmannian/Stiefel: QR of a Gaussian matrix
    with the R-diagonal sign fix that makes the distribution Haar."""
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    A = rng.standard_normal((d, r))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def _log_selberg(n: int, alpha: float, beta: float, gamma: float) -> float:
    """log of the Selberg integral S_n(alpha, beta, gamma)."""
    total = 0.0
    for j in range(n):
        total += (
            gammaln(alpha + j * gamma)
            + gammaln(beta + j * gamma)
            + gammaln(1.0 + (j + 1) * gamma)
            - gammaln(alpha + beta + (n + j - 1) * gamma)
            - gammaln(1.0 + gamma)
        )
    return total


def angle_log_normalizer(d: int, q: int) -> float:
    """log of the normalizing constant of the ordered singular-value density.

    Substituting t = lambda^2 reduces the ordered integral to a Selberg
    integral: Z = (2^q q!)^(-1) S_q(1/2, (d - 2q + 1)/2, 1/2).
    """
    log_s = _log_selberg(q, 0.5, 0.5 * (d - 2 * q + 1), 0.5)
    return log_s - q * np.log(2.0) - gammaln(q + 1)


def angle_density(lam, d: int, q: int) -> float:
    """Density of the ordered singular values of Wstar^T W at uniform W.

    Proportional to prod_{i<j} |l_i^2 - l_j^2| prod_i (1 - l_i^2)^((d-2q-1)/2)
    on the ordered set 0 <= l_q <= ... <= l_1 <= 1, normalized to integrate
    to one.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    if len(lam) != q:
        raise OutOfDomain(f"expected {q} values, got {len(lam)}")
    if d <= 2 * q:
        raise OutOfDomain(f"need d > 2q, got d={d}, q={q}")
    if np.any(lam < 0) or np.any(lam > 1):
        raise OutOfDomain("singular values must lie in [0, 1]")
    if np.any(np.diff(lam) > 0):
        raise OutOfDomain("input must be sorted nonincreasing")
    log_p = -angle_log_normalizer(d, q)
    for i in range(q):
        for j in range(i + 1, q):
            diff = lam[i] ** 2 - lam[j] ** 2
            if diff == 0.0:
                return 0.0
            log_p += np.log(abs(diff))
    exponent = 0.5 * (d - 2 * q - 1)
    for li in lam:
        if li == 1.0:
            return 0.0
        log_p += exponent * np.log1p(-li * li)
    return float(np.exp(log_p))


def angle_cdf_q1(lam: float, d: int) -> float:
    """CDF of the single principal cosine at q = 1: regularized incomplete
    Beta of lambda^2 with parameters (1/2, (d-1)/2)."""
    lam = float(np.clip(lam, 0.0, 1.0))
    return float(betainc(0.5, 0.5 * (d - 1), lam * lam))


def _angle_quantiles_q2(d: int, u1: float, u2: float, n_grid: int = 4000):
    """Rosenblatt inverse of the exact ordered singular-value law at q = 2.

    Works in the scaled variable s = sqrt(d) * lambda where the density
    (s1^2 - s2^2) (1 - s^2/d)^((d-5)/2) is well resolved by a uniform grid;
    u1 picks lambda_1 through its marginal, u2 picks lambda_2 through the
    conditional given lambda_1.
    """
    s_hi = min(np.sqrt(d), 12.0)
    s = np.linspace(0.0, s_hi, n_grid)
    a = 0.5 * (d - 5)
    log_w = a * np.log1p(-np.minimum(s**2 / d, 1.0 - 1e-16))
    w = np.exp(log_w - log_w.max())

    # marginal of s1: integral over s2 < s1 of (s1^2 - s2^2) w(s2)
    w_int = np.cumsum(w) * (s[1] - s[0])
    s2w_int = np.cumsum(s**2 * w) * (s[1] - s[0])
    marg1 = w[np.arange(n_grid)] * (s**2 * w_int - s2w_int)
    marg1 = np.maximum(marg1, 0.0)
    cdf1 = np.cumsum(marg1)
    cdf1 /= cdf1[-1]
    s1 = float(np.interp(u1, cdf1, s))

    # conditional of s2 given s1: density (s1^2 - s2^2) w(s2) on [0, s1]
    mask = s <= s1
    dens2 = np.where(mask, (s1**2 - s**2) * w, 0.0)
    cdf2 = np.cumsum(dens2)
    if cdf2[-1] <= 0:
        s2 = 0.0
    else:
        cdf2 /= cdf2[-1]
        s2 = float(np.interp(u2, cdf2, s))
    lam = np.array([s1, s2]) / np.sqrt(d)
    return np.clip(lam, 0.0, 1.0)


def init_quantile_coupled(d: int, Wstar: np.ndarray, seed) -> np.ndarray:
    """Uniform Grassmann draw with quantile-coupled principal angles (q = 2).

    The singular values of Wstar^T W are produced by pushing two seed-fixed
    uniforms through the exact ordered law at this dimension, and all the
    angular degrees of freedom are Haar; the marginal law of the returned
    frame is exactly uniform.  The same seed yields nearly identical scaled
    angles sqrt(d) * lambda at every d, which cancels the heavy-tailed
    initialization prefactor when escape times are compared across
    dimensions (common random numbers).
    """
    q = Wstar.shape[1]
    if q != 2:
        raise ValueError("quantile-coupled initialization is implemented for q = 2")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    u1, u2 = rng.uniform(), rng.uniform()
    lam = _angle_quantiles_q2(d, u1, u2)
    # Haar angular parts
    thV, thU = rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
    detV = 1.0 if rng.uniform() < 0.5 else -1.0
    detU = 1.0 if rng.uniform() < 0.5 else -1.0

    def orth2(th, det):
        c, s_ = np.cos(th), np.sin(th)
        R = np.array([[c, -s_], [s_, c]])
        if det < 0:
            R = R @ np.diag([1.0, -1.0])
        return R

    V, U = orth2(thV, detV), orth2(thU, detU)
    M = (V * lam) @ U.T
    # complement frame, Haar in the orthogonal complement of Wstar
    A = rng.standard_normal((d, d - q))
    A = A - Wstar @ (Wstar.T @ A)
    P, R = np.linalg.qr(A)
    P = P * np.sign(np.diag(R))
    P = P[:, : d - q]
    G = rng.standard_normal((d - q, q))
    PG, Rg = np.linalg.qr(G)
    PG = PG * np.sign(np.diag(Rg))
    # K^T K = I - M^T M through the PSD square root
    E = np.eye(q) - M.T @ M
    vals, vecs = np.linalg.eigh(E)
    K = PG @ ((vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T)
    return Wstar @ M + (P @ K)


@dataclass(frozen=True)
class FlowConfig:
    dt: float = None  # base step; None picks 0.01 * min(1, 1/||grad f||^2)
    t_max: float = 100.0
    eta: float = 0.25  # escape threshold
    record_every: int = 1  # accepted steps between trace samples
    seed: int = 0
    adapt: bool = True
    rtol: float = 1e-9  # step-doubling error target
    dt_min: float = 1e-10
    grad_tol: float = 1e-12  # stop when the field norm drops below this
    stop_lambda: float = None  # optional: stop once min lambda reaches this
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")


@dataclass
class FlowTrace:
    times: np.ndarray
    losses: np.ndarray
    lambdas: np.ndarray  # (n_samples, q), sorted nonincreasing
    grad_norms: np.ndarray
    seed: int
    rng_name: str = RNG_NAME
    escapes: dict = field(default_factory=dict)
    alignment: np.ndarray = None
    final_W: np.ndarray = None

    def to_csv(self, header_comment: str = "") -> str:
        q = self.lambdas.shape[1]
        lines = []
        if header_comment:
            lines.append("# " + header_comment)
        lines.append(f"# seed={self.seed} rng={self.rng_name}")
        cols = ["t", "loss", "grad_norm"] + [f"lambda_{i+1}" for i in range(q)]
        lines.append(",".join(cols))
        for i in range(len(self.times)):
            row = [self.times[i], self.losses[i], self.grad_norms[i]]
            row += list(self.lambdas[i])
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _retract(X: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(X)
    return Q * np.sign(np.diag(R))


def _rk4(field, W: np.ndarray, dt: float) -> np.ndarray:
    k1 = field(W)
    k2 = field(_retract(W + 0.5 * dt * k1))
    k3 = field(_retract(W + 0.5 * dt * k2))
    k4 = field(_retract(W + dt * k3))
    return _retract(W + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def default_dt(target) -> float:
    g2 = ls.target_grad_norm2(target)
    return 0.01 * min(1.0, 1.0 / max(g2, 1e-30))


def integrate(
    model: str,
    target,
    Wstar: np.ndarray,
    W0: np.ndarray,
    cfg: FlowConfig,
    alignment_frame: np.ndarray = None,
) -> FlowTrace:
    """Integrate the ascent flow of the chosen model from W0.

    Records (t, loss, sorted singular values, field norm) every
    cfg.record_every accepted steps plus the final state; stops at t_max or
    when the field norm falls below cfg.grad_tol.  When alignment_frame (a
    q x p frame in target coordinates) is given, the trace also records
    || V_p V_p^T - F F^T || per sample.
    """
    if model == "grassmann":
        field_fn = lambda W: ls.grassmann_flow_field(target, Wstar, W, validate=False)
    elif model == "stiefel":
        field_fn = lambda W: ls.stiefel_flow_field(target, Wstar, W, validate=False)
    else:
        raise ValueError(f"unknown model {model!r}")
    monotone_lam = model == "grassmann"

    dt0 = cfg.dt if cfg.dt is not None else default_dt(target)
    dt = dt0
    W = np.array(W0, dtype=float)
    t = 0.0

    def observe(W):
        S = ls.summary(Wstar, W, validate=False)
        loss = (
            ls.grassmann_loss(target, S)
            if model == "grassmann"
            else ls.planted_loss(target, S)
        )
        return S, loss

    S, loss = observe(W)
    gnorm = float(np.linalg.norm(field_fn(W)))
    times, losses, lams, gnorms, aligns = [t], [loss], [S.lam.copy()], [gnorm], []

    def align_val(S):
        p = alignment_frame.shape[1]
        Vp = S.V[:, :p]
        return float(
            np.linalg.norm(Vp @ Vp.T - alignment_frame @ alignment_frame.T)
        )

    if alignment_frame is not None:
        aligns.append(align_val(S))

    steps_accepted = 0
    n_steps = 0
    while (
        t < cfg.t_max
        and gnorm > cfg.grad_tol
        and not (cfg.stop_lambda is not None and S.lam.min() >= cfg.stop_lambda)
    ):
        n_steps += 1
        if n_steps > cfg.max_steps:
            raise StepRejected(f"exceeded max_steps={cfg.max_steps}")
        dt_eff = min(dt, cfg.t_max - t)
        W_big = _rk4(field_fn, W, dt_eff)
        if cfg.adapt:
            W_half = _rk4(field_fn, _rk4(field_fn, W, 0.5 * dt_eff), 0.5 * dt_eff)
            err = float(np.linalg.norm(W_big - W_half)) / 15.0
            W_new = W_half
        else:
            err = 0.0
            W_new = W_big
        if not np.all(np.isfinite(W_new)):
            raise NonFiniteState(f"non-finite state at t={t}")
        S_new, loss_new = observe(W_new)
        ok = err <= cfg.rtol
        if ok and loss_new < loss - 1e-9:
            ok = False
        if ok and monotone_lam and np.any(S_new.lam < S.lam - 1e-9):
            ok = False
        if not ok:
            if dt_eff <= cfg.dt_min:
                raise StepRejected(
                    f"step control failed at t={t}: err={err}, dt={dt_eff}"
                )
            dt = 0.5 * dt_eff
            continue
        t += dt_eff
        W, S, loss = W_new, S_new, loss_new
        gnorm = float(np.linalg.norm(field_fn(W)))
        steps_accepted += 1
        if cfg.adapt and err < cfg.rtol / 64.0:
            dt = dt_eff * 2.0
        if steps_accepted % cfg.record_every == 0:
            times.append(t)
            losses.append(loss)
            lams.append(S.lam.copy())
            gnorms.append(gnorm)
            if alignment_frame is not None:
                aligns.append(align_val(S))

    if times[-1] < t:  # make sure the final state is part of the trace
        times.append(t)
        losses.append(loss)
        lams.append(S.lam.copy())
        gnorms.append(gnorm)
        if alignment_frame is not None:
            aligns.append(align_val(S))

    return FlowTrace(
        times=np.array(times),
        losses=np.array(losses),
        lambdas=np.array(lams),
        grad_norms=np.array(gnorms),
        seed=cfg.seed,
        alignment=np.array(aligns) if aligns else None,
        final_W=W,
    )


def escape_times(trace: FlowTrace, cascade, eta: float) -> dict:
    """First time each regrouped stage's eigenvalue block reaches 1 - eta.

    Stage k of the cascade report watches lambda_{p_k}; the crossing time is
    linearly interpolated between the bracketing samples.  Stages that never
    cross are absent from the map.
    """
    out: dict = {}
    thresh = 1.0 - eta
    for k, p in enumerate(cascade.regrouped_dimensions, start=1):
        series = trace.lambdas[:, p - 1]
        idx = np.nonzero(series >= thresh)[0]
        if len(idx) == 0:
            continue
        i = int(idx[0])
        if i == 0:
            out[k] = float(trace.times[0])
            continue
        t0, t1 = trace.times[i - 1], trace.times[i]
        y0, y1 = series[i - 1], series[i]
        frac = (thresh - y0) / (y1 - y0) if y1 > y0 else 1.0
        out[k] = float(t0 + frac * (t1 - t0))
    return out


def fit_exponent(taus: dict, drop_smallest: int = 0) -> tuple:
    """Least squares of log tau on log d.

    Returns (slope, stderr); drop_smallest removes that many of the smallest
    dimensions before fitting.
    """
    items = sorted((int(d), float(tau)) for d, tau in taus.items())
    items = items[drop_smallest:]
    if len(items) < 3:
        raise TooFewPoints(f"need >= 3 points after dropping, got {len(items)}")
    x = np.log([d for d, _ in items])
    y = np.log([tau for _, tau in items])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    n = len(x)
    resid = y - A @ coef
    if n > 2:
        s2 = float(resid @ resid) / (n - 2)
        sxx = float(np.sum((x - x.mean()) ** 2))
        stderr = float(np.sqrt(s2 / sxx))
    else:
        stderr = 0.0
    return slope, stderr


def bernoulli_oracle(delta: float, a: float, s: int, t: float) -> float:
    """Closed-form solution of y' = y + a y^s, y(0) = delta:
    y(t) = [(delta^(1-s) + a) e^(-(s-1)t) - a]^(-1/(s-1)).

    Raises BlowUp at or beyond the explosion time of the solution.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if s < 2:
        raise ValueError("s must be >= 2")
    u = (delta ** (1 - s) + a) * np.exp(-(s - 1) * t) - a
    if u <= 0:
        raise BlowUp(f"solution exploded before t={t}")
    return float(u ** (-1.0 / (s - 1)))


def rk4_scalar(f, y0: float, t_end: float, n_steps: int) -> float:
    """Classical fixed-step RK4 for a scalar autonomous ODE y' = f(y)."""
    y = float(y0)
    h = t_end / n_steps
    for _ in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
