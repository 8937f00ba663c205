"""Gaussian process regression over normalized time.

One scalar GP per spatial dimension, squared exponential kernel, zero mean
after centering the targets. The pooled registered demos become a desired
trajectory with pointwise uncertainty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientDataError, NotPositiveDefiniteError

JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass
class GprHyper:
    lengthscale: float = 0.1
    signal_var: float = 1e-3
    noise_var: float = 1e-6

    def __post_init__(self):
        if not (np.isfinite(self.lengthscale) and np.isfinite(self.signal_var)
                and np.isfinite(self.noise_var)):
            raise ConfigError("hyperparameters must be finite")
        if self.lengthscale <= 0 or self.signal_var <= 0 or self.noise_var < 0:
            raise ConfigError("lengthscale and signal_var must be > 0, noise_var >= 0")


def se_kernel(x, x2, hyper: GprHyper):
    """Squared exponential covariance sf2 * exp(-(x - x2)^2 / (2 l^2))."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return hyper.signal_var * np.exp(-((x - x2) ** 2) / (2.0 * hyper.lengthscale ** 2))


def _kernel_matrix(x, x2, hyper):
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return hyper.signal_var * np.exp(
        -((x[:, None] - x2[None, :]) ** 2) / (2.0 * hyper.lengthscale ** 2))


@dataclass
class GprModel:
    x: np.ndarray
    f: np.ndarray
    hyper: GprHyper
    mean_offset: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float

    def log_marginal_likelihood(self) -> float:
        n = len(self.x)
        centered = self.f - self.mean_offset
        return float(-0.5 * centered @ self.alpha
                     - np.log(np.diag(self.chol)).sum()
                     - 0.5 * n * np.log(2.0 * np.pi))


def gpr_fit(x, f, hyper: GprHyper) -> GprModel:
    """Factorize K + sn2 I (+ escalating jitter) and cache the solve.

    Targets are centered by their mean; the offset is added back on
    prediction. Jitter starts at 1e-10 * sf2 and escalates x10 up to
    1e-4 * sf2 before giving up.
    """
    x = np.asarray(x, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    if len(x) != len(f) or len(x) < 1:
        raise ConfigError("need equal-length x, f with at least one point")
    K = _kernel_matrix(x, x, hyper)
    mean_offset = float(f.mean())
    centered = f - mean_offset

    jitter = JITTER_START * hyper.signal_var
    base = K + hyper.noise_var * np.eye(len(x))
    L = None
    used = 0.0
    # try without jitter first, then escalate
    for j in [0.0] + [jitter * 10 ** k for k in range(0, 7)
                      if jitter * 10 ** k <= JITTER_MAX * hyper.signal_var]:
        try:
            L = np.linalg.cholesky(base + j * np.eye(len(x)))
            used = j
            break
        except np.linalg.LinAlgError:
            continue
    if L is None:
        raise NotPositiveDefiniteError(
            "kernel matrix not positive definite after jitter escalation")
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, centered))
    return GprModel(x=x, f=f, hyper=hyper, mean_offset=mean_offset,
                    chol=L, alpha=alpha, jitter=used)


def gpr_predict(model: GprModel, xs):
    """Posterior mean and variance at test inputs; variance clamped at 0."""
    xs = np.asarray(xs, dtype=float).ravel()
    Ks = _kernel_matrix(model.x, xs, model.hyper)
    mean = Ks.T @ model.alpha + model.mean_offset
    v = np.linalg.solve(model.chol, Ks)
    var = model.hyper.signal_var - (v ** 2).sum(axis=0)
    return {"mean": mean, "variance": np.maximum(var, 0.0)}


LENGTHSCALE_GRID = np.logspace(np.log10(0.01), np.log10(1.0), 7)
SIGNAL_GRID = np.logspace(-6, -2, 7)
NOISE_GRID = np.logspace(-10, -4, 5)


def optimize_hyper(x, f) -> GprHyper:
    """Best point of a fixed log-spaced grid by log marginal likelihood.

    Deterministic tie-break by first grid index (iteration order is
    lengthscale-major, then signal variance, then noise variance). Grid
    points whose kernel matrix cannot be factorized are skipped.
    """
    x = np.asarray(x, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    if len(x) != len(f) or len(x) < 3:
        raise InsufficientDataError("need at least 3 points to select hyperparameters")
    best = None
    for ell in LENGTHSCALE_GRID:
        for sf2 in SIGNAL_GRID:
            for sn2 in NOISE_GRID:
                hyper = GprHyper(float(ell), float(sf2), float(sn2))
                try:
                    model = gpr_fit(x, f, hyper)
                except NotPositiveDefiniteError:
                    continue
                lml = model.log_marginal_likelihood()
                if best is None or lml > best[0]:
                    best = (lml, hyper)
    if best is None:
        raise NotPositiveDefiniteError("no grid point factorized")
    return best[1]


@dataclass
class ArmDesired:
    mean: np.ndarray      # (G, 3) meters
    variance: np.ndarray  # (G, 3) m^2


@dataclass
class DesiredTrajectory:
    """Per-arm GPR posterior over a uniform normalized-time grid."""

    grid: np.ndarray
    arms: dict  # arm name -> ArmDesired

    def __post_init__(self):
        if not np.all(np.diff(self.grid) > 0):
            raise ConfigError("grid must be strictly increasing")
        for arm in self.arms.values():
            if np.any(arm.variance < 0):
                raise ConfigError("variance must be nonnegative")


def fit_desired_trajectory(sets, grid_n: int, hyper: GprHyper | None = None,
                           optimize: bool = False) -> DesiredTrajectory:
    """Pool each arm's registered demos and fit one GP per dimension.

    sets: mapping arm name -> RegisteredDemoSet (all demos share the
    reference sample count). Inputs are normalized time index/(G-1).
    """
    if not sets:
        raise ConfigError("need at least one arm")
    grid = np.linspace(0.0, 1.0, grid_n)
    arms = {}
    for arm, dset in sets.items():
        n = len(dset.demos[0])
        tnorm = np.arange(n) / (n - 1)
        x = np.concatenate([tnorm for _ in dset.demos])
        mean = np.zeros((grid_n, 3))
        var = np.zeros((grid_n, 3))
        for dim in range(3):
            f = np.concatenate([d.p[:, dim] for d in dset.demos])
            h = hyper
            if h is None:
                h = optimize_hyper(x, f) if optimize else GprHyper()
            model = gpr_fit(x, f, h)
            out = gpr_predict(model, grid)
            mean[:, dim] = out["mean"]
            var[:, dim] = out["variance"]
        arms[arm] = ArmDesired(mean=mean, variance=var)
    return DesiredTrajectory(grid=grid, arms=arms)
