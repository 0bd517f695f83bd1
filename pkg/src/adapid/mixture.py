"""Gaussian-mixture target oracle.

Everything the sampler and the diagnostics need from the target is computed
here analytically and in log-space: energy and score, exact draws, the probe
posterior (product of the target with the isotropic reweighting Gaussian),
the predicted-state map and its Jacobian, and mixture responsibilities.

Stability conventions, applied throughout:
  * per-component quadratic forms go through Cholesky factors (one triangular
    solve + a log-det read off the diagonal) -- no covariance is ever inverted;
  * posterior quantities use A_n = I + K * Sigma_n, so nothing degenerates as
    the precision K grows near the terminal time;
  * mixture weights are normalized by max-shifted log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from adapid.schedule import GreensCoeffs

__all__ = [
    "GaussianMixture",
    "ProbePosterior",
    "PrecisionError",
    "SPDError",
    "log_reweight_density",
    "make_model",
    "model_names",
]

_LOG_2PI = math.log(2.0 * math.pi)


class PrecisionError(ValueError):
    """Reweighting precision K_t must be positive."""


class SPDError(ValueError):
    """A covariance failed its Cholesky factorization."""


@dataclass(frozen=True)
class ProbePosterior:
    """Posterior over terminal states given the current state.

    ``log_weights`` are normalized; component covariances are represented by
    the Cholesky factor of A_n = I + K Sigma_n (posterior covariance is
    A_n^{-1} Sigma_n, materialized only on request).
    """

    log_weights: np.ndarray   # (N,)
    means: np.ndarray         # (N, d)
    a_factors: np.ndarray     # (N, d, d) lower Cholesky of I + K Sigma_n
    K: float

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def covariances(self) -> np.ndarray:
        """Posterior covariances Sigma_n (I + K Sigma_n)^{-1}, shape (N, d, d)."""
        A = self.a_factors @ np.swapaxes(self.a_factors, 1, 2)
        return np.linalg.solve(A, A - np.eye(A.shape[-1])) / max(self.K, 1e-300)


@dataclass(frozen=True)
class GaussianMixture:
    """Immutable mixture of N full-covariance Gaussians in d dimensions.

    ``calibration`` fixes the additive energy constant: "origin" pins
    E(0) = 0, "min" pins min_x E(x) = 0 (numeric mode search).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    calibration: str = "origin"
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _log_dets: np.ndarray = field(init=False, repr=False, compare=False)
    _log_weights: np.ndarray = field(init=False, repr=False, compare=False)
    _energy_offset: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covs, dtype=float)
        if mu.ndim != 2 or w.ndim != 1 or cov.ndim != 3:
            raise ValueError("expected weights (N,), means (N,d), covs (N,d,d)")
        N, d = mu.shape
        if w.shape != (N,) or cov.shape != (N, d, d):
            raise ValueError("mixture shapes are inconsistent")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w <= 0):
            raise ValueError(f"weights must be positive and sum to 1, got sum {w.sum()!r}")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise SPDError("every component covariance must be SPD") from e
        for arr in (w, mu, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "_chol", chol)
        log_dets = np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        log_dets.setflags(write=False)
        object.__setattr__(self, "_log_dets", log_dets)
        lw = np.log(w)
        lw.setflags(write=False)
        object.__setattr__(self, "_log_weights", lw)
        if self.calibration == "origin":
            anchor = float(self._log_density(np.zeros((1, d)))[0])
        elif self.calibration == "min":
            anchor = float(self._log_density(self.mode()[None, :])[0])
        else:
            raise ValueError(f"unknown energy calibration {self.calibration!r}")
        object.__setattr__(self, "_energy_offset", anchor)

    # -- basic structure ------------------------------------------------

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covs": self.covs.tolist()}

    @classmethod
    def from_json(cls, obj: dict, calibration: str = "origin") -> "GaussianMixture":
        return cls(weights=np.asarray(obj["weights"]), means=np.asarray(obj["means"]),
                   covs=np.asarray(obj["covs"]), calibration=calibration)

    # -- density, energy, score ------------------------------------------

    def _component_log_density(self, X: np.ndarray) -> np.ndarray:
        """Per-component Gaussian log-densities, shape (M, N)."""
        diffs = np.transpose(X[:, None, :] - self.means[None, :, :], (1, 2, 0))
        z = np.linalg.solve(self._chol, diffs)            # (N, d, M)
        quad = np.einsum("ndm,ndm->nm", z, z)
        return -0.5 * quad.T - self._log_dets - 0.5 * self.dim * _LOG_2PI

    def _log_density(self, X: np.ndarray) -> np.ndarray:
        return logsumexp(self._component_log_density(X) + self._log_weights, axis=1)

    def log_density(self, x) -> np.ndarray | float:
        x, single = _as_batch(x, self.dim)
        out = self._log_density(x)
        return float(out[0]) if single else out

    def energy(self, x) -> np.ndarray | float:
        """E(x) = -log p(x) + c with the calibration constant fixed at build time."""
        x, single = _as_batch(x, self.dim)
        out = self._energy_offset - self._log_density(x)
        return float(out[0]) if single else out

    def responsibilities(self, y) -> np.ndarray:
        y, single = _as_batch(y, self.dim)
        logits = self._component_log_density(y) + self._log_weights
        r = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        return r[0] if single else r

    def score(self, x) -> np.ndarray:
        """Gradient of log p, responsibility-weighted -Sigma_n^{-1}(x - mu_n)."""
        x, single = _as_batch(x, self.dim)
        logits = self._component_log_density(x) + self._log_weights
        r = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        diffs = np.transpose(x[:, None, :] - self.means[None, :, :], (1, 2, 0))
        z = np.linalg.solve(self._chol, diffs)
        s = np.linalg.solve(np.swapaxes(self._chol, 1, 2), z)   # (N, d, M)
        out = -np.einsum("mn,ndm->md", r, s)
        return out[0] if single else out

    def langevin_drift(self, x) -> np.ndarray:
        """score/2 under the unit-diffusion convention."""
        return 0.5 * self.score(x)

    def mode(self) -> np.ndarray:
        """Numeric argmax of the density (multi-start from component means)."""
        best_x, best_v = None, np.inf
        for mu in self.means:
            res = minimize(lambda v: -self._log_density(v[None, :])[0], mu,
                           jac=lambda v: -self.score(v), method="BFGS",
                           options={"gtol": 1e-10})
            if res.fun < best_v:
                best_x, best_v = res.x, res.fun
        return best_x

    # -- sampling ----------------------------------------------------------

    def sample(self, M: int, seed: int) -> np.ndarray:
        """M i.i.d. draws, deterministic per seed."""
        rng = np.random.default_rng(seed)
        comp = rng.choice(self.n_components, size=M, p=self.weights)
        z = rng.standard_normal((M, self.dim))
        return self.means[comp] + np.einsum("mij,mj->mi", self._chol[comp], z)

    def sample_components(self, M: int, seed: int) -> np.ndarray:
        """Component indices drawn exactly as ``sample`` draws them."""
        rng = np.random.default_rng(seed)
        return rng.choice(self.n_components, size=M, p=self.weights)

    # -- probe posterior and predicted map ----------------------------------

    def _probe_parts(self, coeffs: GreensCoeffs, X: np.ndarray):
        """Normalized log-weights (M,N), posterior means (M,N,d) and the
        x-gradient of the component log-weights (M,N,d)."""
        K, b = coeffs.K, coeffs.b_minus
        if not K > 0:
            raise PrecisionError(f"probe needs positive precision, got K={K!r}")
        eye = np.eye(self.dim)
        nu = (b / K) * X
        S = self.covs + eye / K
        try:
            Ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as e:
            raise SPDError("probe covariance Sigma_n + I/K is not SPD") from e
        diffs = np.transpose(nu[:, None, :] - self.means[None, :, :], (1, 2, 0))
        z = np.linalg.solve(Ls, diffs)                       # (N, d, M)
        quad = np.einsum("ndm,ndm->nm", z, z)
        log_det_S = np.log(np.diagonal(Ls, axis1=1, axis2=2)).sum(axis=1)
        log_w = -0.5 * quad.T - log_det_S - 0.5 * self.dim * _LOG_2PI
        logits = log_w + self._log_weights
        log_r = logits - logsumexp(logits, axis=1, keepdims=True)

        A = eye + K * self.covs
        rhs = self.means[None, :, :] + b * np.einsum("nij,mj->mni", self.covs, X)
        mu_tilde = np.linalg.solve(A, np.transpose(rhs, (1, 2, 0)))
        mu_tilde = np.transpose(mu_tilde, (2, 0, 1))         # (M, N, d)

        s_inv_diff = np.linalg.solve(np.swapaxes(Ls, 1, 2), z)
        grad_log_w = -(b / K) * np.transpose(s_inv_diff, (2, 0, 1))
        return log_r, mu_tilde, grad_log_w, A

    def probe_posterior(self, coeffs: GreensCoeffs, x) -> ProbePosterior:
        x, _ = _as_batch(x, self.dim)
        log_r, mu_tilde, _, A = self._probe_parts(coeffs, x[:1])
        return ProbePosterior(log_weights=log_r[0], means=mu_tilde[0],
                              a_factors=np.linalg.cholesky(A), K=coeffs.K)

    def predicted_state(self, coeffs: GreensCoeffs, x) -> np.ndarray:
        """Mean of the probe posterior, the map x -> y_hat(t; x)."""
        x, single = _as_batch(x, self.dim)
        log_r, mu_tilde, _, _ = self._probe_parts(coeffs, x)
        out = np.einsum("mn,mnd->md", np.exp(log_r), mu_tilde)
        return out[0] if single else out

    def predicted_jacobian(self, coeffs: GreensCoeffs, x) -> np.ndarray:
        """Analytic d(y_hat)/dx, shape (d, d) (or (M, d, d) for a batch)."""
        x, single = _as_batch(x, self.dim)
        log_r, mu_tilde, grad_log_w, A = self._probe_parts(coeffs, x)
        r = np.exp(log_r)
        P = np.linalg.solve(A, self.covs)                    # A_n^{-1} Sigma_n
        y_hat = np.einsum("mn,mnd->md", r, mu_tilde)
        g_bar = np.einsum("mn,mnd->md", r, grad_log_w)
        jac = (np.einsum("mn,nij->mij", r, coeffs.b_minus * P)
               + np.einsum("mn,mni,mnj->mij", r, mu_tilde, grad_log_w)
               - np.einsum("mi,mj->mij", y_hat, g_bar))
        return jac[0] if single else jac

    def predicted_responsibilities(self, coeffs: GreensCoeffs, x) -> np.ndarray:
        """Mixture responsibilities evaluated at the predicted state."""
        return self.responsibilities(self.predicted_state(coeffs, x))


def log_reweight_density(coeffs: GreensCoeffs, x, y) -> float:
    """log N(y | (b_minus/K) x, I/K), the negated exponent of the reweighting
    Gaussian tying the current state to candidate terminal states."""
    if not coeffs.K > 0:
        raise PrecisionError(f"reweighting density needs K > 0, got K={coeffs.K!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.size
    resid = y - (coeffs.b_minus / coeffs.K) * x
    return float(-0.5 * coeffs.K * np.dot(resid, resid)
                 + 0.5 * d * math.log(coeffs.K / (2.0 * math.pi)))


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"point has dimension {x.shape[0]}, mixture has {d}")
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == d:
        return x, False
    raise ValueError(f"expected shape (d,) or (M, d) with d={d}, got {x.shape}")


# ---------------------------------------------------------------------------
# canonical two-dimensional targets

_MODEL_SEEDS = {"perturbedA": 101, "perturbedB": 202}


def model_names() -> tuple[str, ...]:
    return ("regular3x3", "perturbedA", "perturbedB")


def make_model(name: str, calibration: str = "origin") -> GaussianMixture:
    """The three canonical nine-mode targets used across the experiments.

    ``regular3x3`` places unit-weight isotropic modes on the {-4, 0, 4}^2
    grid.  The perturbed variants jitter the means uniformly in
    [-0.8, 0.8]^2, draw per-component isotropic variances log-uniformly from
    [0.15, 0.6] and weights from Dirichlet(5), under fixed construction seeds.
    """
    grid = np.array([(x, y) for x in (-4.0, 0.0, 4.0) for y in (-4.0, 0.0, 4.0)])
    n = len(grid)
    if name == "regular3x3":
        weights = np.full(n, 1.0 / n)
        covs = np.tile(0.3 * np.eye(2), (n, 1, 1))
        return GaussianMixture(weights=weights, means=grid, covs=covs,
                               calibration=calibration)
    if name in _MODEL_SEEDS:
        rng = np.random.default_rng(_MODEL_SEEDS[name])
        means = grid + rng.uniform(-0.8, 0.8, size=grid.shape)
        variances = np.exp(rng.uniform(math.log(0.15), math.log(0.6), size=n))
        covs = variances[:, None, None] * np.eye(2)[None, :, :]
        weights = rng.dirichlet(np.full(n, 5.0))
        return GaussianMixture(weights=weights, means=means, covs=covs,
                               calibration=calibration)
    raise ValueError(f"unknown model {name!r}; available: {', '.join(model_names())}")
