"""Extended skew-normal distribution.

Density, cdf, derived constants, marginal / conditional parameter maps,
closed-form untruncated moments, the limiting normal parameters for large
negative shift, and seeded sampling.

The density is the normal density times a shifted normal-cdf factor,

    f(y) = xi^{-1} phi_p(y; mu, Sigma) Phi(tau + lam' Sigma^{-1/2} (y - mu)),

normalized by ``xi = Phi(tau_tilde)`` with ``tau_tilde = tau / sqrt(1+lam'lam)``.
``lam = 0, tau = 0`` is the plain normal; ``tau = 0`` is the classical
skew-normal (with the factor-2 normalization).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .config import settings
from .core import (
    PartitionIndex,
    as_sym_matrix,
    as_vector,
    sym_inv_sqrt,
    sym_sqrt,
    symmetrize,
)
from .errors import DimensionMismatchError
from .moments import FirstTwoMoments, MultiIndex, as_multi_index
from .mvn import (
    DEFAULT_QMC,
    NormalParams,
    QmcConfig,
    TruncationBox,
    mvn_log_prob,
    mvn_logpdf,
    mvn_prob,
    std_icdf_log,
)

__all__ = [
    "EsnParams",
    "EsnDerived",
    "AugmentedNormal",
    "esn_derive",
    "esn_pdf",
    "esn_logpdf",
    "esn_cdf",
    "esn_marginal",
    "esn_conditional",
    "esn_mean_cov",
    "esn_limit_params",
    "esn_sample",
    "augment",
]


@dataclass(frozen=True)
class EsnParams:
    """Location ``mu``, PD scale ``sigma``, skewness ``lam``, shift ``tau``."""

    mu: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        mu = as_vector(self.mu)
        sigma = as_sym_matrix(self.sigma, dim=mu.shape[0])
        lam = as_vector(self.lam, dim=mu.shape[0])
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def is_normal(self) -> bool:
        return bool(np.all(self.lam == 0.0) and self.tau == 0.0)

    @classmethod
    def normal(cls, mu, sigma) -> "EsnParams":
        mu = as_vector(mu)
        return cls(mu=mu, sigma=sigma, lam=np.zeros(mu.shape[0]), tau=0.0)


@dataclass(frozen=True)
class EsnDerived:
    """Constants derived from :class:`EsnParams`, shared by all algorithms.

    ``delta = eta * sqrt(1 + lam'lam) * Delta`` holds by construction;
    ``Gamma = sigma - Delta Delta'`` is positive definite whenever sigma is.
    """

    lam_norm2: float          # 1 + lam' lam
    tau_tilde: float          # tau / sqrt(1 + lam' lam)
    xi: float                 # Phi(tau_tilde), in (0, 1]
    log_xi: float             # log Phi(tau_tilde), finite far into the tail
    eta: float                # phi(tau; 0, 1 + lam'lam) / xi
    varphi: np.ndarray        # sigma^{-1/2} lam
    Delta: np.ndarray         # sigma^{1/2} lam / sqrt(1 + lam'lam)
    delta: np.ndarray         # eta * sigma^{1/2} lam
    mu_b: np.ndarray          # tau_tilde * Delta
    Gamma: np.ndarray         # sigma - Delta Delta'
    sigma_sqrt: np.ndarray
    sigma_inv_sqrt: np.ndarray


def esn_derive(p: EsnParams) -> EsnDerived:
    """All derived constants; the normalizer is kept in log space so the
    far-left-tail regime stays finite."""
    lam_norm2 = 1.0 + float(p.lam @ p.lam)
    tau_tilde = p.tau / math.sqrt(lam_norm2)
    log_xi = float(log_ndtr(tau_tilde))
    xi = math.exp(log_xi)
    # eta = phi(tau; 0, lam_norm2) / xi, formed in log space
    log_phi_tau = -0.5 * (math.log(2.0 * math.pi * lam_norm2) + p.tau * p.tau / lam_norm2)
    eta = math.exp(log_phi_tau - log_xi)
    sigma_sqrt = sym_sqrt(p.sigma)
    sigma_inv_sqrt = sym_inv_sqrt(p.sigma)
    root_lam = sigma_sqrt @ p.lam
    Delta = root_lam / math.sqrt(lam_norm2)
    return EsnDerived(
        lam_norm2=lam_norm2,
        tau_tilde=tau_tilde,
        xi=xi,
        log_xi=log_xi,
        eta=eta,
        varphi=sigma_inv_sqrt @ p.lam,
        Delta=Delta,
        delta=eta * root_lam,
        mu_b=tau_tilde * Delta,
        Gamma=symmetrize(p.sigma - np.outer(Delta, Delta)),
        sigma_sqrt=sigma_sqrt,
        sigma_inv_sqrt=sigma_inv_sqrt,
    )


@dataclass(frozen=True)
class AugmentedNormal:
    """The (p+1)-dimensional normal carrying an ESN quantity.

    ``omega`` is the block matrix [[sigma, -Delta], [-Delta', 1]]; the last
    coordinate is integrated over (-inf, tau_tilde] and never appears in the
    moment index (``kappa_star`` ends in 0).
    """

    mu_star: np.ndarray
    omega: np.ndarray
    a_star: np.ndarray
    b_star: np.ndarray
    kappa_star: MultiIndex

    @property
    def params(self) -> NormalParams:
        return NormalParams(mu=self.mu_star, sigma=self.omega)

    @property
    def box(self) -> TruncationBox:
        return TruncationBox(lower=self.a_star, upper=self.b_star)


def augment(p: EsnParams, box: TruncationBox | None = None,
            kappa: MultiIndex | None = None,
            derived: EsnDerived | None = None) -> AugmentedNormal:
    """Build the normal-reduction representation of an ESN rectangle task."""
    d = derived if derived is not None else esn_derive(p)
    if box is None:
        box = TruncationBox.unbounded(p.dim)
    if box.dim != p.dim:
        raise DimensionMismatchError("box and parameter dimensions differ")
    kappa = (0,) * p.dim if kappa is None else as_multi_index(kappa, p.dim)
    omega = np.empty((p.dim + 1, p.dim + 1))
    omega[: p.dim, : p.dim] = p.sigma
    omega[: p.dim, p.dim] = -d.Delta
    omega[p.dim, : p.dim] = -d.Delta
    omega[p.dim, p.dim] = 1.0
    return AugmentedNormal(
        mu_star=np.append(p.mu, 0.0),
        omega=symmetrize(omega),
        a_star=np.append(box.lower, -np.inf),
        b_star=np.append(box.upper, d.tau_tilde),
        kappa_star=kappa + (0,),
    )


# ----------------------------------------------------------------------------
# density and cdf


def esn_logpdf(x, p: EsnParams, derived: EsnDerived | None = None) -> float:
    d = derived if derived is not None else esn_derive(p)
    x = as_vector(x, dim=p.dim)
    arg = p.tau + float(p.lam @ (d.sigma_inv_sqrt @ (x - p.mu)))
    return -d.log_xi + mvn_logpdf(x, NormalParams(p.mu, p.sigma)) + float(log_ndtr(arg))


def esn_pdf(x, p: EsnParams, derived: EsnDerived | None = None) -> float:
    return math.exp(esn_logpdf(x, p, derived))


def esn_cdf(y, p: EsnParams, cfg: QmcConfig = DEFAULT_QMC,
            derived: EsnDerived | None = None) -> float:
    """P(Y <= y): one (p+1)-dimensional normal rectangle divided by xi.

    Below the tau_tilde switch point the limiting-normal cdf is used
    instead, which is where the ratio would otherwise be 0/0.
    """
    d = derived if derived is not None else esn_derive(p)
    y = as_vector(y, dim=p.dim)
    if d.tau_tilde < settings.tau_tilde_limit:
        limit = esn_limit_params(p, d)
        box = TruncationBox(np.full(p.dim, -np.inf), y)
        return mvn_prob(box, limit, cfg)[0]
    aug = augment(p, TruncationBox(np.full(p.dim, -np.inf), y), derived=d)
    if d.xi > settings.linear_xi_floor:
        val = mvn_prob(aug.box, aug.params, cfg)[0] / d.xi
    else:
        logp = mvn_log_prob(aug.box, aug.params, cfg)
        val = math.exp(logp - d.log_xi) if logp > -np.inf else 0.0
    return min(1.0, max(0.0, val))


# ----------------------------------------------------------------------------
# marginal / conditional parameter maps


def _partition_quantities(p: EsnParams, one: list[int], two: list[int]):
    """Blocks used by both the marginal and the conditional map, with the
    conventions of the closure property: block 'one' is kept / conditioned
    on, block 'two' is the complement."""
    varphi = esn_derive(p).varphi
    S11 = p.sigma[np.ix_(one, one)]
    S12 = p.sigma[np.ix_(one, two)]
    S22 = p.sigma[np.ix_(two, two)]
    phi1 = varphi[one]
    phi2 = varphi[two]
    S11_inv_S12 = np.linalg.solve(S11, S12)
    S22_1 = symmetrize(S22 - S12.T @ S11_inv_S12)
    phi1_tilde = phi1 + S11_inv_S12 @ phi2
    c12 = 1.0 / math.sqrt(1.0 + float(phi2 @ (S22_1 @ phi2)))
    return S11, S12, S22_1, phi1_tilde, phi2, c12, S11_inv_S12


def esn_marginal(p: EsnParams, keep: PartitionIndex) -> EsnParams:
    """Parameters of the kept sub-vector (the family is closed under
    marginalization)."""
    if keep.dim != p.dim:
        raise DimensionMismatchError("partition does not match dimension")
    one = list(keep.kept)
    two = list(keep.removed)
    if not two:
        return p
    S11, _, _, phi1_tilde, _, c12, _ = _partition_quantities(p, one, two)
    lam1 = c12 * (sym_sqrt(S11) @ phi1_tilde)
    return EsnParams(mu=p.mu[one], sigma=S11, lam=lam1, tau=c12 * p.tau)


def esn_conditional(p: EsnParams, given: PartitionIndex, value) -> EsnParams:
    """Parameters of the kept sub-vector given ``x[removed] = value``."""
    if given.dim != p.dim:
        raise DimensionMismatchError("partition does not match dimension")
    one = list(given.removed)
    two = list(given.kept)
    value = as_vector(value, dim=len(one))
    if not one:
        return p
    _, S12, S22_1, phi1_tilde, phi2, _, S11_inv_S12 = _partition_quantities(p, one, two)
    dev = value - p.mu[one]
    mu_cond = p.mu[two] + S11_inv_S12.T @ dev
    tau_cond = p.tau + float(phi1_tilde @ dev)
    lam_cond = sym_sqrt(S22_1) @ phi2
    return EsnParams(mu=mu_cond, sigma=S22_1, lam=lam_cond, tau=tau_cond)


# ----------------------------------------------------------------------------
# untruncated moments and limiting behaviour


def esn_mean_cov(p: EsnParams) -> FirstTwoMoments:
    """Closed-form untruncated mean and covariance.

    Uses the standardized representation Z = sigma^{-1/2}(Y - mu) whose mean
    is eta*lam; far below the shift switch point the limiting normal moments
    are returned instead (the closed form degrades by cancellation there).
    """
    d = esn_derive(p)
    if d.tau_tilde < settings.tau_tilde_limit:
        limit = esn_limit_params(p, d)
        return FirstTwoMoments.from_mean_cov(limit.mu, limit.sigma,
                                             corrections=("limit-tau",))
    mean_z = d.eta * p.lam
    # var of the hidden coordinate truncated above at tau_tilde is
    # 1 - r*(r + tau_tilde) with r the Mills ratio, which propagates to
    # I - E[Z](E[Z] + (tau/(1+lam'lam)) lam)'.
    cov_z = np.eye(p.dim) - np.outer(mean_z, mean_z + (p.tau / d.lam_norm2) * p.lam)
    mean = p.mu + d.sigma_sqrt @ mean_z
    cov = symmetrize(d.sigma_sqrt @ cov_z @ d.sigma_sqrt)
    return FirstTwoMoments.from_mean_cov(mean, cov)


def esn_limit_params(p: EsnParams, derived: EsnDerived | None = None) -> NormalParams:
    """Normal parameters the family collapses to as the shift goes to -inf:
    location mu - mu_b, scale Gamma."""
    d = derived if derived is not None else esn_derive(p)
    return NormalParams(mu=p.mu - d.mu_b, sigma=d.Gamma)


# ----------------------------------------------------------------------------
# sampling


def esn_sample(p: EsnParams, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws, deterministic given ``seed`` (Philox 4x64 keyed
    by the seed).

    Uses the hidden-truncation representation: (X1 | X2 < tau_tilde) with
    (X1, X2) jointly normal.  Rejection is used while the selection
    probability keeps the expected draw budget reasonable; otherwise X2 is
    drawn exactly from its truncated law by log-space inverse cdf and X1
    from the conditional normal.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.Generator(np.random.Philox(key=seed))
    return sample_with_rng(p, n, rng)


def sample_with_rng(p: EsnParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` variates advancing the caller's generator (lets several
    chunks share one deterministic stream)."""
    d = esn_derive(p)
    use_rejection = (
        d.log_xi >= settings.sampler_log_xi_floor
        and (n == 0 or n / max(d.xi, 1e-300) <= settings.sampler_max_expected_draws)
    )
    if use_rejection:
        aug = augment(p, derived=d)
        factor = _psd_factor(aug.omega)
        out = np.empty((0, p.dim))
        while out.shape[0] < n:
            need = n - out.shape[0]
            batch = max(int(1.5 * need / max(d.xi, 1e-12)) + 16, 256)
            batch = min(batch, 4_000_000)
            z = rng.standard_normal((batch, p.dim + 1))
            x = aug.mu_star + z @ factor.T
            keep = x[:, p.dim] < d.tau_tilde
            out = np.vstack([out, x[keep][:, : p.dim]])
        return out[:n]
    # exact conditional construction
    x2 = ndtri_exp(d.log_xi + np.log(rng.random(n)))
    z = rng.standard_normal((n, p.dim))
    return p.mu - np.outer(x2, d.Delta) + z @ _psd_factor(d.Gamma).T


def _psd_factor(S: np.ndarray) -> np.ndarray:
    """A factor A with A A' = S; Cholesky when PD, symmetric root otherwise."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return sym_sqrt(S)
