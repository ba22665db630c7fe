"""Truncated extended skew-normal product moments.

Two interchangeable engines:

* :class:`TesnSession` / :func:`tesn_fk` -- the recurrence on the skewed
  integrals directly.  Raising one index mixes the current level, the
  companion normal integrals at the limiting parameters (mu - mu_b, Gamma),
  and per-coordinate boundary terms that factor into a univariate edge
  density times a (p-1)-dimensional problem with conditional parameters.
* :func:`tesn_fk_via_normal` -- one (p+1)-dimensional truncated-normal
  moment with the augmented pair (mu*, Omega), last coordinate cut at
  tau_tilde, divided by xi.

Conditional moments are the ratio F_kappa / F_0; both engines are exposed
and cross-checked, the normal reduction being the default (fewer and
simpler integrals).
"""

import math
from dataclasses import dataclass

import numpy as np

from .config import settings
from .core import delete_index, delete_row_col, sym_sqrt, symmetrize
from .errors import DegenerateBoxError, DimensionMismatchError
from .esn import (
    EsnDerived,
    EsnParams,
    augment,
    esn_derive,
    esn_limit_params,
    esn_pdf,
)
from .moments import FirstTwoMoments, MultiIndex, as_multi_index
from .mvn import DEFAULT_QMC, QmcConfig, TruncationBox, mvn_log_prob, mvn_prob
from .tn import TnSession, _tn_mean_mgf, tn_first_two_corrected, tn_fk

__all__ = [
    "EdgeConditional",
    "edge_conditional",
    "TesnSession",
    "tesn_prob",
    "tesn_prob_with_error",
    "tesn_fk",
    "tesn_fk_univariate",
    "tesn_fk_via_normal",
    "tesn_moment",
    "tesn_moments",
    "tesn_mean_cov",
]


@dataclass(frozen=True)
class EdgeConditional:
    """Factorization of the p-dim density on the slice x_j = t:
    a univariate extended skew-normal density at t times a (p-1)-dim
    extended skew-normal in the remaining coordinates."""

    j: int
    c_j: float
    varphi_tilde_j: float
    sigma_tilde_j: np.ndarray      # (p-1, p-1) conditional scale
    lam_child: np.ndarray          # sigma_tilde^{1/2} varphi_(j)
    edge_params: EsnParams         # univariate law of coordinate j

    def child_params(self, full: EsnParams, t: float) -> EsnParams:
        """Parameters of the remaining coordinates given x_j = t."""
        j = self.j
        col = delete_index(full.sigma[:, j], j)
        mu = delete_index(full.mu, j) + col * ((t - full.mu[j]) / full.sigma[j, j])
        tau = full.tau + self.varphi_tilde_j * (t - full.mu[j])
        return EsnParams(mu=mu, sigma=self.sigma_tilde_j, lam=self.lam_child, tau=tau)

    def edge_density(self, t: float) -> float:
        if np.isinf(t):
            return 0.0
        return esn_pdf([t], self.edge_params)


def edge_conditional(p: EsnParams, j: int,
                     derived: EsnDerived | None = None) -> EdgeConditional:
    d = derived if derived is not None else esn_derive(p)
    sjj = float(p.sigma[j, j])
    col = delete_index(p.sigma[:, j], j)
    sigma_tilde = symmetrize(delete_row_col(p.sigma, j, j) - np.outer(col, col) / sjj)
    phi_rest = delete_index(d.varphi, j)
    phi_tilde_j = float(d.varphi[j]) + float(col @ phi_rest) / sjj
    c_j = 1.0 / math.sqrt(1.0 + float(phi_rest @ (sigma_tilde @ phi_rest)))
    edge_params = EsnParams(
        mu=[p.mu[j]], sigma=[[sjj]],
        lam=[c_j * math.sqrt(sjj) * phi_tilde_j], tau=c_j * p.tau,
    )
    lam_child = sym_sqrt(sigma_tilde) @ phi_rest if p.dim > 1 else np.empty(0)
    return EdgeConditional(
        j=j, c_j=c_j, varphi_tilde_j=phi_tilde_j, sigma_tilde_j=sigma_tilde,
        lam_child=lam_child, edge_params=edge_params,
    )


def _divide_by_xi(value: float, d: EsnDerived) -> float:
    if d.xi > settings.linear_xi_floor:
        return value / d.xi
    if value == 0.0:
        return 0.0
    return math.copysign(math.exp(math.log(abs(value)) - d.log_xi), value)


def tesn_prob_with_error(box: TruncationBox, p: EsnParams,
                         cfg: QmcConfig = DEFAULT_QMC,
                         derived: EsnDerived | None = None) -> tuple[float, float]:
    """Rectangle probability of the extended skew-normal law and an absolute
    error estimate: one (p+1)-dimensional normal rectangle divided by xi (in
    log space when xi is tiny); the limiting-normal rectangle below the
    shift switch point."""
    d = derived if derived is not None else esn_derive(p)
    if d.tau_tilde < settings.tau_tilde_limit:
        return mvn_prob(box, esn_limit_params(p, d), cfg)
    aug = augment(p, box, derived=d)
    if d.xi > settings.linear_xi_floor:
        raw, err = mvn_prob(aug.box, aug.params, cfg)
        val, err = raw / d.xi, err / d.xi
    else:
        logp = mvn_log_prob(aug.box, aug.params, cfg)
        val = math.exp(logp - d.log_xi) if logp > -np.inf else 0.0
        err = cfg.target_abs_error
    return min(1.0, max(0.0, val)), err


def tesn_prob(box: TruncationBox, p: EsnParams, cfg: QmcConfig = DEFAULT_QMC,
              derived: EsnDerived | None = None) -> float:
    return tesn_prob_with_error(box, p, cfg, derived)[0]


class TesnSession:
    """Memoized evaluator of the truncated skewed product moments
    F_kappa = int_box x^kappa f_ESN(x) dx for one (box, params) pair.

    Holds the companion normal session at the limiting parameters
    (mu - mu_b, Gamma) and lazily built (p-1)-dimensional edge sessions.
    Far below the shift switch point the skewed integrals coincide with the
    companion's to double precision, and the session just forwards there.
    """

    def __init__(self, box: TruncationBox, params: EsnParams,
                 cfg: QmcConfig = DEFAULT_QMC):
        if box.dim != params.dim:
            raise DimensionMismatchError("box and parameter dimensions differ")
        self.box = box
        self.params = params
        self.cfg = cfg
        self.dim = params.dim
        self.derived = esn_derive(params)
        self.at_limit = self.derived.tau_tilde < settings.tau_tilde_limit
        self.normal = TnSession(box, esn_limit_params(params, self.derived), cfg)
        self.table: dict[MultiIndex, float] = {}
        self._dvec: dict[MultiIndex, np.ndarray] = {}
        self._edges: dict[tuple[int, int], tuple[float, "TesnSession | None"]] = {}

    def prob(self) -> float:
        zero = (0,) * self.dim
        if zero not in self.table:
            if self.at_limit:
                self.table[zero] = self.normal.prob()
            else:
                self.table[zero] = tesn_prob(self.box, self.params, self.cfg,
                                             derived=self.derived)
        return self.table[zero]

    def _edge(self, j: int, side: int):
        key = (j, side)
        if key in self._edges:
            return self._edges[key]
        bound = (self.box.lower if side == 0 else self.box.upper)[j]
        if np.isinf(bound):
            self._edges[key] = (0.0, None)
            return self._edges[key]
        ec = edge_conditional(self.params, j, self.derived)
        dens = ec.edge_density(float(bound))
        child = None
        if self.dim > 1:
            child = TesnSession(self.box.drop(j),
                                ec.child_params(self.params, float(bound)), self.cfg)
        self._edges[key] = (dens, child)
        return self._edges[key]

    @staticmethod
    def _child_fk(child: "TesnSession | None", kappa: MultiIndex) -> float:
        if child is None:
            return 1.0
        return child.fk(kappa)

    def dvec(self, kappa: MultiIndex) -> np.ndarray:
        """The boundary/differentiation vector d_kappa of the recurrence."""
        if kappa in self._dvec:
            return self._dvec[kappa]
        a, b = self.box.lower, self.box.upper
        d = np.zeros(self.dim)
        for j in range(self.dim):
            kj = kappa[j]
            val = 0.0
            if kj > 0:
                low = list(kappa)
                low[j] -= 1
                val += kj * self.fk(tuple(low))
            sub = kappa[:j] + kappa[j + 1:]
            dens_a, child_a = self._edge(j, 0)
            if dens_a > 0.0:
                val += a[j] ** kj * dens_a * self._child_fk(child_a, sub)
            dens_b, child_b = self._edge(j, 1)
            if dens_b > 0.0:
                val -= b[j] ** kj * dens_b * self._child_fk(child_b, sub)
            d[j] = val
        self._dvec[kappa] = d
        return d

    def fk(self, kappa: MultiIndex) -> float:
        kappa = as_multi_index(kappa, self.dim)
        if kappa in self.table:
            return self.table[kappa]
        if not any(kappa):
            return self.prob()
        if self.at_limit:
            val = self.normal.fk(kappa)
            self.table[kappa] = val
            return val
        i = next(k for k, v in enumerate(kappa) if v > 0)
        low = list(kappa)
        low[i] -= 1
        low = tuple(low)
        val = (
            self.params.mu[i] * self.fk(low)
            + self.derived.delta[i] * self.normal.fk(low)
            + float(self.params.sigma[i, :] @ self.dvec(low))
        )
        self.table[kappa] = val
        return val


def tesn_fk(box: TruncationBox, p: EsnParams, kappa,
            session: TesnSession | None = None,
            cfg: QmcConfig = DEFAULT_QMC) -> float:
    """Unnormalized skewed product moment over the box, by the direct
    recurrence.  Pass a session to share memoization across indices."""
    if session is None:
        session = TesnSession(box, p, cfg)
    return session.fk(as_multi_index(kappa, p.dim))


def tesn_fk_univariate(a: float, b: float, p: EsnParams, k_max: int,
                       cfg: QmcConfig = DEFAULT_QMC) -> dict[MultiIndex, float]:
    """Table of univariate moments F_0 .. F_{k_max} over (a, b).

    F_0 comes from the deterministic bivariate path; each step adds the two
    boundary densities and one companion normal moment.  Infinite-limit
    density terms are dropped.
    """
    if p.dim != 1:
        raise DimensionMismatchError("univariate recurrence requires dim 1")
    session = TesnSession(TruncationBox([a], [b]), p, cfg)
    for k in range(k_max + 1):
        session.fk((k,))
    return dict(session.table)


def tesn_fk_via_normal(box: TruncationBox, p: EsnParams, kappa,
                       session: TnSession | None = None,
                       cfg: QmcConfig = DEFAULT_QMC) -> float:
    """The same integral through the (p+1)-dimensional normal reduction.

    An existing session for the augmented problem may be passed to share
    memoization; it must have been built by this function for identical
    (box, p, cfg)."""
    kappa = as_multi_index(kappa, p.dim)
    d = esn_derive(p)
    if d.tau_tilde < settings.tau_tilde_limit:
        return tn_fk(box, esn_limit_params(p, d), kappa, cfg=cfg)
    aug = augment(p, box, kappa=kappa, derived=d)
    if session is None:
        session = TnSession(aug.box, aug.params, cfg)
    return _divide_by_xi(session.fk(aug.kappa_star), d)


def tesn_moment(box: TruncationBox, p: EsnParams, kappa,
                cfg: QmcConfig = DEFAULT_QMC, method: str = "auto") -> float:
    """Conditional moment E[Y^kappa | box]: the ratio F_kappa / F_0 with
    numerator and denominator from the same engine and seed (their
    integration errors are correlated and largely cancel).

    ``method``: 'auto' (univariate recurrence for dim 1, else normal
    reduction), 'recurrence', or 'normal-reduction'.
    """
    kappa = as_multi_index(kappa, p.dim)
    return tesn_moments(box, p, [kappa], cfg, method)[kappa]


def tesn_moments(box: TruncationBox, p: EsnParams, kappas,
                 cfg: QmcConfig = DEFAULT_QMC,
                 method: str = "auto") -> dict[MultiIndex, float]:
    """Batch of conditional moments sharing one memoized table (the
    recurrence graphs of nearby indices overlap heavily)."""
    kappas = [as_multi_index(k, p.dim) for k in kappas]
    if method == "auto":
        method = "recurrence" if p.dim == 1 else "normal-reduction"
    if method == "recurrence":
        session = TesnSession(box, p, cfg)
        denom = session.prob()
        if denom <= 0.0:
            raise DegenerateBoxError("box probability is numerically zero")
        return {k: session.fk(k) / denom for k in kappas}
    if method != "normal-reduction":
        raise ValueError(f"unknown method {method!r}")
    d = esn_derive(p)
    if d.tau_tilde < settings.tau_tilde_limit:
        session = TnSession(box, esn_limit_params(p, d), cfg)
        lift = {k: k for k in kappas}
    else:
        aug = augment(p, box, derived=d)
        session = TnSession(aug.box, aug.params, cfg)
        lift = {k: k + (0,) for k in kappas}
    denom = session.prob()
    if denom <= 0.0:
        raise DegenerateBoxError("box probability is numerically zero")
    # xi cancels in each ratio
    return {k: session.fk(lift[k]) / denom for k in kappas}


# ----------------------------------------------------------------------------
# first two moments


def _mean_cov_direct(box: TruncationBox, p: EsnParams,
                     cfg: QmcConfig) -> FirstTwoMoments:
    """First two moments assembled from the recurrence quantities: the
    probability, the companion normal rectangle, the edge vector (the
    d-vector at order zero), the companion truncated-normal mean, and the
    d-vectors at the unit indices."""
    session = TesnSession(box, p, cfg)
    d = session.derived
    LL = session.prob()
    if LL <= 0.0 or not np.isfinite(LL) or LL < 1e-280:
        raise DegenerateBoxError("box probability is numerically zero")
    L_w = session.normal.prob()
    zero = (0,) * p.dim
    q = session.dvec(zero)
    mean = p.mu + (L_w * d.delta + p.sigma @ q) / LL
    w_mean = _tn_mean_mgf(box, esn_limit_params(p, d), cfg)
    cols = []
    for m in range(p.dim):
        e_m = tuple(1 if k == m else 0 for k in range(p.dim))
        cols.append(session.dvec(e_m))
    D = np.column_stack(cols)
    raw2 = np.outer(p.mu, mean) + (L_w * np.outer(d.delta, w_mean) + p.sigma @ D) / LL
    raw2 = symmetrize(raw2)
    mean = np.clip(mean, box.lower, box.upper)
    cov = symmetrize(raw2 - np.outer(mean, mean))
    return FirstTwoMoments(mean=mean, raw2=raw2, cov=cov)


def _mean_cov_nr_uncorrected(box: TruncationBox, p: EsnParams,
                             cfg: QmcConfig) -> FirstTwoMoments:
    """Normal reduction straight into the MGF formulas, no extreme-case
    screening.  Benchmark-only: isolates the method's own integral count."""
    from .tn import tn_first_two_mgf

    aug = augment(p, box)
    full = tn_first_two_mgf(aug.box, aug.params, cfg)
    n = p.dim
    mean = np.clip(full.mean[:n], box.lower, box.upper)
    raw2 = symmetrize(full.raw2[:n, :n])
    return FirstTwoMoments(mean=mean, raw2=raw2,
                           cov=symmetrize(raw2 - np.outer(mean, mean)))


def tesn_mean_cov(box: TruncationBox, p: EsnParams,
                  cfg: QmcConfig = DEFAULT_QMC, method: str = "auto") -> FirstTwoMoments:
    """Mean, raw second moment and covariance of the box-truncated law.

    Default route: augment to a (p+1)-dimensional truncated normal and use
    the corrected MGF path, then drop the augmented coordinate.  All extreme
    cases (zero-mass boxes, infinite shifts) are therefore handled by the
    truncated-normal corrections; ``corrections`` on the result records what
    fired.  ``method='recurrence'`` uses the direct skewed-integral
    assembly instead (no corrections; raises on degenerate boxes).
    """
    if box.dim != p.dim:
        raise DimensionMismatchError("box and parameter dimensions differ")
    if method == "auto":
        method = "normal-reduction"
    d = esn_derive(p)
    if d.tau_tilde < settings.tau_tilde_limit:
        res = tn_first_two_corrected(box, esn_limit_params(p, d), cfg)
        return FirstTwoMoments(mean=res.mean, raw2=res.raw2, cov=res.cov,
                               corrections=("limit-tau",) + res.corrections)
    if method == "recurrence":
        return _mean_cov_direct(box, p, cfg)
    if method != "normal-reduction":
        raise ValueError(f"unknown method {method!r}")
    aug = augment(p, box, derived=d)
    full = tn_first_two_corrected(aug.box, aug.params, cfg)
    n = p.dim
    mean = full.mean[:n]
    raw2 = full.raw2[:n, :n]
    mean = np.clip(mean, box.lower, box.upper)
    cov = symmetrize(raw2 - np.outer(mean, mean))
    # the augmented coordinate is internal: pinning it is the deep-shift limit
    notes = tuple(
        "limit-tau (augmented coordinate pinned)"
        if c in (f"out-of-bounds coord {n + 1}",
                 f"jointly-degenerate, pinned coord {n + 1}") else c
        for c in full.corrections
    )
    return FirstTwoMoments(mean=mean, raw2=symmetrize(raw2), cov=cov,
                           corrections=notes)
