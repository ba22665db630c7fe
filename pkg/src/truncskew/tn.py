"""Truncated multivariate normal moments.

Three engines over the same rectangle kernel:

* :class:`TnSession` / :func:`tn_fk` -- arbitrary-order product-moment
  recurrence.  Raising one index costs the current-level value, a d-vector of
  lower-order values, and two (p-1)-dimensional edge integrals per
  coordinate, all memoized per session.
* :func:`tn_first_two_mgf` -- first two moments by differentiating the
  moment generating function in correlation form, with the Hessian diagonal
  recycled from the off-diagonal entries and the edge vector q.
* :func:`tn_first_two_corrected` -- total function: splits off coordinates
  with two infinite limits, degenerates coordinates whose interval carries
  numerically zero mass at the near bound, and only then calls the MGF path
  on what remains.
"""

import math
from dataclasses import dataclass

import numpy as np

from .config import settings
from .core import PartitionIndex, conditional_normal, symmetrize
from .errors import DegenerateBoxError, DimensionMismatchError
from .moments import FirstTwoMoments, MultiIndex, as_multi_index
from .mvn import (
    DEFAULT_QMC,
    NormalParams,
    QmcConfig,
    TruncationBox,
    bvn_pdf,
    mvn_log_prob,
    mvn_prob,
    std_pdf,
)

__all__ = [
    "TnSession",
    "tn_fk",
    "TnMgfWork",
    "tn_mgf_work",
    "tn_first_two_mgf",
    "tn_first_two_corrected",
]


def _norm_pdf(x: float, mean: float, var: float) -> float:
    if np.isinf(x):
        return 0.0
    sd = math.sqrt(var)
    return std_pdf((x - mean) / sd) / sd


class TnSession:
    """Memoized evaluator of the unnormalized truncated-normal product
    moments F_kappa = int_box x^kappa phi_p(x; mu, sigma) dx for one fixed
    (box, params) pair.

    ``table`` maps multi-indices to already computed values; edge
    sub-sessions (one per finite bound) are created lazily and shared by all
    recurrence steps.
    """

    def __init__(self, box: TruncationBox, params: NormalParams,
                 cfg: QmcConfig = DEFAULT_QMC):
        if box.dim != params.dim:
            raise DimensionMismatchError("box and parameter dimensions differ")
        self.box = box
        self.params = params
        self.cfg = cfg
        self.dim = params.dim
        self.table: dict[MultiIndex, float] = {}
        self._dvec: dict[MultiIndex, np.ndarray] = {}
        self._edges: dict[tuple[int, int], tuple[float, "TnSession | None"]] = {}

    def prob(self) -> float:
        zero = (0,) * self.dim
        if zero not in self.table:
            self.table[zero] = mvn_prob(self.box, self.params, self.cfg)[0]
        return self.table[zero]

    def _edge(self, j: int, side: int):
        """Density factor and child session for the boundary x_j = bound."""
        key = (j, side)
        if key in self._edges:
            return self._edges[key]
        bound = (self.box.lower if side == 0 else self.box.upper)[j]
        if np.isinf(bound):
            self._edges[key] = (0.0, None)
            return self._edges[key]
        mu = self.params.mu
        sigma = self.params.sigma
        dens = _norm_pdf(bound, mu[j], sigma[j, j])
        child = None
        if self.dim > 1:
            cmu, csig = conditional_normal(
                mu, sigma, PartitionIndex.dropping(self.dim, [j]), [bound]
            )
            child = TnSession(self.box.drop(j), NormalParams(cmu, csig), self.cfg)
        self._edges[key] = (dens, child)
        return self._edges[key]

    @staticmethod
    def _child_fk(child: "TnSession | None", kappa: MultiIndex) -> float:
        if child is None:  # zero-dimensional integral
            return 1.0
        return child.fk(kappa)

    def dvec(self, kappa: MultiIndex) -> np.ndarray:
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
        i = next(k for k, v in enumerate(kappa) if v > 0)
        low = list(kappa)
        low[i] -= 1
        low = tuple(low)
        val = self.params.mu[i] * self.fk(low) + float(
            self.params.sigma[i, :] @ self.dvec(low)
        )
        self.table[kappa] = val
        return val


def tn_fk(box: TruncationBox, p: NormalParams, kappa,
          session: TnSession | None = None, cfg: QmcConfig = DEFAULT_QMC) -> float:
    """Unnormalized product moment F_kappa over the box.

    ``F_0`` is the rectangle probability; divide by it for conditional
    moments.  Pass an existing session to share its memo table across
    multiple indices.
    """
    if session is None:
        session = TnSession(box, p, cfg)
    return session.fk(as_multi_index(kappa, p.dim))


# ----------------------------------------------------------------------------
# first two moments via the MGF (correlation form, recycled diagonal)


@dataclass(frozen=True)
class TnMgfWork:
    """Standardized ingredients of the MGF first-two-moment formulas."""

    R: np.ndarray          # correlation matrix
    a: np.ndarray          # standardized lower bounds
    b: np.ndarray          # standardized upper bounds
    S: np.ndarray          # per-coordinate scales (sqrt of diag sigma)
    L: float               # rectangle probability of the standardized box
    L_err: float
    q_a: np.ndarray
    q_b: np.ndarray
    q: np.ndarray          # q_a - q_b
    H: np.ndarray          # MGF Hessian boundary matrix


def _edge_interval_prob(R, a, b, i, value, cfg) -> float:
    """(p-1)-dim rectangle probability of the conditional law given the
    i-th standardized coordinate sits at ``value``."""
    p = R.shape[0]
    if p == 1:
        return 1.0
    others = [k for k in range(p) if k != i]
    mean = R[others, i] * value
    cov = symmetrize(R[np.ix_(others, others)] - np.outer(R[others, i], R[i, others]))
    box = TruncationBox(a[others], b[others])
    return mvn_prob(box, NormalParams(mean, cov), cfg)[0]


def _corner_term(R, a, b, i, j, vi, vj, cfg) -> float:
    """phi2 at the (i, j) corner times the (p-2)-dim conditional rectangle."""
    if np.isinf(vi) or np.isinf(vj):
        return 0.0
    p = R.shape[0]
    rho = float(R[i, j])
    dens = bvn_pdf(vi, vj, rho)
    if dens == 0.0 or p == 2:
        return dens
    others = [k for k in range(p) if k not in (i, j)]
    mean, cov = conditional_normal(
        np.zeros(p), R, PartitionIndex(kept=tuple(others), removed=tuple(sorted((i, j)))),
        [vi, vj] if i < j else [vj, vi],
    )
    box = TruncationBox(a[others], b[others])
    return dens * mvn_prob(box, NormalParams(mean, cov), cfg)[0]


def tn_mgf_work(box: TruncationBox, p: NormalParams,
                cfg: QmcConfig = DEFAULT_QMC) -> TnMgfWork:
    """Standardize to correlation form and assemble L, q and H.

    Off-diagonal H entries are the four signed corner terms; diagonal
    entries are recycled from q and the off-diagonal row, which avoids any
    second-derivative integrals.
    """
    sd = np.sqrt(np.diag(p.sigma))
    R = symmetrize(p.sigma / np.outer(sd, sd))
    np.fill_diagonal(R, 1.0)
    with np.errstate(invalid="ignore"):
        a = (box.lower - p.mu) / sd
        b = (box.upper - p.mu) / sd
    n = p.dim
    sbox = TruncationBox(a, b)
    L, L_err = mvn_prob(sbox, NormalParams(np.zeros(n), R), cfg)
    q_a = np.zeros(n)
    q_b = np.zeros(n)
    for i in range(n):
        if np.isfinite(a[i]):
            q_a[i] = std_pdf(a[i]) * _edge_interval_prob(R, a, b, i, a[i], cfg)
        if np.isfinite(b[i]):
            q_b[i] = std_pdf(b[i]) * _edge_interval_prob(R, a, b, i, b[i], cfg)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            hij = (
                _corner_term(R, a, b, i, j, a[i], a[j], cfg)
                - _corner_term(R, a, b, i, j, b[i], a[j], cfg)
                - _corner_term(R, a, b, i, j, a[i], b[j], cfg)
                + _corner_term(R, a, b, i, j, b[i], b[j], cfg)
            )
            H[i, j] = H[j, i] = hij
    for i in range(n):
        others = [k for k in range(n) if k != i]
        hii = -float(R[i, others] @ H[others, i])
        if q_a[i] != 0.0:
            hii += a[i] * q_a[i]
        if q_b[i] != 0.0:
            hii -= b[i] * q_b[i]
        H[i, i] = hii
    return TnMgfWork(R=R, a=a, b=b, S=sd, L=L, L_err=L_err,
                     q_a=q_a, q_b=q_b, q=q_a - q_b, H=H)


def _check_normalizer(w: TnMgfWork) -> None:
    if w.L <= 0.0 or w.L < max(1e-290, 20.0 * w.L_err):
        raise DegenerateBoxError(
            f"rectangle probability {w.L:.3e} is numerically zero "
            f"(error estimate {w.L_err:.1e}); use the corrected path"
        )


def tn_first_two_mgf(box: TruncationBox, p: NormalParams,
                     cfg: QmcConfig = DEFAULT_QMC) -> FirstTwoMoments:
    """Mean, raw second moment and covariance of the doubly truncated normal.

    Requires the rectangle probability to be resolvably positive; extreme
    boxes should go through :func:`tn_first_two_corrected`, which reduces
    them before delegating here.
    """
    w = tn_mgf_work(box, p, cfg)
    _check_normalizer(w)
    mean_x = w.R @ w.q / w.L
    raw2_x = w.R + (w.R @ w.H @ w.R) / w.L
    cov_x = symmetrize(raw2_x - np.outer(mean_x, mean_x))
    mean = p.mu + w.S * mean_x
    cov = symmetrize(cov_x * np.outer(w.S, w.S))
    mean = np.clip(mean, box.lower, box.upper)
    return FirstTwoMoments.from_mean_cov(mean, cov)


def _tn_mean_mgf(box: TruncationBox, p: NormalParams,
                 cfg: QmcConfig = DEFAULT_QMC) -> np.ndarray:
    """Mean only: L and the q vector, no Hessian.  Used where only the
    first-moment vector of a truncated normal is needed."""
    sd = np.sqrt(np.diag(p.sigma))
    R = symmetrize(p.sigma / np.outer(sd, sd))
    np.fill_diagonal(R, 1.0)
    with np.errstate(invalid="ignore"):
        a = (box.lower - p.mu) / sd
        b = (box.upper - p.mu) / sd
    n = p.dim
    L, L_err = mvn_prob(TruncationBox(a, b), NormalParams(np.zeros(n), R), cfg)
    if L <= 0.0 or L < max(1e-290, 20.0 * L_err):
        raise DegenerateBoxError("rectangle probability is numerically zero")
    q = np.zeros(n)
    for i in range(n):
        if np.isfinite(a[i]):
            q[i] += std_pdf(a[i]) * _edge_interval_prob(R, a, b, i, a[i], cfg)
        if np.isfinite(b[i]):
            q[i] -= std_pdf(b[i]) * _edge_interval_prob(R, a, b, i, b[i], cfg)
    return np.clip(p.mu + sd * (R @ q / L), box.lower, box.upper)


# ----------------------------------------------------------------------------
# extreme-case corrections


def _marginal_interval_log_prob(box: TruncationBox, p: NormalParams, i: int) -> float:
    sub = TruncationBox([box.lower[i]], [box.upper[i]])
    return mvn_log_prob(sub, NormalParams([p.mu[i]], [[p.sigma[i, i]]]))


def _degenerate_point(box: TruncationBox, p: NormalParams, i: int) -> float:
    """Near bound of an out-of-bounds coordinate: the finite bound whose
    marginal log-density is larger."""
    sd = math.sqrt(p.sigma[i, i])
    lo, hi = box.lower[i], box.upper[i]
    if np.isinf(lo):
        return float(hi)
    if np.isinf(hi):
        return float(lo)
    # densities compare by |standardized distance|
    return float(lo) if abs(lo - p.mu[i]) < abs(hi - p.mu[i]) else float(hi)


def _assemble_split(dim, part_one, part_two, mean1, cov11, cov12, mean2, cov22):
    """Scatter a 2-block result back into original coordinate order."""
    mean = np.zeros(dim)
    cov = np.zeros((dim, dim))
    mean[part_one] = mean1
    mean[part_two] = mean2
    cov[np.ix_(part_one, part_one)] = cov11
    cov[np.ix_(part_one, part_two)] = cov12
    cov[np.ix_(part_two, part_one)] = cov12.T
    cov[np.ix_(part_two, part_two)] = cov22
    return mean, symmetrize(cov)


def tn_first_two_corrected(box: TruncationBox, p: NormalParams,
                           cfg: QmcConfig = DEFAULT_QMC) -> FirstTwoMoments:
    """Total version of the first-two-moments computation.

    Reductions, in order: coordinates with two infinite limits are split off
    and recombined through the conditional-normal identities; a coordinate
    whose marginal interval probability is below
    ``settings.out_of_bounds_eps`` is degenerated at its near bound with an
    exactly-zero covariance row -- one coordinate at a time, worst first,
    re-screening the conditional remainder (a marginally hopeless coordinate
    can be perfectly probable given an already pinned one); a
    jointly-degenerate remainder (zero mass with every marginal healthy)
    pins its least probable coordinate and retries.  The returned mean
    always lies in the closed box; ``corrections`` labels coordinates by
    their original 1-based position.
    """
    return _corrected(box, p, cfg, tuple(range(1, p.dim + 1)))


def _pin_coordinate(box, p, cfg, labels, worst: int, note: str) -> FirstTwoMoments:
    """Degenerate coordinate ``worst`` at its near bound and recurse on the
    conditional remainder."""
    dim = p.dim
    point = _degenerate_point(box, p, worst)
    keep = [i for i in range(dim) if i != worst]
    notes = (note,)
    if keep:
        cmu, csig = conditional_normal(
            p.mu, p.sigma, PartitionIndex.dropping(dim, [worst]), [point]
        )
        sub = _corrected(box.select(keep), NormalParams(cmu, csig), cfg,
                         tuple(labels[i] for i in keep))
        mean, cov = _assemble_split(
            dim, keep, [worst], sub.mean, sub.cov,
            np.zeros((len(keep), 1)), np.array([point]), np.zeros((1, 1)),
        )
        notes = notes + sub.corrections
    else:
        mean = np.array([point])
        cov = np.zeros((1, 1))
    return FirstTwoMoments.from_mean_cov(mean, cov, corrections=notes)


def _corrected(box: TruncationBox, p: NormalParams, cfg: QmcConfig,
               labels: tuple[int, ...]) -> FirstTwoMoments:
    dim = p.dim
    if dim == 0:
        return FirstTwoMoments.from_mean_cov(np.empty(0), np.empty((0, 0)))
    if box.is_unbounded():
        return FirstTwoMoments.from_mean_cov(p.mu, p.sigma)

    # 1. double-infinite coordinates: only the remainder is truncated
    free = [i for i in range(dim)
            if np.isinf(box.lower[i]) and np.isinf(box.upper[i])]
    if free:
        rest = [i for i in range(dim) if i not in free]
        sub = _corrected(
            box.select(rest), NormalParams(p.mu[rest], p.sigma[np.ix_(rest, rest)]),
            cfg, tuple(labels[i] for i in rest)
        )
        S22 = p.sigma[np.ix_(rest, rest)]
        S12 = p.sigma[np.ix_(free, rest)]
        A = np.linalg.solve(S22, S12.T).T
        mean1 = p.mu[free] + A @ (sub.mean - p.mu[rest])
        cov11 = p.sigma[np.ix_(free, free)] - A @ S12.T + A @ sub.cov @ A.T
        cov12 = A @ sub.cov
        mean, cov = _assemble_split(dim, free, rest, mean1, cov11, cov12,
                                    sub.mean, sub.cov)
        notes = (f"double-infinite coords {tuple(labels[i] for i in free)}",)
        return FirstTwoMoments.from_mean_cov(mean, cov,
                                             corrections=notes + sub.corrections)

    # 2. out-of-bounds coordinate: pin the worst one, condition, re-screen
    log_eps = math.log(settings.out_of_bounds_eps)
    logs = [_marginal_interval_log_prob(box, p, i) for i in range(dim)]
    worst = int(np.argmin(logs))
    if logs[worst] < log_eps:
        return _pin_coordinate(box, p, cfg, labels, worst,
                               f"out-of-bounds coord {labels[worst]}")

    # 3. regular path; a jointly-degenerate box falls back to pinning its
    #    least probable coordinate
    try:
        return tn_first_two_mgf(box, p, cfg)
    except DegenerateBoxError:
        return _pin_coordinate(box, p, cfg, labels, worst,
                               f"jointly-degenerate, pinned coord {labels[worst]}")
