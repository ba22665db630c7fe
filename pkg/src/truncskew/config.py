"""Library-wide numeric tolerances and switch points.

A single mutable instance, :data:`settings`, is consulted by the numeric
modules.  Tests that need to probe edge behaviour may temporarily override
fields; production callers normally never touch it.
"""

from dataclasses import dataclass


@dataclass
class Settings:
    # Relative tolerance below which negative eigenvalues are clamped to zero
    # and above which a matrix is rejected as not PSD.
    psd_rel_tol: float = 1e-10

    # Condition-number cap for conditioned-on covariance blocks.
    max_block_condition: float = 1e14

    # A coordinate is "out of bounds" when its marginal interval probability
    # (evaluated in log space) falls below this.
    out_of_bounds_eps: float = 1e-12

    # Below this value of the standardized shift, all extended skew-normal
    # computations switch to the limiting-normal parameters.
    tau_tilde_limit: float = -35.0

    # Rejection sampling is abandoned for the exact conditional construction
    # below this log selection probability ...
    sampler_log_xi_floor: float = -30.0
    # ... or when the expected number of raw draws exceeds this budget.
    sampler_max_expected_draws: float = 1e8

    # Per-coordinate cap on moment order in the recurrences.
    max_moment_order: int = 8

    # Cap on dimension for 2**p sign-pattern sums.
    orthant_sum_max_dim: int = 12

    # Linear-space division by the skewness normalizer is allowed above this;
    # below it the ratio is formed in log space.
    linear_xi_floor: float = 1e-250


settings = Settings()
