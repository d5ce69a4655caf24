"""Counterfactual dose densities on the shared grid.

All five intervention families produce densities living on one DoseGrid
and normalized by grid quadrature, never analytically: using a single
integration convention across the nuisance, intervention, and estimator
layers removes mixed-convention bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InvalidParameter, NoMassAboveThreshold
from .grid import DoseGrid, integrate_over_dose  # noqa: F401  (re-exported op)

FAMILIES = ("exponential_tilt", "gaussian_kernel", "minimum_dose", "parametric_shift", "parametric")
PARAMETRIC_DISTRIBUTIONS = ("uniform", "beta", "trunc_normal")

NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True)
class InterventionSpec:
    """Tagged choice of counterfactual dose density family.

    Families and their parameters:
      - exponential_tilt(delta): multiply the dose density by exp(delta*d).
      - gaussian_kernel(delta, d_prime): reweight by a Gaussian bump of
        width delta centered at d_prime; recovers the fixed-dose effect
        as delta -> 0 and the observed density as delta -> inf.
      - minimum_dose(d_star): condition the dose density on d > d_star.
      - parametric_shift(eta, sigma): truncated normal centered at the
        fitted dose curve's mean plus eta (data dependent).
      - parametric(distribution, params): fixed density on (0, 1] that
        does not depend on the data (uniform, beta(a, b), or
        trunc_normal(mean, sigma)).
    """

    family: str
    delta: float | None = None
    d_prime: float | None = None
    d_star: float | None = None
    eta: float | None = None
    sigma: float | None = None
    distribution: str | None = None
    params: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown intervention family {self.family!r}")
        if self.family == "exponential_tilt":
            if self.delta is None or not np.isfinite(self.delta):
                raise InvalidParameter("exponential tilt needs a finite delta")
        elif self.family == "gaussian_kernel":
            if self.delta is None or self.delta <= 0:
                raise InvalidParameter("gaussian kernel needs delta > 0")
            if self.d_prime is None or not 0.0 < self.d_prime <= 1.0:
                raise InvalidParameter("gaussian kernel needs d_prime in (0, 1]")
        elif self.family == "minimum_dose":
            if self.d_star is None or not 0.0 <= self.d_star < 1.0:
                raise InvalidParameter("minimum dose needs d_star in [0, 1)")
        elif self.family == "parametric_shift":
            if self.eta is None or not np.isfinite(self.eta):
                raise InvalidParameter("parametric shift needs a finite eta")
            if self.sigma is None or self.sigma <= 0:
                raise InvalidParameter("parametric shift needs sigma > 0")
        elif self.family == "parametric":
            if self.distribution not in PARAMETRIC_DISTRIBUTIONS:
                raise InvalidParameter(
                    f"parametric distribution must be one of {PARAMETRIC_DISTRIBUTIONS}"
                )
            if self.distribution == "beta":
                if len(self.params) != 2 or min(self.params) <= 0:
                    raise InvalidParameter("beta needs two positive shape parameters")
            elif self.distribution == "trunc_normal":
                if len(self.params) != 2 or self.params[1] <= 0:
                    raise InvalidParameter("trunc_normal needs (mean, sigma) with sigma > 0")
            elif self.params:
                raise InvalidParameter("uniform takes no parameters")

    # -- constructors ---------------------------------------------------
    @classmethod
    def tilt(cls, delta: float) -> "InterventionSpec":
        return cls(family="exponential_tilt", delta=float(delta))

    @classmethod
    def gaussian(cls, delta: float, d_prime: float) -> "InterventionSpec":
        return cls(family="gaussian_kernel", delta=float(delta), d_prime=float(d_prime))

    @classmethod
    def minimum_dose(cls, d_star: float) -> "InterventionSpec":
        return cls(family="minimum_dose", d_star=float(d_star))

    @classmethod
    def shift(cls, eta: float, sigma: float) -> "InterventionSpec":
        return cls(family="parametric_shift", eta=float(eta), sigma=float(sigma))

    @classmethod
    def uniform(cls) -> "InterventionSpec":
        return cls(family="parametric", distribution="uniform")

    @classmethod
    def beta(cls, a: float, b: float) -> "InterventionSpec":
        return cls(family="parametric", distribution="beta", params=(float(a), float(b)))

    @classmethod
    def truncated_normal(cls, mean: float, sigma: float) -> "InterventionSpec":
        return cls(family="parametric", distribution="trunc_normal",
                   params=(float(mean), float(sigma)))

    @property
    def data_independent(self) -> bool:
        return self.family == "parametric"

    @property
    def onestep_supported(self) -> bool:
        return self.family in ("exponential_tilt", "parametric")

    def label(self) -> str:
        if self.family == "exponential_tilt":
            return f"tilt(delta={self.delta:g})"
        if self.family == "gaussian_kernel":
            return f"kernel(delta={self.delta:g}, d_prime={self.d_prime:g})"
        if self.family == "minimum_dose":
            return f"mindose(d_star={self.d_star:g})"
        if self.family == "parametric_shift":
            return f"shift(eta={self.eta:g}, sigma={self.sigma:g})"
        inner = ",".join(f"{p:g}" for p in self.params)
        return f"parametric({self.distribution}{(':' + inner) if inner else ''})"


@dataclass(frozen=True)
class DensityCurve:
    """A density sampled on a DoseGrid: nonnegative, quadrature-normalized."""

    grid: DoseGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape != self.grid.points.shape:
            raise InvalidParameter("curve values must match grid size")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidParameter("density values must be finite and nonnegative")
        total = float(values @ self.grid.weights)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InvalidParameter(f"curve not normalized on grid (integral {total})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, grid: DoseGrid, values: np.ndarray) -> "DensityCurve":
        """Build a curve from raw nonnegative values, renormalizing on the grid."""
        values = np.asarray(values, dtype=float)
        total = float(values @ grid.weights)
        if total <= 0 or not np.isfinite(total):
            raise InvalidParameter("cannot normalize a curve with no mass")
        return cls(grid=grid, values=values / total)

    def mean(self) -> float:
        return float((self.values * self.grid.points) @ self.grid.weights)


# -- row-level transforms (shared by curve ops and per-unit estimation) --

def normalize_rows(rows: np.ndarray, grid: DoseGrid) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    totals = rows @ grid.weights
    if np.any(totals <= 0) or not np.all(np.isfinite(totals)):
        raise InvalidParameter("cannot normalize rows without positive mass")
    return rows / totals[:, None]


def tilt_rows(rows: np.ndarray, grid: DoseGrid, delta: float) -> np.ndarray:
    """Exponential tilt of (n, M) density rows; max-subtraction guards overflow."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    factor = np.exp(delta * (grid.points - grid.points.max()))
    return normalize_rows(rows * factor[None, :], grid)


def gaussian_kernel_rows(rows: np.ndarray, grid: DoseGrid, delta: float,
                         d_prime: float) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    bump = np.exp(-0.5 * ((grid.points - d_prime) / delta) ** 2)
    return normalize_rows(rows * bump[None, :], grid)


def minimum_dose_rows(rows: np.ndarray, grid: DoseGrid, d_star: float) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    keep = grid.points > d_star
    if not keep.any():
        raise NoMassAboveThreshold(f"no grid mass above d* = {d_star}")
    masked = rows * keep[None, :]
    totals = masked @ grid.weights
    if np.any(totals <= 0):
        raise NoMassAboveThreshold(f"a unit has no dose density mass above d* = {d_star}")
    return masked / totals[:, None]


def shifted_truncnorm_rows(rows: np.ndarray, grid: DoseGrid, eta: float,
                           sigma: float) -> np.ndarray:
    """Per-row truncated normal centered at the row's quadrature mean plus eta."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    means = (rows * grid.points[None, :]) @ grid.weights
    z = (grid.points[None, :] - (means + eta)[:, None]) / sigma
    return normalize_rows(np.exp(-0.5 * z**2), grid)


def parametric_values(spec: InterventionSpec, grid: DoseGrid) -> np.ndarray:
    if spec.distribution == "uniform":
        raw = np.ones(grid.size)
    elif spec.distribution == "beta":
        raw = stats.beta.pdf(grid.points, spec.params[0], spec.params[1])
    else:
        mean, sigma = spec.params
        raw = np.exp(-0.5 * ((grid.points - mean) / sigma) ** 2)
    return normalize_rows(raw, grid)[0]


def apply_to_rows(spec: InterventionSpec, rows: np.ndarray, grid: DoseGrid) -> np.ndarray:
    """Counterfactual density rows for each unit's fitted dose density rows."""
    if spec.family == "exponential_tilt":
        return tilt_rows(rows, grid, spec.delta)
    if spec.family == "gaussian_kernel":
        return gaussian_kernel_rows(rows, grid, spec.delta, spec.d_prime)
    if spec.family == "minimum_dose":
        return minimum_dose_rows(rows, grid, spec.d_star)
    if spec.family == "parametric_shift":
        return shifted_truncnorm_rows(rows, grid, spec.eta, spec.sigma)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return np.broadcast_to(parametric_values(spec, grid), rows.shape).copy()


# -- curve-level operations ------------------------------------------------

def tilt_density(pi: DensityCurve, delta: float) -> DensityCurve:
    """q(d) proportional to exp(delta*d) * pi(d), renormalized on the grid."""
    if not np.isfinite(delta):
        raise InvalidParameter("tilt delta must be finite")
    if delta == 0.0:
        return pi  # exp(0) = 1 and the input is already normalized
    return DensityCurve(pi.grid, tilt_rows(pi.values, pi.grid, delta)[0])


def gaussian_kernel_density(pi: DensityCurve, delta: float, d_prime: float) -> DensityCurve:
    """q(d) proportional to exp(-(d - d')^2 / (2 delta^2)) * pi(d)."""
    if delta <= 0:
        raise InvalidParameter("gaussian kernel delta must be > 0")
    if not 0.0 < d_prime <= 1.0:
        raise InvalidParameter("d_prime must lie in (0, 1]")
    return DensityCurve(pi.grid, gaussian_kernel_rows(pi.values, pi.grid, delta, d_prime)[0])


def minimum_dose_density(pi: DensityCurve, d_star: float) -> DensityCurve:
    """q(d) proportional to pi(d) * 1(d > d*), renormalized above the threshold."""
    return DensityCurve(pi.grid, minimum_dose_rows(pi.values, pi.grid, d_star)[0])


def parametric_density(spec: InterventionSpec, grid: DoseGrid) -> DensityCurve:
    """Data-independent density evaluated at the grid points and renormalized."""
    if spec.family != "parametric":
        raise InvalidParameter("parametric_density needs a parametric intervention spec")
    return DensityCurve(grid, parametric_values(spec, grid))
