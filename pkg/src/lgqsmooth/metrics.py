"""Statistical comparators for trajectory ensembles.

Hilbert-Schmidt distances between Gaussian states (empirical and closed
form), theory curves for the estimator error spread, the ensemble
self-consistency check with its standard-error-of-variance bars, and the
velocity autocorrelation of trajectory means.

The standard error of an ensemble variance uses an effective record count
that discounts temporal correlation between consecutive records of length
T: N_eff = N / [1 + 2 sum_{k=1}^{N-1} (1 - k/N) exp(-Gamma T k)].  For
independently seeded synthetic records this is conservative (the true
correlation is zero); error bars are then wider than strictly necessary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimate import Trajectory
from .model import (
    EffectiveParams,
    GaussianState,
    retro_precision,
    retro_precision_ss,
    v_filter,
    v_filter_ss,
)
from .smooth import TargetSpec, combine_arrays, z_values

DEFAULT_VACF_THRESHOLD = 1.0 / math.e

ESTIMATOR_KINDS = ("Filtered", "Smoothed", "Classical")


# ---------------------------------------------------------------------------
# Hilbert-Schmidt distance
# ---------------------------------------------------------------------------

def gaussian_hs_sq(a: GaussianState, b: GaussianState) -> float:
    """Squared Hilbert-Schmidt distance Tr[(rho_a - rho_b)^2].

    Purity P = 1/sqrt(det V); overlap O = 2 exp(-r^T (Va+Vb)^-1 r / 2)
    / sqrt(det(Va+Vb)) with r the mean difference.
    """
    va, vb = a.cov, b.cov
    det_a, det_b = np.linalg.det(va), np.linalg.det(vb)
    if det_a <= 0 or det_b <= 0:
        raise ValueError("covariance matrices must be positive definite")
    s = va + vb
    det_s = np.linalg.det(s)
    if det_s <= 1e-300:
        raise ValueError("singular covariance sum")
    r = a.mean - b.mean
    overlap = 2.0 * math.exp(-0.5 * float(r @ np.linalg.solve(s, r))) / math.sqrt(det_s)
    # squared norm; tiny negatives are rounding artifacts
    return max(0.0, 1.0 / math.sqrt(det_a) + 1.0 / math.sqrt(det_b) - 2.0 * overlap)


def hs_sq_isotropic(v_a, m_a, v_b, m_b) -> np.ndarray:
    """Vectorized distance for isotropic states; means have a trailing 2-axis."""
    v_a = np.asarray(v_a, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    r2 = np.sum((np.asarray(m_a, dtype=float) - np.asarray(m_b, dtype=float)) ** 2,
                axis=-1)
    s = v_a + v_b
    out = 1.0 / v_a + 1.0 / v_b - 4.0 * np.exp(-0.5 * r2 / s) / s
    return np.maximum(out, 0.0)


def hs_avg_theory(v_tar: float, v_est: float) -> float:
    """Closed-form ensemble average of the squared HS distance.

    Valid when the estimator is consistent with the target (the mean error
    carries variance v_est - v_tar per component); the average then reduces
    to the purity difference 1/v_tar - 1/v_est.
    """
    if not 0 < v_tar <= v_est:
        raise ValueError("need v_est >= v_tar > 0")
    return 1.0 / v_tar - 1.0 / v_est


def hs_avg_theory_classical(ep: EffectiveParams, tgt: TargetSpec) -> float:
    """Steady-state HS average between target states and classical-smoothed ones.

    1/v_cS + 1/v_tar - 4 / [(v_S + v_cS) + z^2 (v_F + v_R)]: the classical
    mean carries the extra spread z^2 (v_F + v_R) about the target.
    """
    if tgt.v_tar <= 0:
        raise ValueError("needs a quantum target (v_tar > 0)")
    v_f = v_filter_ss(ep)
    w = retro_precision_ss(ep)
    if w == 0:
        raise ValueError("undefined without measurement (retro precision 0)")
    v_s = _v_smoothed_scalar(v_f, w, tgt.v_tar)
    v_cs = v_f / (1.0 + w * v_f)
    z = float(z_values(v_f, w, tgt.v_tar))
    denom = (v_s + v_cs) + z * z * (v_f + 1.0 / w)
    return 1.0 / v_cs + 1.0 / tgt.v_tar - 4.0 / denom


def _v_smoothed_scalar(v_f: float, w: float, v_tar: float) -> float:
    v_s, _ = combine_arrays(np.array([v_f]), np.zeros((1, 2)),
                            np.array([w]), np.zeros((1, 2)), v_tar)
    return float(v_s[0])


def std_delta_theory(ep: EffectiveParams, estimator_kind: str,
                     tgt: TargetSpec, t) -> np.ndarray:
    """Theory curve for Std[m_est(t) - m_tar(t)].

    Filtered -> sqrt(v_F - v_tar); Smoothed -> sqrt(v_S - v_tar);
    Classical -> sqrt((v_S - v_tar) + z^2 (v_F + v_R)).  The retrofilter
    horizon is ep.record_duration.
    """
    if estimator_kind not in ESTIMATOR_KINDS:
        raise ValueError(f"unknown estimator kind: {estimator_kind!r}")
    t = np.asarray(t, dtype=float)
    v_f = v_filter(t, ep)
    if estimator_kind == "Filtered":
        arg = v_f - tgt.v_tar
    else:
        w = retro_precision(t, ep.record_duration, ep)
        zeros = np.zeros(t.shape + (2,))
        v_s, _ = combine_arrays(np.atleast_1d(v_f), np.atleast_2d(zeros),
                                np.atleast_1d(w), np.atleast_2d(zeros),
                                tgt.v_tar)
        v_s = v_s.reshape(t.shape)
        arg = v_s - tgt.v_tar
        if estimator_kind == "Classical":
            # z^2 v_R = w a^2 with z = w a, finite at w = 0
            z = z_values(v_f, w, tgt.v_tar)
            a = np.divide(z, w, out=np.zeros_like(z + 0.0), where=w > 0)
            arg = arg + z * z * v_f + w * a * a
    if np.any(arg < 0):
        raise ValueError("negative variance argument: invalid target")
    return np.sqrt(arg)


# ---------------------------------------------------------------------------
# standard error of variance
# ---------------------------------------------------------------------------

def effective_record_count(ep: EffectiveParams, n_records: int,
                           record_duration: float) -> float:
    """Record count discounted for correlation between consecutive records."""
    if n_records < 2:
        raise ValueError("need at least two records")
    q = math.exp(-ep.gamma_eff * record_duration)
    k = np.arange(1, n_records)
    total = float(np.sum((1.0 - k / n_records) * q ** k))
    return n_records / (1.0 + 2.0 * total)


def sev(ep: EffectiveParams, n_records: int, value: float,
        record_duration: float) -> float:
    """Standard error of an ensemble variance whose true value is `value`."""
    n_eff = effective_record_count(ep, n_records, record_duration)
    return math.sqrt(4.0 / (2.0 * n_eff)) * value


# ---------------------------------------------------------------------------
# ensemble self-consistency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleStats:
    """Per-time ensemble variances against their deterministic theory.

    ``var_ens``, ``theory``, ``sev``, ``outside`` are keyed by trajectory
    kind; ``outside`` flags samples deviating by more than 3 SEV.
    ``hs_mean`` is filled by pipelines that also compare states directly,
    keyed by (target kind, estimator kind).
    """

    times: np.ndarray
    var_ens: dict
    theory: dict
    sev: dict
    outside: dict
    sigma2_uncon: float
    n_records: int
    n_eff: float
    hs_mean: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_eff > self.n_records + 1e-9:
            raise ValueError("n_eff cannot exceed n_records")
        for kind, arr in self.var_ens.items():
            finite = arr[np.isfinite(arr)]
            if np.any(finite < 0):
                raise ValueError(f"negative ensemble variance for {kind}")


def consistency_check(trajs: Sequence[Trajectory],
                      ep: EffectiveParams) -> EnsembleStats:
    """Compare ensemble variances of the means with their theory values.

    State kinds satisfy Var_ens[m_C(t)] = sigma2_uncon - v_C(t); the
    retrofiltered effect satisfies Var_ens[m_R(t)] = sigma2_uncon + v_R(t)
    (samples without a defined effect mean are skipped).  Variances are
    pooled over the two mean components with the unbiased estimator.
    """
    groups: dict[str, list[Trajectory]] = {}
    for tr in trajs:
        groups.setdefault(tr.kind, []).append(tr)
    if not groups:
        raise ValueError("empty ensemble")
    times = None
    sig2 = ep.sigma2_uncon
    var_ens: dict = {}
    theory: dict = {}
    sev_d: dict = {}
    outside: dict = {}
    n_records = 0
    duration = 0.0
    for kind, group in groups.items():
        if len(group) < 2:
            raise ValueError(f"need at least two records per kind ({kind})")
        t0 = group[0].times
        for tr in group[1:]:
            if not np.array_equal(tr.times, t0):
                raise ValueError(f"misaligned time grids within kind {kind}")
            if not np.array_equal(tr.vw, group[0].vw):
                raise ValueError(f"inconsistent covariances within kind {kind}")
        if times is None:
            times = t0
            duration = float(t0[-1] - t0[0])
        means = np.stack([tr.mean for tr in group])
        v = means.var(axis=0, ddof=1).mean(axis=-1)
        if kind == "Retrofiltered":
            w = group[0].vw
            th = np.where(w > 0, sig2 + 1.0 / np.where(w > 0, w, 1.0), np.nan)
            v = np.where(w > 0, v, np.nan)
        else:
            th = sig2 - group[0].vw
        n_records = max(n_records, len(group))
        factor = math.sqrt(4.0 / (2.0 * effective_record_count(
            ep, len(group), duration)))
        bars = factor * np.abs(th)
        var_ens[kind] = v
        theory[kind] = th
        sev_d[kind] = bars
        # absolute floor keeps float dust (exact-start samples) unflagged
        outside[kind] = np.abs(v - th) > 3.0 * bars + 1e-9 * sig2
    n_eff = effective_record_count(ep, n_records, duration)
    return EnsembleStats(times, var_ens, theory, sev_d, outside, sig2,
                         n_records, n_eff)


# ---------------------------------------------------------------------------
# velocity autocorrelation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VacfResult:
    """Normalized velocity autocorrelation per trajectory kind.

    ``decorrelation_time`` is the first lag at which the curve drops below
    the threshold (math.inf if it never does within the window).
    """

    lags: np.ndarray
    values: dict
    decorrelation_time: dict
    threshold: float

    def __post_init__(self) -> None:
        for kind, val in self.values.items():
            if val[0] != 1.0:
                raise ValueError(f"unnormalized autocorrelation for {kind}")


def _acf_biased(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation over the last-but-one axis, averaged over the
    leading and trailing axes: x has shape (N, n, 2)."""
    n = x.shape[1]
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :max_lag + 1]
    return acov.mean(axis=(0, 2)) / n


def vacf(trajs: Sequence[Trajectory], max_lag: int | None = None,
         threshold: float = DEFAULT_VACF_THRESHOLD) -> VacfResult:
    """Autocorrelation of finite-difference mean velocities per kind."""
    groups: dict[str, list[Trajectory]] = {}
    for tr in trajs:
        groups.setdefault(tr.kind, []).append(tr)
    if not groups:
        raise ValueError("empty ensemble")
    first = next(iter(groups.values()))[0]
    dt = float(first.times[1] - first.times[0])
    n_v = first.times.shape[0] - 1
    if max_lag is None:
        max_lag = n_v - 1
    if max_lag >= n_v:
        raise ValueError("trajectory too short for requested max lag")
    values: dict = {}
    decorr: dict = {}
    for kind, group in groups.items():
        means = np.stack([tr.mean for tr in group])
        if not np.all(np.isfinite(means)):
            raise ValueError(f"non-finite means in kind {kind}")
        vel = np.diff(means, axis=1) / dt
        acov = _acf_biased(vel, max_lag)
        if acov[0] <= 0:
            raise ValueError(f"zero velocity power in kind {kind}")
        norm = acov / acov[0]
        norm[0] = 1.0
        values[kind] = norm
        below = norm < threshold
        decorr[kind] = float(np.flatnonzero(below)[0]) * dt if below.any() \
            else math.inf
    lags = np.arange(max_lag + 1) * dt
    return VacfResult(lags, values, decorr, threshold)
