"""Pointwise combination of filtered and retrofiltered trajectories.

The smoothed state for a Gaussian target with covariance v_tar * I is

    v_S = [ (v_F - v_tar)^-1 + (v_R + v_tar)^-1 ]^-1 + v_tar
    m_S = (v_S - v_tar) [ (v_F - v_tar)^-1 m_F + (v_R + v_tar)^-1 m_R ]

evaluated per sample.  The retrofiltered part is consumed in information
form, (v_R + v_tar)^-1 m_R = z / (1 + w v_tar), so uninformative samples
(w = 0) never produce infinities: there the smoothed state is the filtered
state, copied verbatim.

Targets: the long-time-limit filtered state (v_tar = v_F_ss), the true
state (v_tar = 1), and the classical smoother (all target terms zero),
whose output can dip below the ground-state variance and is therefore
flagged non-physical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimate import Trajectory
from .model import (
    EffectiveParams,
    GaussianState,
    retro_precision_ss,
    v_filter_ss,
)

TARGET_KINDS = ("LTLFiltered", "TrueState", "Classical")

_TRAJ_KIND = {
    "LTLFiltered": "SmoothedLTL",
    "TrueState": "SmoothedTrue",
    "Classical": "ClassicalSmoothed",
}

# relative width of the band around v_F = v_tar inside which the exact
# convergence limit (smoothed = filtered) is substituted
SINGULARITY_EPS = 1e-9


@dataclass(frozen=True)
class TargetSpec:
    """What the smoother estimates: target kind and its covariance scale."""

    kind: str
    v_tar: float

    def __post_init__(self) -> None:
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind: {self.kind!r}")
        if self.v_tar < 0:
            raise ValueError("v_tar must be nonnegative")
        if self.kind == "Classical" and self.v_tar != 0.0:
            raise ValueError("classical target has no covariance parameter")
        if self.kind == "TrueState" and self.v_tar != 1.0:
            raise ValueError("true-state target variance is the ground-state value")

    @classmethod
    def ltl(cls, ep: EffectiveParams) -> "TargetSpec":
        """Target the long-time-limit filtered state."""
        return cls("LTLFiltered", v_filter_ss(ep))

    @classmethod
    def true_state(cls) -> "TargetSpec":
        return cls("TrueState", 1.0)

    @classmethod
    def classical(cls) -> "TargetSpec":
        return cls("Classical", 0.0)


def combine_arrays(v_f: np.ndarray, m_f: np.ndarray, w: np.ndarray,
                   z: np.ndarray, v_tar: float) -> tuple[np.ndarray, np.ndarray]:
    """Smoothing combination on bare arrays (means may be stacked).

    v_f, w: (n,); m_f, z: (..., n, 2).  Samples with w = 0, and samples
    where the filter has converged onto the target (v_F - v_tar below
    SINGULARITY_EPS relative), copy the filtered state verbatim: both are
    the exact limits of the combination.
    """
    v_f = np.asarray(v_f, dtype=float)
    w = np.asarray(w, dtype=float)
    d = v_f - v_tar
    eps = SINGULARITY_EPS * v_tar
    bad = d < -eps
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"smooth: target variance exceeds filtered variance at sample {idx}")
    copy = (d <= eps) | (w == 0.0)
    d_safe = np.where(copy, 1.0, d)
    info_f = 1.0 / d_safe
    denom = 1.0 + w * v_tar
    info_r = w / denom
    p_s = 1.0 / (info_f + info_r)
    v_s = np.where(copy, v_f, p_s + v_tar)
    m_s = p_s[..., :, None] * (info_f[..., :, None] * m_f + z / denom[..., :, None])
    m_s = np.where(copy[..., :, None], m_f, m_s)
    return v_s, m_s


def smooth_general(filt: Trajectory, retro: Trajectory,
                   tgt: TargetSpec) -> Trajectory:
    """Combine a filtered and a retrofiltered trajectory for a target.

    The trajectories must share one time grid.  Classical targets yield
    states flagged non-physical; quantum targets always remain physical.
    """
    if filt.kind not in ("Filtered", "LTL"):
        raise ValueError(f"cannot smooth a trajectory of kind {filt.kind!r}")
    if retro.kind != "Retrofiltered":
        raise ValueError("second argument must be a retrofiltered trajectory")
    if not np.array_equal(filt.times, retro.times):
        raise ValueError("filtered and retrofiltered time grids differ")
    v_s, m_s = combine_arrays(filt.vw, filt.mean, retro.vw, retro.info,
                              tgt.v_tar)
    return Trajectory(filt.times, m_s, v_s, _TRAJ_KIND[tgt.kind],
                      physical=tgt.kind != "Classical",
                      converged=filt.converged)


def smooth_classical(filt: Trajectory, retro: Trajectory) -> Trajectory:
    """Classical fixed-interval smoother: target terms all zero.

    v_cS = (1/v_F + 1/v_R)^-1 can undercut the ground-state variance, so
    the output is permanently flagged non-physical.
    """
    return smooth_general(filt, retro, TargetSpec.classical())


def check_physicality(s: GaussianState) -> bool:
    """True iff the covariance respects the uncertainty bound (min eig >= 1)."""
    return bool(np.linalg.eigvalsh(s.cov)[0] >= 1.0 - 1e-9)


def z_values(v_f: np.ndarray, w: np.ndarray, v_tar: float) -> np.ndarray:
    """Gain relating the classical and general smoothed means per sample:

        m_cS - m_S = z (m_R - m_F)

    z = v_cS / v_R - (v_S - v_tar) / (v_R + v_tar), in precision form.
    Requires v_f >= v_tar; at the convergence boundary the limit is taken.
    """
    v_f = np.asarray(v_f, dtype=float)
    w = np.asarray(w, dtype=float)
    d = v_f - v_tar
    info_f = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), np.inf)
    denom = 1.0 + w * v_tar
    p_s = 1.0 / (info_f + w / denom)
    v_cs_w = w * v_f / (1.0 + w * v_f)
    return v_cs_w - w * p_s / denom


def z_factor(ep: EffectiveParams, tgt: TargetSpec) -> float:
    """Steady-state value of the classical-vs-general mean gain."""
    return float(z_values(v_filter_ss(ep), retro_precision_ss(ep), tgt.v_tar))


# ---------------------------------------------------------------------------
# Matrix form (general covariances; the scalar path above is the validated
# one, this is a best-effort companion for non-isotropic states)
# ---------------------------------------------------------------------------

def smooth_matrix_point(v_f: np.ndarray, m_f: np.ndarray, w: np.ndarray,
                        z: np.ndarray, v_tar: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
    """One-sample matrix combination.

    v_f, w, v_tar: (2, 2) with v_f - v_tar positive definite; w is the
    retrofiltered precision matrix and z = w m_R its information vector.
    """
    v_f = np.asarray(v_f, dtype=float)
    w = np.asarray(w, dtype=float)
    v_tar = np.asarray(v_tar, dtype=float)
    d = v_f - v_tar
    eye = np.eye(2)
    info_f = np.linalg.inv(d)
    # (W^-1 + V_tar)^-1 = W (I + V_tar W)^-1, finite for singular W
    info_r = w @ np.linalg.inv(eye + v_tar @ w)
    p_s = np.linalg.inv(info_f + info_r)
    v_s = p_s + v_tar
    # (V_R + V_tar)^-1 m_R = (I + W V_tar)^-1 z
    m_s = p_s @ (info_f @ np.asarray(m_f, dtype=float)
                 + np.linalg.inv(eye + w @ v_tar) @ np.asarray(z, dtype=float))
    return v_s, m_s
