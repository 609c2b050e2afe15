"""Shared fixtures: reference parameter sets and session-scoped ensembles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lgqsmooth.model import EffectiveParams, PhysicalParams, effective_params

TWO_PI = 2.0 * math.pi

# Reference experiment: feedback-broadened nanomechanical resonator under
# strong optical monitoring.  Frequencies in the config sense (Hz) are
# converted to angular rates here.
REF = dict(
    gamma=TWO_PI * 11.5e-3,
    gamma_fb=TWO_PI * 85.0,
    n_th=2.45e5,
    coop=3.16e4,
    eta=0.38,
    omega=TWO_PI * 1.04e6,
    record_duration=750e-6,
    dt=1e-6,
)


@pytest.fixture(scope="session")
def ref_params() -> PhysicalParams:
    return PhysicalParams(**REF)


@pytest.fixture(scope="session")
def ref_ep(ref_params) -> EffectiveParams:
    return effective_params(ref_params)


@pytest.fixture(scope="session")
def ref_ep_injected(ref_params) -> EffectiveParams:
    """Reference system seen through a detector of efficiency 0.10."""
    import dataclasses

    return effective_params(dataclasses.replace(ref_params, eta=0.10))


@pytest.fixture(scope="session")
def main_truth(ref_ep):
    """Shared 2000-record truth ensemble at the reference parameters."""
    from lgqsmooth.simulate import simulate_truth_ensemble

    return simulate_truth_ensemble(ref_ep, ref_ep.record_duration, 2000,
                                   base_seed=20240001)


def random_effective_params(rng: np.random.Generator, *, monitored: bool = False,
                            record_duration: float = 750e-6,
                            dt: float = 1e-6) -> EffectiveParams:
    """Log-uniform draw over a wide physical parameter range.

    monitored=True guarantees eta * coop > 0 so retrofiltering is
    informative.
    """
    gamma = 10.0 ** rng.uniform(-2, 4)
    n_th = 10.0 ** rng.uniform(-2, 6)
    coop = 10.0 ** rng.uniform(-2 if monitored else -3, 6)
    eta = rng.uniform(0.05, 1.0)
    return EffectiveParams(gamma_eff=gamma, n_th_eff=n_th, coop_eff=coop,
                           eta=eta, record_duration=record_duration, dt=dt)
