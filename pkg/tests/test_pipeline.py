"""Stage pipeline round trips on a small ensemble."""

import dataclasses
import json
import math

import numpy as np
import pytest

from lgqsmooth import pipeline, recordio
from lgqsmooth.config import RunConfig
from lgqsmooth.ingest import RawTrace
from lgqsmooth.model import PhysicalParams, v_filter_ss
from lgqsmooth.simulate import MeasurementRecord, simulate_truth_ensemble, synthesize_raw

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def small_cfg():
    params = PhysicalParams(gamma=TWO_PI * 11.5e-3, n_th=2.45e5,
                            coop=3.16e4, eta=0.38, gamma_fb=TWO_PI * 85.0,
                            omega=TWO_PI * 1.04e6,
                            record_duration=250e-6)
    return RunConfig(params=params, n_records=5, base_seed=909,
                     targets=("LTLFiltered", "TrueState", "Classical"),
                     eta_new=0.10, out_dir=None, formats=("csv", "bin"))


@pytest.fixture(scope="module")
def run_dir(small_cfg, tmp_path_factory):
    base = tmp_path_factory.mktemp("run")
    pipeline.stage_simulate(small_cfg, base)
    pipeline.stage_estimate(small_cfg, base, jobs=1)
    pipeline.stage_smooth(small_cfg, base)
    pipeline.stage_analyze(small_cfg, base)
    return base


def test_layout(run_dir, small_cfg):
    n = small_cfg.n_records
    assert len(list((run_dir / "records").glob("record_*.csv"))) == n
    assert len(list((run_dir / "records").glob("record_*.bin"))) == n
    assert len(list((run_dir / "truth").glob("truth_*.csv"))) == n
    assert len(list((run_dir / "estimates").glob("filtered_*.csv"))) == n
    assert len(list((run_dir / "estimates").glob("retro_*.csv"))) == n
    for kind in small_cfg.targets:
        found = list((run_dir / "smoothed" / kind).glob("smoothed_*.csv"))
        assert len(found) == n
    for name in ("consistency.csv", "stats.json", "hs.csv", "vacf.csv"):
        assert (run_dir / "analysis" / name).is_file()


def test_records_match_direct_simulation(run_dir, small_cfg):
    ep = pipeline.effective(small_cfg)
    ens = simulate_truth_ensemble(ep, ep.record_duration,
                                  small_cfg.n_records, small_cfg.base_seed)
    records = pipeline.load_records(run_dir / "records")
    assert len(records) == small_cfg.n_records
    for i, rec in enumerate(records):
        ref = ens.record(i)
        np.testing.assert_array_equal(rec.i1, ref.i1)
        np.testing.assert_array_equal(rec.i2, ref.i2)
        assert rec.eta_effective == ref.eta_effective
        assert rec.seed == ref.seed


def test_smoothed_outputs_valid(run_dir, small_cfg):
    ep = pipeline.effective(small_cfg)
    trajs = pipeline.load_trajectories(run_dir / "smoothed" / "TrueState",
                                       "smoothed")
    filt = pipeline.load_trajectories(run_dir / "estimates", "filtered")
    for s, f in zip(trajs, filt):
        assert s.kind == "SmoothedTrue"
        assert np.isfinite(s.mean).all()
        # smoothing never inflates the covariance and respects the target
        assert (s.vw <= f.vw + 1e-12).all()
        assert (s.vw >= 1.0 - 1e-12).all()


def test_analyze_tables(run_dir, small_cfg):
    doc = json.loads((run_dir / "analysis" / "stats.json").read_text())
    assert doc["n_records"] == small_cfg.n_records
    assert set(doc["outside_fraction"]) == {
        "Filtered", "Retrofiltered", "SmoothedTrue", "SmoothedLTL",
        "ClassicalSmoothed"}
    assert set(doc["hs_mean"]) == {"TrueState:Filtered",
                                   "TrueState:SmoothedTrue",
                                   "TrueState:ClassicalSmoothed"}
    lines = (run_dir / "analysis" / "hs.csv").read_text().splitlines()
    assert lines[0] == "t_s,kind,hs_empirical,hs_theory"
    assert len(lines) > 1


def test_parallel_estimate_is_bitwise_identical(small_cfg, run_dir,
                                                tmp_path):
    other = tmp_path / "par"
    pipeline.stage_simulate(small_cfg, other)
    pipeline.stage_estimate(small_cfg, other, jobs=2)
    for name in sorted(p.name for p in (run_dir / "estimates").iterdir()):
        a = recordio.checksum(run_dir / "estimates" / name)
        b = recordio.checksum(other / "estimates" / name)
        assert a == b, name


def test_load_records_requires_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        pipeline.load_records(tmp_path)
    with pytest.raises(FileNotFoundError):
        pipeline.load_trajectories(tmp_path, "filtered")


def test_stage_inject(run_dir, small_cfg, tmp_path):
    out = tmp_path / "inj"
    n = pipeline.stage_inject(run_dir / "records", out, 0.38, 0.10, seed=5,
                              formats=("bin",))
    assert n == small_cfg.n_records
    injected = pipeline.load_records(out)
    clean = pipeline.load_records(run_dir / "records")
    for rec, ref in zip(injected, clean):
        assert rec.eta_effective == 0.10
        assert rec.n == ref.n
        assert not np.allclose(rec.i1, ref.i1)
    out2 = tmp_path / "inj2"
    pipeline.stage_inject(run_dir / "records", out2, 0.38, 0.10, seed=5,
                          formats=("bin",))
    for p in sorted(out.iterdir()):
        assert recordio.checksum(p) == recordio.checksum(out2 / p.name)


def test_stage_demod(tmp_path, ref_ep):
    fs = 1.0e6
    omega = TWO_PI * 2.0e5
    dt = 1e-6
    t = np.arange(2000) * dt
    rec = MeasurementRecord(dt, 200.0 * np.cos(TWO_PI * 400.0 * t),
                            np.zeros_like(t))
    raw = synthesize_raw(rec, omega, fs, seed=3)
    trace = tmp_path / "trace.bin"
    recordio.write_raw_bin(raw, trace)
    out = tmp_path / "demod"
    n = pipeline.stage_demod(trace, out, omega, bw_3db=30e3, order=4,
                             dt_out=1e-6, record_len=300e-6,
                             discard=1000e-6, formats=("csv",))
    assert n == 3
    parts = pipeline.load_records(out)
    assert all(p.n == 300 for p in parts)


def test_injection_study_structure(ref_ep):
    study = pipeline.run_injection_study(ref_ep, 0.10, 40, 777, 888,
                                         window=3e-4, warmup_records=1)
    n_win = int(round(3e-4 / ref_ep.dt))
    assert study.m_ltl.shape == (40, n_win + 1, 2)
    assert study.m_f.shape == study.m_ltl.shape
    assert study.v_f[0] == pytest.approx(study.ep_new.sigma2_uncon)
    assert study.v_tar == pytest.approx(v_filter_ss(ref_ep))
    # smoothing interpolates between the target floor and the filter
    assert (study.v_s <= study.v_f + 1e-12).all()
    assert (study.v_s >= study.v_tar - 1e-12).all()
    assert np.isfinite(study.m_s).all() and np.isfinite(study.m_cs).all()
