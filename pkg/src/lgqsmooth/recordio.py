"""File formats for records, trajectories, raw traces and analysis tables.

All text output uses %.17g so float64 values round-trip exactly and two
writes of the same data are byte-identical.  Binary formats are
little-endian float64 throughout.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .estimate import KINDS, Trajectory
from .ingest import RawTrace
from .metrics import EnsembleStats, VacfResult
from .simulate import MeasurementRecord

SCHEMA_VERSION = 1
_RECORD_MAGIC = b"LGQ1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _open_w(path):
    return open(path, "w", newline="\n")


# ---------------------------------------------------------------------------
# measurement records
# ---------------------------------------------------------------------------

def write_record_csv(rec: MeasurementRecord, path) -> None:
    """Columns t_s,i1,i2; efficiency and seed metadata are not stored."""
    with _open_w(path) as fh:
        fh.write("t_s,i1,i2\n")
        dt = rec.dt
        for k in range(rec.n):
            fh.write(f"{_fmt(k * dt)},{_fmt(rec.i1[k])},{_fmt(rec.i2[k])}\n")


def read_record_csv(path) -> MeasurementRecord:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3 or data.shape[0] < 2:
        raise ValueError(f"{path}: expected t_s,i1,i2 rows")
    t = data[:, 0]
    dt = float(t[1] - t[0])
    if dt <= 0 or np.abs(np.diff(t) - dt).max() > 1e-6 * dt:
        raise ValueError(f"{path}: time column is not uniform")
    return MeasurementRecord(dt=dt, i1=data[:, 1], i2=data[:, 2])


def write_record_bin(rec: MeasurementRecord, path) -> None:
    """Magic 'LGQ1', then dt (f8), n (u8), eta (f8, NaN=unknown),
    seed (i8, -1=unknown), then interleaved i1,i2 samples (f8)."""
    eta = float("nan") if rec.eta_effective is None else rec.eta_effective
    seed = -1 if rec.seed is None else int(rec.seed)
    body = np.empty(2 * rec.n, dtype="<f8")
    body[0::2] = rec.i1
    body[1::2] = rec.i2
    with open(path, "wb") as fh:
        fh.write(_RECORD_MAGIC)
        fh.write(struct.pack("<dQdq", rec.dt, rec.n, eta, seed))
        fh.write(body.tobytes())


def read_record_bin(path) -> MeasurementRecord:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _RECORD_MAGIC:
            raise ValueError(f"{path}: not a record file")
        header = fh.read(32)
        if len(header) != 32:
            raise ValueError(f"{path}: truncated header")
        dt, n, eta, seed = struct.unpack("<dQdq", header)
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.shape[0] != 2 * n:
        raise ValueError(f"{path}: truncated body")
    return MeasurementRecord(
        dt=dt, i1=body[0::2].copy(), i2=body[1::2].copy(),
        eta_effective=None if np.isnan(eta) else eta,
        seed=None if seed < 0 else seed)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns t_s,kind,mean_x1,mean_x2,vw,info_x1,info_x2.

    vw holds the covariance for state kinds and the effect precision for
    the retrofilter; the info columns carry the retrofilter's information
    vector and are nan otherwise.
    """
    info = traj.info
    with _open_w(path) as fh:
        fh.write("t_s,kind,mean_x1,mean_x2,vw,info_x1,info_x2\n")
        for k in range(traj.n_points):
            z1, z2 = (info[k] if info is not None
                      else (float("nan"), float("nan")))
            fh.write(f"{_fmt(traj.times[k])},{traj.kind},"
                     f"{_fmt(traj.mean[k, 0])},{_fmt(traj.mean[k, 1])},"
                     f"{_fmt(traj.vw[k])},{_fmt(z1)},{_fmt(z2)}\n")


def read_trajectory_csv(path) -> Trajectory:
    times, means, vw, info, kinds = [], [], [], [], set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "t_s" or len(header) != 7:
            raise ValueError(f"{path}: expected trajectory header")
        for row in reader:
            times.append(float(row[0]))
            kinds.add(row[1])
            means.append((float(row[2]), float(row[3])))
            vw.append(float(row[4]))
            info.append((float(row[5]), float(row[6])))
    if len(kinds) != 1:
        raise ValueError(f"{path}: expected exactly one trajectory kind")
    kind = kinds.pop()
    if kind not in KINDS:
        raise ValueError(f"{path}: unknown trajectory kind {kind!r}")
    info_arr = np.array(info) if kind == "Retrofiltered" else None
    return Trajectory(np.array(times), np.array(means), np.array(vw),
                      kind, info=info_arr)


def write_means_csv(times: np.ndarray, means: np.ndarray, path) -> None:
    """Plain mean trajectories (ground truth dumps): t_s,x1,x2."""
    with _open_w(path) as fh:
        fh.write("t_s,x1,x2\n")
        for k in range(times.shape[0]):
            fh.write(f"{_fmt(times[k])},{_fmt(means[k, 0])},"
                     f"{_fmt(means[k, 1])}\n")


def read_means_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected t_s,x1,x2 rows")
    return data[:, 0], data[:, 1:]


# ---------------------------------------------------------------------------
# raw traces
# ---------------------------------------------------------------------------

def write_raw_csv(raw: RawTrace, path) -> None:
    with _open_w(path) as fh:
        fh.write("t_s,value\n")
        fs = raw.fs
        for k in range(raw.n):
            fh.write(f"{_fmt(k / fs)},{_fmt(raw.samples[k])}\n")


def read_raw_csv(path) -> RawTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ValueError(f"{path}: expected t_s,value rows")
    t = data[:, 0]
    step = float(t[1] - t[0])
    if step <= 0 or np.abs(np.diff(t) - step).max() > 1e-6 * step:
        raise ValueError(f"{path}: time column is not uniform")
    return RawTrace(fs=1.0 / step, samples=data[:, 1])


def write_raw_bin(raw: RawTrace, path) -> None:
    """Header fs (f8), n (u8); then samples as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<dQ", raw.fs, raw.n))
        fh.write(np.asarray(raw.samples, dtype="<f8").tobytes())


def read_raw_bin(path) -> RawTrace:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValueError(f"{path}: truncated header")
        fs, n = struct.unpack("<dQ", header)
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.shape[0] != n:
        raise ValueError(f"{path}: truncated body")
    return RawTrace(fs=fs, samples=body.copy())


# ---------------------------------------------------------------------------
# analysis tables
# ---------------------------------------------------------------------------

def write_consistency_csv(stats: EnsembleStats, path) -> None:
    """Per-time rows t_s,kind,var_ens,theory,sev,outside."""
    with _open_w(path) as fh:
        fh.write("t_s,kind,var_ens,theory,sev,outside\n")
        for kind in sorted(stats.var_ens):
            v = stats.var_ens[kind]
            th = stats.theory[kind]
            bars = stats.sev[kind]
            out = stats.outside[kind]
            for k in range(stats.times.shape[0]):
                fh.write(f"{_fmt(stats.times[k])},{kind},{_fmt(v[k])},"
                         f"{_fmt(th[k])},{_fmt(bars[k])},{int(out[k])}\n")


def write_stats_json(stats: EnsembleStats, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n_records": stats.n_records,
        "n_eff": stats.n_eff,
        "sigma2_uncon": stats.sigma2_uncon,
        "kinds": sorted(stats.var_ens),
        "outside_fraction": {
            kind: float(np.mean(stats.outside[kind]))
            for kind in sorted(stats.outside)
        },
        "hs_mean": {
            ":".join(k) if isinstance(k, tuple) else str(k): float(val)
            for k, val in sorted(stats.hs_mean.items())},
    }
    with _open_w(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_hs_csv(times: np.ndarray, rows: dict, path) -> None:
    """rows: kind -> (empirical, theory) arrays on the common time grid."""
    with _open_w(path) as fh:
        fh.write("t_s,kind,hs_empirical,hs_theory\n")
        for kind in sorted(rows):
            emp, th = rows[kind]
            for k in range(times.shape[0]):
                fh.write(f"{_fmt(times[k])},{kind},{_fmt(emp[k])},"
                         f"{_fmt(th[k])}\n")


def write_vacf_csv(res: VacfResult, path) -> None:
    with _open_w(path) as fh:
        fh.write("lag_s,kind,value\n")
        for kind in sorted(res.values):
            vals = res.values[kind]
            for k in range(res.lags.shape[0]):
                fh.write(f"{_fmt(res.lags[k])},{kind},{_fmt(vals[k])}\n")


def checksum(path) -> str:
    """Stable content hash used by the determinism checks."""
    import hashlib

    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()
