"""Transient flow statistics on station lines, particle CDFs, and comparison
against reference (PIV-style) profiles.

Moments accumulate with Welford updates so long averaging windows with small
fluctuations on large means stay accurate; profiles are normalized by the
jet-exit scales (Ua, Da).
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientStatisticsError, SwirlsimError
from .geometry import StationLine, VoxelMesh
from .state import JetReference


class StationStatistics:
    """Running first/second moments of (U, V, W) on one sampling line."""

    def __init__(self, line: StationLine, jet: JetReference):
        self.line = line
        self.jet = jet
        m = line.points.shape[0]
        self.count = 0
        self.mean = np.zeros((m, 3))
        self.m2 = np.zeros((m, 3))     # sum of squared deviations
        self.cov_uv = np.zeros(m)      # co-moment of (U, V)

    def add_sample(self, samples: np.ndarray) -> None:
        """One (m, 3) velocity sample at the line points (Welford update)."""
        self.count += 1
        delta = samples - self.mean
        self.mean += delta / self.count
        delta2 = samples - self.mean
        self.m2 += delta * delta2
        self.cov_uv += delta[:, 0] * delta2[:, 1]

    def rms(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.mean)
        return np.sqrt(np.maximum(self.m2 / self.count, 0.0))

    def shear_stress(self) -> np.ndarray:
        """Reynolds shear stress <u'v'> (population convention)."""
        if self.count == 0:
            return np.zeros_like(self.cov_uv)
        return self.cov_uv / self.count


@dataclass
class NormalizedProfile:
    station: float
    y_over_Da: np.ndarray
    u_mean: np.ndarray    # U / Ua
    v_mean: np.ndarray
    u_rms: np.ndarray
    v_rms: np.ndarray
    uv_stress: np.ndarray  # <u'v'> / Ua^2
    sample_count: int = 0


def accumulate(stats_list, state, mesh: VoxelMesh):
    """Add one interpolated snapshot sample to every station accumulator."""
    from .particles import trilinear_velocity

    for st in stats_list:
        samples = trilinear_velocity(state, mesh, st.line.points)
        st.add_sample(samples)
    return stats_list


def finalize_profiles(stats_list, min_samples: int = 1000):
    """Normalized mean/RMS/shear-stress profiles per station."""
    profiles = []
    for st in stats_list:
        if st.count < min_samples:
            raise InsufficientStatisticsError(
                f"station x/Da = {st.line.station:g} has {st.count} samples "
                f"(needs >= {min_samples})"
            )
        ua = st.jet.Ua
        rms = st.rms()
        profiles.append(
            NormalizedProfile(
                station=st.line.station,
                y_over_Da=st.line.y_over_Da.copy(),
                u_mean=st.mean[:, 0] / ua,
                v_mean=st.mean[:, 1] / ua,
                u_rms=rms[:, 0] / ua,
                v_rms=rms[:, 1] / ua,
                uv_stress=st.shear_stress() / ua**2,
                sample_count=st.count,
            )
        )
    return profiles


def profiles_to_csv(profiles, path) -> None:
    with open(path, "w") as f:
        f.write("station,y_over_Da,U_mean,V_mean,u_rms,v_rms,uv_stress\n")
        for p in profiles:
            for i in range(p.y_over_Da.size):
                f.write(
                    f"{p.station:.17g},{p.y_over_Da[i]:.17g},{p.u_mean[i]:.17g},"
                    f"{p.v_mean[i]:.17g},{p.u_rms[i]:.17g},{p.v_rms[i]:.17g},"
                    f"{p.uv_stress[i]:.17g}\n"
                )


def profiles_from_csv(path):
    """Read profiles back from the CSV schema written by profiles_to_csv."""
    rows = {}
    with open(path) as f:
        reader = _csv.DictReader(f)
        for row in reader:
            rows.setdefault(float(row["station"]), []).append(
                [float(row[k]) for k in
                 ("y_over_Da", "U_mean", "V_mean", "u_rms", "v_rms", "uv_stress")]
            )
    out = []
    for station in sorted(rows):
        arr = np.array(rows[station])
        out.append(NormalizedProfile(
            station=station, y_over_Da=arr[:, 0], u_mean=arr[:, 1],
            v_mean=arr[:, 2], u_rms=arr[:, 3], v_rms=arr[:, 4],
            uv_stress=arr[:, 5]))
    return out


# ---------------------------------------------------------------------------
# reference data and comparison


@dataclass
class ReferenceProfile:
    """External (PIV-style) profile for one station and quantity."""

    station: float
    quantity: str                 # U_mean | V_mean | u_rms | v_rms | uv_stress
    y_over_Da: np.ndarray
    values: np.ndarray
    source: str = "reference"

    def __post_init__(self):
        if self.y_over_Da.shape != self.values.shape:
            raise SwirlsimError("reference coordinate/value arrays differ in length")
        if np.any(np.diff(self.y_over_Da) <= 0.0):
            raise SwirlsimError("reference coordinates must be strictly increasing")


def reference_from_csv(path):
    """CSV schema: station,y_over_Da,quantity,value (one row per point)."""
    buckets = {}
    with open(path) as f:
        reader = _csv.DictReader(f)
        for row in reader:
            key = (float(row["station"]), row["quantity"].strip())
            buckets.setdefault(key, []).append(
                (float(row["y_over_Da"]), float(row["value"])))
    out = []
    for (station, quantity), pts in sorted(buckets.items()):
        pts.sort()
        arr = np.array(pts)
        out.append(ReferenceProfile(station=station, quantity=quantity,
                                    y_over_Da=arr[:, 0], values=arr[:, 1]))
    return out


@dataclass
class Discrepancy:
    station: float
    quantity: str
    l2: float
    max_dev: float


@dataclass
class DiscrepancyReport:
    entries: list = field(default_factory=list)

    def worst_per_station(self):
        worst = {}
        for e in self.entries:
            cur = worst.get(e.station)
            if cur is None or e.l2 > cur.l2:
                worst[e.station] = e
        return worst

    def to_text(self) -> str:
        lines = ["station  quantity    L2_dev      max_dev"]
        for e in self.entries:
            lines.append(f"{e.station:7.3g}  {e.quantity:<10}  {e.l2:.6g}  {e.max_dev:.6g}")
        for station, e in sorted(self.worst_per_station().items()):
            lines.append(
                f"worst at x/Da = {station:g}: {e.quantity} (L2 = {e.l2:.6g})")
        return "\n".join(lines) + "\n"


def compare_profiles(profiles, references) -> DiscrepancyReport:
    """Interpolate simulated profiles onto reference coordinates and report the
    L2 (RMS) and maximum normalized deviation per quantity per station."""
    by_station = {p.station: p for p in profiles}
    report = DiscrepancyReport()
    for ref in references:
        sim = by_station.get(ref.station)
        if sim is None:
            raise SwirlsimError(f"no simulated profile at station {ref.station:g}")
        if not hasattr(sim, ref.quantity.lower()) and ref.quantity not in (
                "U_mean", "V_mean", "u_rms", "v_rms", "uv_stress"):
            raise SwirlsimError(f"unknown quantity {ref.quantity!r}")
        attr = {"U_mean": "u_mean", "V_mean": "v_mean"}.get(ref.quantity,
                                                            ref.quantity)
        values = getattr(sim, attr)
        lo = max(sim.y_over_Da.min(), ref.y_over_Da.min())
        hi = min(sim.y_over_Da.max(), ref.y_over_Da.max())
        if lo >= hi:
            raise SwirlsimError(
                f"reference and simulation coordinates are disjoint at "
                f"station {ref.station:g}"
            )
        sel = (ref.y_over_Da >= lo) & (ref.y_over_Da <= hi)
        sim_on_ref = np.interp(ref.y_over_Da[sel], sim.y_over_Da, values)
        dev = sim_on_ref - ref.values[sel]
        report.entries.append(
            Discrepancy(
                station=ref.station,
                quantity=ref.quantity,
                l2=float(np.sqrt(np.mean(dev**2))),
                max_dev=float(np.max(np.abs(dev))),
            )
        )
    return report


# ---------------------------------------------------------------------------
# cumulative distributions


class CumulativeDistribution:
    """Empirical CDF with quartile summaries."""

    def __init__(self, samples, label: str = ""):
        arr = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if arr.size == 0:
            raise SwirlsimError(f"empty sample set for CDF {label!r}")
        self.samples = arr
        self.label = label

    @property
    def cdf(self) -> np.ndarray:
        n = self.samples.size
        return np.arange(1, n + 1) / n

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    def quantile(self, q) -> float:
        return float(np.percentile(self.samples, 100.0 * q))

    @property
    def quartiles(self):
        return self.quantile(0.25), self.median, self.quantile(0.75)

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("value,cdf\n")
            cdf = self.cdf
            for i in range(self.samples.size):
                f.write(f"{self.samples[i]:.17g},{cdf[i]:.17g}\n")


def particle_cdfs(crossings, cloud) -> dict:
    """CDF set from tracking output: radial location per station, wall-impact
    counts, and per-particle mean impact kinetic energy."""
    out = {}
    for s in crossings.stations:
        radial = crossings.radial_samples(s)
        if radial.size:
            out[f"radial_x{s:g}"] = CumulativeDistribution(
                radial, label=f"r/Da at x/Da = {s:g}")
    out["impacts"] = CumulativeDistribution(
        cloud.impact_count, label="wall impacts per particle")
    out["impact_ke"] = CumulativeDistribution(
        cloud.mean_impact_ke(), label="mean impact kinetic energy [J]")
    return out
