"""Station statistics, profile normalization, CDFs, reference comparison."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swirlsim import statistics as ST
from swirlsim.errors import InsufficientStatisticsError, SwirlsimError
from swirlsim.geometry import StationLine
from swirlsim.state import JetReference

JET = JetReference(Da=0.01, Ua=10.0, nu=1.5e-5, rho=1.204)


def make_line(m=5, station=0.0):
    y = np.linspace(-2.0, 2.0, m)
    pts = np.column_stack([np.full(m, 0.05), 0.05 + y * 0.01, np.full(m, 0.05)])
    return StationLine(station=station, x=0.05, points=pts, y_over_Da=y,
                       cell_idx=np.zeros((m, 3), dtype=np.int64))


def stats_with_samples(samples_list, m=5):
    acc = ST.StationStatistics(make_line(m), JET)
    for s in samples_list:
        acc.add_sample(np.asarray(s, dtype=float))
    return acc


def test_constant_field_mean_and_zero_rms():
    sample = np.tile([3.0, 1.0, -2.0], (5, 1))
    acc = stats_with_samples([sample] * 7)
    assert np.allclose(acc.mean, sample)
    assert np.all(acc.rms() == 0.0)


def test_alternating_samples_mean_and_rms():
    a = np.zeros((5, 3))
    b = np.full((5, 3), 2.0)
    acc = stats_with_samples([a, b] * 10)
    assert np.allclose(acc.mean, 1.0)
    assert np.allclose(acc.rms(), 1.0)


def test_reynolds_shear_stress_hand_case():
    # u = {1,-1}, v = {1,-1} -> <u'v'> = 1
    s1 = np.tile([1.0, 1.0, 0.0], (5, 1))
    s2 = np.tile([-1.0, -1.0, 0.0], (5, 1))
    acc = stats_with_samples([s1, s2] * 6)
    assert np.allclose(acc.shear_stress(), 1.0)
    assert np.allclose(acc.mean[:, :2], 0.0)


def test_welford_matches_two_pass():
    rng = np.random.default_rng(1)
    base = 100.0  # large mean, small fluctuations: the stability case
    samples = base + 1e-4 * rng.normal(size=(400, 5, 3))
    acc = stats_with_samples(list(samples))
    mean2 = samples.mean(axis=0)
    rms2 = samples.std(axis=0)
    cov2 = ((samples[:, :, 0] - mean2[:, 0]) * (samples[:, :, 1] - mean2[:, 1])).mean(axis=0)
    assert np.max(np.abs(acc.mean - mean2) / np.abs(mean2)) < 1e-12
    assert np.max(np.abs(acc.rms() - rms2) / rms2) < 1e-9
    assert np.max(np.abs(acc.shear_stress() - cov2)) < 1e-12 * base**2


def test_rms_identity():
    rng = np.random.default_rng(5)
    samples = rng.normal(size=(200, 5, 3))
    acc = stats_with_samples(list(samples))
    mean_sq = (samples**2).mean(axis=0)
    assert np.allclose(acc.rms() ** 2 + acc.mean**2, mean_sq, rtol=1e-12)


def test_finalize_requires_samples():
    acc = stats_with_samples([np.zeros((5, 3))] * 3)
    with pytest.raises(InsufficientStatisticsError) as err:
        ST.finalize_profiles([acc], min_samples=10)
    assert "x/Da = 0" in str(err.value)


def test_plug_flow_normalization():
    sample = np.tile([JET.Ua, 0.0, 0.0], (5, 1))
    acc = stats_with_samples([sample] * 4)
    prof = ST.finalize_profiles([acc], min_samples=2)[0]
    assert np.allclose(prof.u_mean, 1.0)
    assert np.all(prof.u_rms == 0.0)


def test_normalization_invariance():
    rng = np.random.default_rng(9)
    samples = rng.normal(size=(50, 5, 3))
    acc_a = stats_with_samples(list(samples))
    alpha = 3.7
    jet_b = JetReference(Da=JET.Da, Ua=alpha * JET.Ua, nu=JET.nu, rho=JET.rho)
    acc_b = ST.StationStatistics(make_line(), jet_b)
    for s in samples:
        acc_b.add_sample(alpha * s)
    pa = ST.finalize_profiles([acc_a], min_samples=1)[0]
    pb = ST.finalize_profiles([acc_b], min_samples=1)[0]
    for attr in ("u_mean", "v_mean", "u_rms", "v_rms", "uv_stress"):
        assert np.allclose(getattr(pa, attr), getattr(pb, attr),
                           rtol=1e-13, atol=1e-15)


# ---------------------------------------------------------------------------
# CDFs


def test_cdf_step_at_constant():
    cdf = ST.CumulativeDistribution([4.2] * 10)
    assert cdf.median == 4.2
    assert np.all(cdf.samples == 4.2)
    assert cdf.cdf[-1] == 1.0


def test_cdf_median_definition():
    cdf = ST.CumulativeDistribution(np.arange(1, 101))
    assert cdf.median == 50.5


def test_cdf_rejects_empty():
    with pytest.raises(SwirlsimError):
        ST.CumulativeDistribution([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
@settings(max_examples=60, deadline=None)
def test_cdf_invariants(samples):
    cdf = ST.CumulativeDistribution(samples)
    assert np.all(np.diff(cdf.cdf) >= 0.0)
    assert 0.0 < cdf.cdf[0] <= 1.0 and cdf.cdf[-1] == 1.0
    rng = np.random.default_rng(0)
    shuffled = np.array(samples)
    rng.shuffle(shuffled)
    assert ST.CumulativeDistribution(shuffled).median == cdf.median


# ---------------------------------------------------------------------------
# profile comparison


def profile_pair(shift=0.0):
    y = np.linspace(-1.5, 1.5, 21)
    u = np.exp(-(y**2))
    prof = ST.NormalizedProfile(station=0.0, y_over_Da=y, u_mean=u,
                                v_mean=0.1 * y, u_rms=0.2 * u, v_rms=0.1 * u,
                                uv_stress=0.01 * y)
    ref = ST.ReferenceProfile(station=0.0, quantity="U_mean",
                              y_over_Da=y.copy(), values=u + shift)
    return prof, ref


def test_compare_identical_zero_discrepancy():
    prof, ref = profile_pair()
    report = ST.compare_profiles([prof], [ref])
    assert report.entries[0].l2 == pytest.approx(0.0, abs=1e-15)
    assert report.entries[0].max_dev == pytest.approx(0.0, abs=1e-15)


def test_compare_uniform_shift():
    prof, ref = profile_pair(shift=0.1)
    report = ST.compare_profiles([prof], [ref])
    assert report.entries[0].l2 == pytest.approx(0.1, rel=1e-12)
    assert report.entries[0].max_dev == pytest.approx(0.1, rel=1e-12)


def test_compare_reports_worst_quantity():
    prof, ref_u = profile_pair(shift=0.02)
    ref_v = ST.ReferenceProfile(station=0.0, quantity="V_mean",
                                y_over_Da=prof.y_over_Da.copy(),
                                values=prof.v_mean + 0.3)
    report = ST.compare_profiles([prof], [ref_u, ref_v])
    worst = report.worst_per_station()[0.0]
    assert worst.quantity == "V_mean"
    assert "worst at x/Da = 0" in report.to_text()


def test_compare_disjoint_ranges():
    prof, _ = profile_pair()
    ref = ST.ReferenceProfile(station=0.0, quantity="U_mean",
                              y_over_Da=np.linspace(5.0, 6.0, 5),
                              values=np.zeros(5))
    with pytest.raises(SwirlsimError):
        ST.compare_profiles([prof], [ref])


def test_reference_validation():
    with pytest.raises(SwirlsimError):
        ST.ReferenceProfile(station=0.0, quantity="U_mean",
                            y_over_Da=np.array([0.0, 0.0, 1.0]),
                            values=np.zeros(3))


def test_profiles_csv_roundtrip(tmp_path):
    prof, _ = profile_pair()
    path = tmp_path / "profiles.csv"
    ST.profiles_to_csv([prof], path)
    back = ST.profiles_from_csv(path)[0]
    for attr in ("y_over_Da", "u_mean", "v_mean", "u_rms", "v_rms", "uv_stress"):
        assert np.array_equal(getattr(back, attr), getattr(prof, attr))


def test_reference_csv_ingest(tmp_path):
    path = tmp_path / "ref.csv"
    path.write_text(
        "station,y_over_Da,quantity,value\n"
        "0,-1.0,U_mean,0.5\n0,0.0,U_mean,1.0\n0,1.0,U_mean,0.5\n"
        "1,0.0,u_rms,0.2\n"
    )
    refs = ST.reference_from_csv(path)
    assert len(refs) == 2
    assert refs[0].quantity == "U_mean" and refs[0].values[1] == 1.0
    assert refs[1].station == 1.0
