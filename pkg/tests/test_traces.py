"""Trace generator and CSV interchange checks.

Hand-derived anchors:
  aggregate subscriber peak: (45*900 + 45*112.5) MB/hr * 8/3600 = 101.25 Mb/s
  clear-sky slot cap: 4.48 m^2 * 186 W/m^2 * 1 h = 833.28 Wh
"""

from __future__ import annotations

import numpy as np
import pytest

from splitsim.traces import (
    Profile,
    SolarConfig,
    TraceParseError,
    TraceSet,
    TraceValidationError,
    TrafficConfig,
    export_traces_csv,
    generate_mbs_trace,
    generate_solar_trace,
    generate_traces,
    generate_traffic_trace,
    load_traces_csv,
    load_weekly_shape,
)

SOLAR = SolarConfig()
TRAFFIC = TrafficConfig()


def test_subscriber_peak_arithmetic():
    cfg = TrafficConfig(demand_scale=1.0)
    assert cfg.user_peak_mbps == pytest.approx(101.25, abs=1e-12)
    assert cfg.peak_mbps == pytest.approx(101.25, abs=1e-12)
    # calibrated default keeps the peak under a 37.5 Mb/s cell
    assert TRAFFIC.peak_mbps == pytest.approx(36.45, abs=1e-9)
    assert TRAFFIC.peak_mbps < 37.5


def test_solar_cap_value():
    assert SOLAR.cap_wh == pytest.approx(833.28, abs=1e-9)


def test_solar_midnight_is_zero():
    h = generate_solar_trace(SOLAR, 1, 24 * 30, 2)
    assert np.all(h[:, ::24] == 0.0), "hour-0 slots must harvest nothing"
    assert np.all(h[:, 3::24] == 0.0)


def test_solar_cap_holds_on_large_sample():
    h = generate_solar_trace(SolarConfig(daily_variability_sd=0.8), 5, 100_000, 1)
    assert h.min() >= 0.0
    assert h.max() <= SOLAR.cap_wh + 1e-9
    assert h.max() > 0.5 * SOLAR.cap_wh, "bright days should approach the cap"


def test_solar_daylight_window_and_season():
    cfg = SolarConfig(daily_variability_sd=0.0)
    h = generate_solar_trace(cfg, 2, 8760, 1)[0]
    day = np.arange(8760) // 24
    hour = np.arange(8760) % 24
    # outside the widest possible window there is never any harvest
    assert np.all(h[(hour < int(cfg.summer_sunrise)) | (hour >= int(cfg.summer_sunset))] == 0.0)
    daily = np.bincount(day, weights=h)
    summer = daily[150:240].mean()
    winter = np.concatenate([daily[:60], daily[330:365]]).mean()
    assert summer > winter, "seasonal modulation should favour summer"


def test_solar_determinism():
    a = generate_solar_trace(SOLAR, 42, 500, 3)
    b = generate_solar_trace(SOLAR, 42, 500, 3)
    assert np.array_equal(a, b)
    c = generate_solar_trace(SOLAR, 43, 500, 3)
    assert not np.array_equal(a, c)


def test_solar_rejects_bad_args():
    with pytest.raises(ValueError):
        generate_solar_trace(SOLAR, 1, 0, 3)
    with pytest.raises(ValueError):
        generate_solar_trace(SOLAR, 1, 24, 0)


def test_traffic_noiseless_scaling():
    shape = np.full((24, 7), 0.25)
    shape[4, :] = 0.5
    shape[20, 0] = 1.0
    cfg = TrafficConfig(weekly_shape=tuple(map(tuple, shape)), noise_sd=0.0)
    load = generate_traffic_trace(cfg, 9, 48, 2)
    assert load[0, 4] == 0.5 * cfg.peak_mbps
    assert load[1, 28] == 0.5 * cfg.peak_mbps
    assert load[0, 20] == cfg.peak_mbps


def test_traffic_nonnegative_with_heavy_noise():
    cfg = TrafficConfig(noise_sd=2.0)
    load = generate_traffic_trace(cfg, 3, 5000, 2)
    assert load.min() >= 0.0


def test_residential_peak_hour():
    shape = load_weekly_shape(Profile.RESIDENTIAL)
    weekday_mean = shape[:, :5].mean(axis=1)
    assert int(np.argmax(weekday_mean)) == 23
    assert shape.max() == 1.0 and shape.min() >= 0.0


def test_office_shape_contract():
    shape = load_weekly_shape(Profile.OFFICE)
    weekday_mean = shape[:, :5].mean(axis=1)
    assert 9 <= int(np.argmax(weekday_mean)) <= 15, "office peaks around midday"
    assert shape[:, 5:].max() < 0.5, "office weekends stay quiet"
    assert shape.max() == 1.0


def test_mbs_trace_scaling_and_determinism():
    zero = generate_mbs_trace(TrafficConfig(mbs_peak_scale=0.0), 4, 100)
    assert np.all(zero == 0.0)
    shape = np.full((24, 7), 0.1)
    shape[12, :] = 1.0
    cfg = TrafficConfig(weekly_shape=tuple(map(tuple, shape)), noise_sd=0.0,
                        mbs_peak_scale=0.8)
    vec = generate_mbs_trace(cfg, 4, 24)
    assert vec[12] == pytest.approx(cfg.mbs_peak_mbps, abs=1e-12)
    again = generate_mbs_trace(cfg, 4, 24)
    assert np.array_equal(vec, again)


def test_generate_traces_bundle():
    ts = generate_traces(SOLAR, TRAFFIC, 123, 24 * 14, 3)
    assert ts.n_cells == 3 and ts.horizon == 24 * 14
    assert ts.seed == 123
    ts2 = generate_traces(SOLAR, TRAFFIC, 123, 24 * 14, 3)
    assert np.array_equal(ts.harvest, ts2.harvest)
    assert np.array_equal(ts.vsc_load, ts2.vsc_load)
    assert np.array_equal(ts.mbs_load, ts2.mbs_load)


def test_traceset_validation():
    with pytest.raises(TraceValidationError):
        TraceSet(harvest=-np.ones((1, 3)), vsc_load=np.ones((1, 3)), mbs_load=np.ones(3))
    with pytest.raises(TraceValidationError):
        TraceSet(harvest=np.ones((1, 3)), vsc_load=np.ones((1, 4)), mbs_load=np.ones(3))
    with pytest.raises(TraceValidationError):
        TraceSet(harvest=np.ones((1, 3)), vsc_load=np.ones((1, 3)), mbs_load=np.ones(2))


def test_csv_round_trip(tmp_path):
    ts = generate_traces(SOLAR, TRAFFIC, 77, 72, 2)
    path = tmp_path / "traces.csv"
    export_traces_csv(ts, path)
    back = load_traces_csv(path)
    assert back.horizon == 72 and back.n_cells == 2
    assert np.array_equal(back.harvest, ts.harvest)
    assert np.array_equal(back.vsc_load, ts.vsc_load)
    assert np.array_equal(back.mbs_load, ts.mbs_load)
    assert back.slot_hours == ts.slot_hours


def test_csv_small_example(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text(
        "slots,3,cells,2,slot_hours,1.0\n"
        "0,10.0,20.0,1.5,2.5,0.5\n"
        "1,0.0,0.0,1.0,2.0,0.25\n"
        "2,5.5,6.5,0.0,0.0,0.0\n")
    ts = load_traces_csv(path)
    assert ts.horizon == 3 and ts.n_cells == 2
    assert ts.harvest[1, 0] == 20.0
    assert ts.vsc_load[0, 2] == 0.0
    assert ts.mbs_load[1] == 0.25


def test_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_traces_csv(tmp_path / "missing.csv")

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("slots,2,cells,1,slot_hours,1.0\n0,1.0,1.0,0.5\n1,1.0,1.0\n")
    with pytest.raises(TraceParseError, match="row 1"):
        load_traces_csv(ragged)

    negative = tmp_path / "neg.csv"
    negative.write_text("slots,1,cells,1,slot_hours,1.0\n0,-3.0,1.0,0.5\n")
    with pytest.raises(TraceValidationError, match="row 0, column 1"):
        load_traces_csv(negative)

    badhead = tmp_path / "badhead.csv"
    badhead.write_text("slotz,1,cells,1,slot_hours,1.0\n0,1.0,1.0,0.5\n")
    with pytest.raises(TraceParseError):
        load_traces_csv(badhead)


def test_config_validation():
    with pytest.raises(ValueError):
        TrafficConfig(heavy_ratio=1.5)
    with pytest.raises(ValueError):
        TrafficConfig(weekly_shape=tuple(tuple(0.5 for _ in range(7)) for _ in range(24)))
    with pytest.raises(ValueError):
        SolarConfig(panel_area_m2=0.0)
    with pytest.raises(ValueError):
        SolarConfig(winter_sunrise=18.0)
