import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aura.context import ContextRecord
from aura.data import (
    CsvSchema,
    DataValidationError,
    ParseError,
    SampleRecord,
    Series,
    boundaries_from_fractions,
    chronological_split,
    dataset_windows,
    denormalize,
    fit_exo_stats,
    load_csv_dataset,
    make_windows,
    normalize,
    write_csv_dataset,
)
from aura.synthetic import FaultSpec, SyntheticConfig, generate_synthetic, simulate_mp

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
SCHEMA = CsvSchema(endo_col="mp", exo_cols=("n2", "ip"))


def _csv(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _series(n, labels=None, sid="s", start=T0):
    ts = [start + timedelta(seconds=10 * i) for i in range(n)]
    return Series(sid, ts, np.arange(n, dtype=float), np.arange(2 * n, dtype=float).reshape(n, 2),
                  labels or ["normal"] * n, [ContextRecord(t) for t in ts])


def _record(t0, label="normal", hist=(0.0, 2.0), target=(1.0,)):
    T, S = len(hist), len(target)
    return SampleRecord(np.array(hist), np.array(target), np.zeros((T, 1)), np.zeros((S, 1)),
                        "", np.zeros(3), ContextRecord(t0), label, "s", t0)


# ------------------------------------------------------------------- CSV

def test_three_row_file(tmp_path):
    p = _csv(tmp_path, "timestamp,series_id,mp,n2,ip,label\n"
                       "2024-01-01T00:00:00Z,a,1.0,0.1,0.2,normal\n"
                       "2024-01-01T00:00:10Z,a,2.0,0.3,0.4,0\n"
                       "2024-01-01T00:00:20Z,a,3.0,0.5,0.6,abnormal\n")
    ds = load_csv_dataset(p, SCHEMA)
    (s,) = ds.series
    assert s.endo.tolist() == [1.0, 2.0, 3.0]
    assert s.exo.tolist() == [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]
    assert s.labels == ["normal", "normal", "abnormal"]
    assert ds.warnings and ds.static == {}


def test_shuffled_timestamps_name_first_bad_line(tmp_path):
    p = _csv(tmp_path, "timestamp,mp,n2,ip\n"
                       "2024-01-01T00:00:00Z,1,0,0\n"
                       "2024-01-01T00:00:20Z,1,0,0\n"
                       "2024-01-01T00:00:10Z,1,0,0\n"
                       "2024-01-01T00:00:05Z,1,0,0\n")
    with pytest.raises(DataValidationError, match=r"d\.csv:4:"):
        load_csv_dataset(p, SCHEMA)


def test_malformed_row_names_line(tmp_path):
    p = _csv(tmp_path, "timestamp,mp,n2,ip\n2024-01-01T00:00:00Z,1,0,0\n2024-01-01T00:00:10Z,oops,0,0\n")
    with pytest.raises(ParseError, match=r":3:"):
        load_csv_dataset(p, SCHEMA)
    p = _csv(tmp_path, "timestamp,mp,n2,ip\n2024-01-01T00:00:00Z,1,0\n", "short.csv")
    with pytest.raises(ParseError, match=r":2:"):
        load_csv_dataset(p, SCHEMA)


def test_missing_column_is_parse_error(tmp_path):
    with pytest.raises(ParseError, match="ip"):
        load_csv_dataset(_csv(tmp_path, "timestamp,mp,n2\n"), SCHEMA)


def test_epf_shaped_file(tmp_path):
    rows = ["date,OT,load,wind"] + [f"2020-01-01T{h:02d}:00:00,{h},{h * 2},{h * 3}" for h in range(5)]
    ds = load_csv_dataset(_csv(tmp_path, "\n".join(rows) + "\n"),
                          CsvSchema(endo_col="OT", exo_cols=("load", "wind"), timestamp_col="date"))
    assert ds.exo_dim == 2 and ds.series[0].exo.shape == (5, 2)
    assert all(lab == "unlabeled" for lab in ds.series[0].labels)


def test_sidecar_round_trip(tmp_path):
    ds = generate_synthetic(SyntheticConfig(n_series=5, series_len=8, seed=3))
    write_csv_dataset(ds, tmp_path / "x.csv", tmp_path / "x.json")
    back = load_csv_dataset(tmp_path / "x.csv", SCHEMA, tmp_path / "x.json")
    assert not back.warnings and back.static == ds.static
    for a, b in zip(ds.series, back.series):
        assert np.array_equal(a.endo, b.endo) and np.array_equal(a.exo, b.exo)
        assert a.labels == b.labels and a.contexts == b.contexts
    assert set(json.loads((tmp_path / "x.json").read_text())) == {s.series_id for s in ds.series}


# --------------------------------------------------------------- windows

def test_one_window_in_quoted_configuration():
    (w,) = make_windows(_series(24), 6, 18, 24)
    assert w.endo_hist.tolist() == list(range(6)) and w.endo_target.tolist() == list(range(6, 24))
    assert w.exo_hist.shape == (6, 2) and w.exo_fut.shape == (18, 2)
    assert w.exo_fut[0].tolist() == [12.0, 13.0]


def test_too_short_gives_no_windows():
    assert make_windows(_series(23), 6, 18, 1) == []


def test_stride_one_window_count():
    ws = make_windows(_series(48), 6, 18, 1)
    assert len(ws) == 48 - 24 + 1
    assert [w.offset for w in ws] == list(range(25))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 8), st.integers(1, 8), st.integers(1, 10))
def test_window_count_and_shapes(n, T, S, stride):
    ws = make_windows(_series(n), T, S, stride)
    expected = 0 if n < T + S else (n - T - S) // stride + 1
    assert len(ws) == expected
    for w in ws:
        assert w.endo_hist.shape == (T,) and w.endo_target.shape == (S,)
        assert w.exo_hist.shape == (T, 2) and w.exo_fut.shape == (S, 2)


def test_window_label_rules():
    labels = ["normal"] * 10 + ["abnormal"] + ["normal"] * 9 + ["unlabeled"] * 4
    ws = make_windows(_series(24, labels), 4, 4, 4)
    assert [w.label for w in ws] == ["normal", "abnormal", "abnormal", "normal", "unlabeled"]


def test_record_length_invariant():
    with pytest.raises(DataValidationError):
        SampleRecord(np.zeros(3), np.zeros(2), np.zeros((2, 1)), np.zeros((2, 1)), "", np.zeros(3),
                     ContextRecord(T0), "normal", "s", T0)


# --------------------------------------------------------- normalization

def test_constant_window_guard():
    s, stats = normalize(_record(T0, hist=(5.0,) * 6, target=(5.0, 6.0)))
    assert s.endo_hist.tolist() == [0.0] * 6 and stats.std == 1.0
    assert s.endo_target.tolist() == [0.0, 1.0]


def test_two_point_window():
    s, stats = normalize(_record(T0, hist=(0.0, 2.0)))
    assert (stats.mean, stats.std) == (1.0, 1.0)
    assert s.endo_hist.tolist() == [-1.0, 1.0]


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)), arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)))
def test_round_trip(hist, target):
    s, stats = normalize(_record(T0, hist=tuple(hist), target=tuple(target)))
    np.testing.assert_allclose(denormalize(s.endo_target, stats), target, rtol=0, atol=1e-12 * max(1.0, np.abs(target).max()))
    np.testing.assert_allclose(denormalize(s.endo_hist, stats), hist, rtol=0, atol=1e-12 * max(1.0, np.abs(hist).max()))


def test_exo_stats_come_from_given_samples():
    ws = make_windows(_series(10), 2, 2, 2)
    stats = fit_exo_stats(ws[:2])
    grid = np.arange(20, dtype=float).reshape(10, 2)
    rows = np.concatenate([grid[0:4], grid[2:6]])  # overlapping windows count twice
    np.testing.assert_allclose(stats.mean, rows.mean(axis=0))
    s, _ = normalize(ws[-1], stats)
    np.testing.assert_allclose(s.exo_fut, (ws[-1].exo_fut - rows.mean(axis=0)) / rows.std(axis=0))


# ----------------------------------------------------------------- split

def test_everything_before_first_boundary_is_train():
    recs = [_record(T0 + timedelta(hours=i)) for i in range(4)]
    sp = chronological_split(recs, (T0 + timedelta(days=1), T0 + timedelta(days=2)))
    assert len(sp.train) == 4 and not sp.val and not sp.test


def test_abnormal_in_train_period_is_excluded():
    recs = [_record(T0), _record(T0 + timedelta(hours=1), "abnormal")]
    sp = chronological_split(recs, (T0 + timedelta(days=1), T0 + timedelta(days=2)))
    assert sp.excluded_abnormal == 1 and len(sp.train) == 1


def test_partition_hand_count():
    b1, b2 = T0 + timedelta(hours=10), T0 + timedelta(hours=15)
    hours = [0, 3, 9, 10, 12, 14, 15, 20, 30]
    labels = ["normal", "abnormal", "normal", "normal", "abnormal", "unlabeled", "abnormal", "normal", "normal"]
    recs = [_record(T0 + timedelta(hours=h), lab) for h, lab in zip(hours, labels)]
    sp = chronological_split(recs, (b1, b2))
    assert [len(sp.train), len(sp.val), len(sp.test), sp.excluded_abnormal] == [2, 2, 3, 2]


def test_unordered_boundaries():
    with pytest.raises(ValueError):
        chronological_split([], (T0 + timedelta(days=1), T0))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 100), st.sampled_from(["normal", "abnormal", "unlabeled"])), max_size=40),
       st.integers(0, 100), st.integers(0, 100))
def test_no_abnormal_in_train_or_val(items, x, y):
    recs = [_record(T0 + timedelta(hours=h), lab) for h, lab in items]
    b1, b2 = sorted([T0 + timedelta(hours=x), T0 + timedelta(hours=y)])
    sp = chronological_split(recs, (b1, b2))
    assert all(r.label != "abnormal" for r in sp.train + sp.val)
    assert len(sp.train) + len(sp.val) + len(sp.test) + sp.excluded_abnormal == len(recs)
    assert all(r.t0 < b1 for r in sp.train) and all(r.t0 >= b2 for r in sp.test)


def test_fraction_boundaries():
    recs = [_record(T0 + timedelta(hours=h)) for h in range(10)]
    b1, b2 = boundaries_from_fractions(recs, 0.6, 0.2)
    assert (b1, b2) == (T0 + timedelta(hours=6), T0 + timedelta(hours=8))


# ------------------------------------------------------------- generator

def test_fixed_point_with_constant_exogenous():
    cfg = SyntheticConfig(n_series=3, series_len=40, noise_std=0.0, fault=FaultSpec(drift=0.0),
                          exo_profile="constant", asset_lag_spread=0.0)
    for s in generate_synthetic(cfg).series:
        n2, ip = s.exo[0]
        np.testing.assert_allclose(s.endo, (cfg.b1 * n2 + cfg.b2 * ip) / (1 - cfg.a1), rtol=1e-12)


def test_same_seed_same_corpus():
    cfg = SyntheticConfig(n_series=30, seed=11)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    for x, y in zip(a.series, b.series):
        assert x.endo.tobytes() == y.endo.tobytes() and x.exo.tobytes() == y.exo.tobytes()
        assert x.labels == y.labels and x.timestamps == y.timestamps and x.contexts == y.contexts
    assert a.static == b.static
    assert generate_synthetic(SyntheticConfig(n_series=30, seed=12)).series[0].endo.tobytes() != a.series[0].endo.tobytes()


def test_drift_halves_driven_steady_state():
    cfg = SyntheticConfig()
    L, k = 200, 20
    n2, ip = np.full(L, 0.9), np.full(L, 0.8)
    mp = simulate_mp(cfg, n2, ip, np.zeros(L), cfg.a1, 0.0, onset=k, drift=0.5)
    full = (cfg.b1 * 0.9 + cfg.b2 * 0.8) / (1 - cfg.a1)
    assert mp[k - 1] == pytest.approx(full, rel=1e-12)
    assert mp[-1] == pytest.approx(0.5 * full, rel=1e-12)


def test_generated_drift_matches_closed_form():
    cfg = SyntheticConfig(n_series=4, series_len=60, noise_std=0.0, exo_profile="constant", asset_lag_spread=0.0,
                          fault=FaultSpec(onset=10, drift=0.5, fraction=1.0), fault_period_start=0.0)
    for s in generate_synthetic(cfg).series:
        n2, ip = s.exo[0]
        assert s.endo[-1] == pytest.approx(0.5 * (cfg.b1 * n2 + cfg.b2 * ip) / (1 - cfg.a1), rel=1e-7)  # 0.7**50 transient left
        assert s.labels[9] == "normal" and s.labels[10] == "abnormal"


def test_faults_are_detectable_in_default_corpus():
    cfg = SyntheticConfig()
    ds = generate_synthetic(cfg)
    faulty = [s for s in ds.series if "abnormal" in s.labels]
    assert faulty
    k, a1 = cfg.fault.onset, cfg.a1 - cfg.asset_lag_spread
    gaps = []
    for s in faulty:
        # noise, demand and the initial state cancel in the fault-free difference
        drive = cfg.fault.drift * (cfg.b1 * s.exo[:, 0] + cfg.b2 * s.exo[:, 1])
        d, diff = 0.0, []
        for t in range(k, len(s)):
            d = a1 * d + drive[t]
            diff.append(d)
        gaps.append(np.mean(diff))
    assert np.mean(gaps) > 3 * cfg.noise_std


def test_faults_only_in_late_series():
    cfg = SyntheticConfig(n_series=400)
    ds = generate_synthetic(cfg)
    first = int(np.ceil(cfg.fault_period_start * cfg.n_series))
    assert not any("abnormal" in s.labels for s in ds.series[:first])
    n_bad = sum("abnormal" in s.labels for s in ds.series[first:])
    assert n_bad == round(cfg.fault.fraction * (cfg.n_series - first))


def test_generated_windows_satisfy_invariants():
    ds = generate_synthetic(SyntheticConfig(n_series=20))
    for w in dataset_windows(ds, 6, 18, 24):
        assert w.endo_hist.shape == (6,) and w.exo_fut.shape == (18, 2)
        assert w.attr_text.startswith("B-7") and w.geo.shape == (3,)


def test_future_only_history_carries_no_drive():
    cfg = SyntheticConfig(n_series=5, mode="future_only", noise_std=0.0)
    for s in generate_synthetic(cfg).series:
        base = (cfg.b1 * 0.8 + cfg.b2 * 0.7) / (1 - cfg.a1)
        np.testing.assert_allclose(s.endo[: cfg.history_len], base, rtol=1e-12)


def test_bad_synthetic_mode():
    with pytest.raises(ValueError):
        SyntheticConfig(mode="other")
