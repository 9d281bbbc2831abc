from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from son_adv import dataset as ds
from son_adv.errors import DataError, EncodingError, ParseError, StratificationError, UndefinedRateError


@pytest.fixture(scope="module")
def records():
    return ds.generate(ds.GeneratorConfig())


def test_default_shape(records):
    assert len(records) == 2 * 93 * 24 == 4464
    assert sum(r.label for r in records) == round(0.1174 * 4464) == 524


def test_generator_deterministic():
    cfg = ds.GeneratorConfig(n_days=3, seed=4)
    assert ds.generate(cfg) == ds.generate(cfg)
    assert ds.generate(cfg) != ds.generate(replace(cfg, seed=5))


def test_generated_records_are_consistent(records):
    for r in records:
        assert r.erab_abnormal_releases == sum(r.drop_reason_counts.values())
        assert r.erab_normal_releases > 0
        assert r.max_users >= r.active_users


def test_threshold_labels_track_injected_anomalies(records):
    relabelled = ds.label_records(records, 2.0)
    agree = np.mean([a.label == b.label for a, b in zip(records, relabelled)])
    assert agree >= 0.99


def test_anomalies_lean_on_tnl(records):
    anom = [r for r in records if r.label == ds.ANOMALY]
    tnl = sum(r.drop_reason_counts["tnl"] for r in anom)
    assert tnl / sum(r.erab_abnormal_releases for r in anom) > 0.5


@pytest.mark.parametrize("abnormal, normal, rate", [(2, 100, 2.0), (0, 50, 0.0), (7, 200, 3.5), (1, 3, 100 / 3)])
def test_compute_drop_rate(abnormal, normal, rate):
    assert ds.compute_drop_rate(abnormal, normal) == pytest.approx(rate, rel=1e-15)


def test_compute_drop_rate_undefined():
    with pytest.raises(UndefinedRateError):
        ds.compute_drop_rate(3, 0)


def make_record(abnormal=2, normal=100, label=ds.NORMAL, **kw):
    drops = {r: 0 for r in ds.DROP_REASONS}
    drops["tnl"] = abnormal
    base = dict(
        hour_of_day=3, day_index=10, enodeb_id="eNB-0", cell_id="c", drop_reason_counts=drops,
        signal_strength_dbm=-90.0, rsrq_db=-10.0, sinr_db=12.0, cqi_avg=9.0, latency_ms=20.0,
        jitter_ms=3.0, packet_loss_pct=0.2, active_users=100, max_users=120, rrc_attempts=900,
        handover_attempts=150, prb_dl_pct=50.0, prb_ul_pct=20.0, dl_throughput_mbps=40.0,
        ul_throughput_mbps=8.0, erab_normal_releases=normal, erab_abnormal_releases=abnormal, label=label,
    )
    base.update(kw)
    return ds.KpiRecord(**base)


def test_label_is_strictly_above_threshold():
    at, above = make_record(2, 100), make_record(3, 100)
    out = ds.label_records([at, above], 2.0)
    assert [r.label for r in out] == [ds.NORMAL, ds.ANOMALY]


def test_undefined_rate_keeps_label(caplog):
    rec = make_record(4, 0, label=ds.ANOMALY)
    out = ds.label_records([rec], 2.0)
    assert out[0].label == ds.ANOMALY and out[0].rate_undefined
    assert "undefined drop rate" in caplog.text


def test_record_validation():
    with pytest.raises(DataError):
        make_record(hour_of_day=24)
    with pytest.raises(DataError):
        make_record(erab_abnormal_releases=5)
    assert make_record(day_index=12).day_of_week == 5


def test_default_schema_widths():
    schema = ds.default_schema()
    assert schema.raw_width == 25
    assert schema.encoded_width == 26
    names = schema.encoded_names()
    assert names[2:4] == ["enodeb_id=eNB-0", "enodeb_id=eNB-1"]
    assert "cell_id" not in names and "label" not in names
    assert len(schema.encoded_groups()) == 26
    assert ds.FeatureSchema.from_dict(schema.to_dict()) == schema


def test_encode_one_hot_and_unseen_category():
    schema = ds.default_schema()
    x, y = ds.encode([make_record(enodeb_id="eNB-1", day_index=9)], schema)
    names = schema.encoded_names()
    assert x[0, names.index("enodeb_id=eNB-0")] == 0 and x[0, names.index("enodeb_id=eNB-1")] == 1
    assert x[0, names.index("day_of_week")] == 2
    assert x[0, names.index("drop_tnl")] == 2
    with pytest.raises(EncodingError):
        ds.encode([make_record(enodeb_id="eNB-7")], schema)


def test_csv_round_trip_exact(tmp_path, records):
    sample = records[:200]
    ds.save_csv(sample, tmp_path / "d.csv")
    assert ds.load_csv(tmp_path / "d.csv") == sample


def test_csv_parse_errors(tmp_path):
    path = tmp_path / "d.csv"
    ds.save_csv([make_record()], path)
    lines = path.read_text().splitlines()
    col = ds.CSV_COLUMNS.index("latency_ms")
    cells = lines[1].split(",")
    cells[col] = "fast"
    path.write_text("\n".join([lines[0], ",".join(cells)]) + "\n")
    with pytest.raises(ParseError) as err:
        ds.load_csv(path)
    assert err.value.row == 2 and err.value.column == "latency_ms"

    path.write_text(lines[0].replace("latency_ms", "lat") + "\n")
    with pytest.raises(ParseError) as err:
        ds.load_csv(path)
    assert err.value.column == "latency_ms"


def test_scaler_train_only_and_clamped():
    train = np.array([[0.0, 5.0, 1.0], [10.0, 5.0, 3.0]])
    sc = ds.fit_scaler(train)
    out = ds.apply_scaler(np.array([[5.0, 7.0, 4.0], [-3.0, 5.0, 2.0]]), sc)
    assert np.array_equal(out, [[0.5, 0.0, 1.0], [0.0, 0.0, 0.5]])
    assert ds.Scaler.from_dict(sc.to_dict()).min.tolist() == sc.min.tolist()
    with pytest.raises(DataError):
        ds.fit_scaler(np.zeros((0, 3)))


@pytest.mark.parametrize("n, ratios, sizes", [
    (4464, (0.7, 0.15, 0.15), [3125, 669, 670]),
    (10, (0.7, 0.15, 0.15), [7, 1, 2]),
    (3, (1 / 3, 1 / 3, 1 / 3), [1, 1, 1]),
    (0, (0.5, 0.5), [0, 0]),
])
def test_split_sizes(n, ratios, sizes):
    assert ds.split_sizes(n, ratios) == sizes


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 5000), a=st.integers(1, 98), b=st.integers(1, 98))
def test_split_sizes_properties(n, a, b):
    if a + b >= 100:
        a, b = a // 2, b // 2
    ratios = (a / 100, b / 100, (100 - a - b) / 100)
    sizes = ds.split_sizes(n, ratios)
    assert sum(sizes) == n
    assert all(abs(s - n * r) < 1 for s, r in zip(sizes, ratios))


def test_split_indices_partition_and_stratify():
    labels = np.array([1] * 30 + [0] * 170)
    parts = ds.split_indices(labels, (0.7, 0.15, 0.15), seed=3)
    allidx = np.concatenate(parts)
    assert sorted(allidx.tolist()) == list(range(200))
    assert [int(labels[p].sum()) for p in parts] == ds.split_sizes(30, (0.7, 0.15, 0.15))
    again = ds.split_indices(labels, (0.7, 0.15, 0.15), seed=3)
    assert all(np.array_equal(p, q) for p, q in zip(parts, again))


def test_stratification_error():
    labels = np.array([1, 0, 0, 0, 0, 0])
    with pytest.raises(StratificationError):
        ds.split_indices(labels, (0.7, 0.15, 0.15), seed=0)


def test_prepare_scales_to_unit_box(records):
    data = ds.prepare(ds.label_records(records, 2.0), ds.default_schema())
    for part in (data.train, data.valid, data.test):
        assert part.features.shape[1] == 26
        assert part.features.min() >= 0 and part.features.max() <= 1
    assert data.train.features.min(axis=0).max() == 0.0
    assert sum(map(len, (data.train, data.valid, data.test))) == 4464


@settings(max_examples=200, deadline=None)
@given(a=st.integers(0, 10**6), n=st.integers(1, 10**6), k=st.integers(1, 10**3))
def test_drop_rate_is_scale_invariant(a, n, k):
    assert ds.compute_drop_rate(a * k, n * k) == ds.compute_drop_rate(a, n)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_label_agreement_other_seeds(seed):
    recs = ds.generate(ds.GeneratorConfig(seed=seed))
    relabelled = ds.label_records(recs, 2.0)
    assert np.mean([a.label == b.label for a, b in zip(recs, relabelled)]) >= 0.95


def test_one_hot_rows_and_unit_box(records):
    data = ds.prepare(ds.label_records(records, 2.0), ds.default_schema())
    names = data.schema.encoded_names()
    cols = [names.index("enodeb_id=eNB-0"), names.index("enodeb_id=eNB-1")]
    for part in (data.train, data.valid, data.test):
        assert np.array_equal(part.features[:, cols].sum(axis=1), np.ones(len(part)))
