"""Delay recovery, coincidence matching, accidentals, tag files."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bellqkd.timetag import (
    DelayEstimate,
    NoPeakError,
    TagFileError,
    WindowConfig,
    count_accidentals,
    find_delay,
    match_coincidences,
    ns_to_ticks,
    read_tag_file,
    seconds_to_ticks,
    write_tag_file,
)


def test_tick_conversions():
    assert ns_to_ticks(1.0) == 8
    assert ns_to_ticks(3.75) == 30
    assert ns_to_ticks(0.0624) == 0  # rounds to nearest tick
    assert seconds_to_ticks(1.0) == 8_000_000_000
    assert seconds_to_ticks(125e-12) == 1


def test_window_config_tick_properties():
    cfg = WindowConfig()
    assert cfg.window_ticks == 30
    assert cfg.half_window_ticks == 15
    assert cfg.offset_ticks == 160      # 20 ns
    assert cfg.bin_ticks == 256         # 32 ns
    assert cfg.span_ticks == 8_000_000  # 1000 us


def test_window_config_validation():
    with pytest.raises(ValueError):
        WindowConfig(coincidence_window=0.0)
    with pytest.raises(ValueError):
        WindowConfig(correlation_bin=-1.0)
    with pytest.raises(ValueError):
        WindowConfig(search_span=0.0)


def _correlated_streams(rng, n_pairs, delay, n_noise=5000, t_max_ticks=4_000_000_000,
                        jitter_ticks=4):
    base = np.sort(rng.integers(0, t_max_ticks, n_pairs))
    a = base + rng.integers(-jitter_ticks, jitter_ticks + 1, n_pairs)
    b = base + delay + rng.integers(-jitter_ticks, jitter_ticks + 1, n_pairs)
    a = np.sort(np.concatenate([a, rng.integers(0, t_max_ticks, n_noise)]))
    b = np.sort(np.concatenate([b, rng.integers(0, t_max_ticks, n_noise)]))
    return np.maximum(a, 0).astype(np.uint64), np.maximum(b, 0).astype(np.uint64)


@pytest.mark.parametrize("delay", [0, 80_000, -3_000_000, 7_500_000])
def test_find_delay_recovers_injected_offset(delay):
    rng = np.random.default_rng(42)
    a, b = _correlated_streams(rng, 20_000, delay)
    est = find_delay(a, b, WindowConfig())
    assert isinstance(est, DelayEstimate)
    assert abs(est.delay_ticks - delay) <= 2
    assert est.confidence >= WindowConfig().peak_threshold


def test_find_delay_rejects_empty_and_disjoint():
    cfg = WindowConfig()
    with pytest.raises(NoPeakError):
        find_delay(np.empty(0, np.uint64), np.array([1], np.uint64), cfg)
    with pytest.raises(NoPeakError):
        find_delay(np.array([1], np.uint64), np.empty(0, np.uint64), cfg)
    # streams so far apart that nothing falls inside the search span
    a = np.array([0], dtype=np.uint64)
    b = np.array([100_000_000], dtype=np.uint64)
    with pytest.raises(NoPeakError):
        find_delay(a, b, cfg)
    # overlapping ranges but every pairwise difference beyond the span
    a = np.array([0, 1_000_000_000], dtype=np.uint64)
    b = np.array([500_000_000], dtype=np.uint64)
    with pytest.raises(NoPeakError):
        find_delay(a, b, cfg)


def test_find_delay_rejects_uncorrelated_streams():
    rng = np.random.default_rng(3)
    a = np.sort(rng.integers(0, 1_000_000_000, 50_000)).astype(np.uint64)
    b = np.sort(rng.integers(0, 1_000_000_000, 50_000)).astype(np.uint64)
    with pytest.raises(NoPeakError):
        find_delay(a, b, WindowConfig())


def test_match_pairs_known_layout():
    cfg = WindowConfig()  # half window 15 ticks
    a = np.array([100, 200, 300, 400], dtype=np.uint64)
    b = np.array([110, 216, 290, 600], dtype=np.uint64)
    ia, ib = match_coincidences(a, b, 0, cfg)
    np.testing.assert_array_equal(ia, [0, 2])   # 100-110 and 300-290
    np.testing.assert_array_equal(ib, [0, 2])   # 200-216 misses by one tick
    ia, ib = match_coincidences(a, b, 10, cfg)  # shift trades 300-290 for 200-216
    np.testing.assert_array_equal(ia, [0, 1])
    np.testing.assert_array_equal(ib, [0, 1])


def test_match_each_tag_used_once():
    cfg = WindowConfig()
    a = np.array([100, 101, 102], dtype=np.uint64)
    b = np.array([100], dtype=np.uint64)
    ia, ib = match_coincidences(a, b, 0, cfg)
    assert len(ia) == 1
    assert ia[0] == 0 and ib[0] == 0  # nearest, ties to the earlier tag


def test_match_empty_inputs():
    cfg = WindowConfig()
    ia, ib = match_coincidences(np.empty(0, np.uint64), np.empty(0, np.uint64), 0, cfg)
    assert len(ia) == 0 and len(ib) == 0
    ia, ib = match_coincidences(np.array([5], np.uint64), np.empty(0, np.uint64), 0, cfg)
    assert len(ia) == 0


sorted_ticks = st.lists(st.integers(0, 400), min_size=0, max_size=30).map(sorted)
unique_ticks = st.lists(st.integers(0, 400), min_size=0, max_size=30, unique=True).map(sorted)


@given(unique_ticks, unique_ticks, st.integers(-50, 50))
@settings(max_examples=200, deadline=None)
def test_match_equals_naive_reference(a_list, b_list, delay):
    cfg = WindowConfig()
    a = np.array(a_list, dtype=np.uint64)
    b = np.array(b_list, dtype=np.uint64)
    ia, ib = match_coincidences(a, b, delay, cfg)
    ra, rb = oracles.naive_mutual_match(a_list, b_list, delay, cfg.half_window_ticks)
    np.testing.assert_array_equal(ia, ra)
    np.testing.assert_array_equal(ib, rb)
    # every pair respects the window, no index repeats
    if len(ia):
        d = b[ib].astype(np.int64) - delay - a[ia].astype(np.int64)
        assert np.abs(d).max() <= cfg.half_window_ticks
    assert len(set(ia.tolist())) == len(ia)
    assert len(set(ib.tolist())) == len(ib)


@given(sorted_ticks, sorted_ticks, st.integers(-50, 50))
@settings(max_examples=150, deadline=None)
def test_match_with_duplicate_ticks(a_list, b_list, delay):
    # equal tick values are interchangeable: which duplicate index gets
    # picked is unspecified, but the paired tick values must agree with
    # the reference and every index may appear only once
    cfg = WindowConfig()
    a = np.array(a_list, dtype=np.uint64)
    b = np.array(b_list, dtype=np.uint64)
    ia, ib = match_coincidences(a, b, delay, cfg)
    ra, rb = oracles.naive_mutual_match(a_list, b_list, delay, cfg.half_window_ticks)
    got = sorted(zip(a[ia].tolist(), b[ib].tolist()))
    want = sorted((a_list[i], b_list[j]) for i, j in zip(ra, rb))
    assert got == want
    assert len(set(ia.tolist())) == len(ia)
    assert len(set(ib.tolist())) == len(ib)
    if len(ia):
        d = b[ib].astype(np.int64) - delay - a[ia].astype(np.int64)
        assert np.abs(d).max() <= cfg.half_window_ticks


@given(sorted_ticks, sorted_ticks, st.integers(-50, 50))
@settings(max_examples=120, deadline=None)
def test_match_symmetric_under_stream_swap(a_list, b_list, delay):
    cfg = WindowConfig()
    a = np.array(a_list, dtype=np.uint64)
    b = np.array(b_list, dtype=np.uint64)
    ia, ib = match_coincidences(a, b, delay, cfg)
    jb, ja = match_coincidences(b, a, -delay, cfg)
    assert set(zip(ia.tolist(), ib.tolist())) == set(zip(ja.tolist(), jb.tolist()))


def test_accidentals_measured_off_peak():
    rng = np.random.default_rng(8)
    a, b = _correlated_streams(rng, 30_000, 4000, n_noise=30_000,
                               t_max_ticks=8_000_000_000)
    cfg = WindowConfig()
    true_pairs = len(match_coincidences(a, b, 4000, cfg)[0])
    acc = count_accidentals(a, b, 4000, cfg)
    assert acc < 0.05 * true_pairs
    # the offset window sees only noise-level coincidences: compare with a
    # deliberately wrong delay
    wrong = len(match_coincidences(a, b, 4000 + cfg.offset_ticks, cfg)[0])
    assert acc == wrong


def test_accidentals_match_rate_product():
    # two independent 1-second Poisson streams at r_a, r_b
    rng = np.random.default_rng(15)
    t = 1.0
    r_a, r_b = 120_000.0, 80_000.0
    a = np.sort(rng.integers(0, seconds_to_ticks(t), rng.poisson(r_a * t))).astype(np.uint64)
    b = np.sort(rng.integers(0, seconds_to_ticks(t), rng.poisson(r_b * t))).astype(np.uint64)
    cfg = WindowConfig()
    acc = count_accidentals(a, b, 0, cfg)
    expected = r_a * r_b * (cfg.window_ticks + 1) * 125e-12 * t
    assert abs(acc - expected) < 6 * np.sqrt(expected)


# ---------------------------------------------------------------------------
# Tag files

def test_tag_file_roundtrip(tmp_path):
    path = tmp_path / "alice.tags"
    ticks = np.array([1, 5, 5, 2**40], dtype=np.uint64)
    dets = np.array([1, 6, 2, 3], dtype=np.uint8)
    write_tag_file(path, "alice", ticks, dets)
    side, r_ticks, r_dets = read_tag_file(path)
    assert side == "alice"
    np.testing.assert_array_equal(r_ticks, ticks)
    np.testing.assert_array_equal(r_dets, dets)
    write_tag_file(path, "bob", ticks[:1], dets[:1])
    assert read_tag_file(path)[0] == "bob"


def test_tag_file_write_validation(tmp_path):
    with pytest.raises(ValueError):
        write_tag_file(tmp_path / "x", "eve", np.array([1], np.uint64), np.array([1], np.uint8))
    with pytest.raises(ValueError):
        write_tag_file(tmp_path / "x", "alice", np.array([1], np.uint64), np.array([], np.uint8))


def test_tag_file_rejects_corruption(tmp_path):
    path = tmp_path / "t.tags"
    write_tag_file(path, "alice", np.array([7], np.uint64), np.array([2], np.uint8))
    raw = path.read_bytes()

    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(TagFileError, match="not a time-tag"):
        read_tag_file(tmp_path / "magic")

    (tmp_path / "ver").write_bytes(raw[:4] + bytes([9]) + raw[5:])
    with pytest.raises(TagFileError, match="version"):
        read_tag_file(tmp_path / "ver")

    (tmp_path / "side").write_bytes(raw[:5] + bytes([2]) + raw[6:])
    with pytest.raises(TagFileError, match="side"):
        read_tag_file(tmp_path / "side")

    (tmp_path / "trunc").write_bytes(raw[:-3])
    with pytest.raises(TagFileError, match="truncated"):
        read_tag_file(tmp_path / "trunc")

    (tmp_path / "short").write_bytes(raw[:3])
    with pytest.raises(TagFileError):
        read_tag_file(tmp_path / "short")
