import math

import numpy as np
import pytest
from scipy import stats

from vodcache.catalog import VideoMeta
from vodcache.exceptions import ConfigurationError, DomainError, ParseError
from vodcache.workload import (ArrivalModel, SelectionModel, SessionModel, Trace, TraceEvent, generate_trace,
                               hot_videos, load_trace, modified_poisson_mean, modified_poisson_pmf,
                               sample_arrivals, sample_bytes, sample_video, sample_videos, save_trace,
                               trace_stats, validate_trace, zipf_like_pmf)


def _truncated_poisson(lam, n_max):
    """Independent evaluation of the y = N - x masses with plain floats."""
    masses = [math.exp(-lam) * lam ** y / math.factorial(y) for y in range(n_max + 1)]
    return masses, math.fsum(masses)


@pytest.mark.filterwarnings("ignore:arrival lam")
@pytest.mark.parametrize("lam", [1.0, 15.0, 100.0])
@pytest.mark.parametrize("n_max", [5, 27, 200])
def test_modified_poisson_sums_to_one(lam, n_max):
    model = ArrivalModel(lam=lam, n_max=n_max)
    total = math.fsum(modified_poisson_pmf(x, model) for x in range(n_max + 1))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_modified_poisson_edges():
    model = ArrivalModel(lam=15.0, n_max=27)
    masses, z = _truncated_poisson(15.0, 27)
    assert modified_poisson_pmf(27, model) == pytest.approx(math.exp(-15.0) / z, rel=1e-9)
    assert modified_poisson_pmf(28, model) == 0.0
    assert modified_poisson_pmf(-1, model) == 0.0


def test_modified_poisson_mode():
    model = ArrivalModel(lam=15.0, n_max=27)
    masses, z = _truncated_poisson(15.0, 27)
    # y = 14 and y = 15 share the Poisson mode at integer lambda
    assert modified_poisson_pmf(27 - 15, model) == pytest.approx(masses[15] / z, rel=1e-9)
    assert modified_poisson_pmf(12, model) == pytest.approx(modified_poisson_pmf(13, model), rel=1e-9)
    assert max(modified_poisson_pmf(x, model) for x in range(28)) == pytest.approx(modified_poisson_pmf(12, model))


def test_modified_poisson_mean():
    masses, z = _truncated_poisson(15.0, 27)
    expected = 27 - math.fsum(y * m for y, m in enumerate(masses)) / z
    assert modified_poisson_mean(ArrivalModel(15.0, 27)) == pytest.approx(expected, rel=1e-9)


def test_arrival_model_validation():
    with pytest.raises(ConfigurationError):
        ArrivalModel(lam=0.0)
    with pytest.raises(ConfigurationError):
        ArrivalModel(n_max=0)
    with pytest.warns(UserWarning):
        ArrivalModel(lam=30.0, n_max=27)


def test_sample_arrivals_mean():
    model = ArrivalModel(15.0, 27)
    counts = sample_arrivals(model, 1_000_000, np.random.default_rng(1))
    masses, z = _truncated_poisson(15.0, 27)
    truncated_mean = math.fsum(y * m for y, m in enumerate(masses)) / z
    assert counts.min() >= 0 and counts.max() <= 27
    assert np.mean(27 - counts) == pytest.approx(truncated_mean, abs=0.05)


def test_sample_arrivals_chi_square():
    model = ArrivalModel(15.0, 27)
    n = 1_000_000
    counts = np.bincount(sample_arrivals(model, n, np.random.default_rng(12345)), minlength=28)
    expected = np.array([modified_poisson_pmf(x, model) for x in range(28)]) * n

    # merge adjacent bins until each holds an expected count of at least 5
    observed_bins, expected_bins = [], []
    obs_acc = exp_acc = 0.0
    for obs, exp in zip(counts, expected):
        obs_acc += obs
        exp_acc += exp
        if exp_acc >= 5:
            observed_bins.append(obs_acc)
            expected_bins.append(exp_acc)
            obs_acc = exp_acc = 0.0
    observed_bins[-1] += obs_acc
    expected_bins[-1] += exp_acc

    _, p_value = stats.chisquare(observed_bins, expected_bins)
    assert p_value > 0.01


def test_sample_arrivals_degenerate():
    counts = sample_arrivals(ArrivalModel(lam=1e-9, n_max=1), 1_000, 0)
    assert np.count_nonzero(counts == 1) >= 999


def test_sample_arrivals_deterministic():
    model = ArrivalModel()
    assert np.array_equal(sample_arrivals(model, 500, 9), sample_arrivals(model, 500, 9))


def test_zipf_hand_value():
    model = SelectionModel(alpha=1.0, rank_map=(1, 2, 3))
    assert zipf_like_pmf(1, model) == pytest.approx(6 / 11, rel=1e-12)


def test_zipf_uniform_limit():
    model = SelectionModel(alpha=1e-9, rank_map=tuple(range(1, 101)))
    assert zipf_like_pmf(1, model) == pytest.approx(0.01, rel=1e-6)
    assert zipf_like_pmf(100, model) == pytest.approx(0.01, rel=1e-6)


@pytest.mark.parametrize("alpha", [0.2, 0.64, 0.77, 0.83, 1.0])
@pytest.mark.parametrize("m", [10, 1000])
def test_zipf_sums_to_one(alpha, m):
    model = SelectionModel(alpha=alpha, rank_map=tuple(range(1, m + 1)))
    assert math.fsum(zipf_like_pmf(r, model) for r in range(1, m + 1)) == pytest.approx(1.0, abs=1e-9)
    assert model.probabilities().sum() == pytest.approx(1.0, abs=1e-9)


def test_zipf_strictly_decreasing():
    model = SelectionModel(alpha=0.77, rank_map=tuple(range(1, 1001)))
    pmf = [zipf_like_pmf(r, model) for r in range(1, 1001)]
    assert all(a > b for a, b in zip(pmf, pmf[1:]))


def test_zipf_top_decile_mass():
    model = SelectionModel(alpha=0.77, rank_map=tuple(range(1, 1001)))
    norm = math.fsum(j ** -0.77 for j in range(1, 1001))
    direct = math.fsum(i ** -0.77 for i in range(1, 101)) / norm
    top = math.fsum(zipf_like_pmf(r, model) for r in range(1, 101))
    assert top == pytest.approx(direct, rel=1e-12)
    # the top 10% of 1000 ranks carry about half of the requests at this exponent
    assert 0.45 < top < 0.55


def test_zipf_rank_out_of_range():
    model = SelectionModel(alpha=0.77, rank_map=(1, 2))
    with pytest.raises(DomainError):
        zipf_like_pmf(3, model)
    with pytest.raises(DomainError):
        zipf_like_pmf(0, model)


def test_selection_model_validation():
    with pytest.raises(ConfigurationError):
        SelectionModel(alpha=2.5, rank_map=(1,))
    with pytest.raises(ConfigurationError):
        SelectionModel(alpha=0.77, rank_map=(1, 1))


def test_sample_video_single():
    model = SelectionModel(alpha=0.77, rank_map=(42,))
    rng = np.random.default_rng(0)
    assert {sample_video(model, rng) for _ in range(20)} == {42}


def test_sample_videos_slope():
    model = SelectionModel(alpha=0.77, rank_map=tuple(range(1, 1001)))
    draws = sample_videos(model, 1_000_000, np.random.default_rng(2))
    freq = np.bincount(draws, minlength=1001)[1:101]
    slope = np.polyfit(np.log(np.arange(1, 101)), np.log(freq), 1)[0]
    assert slope == pytest.approx(-0.77, abs=0.05)


def test_sample_videos_deterministic():
    model = SelectionModel(alpha=0.77, rank_map=tuple(range(1, 101)))
    assert np.array_equal(sample_videos(model, 1000, 4), sample_videos(model, 1000, 4))


def test_shuffled_ranks(generated_catalog):
    plain = SelectionModel.for_catalog(generated_catalog)
    shuffled = SelectionModel.for_catalog(generated_catalog, shuffle=True, seed=1)
    assert plain.rank_map == tuple(range(1, 51))
    assert sorted(shuffled.rank_map) == list(plain.rank_map)
    assert shuffled.rank_map != plain.rank_map


def test_hot_videos():
    model = SelectionModel(alpha=0.77, rank_map=tuple(range(1, 1001)))
    assert hot_videos(model) == list(range(1, 101))
    assert hot_videos(SelectionModel(alpha=0.77, rank_map=(5, 6, 7))) == [5]
    with pytest.raises(DomainError):
        hot_videos(model, fraction=0.0)


def test_sample_bytes_disabled_session():
    video = VideoMeta(1, 123_456, 600.0, 0)
    assert sample_bytes(video, SessionModel(enabled=False), 0) == 123_456


def test_sample_bytes_short_video():
    video = VideoMeta(1, 600_000, 600.0, 0)
    session = SessionModel(early_quit_prob=1.0)
    rng = np.random.default_rng(8)
    for _ in range(200):
        assert 1 <= sample_bytes(video, session, rng) <= 600_000


def test_sample_bytes_early_quit_fraction():
    video = VideoMeta(1, 3_600_000_000, 7200.0, 0)
    session = SessionModel()
    rng = np.random.default_rng(6)
    draws = np.array([sample_bytes(video, session, rng) for _ in range(100_000)])
    # 500,000 bytes per second of playback, so 1200 s is 600,000,000 bytes
    early = np.count_nonzero(draws <= 600_000_000) / len(draws)
    assert early == pytest.approx(0.70, abs=0.01)


def test_session_model_validation():
    with pytest.raises(ConfigurationError):
        SessionModel(early_quit_prob=1.5)


def test_empty_trace(generated_catalog):
    selection = SelectionModel.for_catalog(generated_catalog)
    trace = generate_trace(generated_catalog, ArrivalModel(), selection, SessionModel(), num_buckets=0)
    assert len(trace) == 0
    assert validate_trace(trace, generated_catalog) == []


def test_generated_trace_is_valid(generated_catalog, small_trace):
    assert validate_trace(small_trace, generated_catalog) == []
    assert len(small_trace) == 2_000
    assert np.all(np.diff(small_trace.timestamps_ms) >= 0)


def test_generated_trace_volume(generated_catalog):
    arrival = ArrivalModel(15.0, 27)
    selection = SelectionModel.for_catalog(generated_catalog)
    trace = generate_trace(generated_catalog, arrival, selection, SessionModel(), num_buckets=1000, seed=3)
    expected = 1000 * modified_poisson_mean(arrival)
    assert len(trace) == pytest.approx(expected, rel=0.05)
    assert trace.timestamps_ms.max() < 1000 * 60_000


def test_generated_trace_deterministic(generated_catalog):
    selection = SelectionModel.for_catalog(generated_catalog)
    a = generate_trace(generated_catalog, ArrivalModel(), selection, SessionModel(), 50, seed=9)
    b = generate_trace(generated_catalog, ArrivalModel(), selection, SessionModel(), 50, seed=9)
    c = generate_trace(generated_catalog, ArrivalModel(), selection, SessionModel(), 50, seed=10)
    assert a == b
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_generate_trace_model_mismatch(generated_catalog):
    selection = SelectionModel(alpha=0.77, rank_map=(1, 2, 3))
    with pytest.raises(ConfigurationError):
        generate_trace(generated_catalog, ArrivalModel(), selection, SessionModel(), 10)


def test_validate_trace_violations(small_catalog):
    oversized = Trace.from_events([TraceEvent(0, 1, 100), TraceEvent(5, 2, 201)])
    violations = validate_trace(oversized, small_catalog)
    assert len(violations) == 1
    assert violations[0].startswith("event 1")

    unordered = Trace.from_events([TraceEvent(10, 1, 100), TraceEvent(5, 2, 200)])
    assert any("timestamp" in v for v in validate_trace(unordered, small_catalog))

    unknown = Trace.from_events([TraceEvent(0, 99, 1)])
    assert any("unknown video_id 99" in v for v in validate_trace(unknown, small_catalog))


def test_validate_columns_matches_event_loop(small_catalog):
    events = [TraceEvent(5, 1, 100), TraceEvent(3, 99, 1), TraceEvent(-1, 2, 0), TraceEvent(10, 2, 201),
              TraceEvent(11, 3, 300)]
    columnar = validate_trace(Trace.from_events(events), small_catalog)
    assert columnar == validate_trace(events, small_catalog)
    assert len(columnar) == 6
    assert columnar[0] == "event 1: timestamp 3 is earlier than the previous event (5)"
    assert columnar[-1] == "event 3: bytes_requested 201 exceeds size_bytes 200 of video 2"


def test_trace_is_read_only(small_trace):
    with pytest.raises(ValueError):
        small_trace.video_ids[0] = 1


def test_trace_file(tmp_path, generated_catalog, small_trace):
    path = tmp_path / 'trace.csv'
    save_trace(small_trace, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith('# seed=5 ')
    assert len(lines) == len(small_trace) + 1
    loaded = load_trace(path)
    assert loaded == small_trace
    assert loaded.header['seed'] == '5'


def test_trace_file_errors(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text("# seed=1\n0,1,100\n5,x,100\n")
    with pytest.raises(ParseError) as info:
        load_trace(path)
    assert info.value.line == 3
    assert info.value.field == 'video_id'

    path.write_text("0,1\n")
    with pytest.raises(ParseError) as info:
        load_trace(path)
    assert info.value.line == 1


def test_trace_file_with_non_ascii_bytes(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_bytes(b"0,1,100\n1,\xe9,5\n")
    with pytest.raises(ParseError) as info:
        load_trace(path)
    assert info.value.line == 2
    assert "0xe9" in str(info.value)


def test_trace_file_with_oversized_integer(tmp_path):
    path = tmp_path / 'trace.csv'
    path.write_text("0,1,100\n1,2," + "9" * 23 + "\n")
    with pytest.raises(ParseError) as info:
        load_trace(path)
    assert info.value.line == 2
    assert info.value.field == 'bytes_requested'

    path.write_text(f"{2 ** 63 - 1},1,100\n")
    assert load_trace(path).timestamps_ms[0] == 2 ** 63 - 1


def test_trace_stats(small_catalog):
    trace = Trace.from_events([TraceEvent(0, 1, 100), TraceEvent(30_000, 1, 50), TraceEvent(60_000, 2, 200),
                               TraceEvent(90_000, 1, 100)])
    result = trace_stats(trace, small_catalog)
    assert result.events == 4
    assert result.distinct_videos == 2
    assert result.span_ms == 90_000
    assert result.mean_per_bucket == pytest.approx(2.0)
    assert result.top_decile_share == pytest.approx(1.0)
    assert result.truncated_fraction == pytest.approx(0.25)
