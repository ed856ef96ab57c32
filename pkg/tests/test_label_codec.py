import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from yoho.label_codec import (Event, YohoGrid, decode, encode, read_events_tsv,
                              write_events_tsv)

CLASSES = ["speech", "music"]
REFERENCE_EVENTS = [Event("music", 0.2, 4.3), Event("speech", 3.6, 6.0)]


def presence_oracle(events, clip, steps, classes):
    """Brute-force overlap test per (step, class) using exact fractions of the clip."""
    out = np.zeros((steps, len(classes)), dtype=bool)
    for k in range(steps):
        lo, hi = clip * k / steps, clip * (k + 1) / steps
        for ev in events:
            if ev.onset < hi and ev.offset > lo:
                out[k, classes.index(ev.class_name)] = True
    return out


@st.composite
def event_lists(draw, clip=8.0, steps=26, classes=("speech", "music"), max_per_class=4):
    d = clip / steps
    events = []
    for name in classes:
        t = draw(st.floats(0.0, clip / 2))
        for _ in range(draw(st.integers(0, max_per_class))):
            onset = t
            dur = draw(st.floats(0.05, 2.0))
            offset = min(clip, onset + dur)
            if offset - onset < 0.01:
                break
            events.append(Event(name, onset, offset))
            t = offset + d * draw(st.floats(1.05, 4.0))
            if t >= clip - 0.02:
                break
    return events


def test_reference_grid():
    grid = encode(REFERENCE_EVENTS, 8.0, 26, CLASSES)
    assert grid.flatten().shape == (26, 6)
    speech, music = grid.values[:, 0], grid.values[:, 1]
    np.testing.assert_array_equal(np.flatnonzero(music[:, 0]), np.arange(0, 14))
    np.testing.assert_array_equal(np.flatnonzero(speech[:, 0]), np.arange(11, 20))
    np.testing.assert_allclose(music[0], [1, 0.65, 1.0], atol=1e-9)
    np.testing.assert_allclose(music[13], [1, 0.0, 0.975], atol=1e-9)
    np.testing.assert_allclose(speech[11], [1, 0.7, 1.0], atol=1e-9)
    np.testing.assert_allclose(speech[19], [1, 0.0, 0.5], atol=1e-9)
    # interior rows of an event span whole steps
    np.testing.assert_allclose(music[5], [1, 0.0, 1.0])
    np.testing.assert_allclose(speech[15], [1, 0.0, 1.0])


def test_empty_events_encode_to_zero_presence():
    grid = encode([], 8.0, 26, CLASSES)
    assert not grid.presence.any()


def test_encode_errors():
    with pytest.raises(ValueError):
        encode([Event("dog", 0, 1)], 8.0, 26, CLASSES)
    with pytest.raises(ValueError):
        encode([Event("music", 7.0, 9.0)], 8.0, 26, CLASSES)


def test_reference_round_trip():
    events = decode(encode(REFERENCE_EVENTS, 8.0, 26, CLASSES))
    assert [e.class_name for e in events] == ["music", "speech"]
    for got, want in zip(events, sorted(REFERENCE_EVENTS, key=lambda e: e.onset)):
        assert got.onset == pytest.approx(want.onset, abs=1e-6)
        assert got.offset == pytest.approx(want.offset, abs=1e-6)


def test_decode_below_threshold_is_empty():
    grid = YohoGrid(np.full((26, 2, 3), 0.3), CLASSES, 8 / 26)
    assert decode(grid, 0.5) == []


def test_decode_single_step_arithmetic():
    d = 8 / 26
    values = np.zeros((26, 1, 3))
    values[0, 0] = (1, 0.25, 0.75)
    (ev,) = decode(YohoGrid(values, ["music"], d))
    assert ev.onset == pytest.approx(0.0769, abs=1e-4)
    assert ev.offset == pytest.approx(0.2308, abs=1e-4)


def test_same_step_collision_keeps_outer_bounds():
    d = 1.0
    grid = encode([Event("music", 0.1, 0.3), Event("music", 0.6, 0.9)], 4.0, 4, ["music"])
    np.testing.assert_allclose(grid.values[0, 0], [1, 0.1, 0.9])
    assert d == grid.step_duration


def test_flatten_unflatten_bijection():
    rng = np.random.default_rng(0)
    flat = rng.random((26, 6))
    grid = YohoGrid.from_flat(flat, CLASSES, 8 / 26)
    np.testing.assert_array_equal(grid.flatten(), flat)
    # class-major triplets: column 3 is music presence
    assert grid.values[4, 1, 0] == flat[4, 3]


@settings(max_examples=200, deadline=None)
@given(event_lists())
def test_presence_matches_bruteforce(events):
    grid = encode(events, 8.0, 26, CLASSES)
    np.testing.assert_array_equal(grid.presence.astype(bool),
                                  presence_oracle(events, 8.0, 26, CLASSES))


@settings(max_examples=200, deadline=None)
@given(event_lists())
def test_round_trip_property(events):
    decoded = decode(encode(events, 8.0, 26, CLASSES), 0.5)
    want = sorted(events, key=lambda e: (e.onset, e.offset, e.class_name))
    assert len(decoded) == len(want)
    for got, exp in zip(decoded, want):
        assert got.class_name == exp.class_name
        assert abs(got.onset - exp.onset) < 1e-6
        assert abs(got.offset - exp.offset) < 1e-6


@settings(max_examples=100, deadline=None)
@given(event_lists())
def test_reencode_is_idempotent(events):
    grid = encode(events, 8.0, 26, CLASSES)
    again = encode(decode(grid), 8.0, 26, CLASSES)
    np.testing.assert_allclose(again.values, grid.values, atol=1e-9)


def test_tsv_round_trip(tmp_path):
    path = tmp_path / "a.tsv"
    write_events_tsv(path, REFERENCE_EVENTS)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].split("\t") == ["0.200000", "4.300000", "music"]
    assert read_events_tsv(path) == sorted(REFERENCE_EVENTS, key=lambda e: e.onset)


def test_tsv_rejects_bad_lines(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("1.0\t0.5\tmusic\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_events_tsv(path)


def test_encode_frames_matches_frame_decoder():
    from yoho.label_codec import encode_frames
    from yoho.postprocess import frames_to_events
    events = [Event("music", 0.2, 4.3), Event("speech", 3.6, 6.0)]
    frames = encode_frames(events, 801, 0.01, CLASSES)
    assert frames.shape == (801, 2)
    assert frames[:, 1].sum() == 410 and frames[:, 0].sum() == 240
    back = frames_to_events(frames, CLASSES, 0.01)
    for got, want in zip(back, sorted(events, key=lambda e: e.onset)):
        assert got.class_name == want.class_name
        assert abs(got.onset - want.onset) < 1e-9 and abs(got.offset - want.offset) < 1e-9
    with pytest.raises(ValueError):
        encode_frames([Event("dog", 0, 1)], 10, 0.01, CLASSES)
