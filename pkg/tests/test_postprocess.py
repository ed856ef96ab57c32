import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from yoho.label_codec import Event
from yoho.postprocess import ClassRule, SmoothingConfig, frames_to_events, smooth
from yoho.profiles import get_profile

MUSIC_SPEECH = get_profile("music-speech").smoothing
ENVIRONMENTAL = get_profile("environmental").smoothing


def covered(events):
    return sum(e.duration for e in events)


@st.composite
def sorted_lists(draw, classes=("speech", "music")):
    events = []
    for name in classes:
        t = draw(st.floats(0, 2))
        for _ in range(draw(st.integers(0, 8))):
            dur = draw(st.floats(0.01, 5))
            events.append(Event(name, t, t + dur))
            t += dur + draw(st.floats(0.0, 2.5))
    return events


def test_music_gap_merge():
    out = smooth([Event("music", 0, 2.0), Event("music", 2.5, 6.0)], MUSIC_SPEECH)
    assert out == [Event("music", 0, 6.0)]


def test_music_too_short_dropped():
    assert smooth([Event("music", 0, 3.0)], MUSIC_SPEECH) == []


def test_speech_rules():
    out = smooth([Event("speech", 0, 0.5), Event("speech", 2.0, 3.0)], MUSIC_SPEECH)
    assert out == [Event("speech", 2.0, 3.0)]


def test_environmental_keeps_short_and_merges_under_one_second():
    out = smooth([Event("car", 0, 0.2)], ENVIRONMENTAL)
    assert out == [Event("car", 0, 0.2)]
    out = smooth([Event("car", 0, 1.0), Event("car", 1.9, 3.0)], ENVIRONMENTAL)
    assert out == [Event("car", 0, 3.0)]


def test_equal_gap_is_not_merged():
    cfg = SmoothingConfig(default=ClassRule(min_gap=0.5))
    evs = [Event("a", 0, 1.0), Event("a", 1.5, 2.0)]
    assert smooth(evs, cfg) == evs


def test_merge_happens_before_drop():
    cfg = SmoothingConfig(default=ClassRule(min_gap=0.5, min_duration=1.5))
    out = smooth([Event("a", 0, 1.0), Event("a", 1.2, 2.0)], cfg)
    assert out == [Event("a", 0, 2.0)]


def test_classes_do_not_interact():
    out = smooth([Event("music", 0, 4.0), Event("speech", 4.1, 5.0)], MUSIC_SPEECH)
    assert len(out) == 2


@pytest.mark.parametrize("cfg", [MUSIC_SPEECH, ENVIRONMENTAL,
                                 SmoothingConfig(default=ClassRule(0.3, 0.4))])
@settings(max_examples=150, deadline=None)
@given(events=sorted_lists())
def test_smoothing_invariants(cfg, events):
    out = smooth(events, cfg)
    assert smooth(out, cfg) == out
    for name in {e.class_name for e in out}:
        rule = cfg.rule(name)
        evs = [e for e in out if e.class_name == name]
        assert evs == sorted(evs, key=lambda e: e.onset)
        for a, b in zip(evs, evs[1:]):
            assert b.onset - a.offset >= rule.min_gap
        if rule.min_duration is not None:
            assert all(e.duration >= rule.min_duration for e in evs)


@settings(max_examples=150, deadline=None)
@given(events=sorted_lists(), gap=st.floats(0, 2), min_dur=st.floats(0, 3))
def test_coverage_monotone_per_pass(events, gap, min_dur):
    merged = smooth(events, SmoothingConfig(default=ClassRule(gap)))
    assert covered(merged) >= covered(events) - 1e-9
    dropped = smooth(events, SmoothingConfig(default=ClassRule(gap, min_dur)))
    assert covered(dropped) <= covered(merged) + 1e-9


def test_frames_to_events_runs():
    probs = np.array([[0.1, 0.9], [0.9, 0.9], [0.9, 0.1], [0.1, 0.1], [0.8, 0.7]])
    evs = frames_to_events(probs, ["a", "b"], 0.01)
    got = [(e.class_name, round(e.onset, 9), round(e.offset, 9)) for e in evs]
    assert got == [("b", 0.0, 0.02), ("a", 0.01, 0.03), ("a", 0.04, 0.05), ("b", 0.04, 0.05)]


def test_frames_to_events_offset_and_empty():
    assert frames_to_events(np.zeros((10, 2)), ["a", "b"], 0.01) == []
    (ev,) = frames_to_events(np.ones((3, 1)), ["a"], 0.5, time_offset=8.0)
    assert (ev.onset, ev.offset) == (8.0, 9.5)
