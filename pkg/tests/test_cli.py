import json

import numpy as np
import pytest

from yoho.audio_io import AudioBuffer, write_wav
from yoho.cli import main
from yoho.label_codec import Event, read_events_tsv, write_events_tsv
from yoho.metrics import evaluate
from yoho.network import build_frame_cnn, build_yoho, save_checkpoint
from yoho.network.model import ArchConfig
from yoho.pipeline import evaluate_dirs, predict_events, tile_windows
from yoho.profiles import get_profile

SMALL = dict(width=0.125, repeats=1)
MS = get_profile("music-speech")


def silent_model(path, head="yoho", profile=MS):
    """A checkpoint whose presence outputs are ~0 for any input."""
    build = build_yoho if head == "yoho" else build_frame_cnn
    net = build(profile.input_time, profile.features.n_mels, len(profile.classes), **SMALL)
    conv = [layer for layer in net.layers if layer.kind == "conv1d"][0]
    conv.params["kernel"][:] = 0
    conv.params["bias"][:] = -20
    save_checkpoint(path, net)
    return net


class ScriptedNet:
    """Stands in for a network: returns fixed per-window outputs."""

    def __init__(self, outputs):
        self.outputs = outputs
        self.arch = ArchConfig("yoho", MS.input_time, MS.features.n_mels, 2)
        self.input_shape = (MS.input_time, MS.features.n_mels)
        self.n_classes = 2
        self._i = 0

    def forward(self, batch):
        out = self.outputs[self._i:self._i + len(batch)]
        self._i += len(batch)
        return out


@pytest.mark.parametrize("name,expected", [
    ("music-speech", dict(sr=16000, mels=64, fmin=125.0, fmax=7500.0, win=0.025, hop=0.010,
                          windows=(8.0,), segment=0.01)),
    ("environmental", dict(sr=44100, mels=40, fmin=0.0, fmax=22050.0, win=0.040, hop=0.010,
                           windows=(2.56, 10.0), segment=1.0)),
])
def test_profile_constants(name, expected):
    p = get_profile(name)
    f = p.features
    assert (f.sample_rate, f.n_mels, f.fmin, f.fmax, f.window, f.hop) == (
        expected["sr"], expected["mels"], expected["fmin"], expected["fmax"], expected["win"],
        expected["hop"])
    assert p.windows == expected["windows"] and p.segment_size == expected["segment"]


def test_smoothing_constants():
    ms = MS.smoothing
    assert (ms.rule("music").min_gap, ms.rule("music").min_duration) == (0.8, 3.4)
    assert (ms.rule("speech").min_gap, ms.rule("speech").min_duration) == (0.8, 0.8)
    env = get_profile("environmental").smoothing
    assert (env.rule("car").min_gap, env.rule("car").min_duration) == (1.0, None)


def test_input_times_match_network_shapes():
    env = get_profile("environmental")
    assert MS.input_time == 801
    assert env.input_time == 257 and env.with_window(10.0).input_time == 1001


def test_tiling():
    assert tile_windows(np.ones(128000), 128000).shape == (1, 128000)
    w = tile_windows(np.ones(130000), 128000)
    assert w.shape == (2, 128000) and w[1, 2000:].sum() == 0
    assert tile_windows(np.zeros(0), 128000).shape == (1, 128000)


def test_event_across_seam_is_merged():
    # music present in the last 3 steps of window 0 and the first 12 of window 1
    out = np.zeros((2, 26, 6), dtype=np.float32)
    out[0, 23:, 3:] = (1, 0, 1)
    out[1, :12, 3:] = (1, 0, 1)
    events = predict_events(ScriptedNet(out), AudioBuffer(np.zeros(16 * 16000), 16000), MS)
    assert len(events) == 1
    (ev,) = events
    d = 8 / 26
    assert ev.class_name == "music"
    assert ev.onset == pytest.approx(23 * d) and ev.offset == pytest.approx(8 + 12 * d)


def test_predictions_clipped_to_file_length():
    out = np.zeros((1, 26, 6), dtype=np.float32)
    out[0, :, :3] = (1, 0, 1)
    events = predict_events(ScriptedNet(out), AudioBuffer(np.zeros(3 * 16000), 16000), MS)
    assert events == [Event("speech", 0.0, 3.0)]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["synth-data", "--out", str(root / "train"), "--n-clips", "3", "--seed", "1"]) == 0
    assert main(["synth-data", "--out", str(root / "val"), "--n-clips", "2", "--seed", "2"]) == 0
    return root


def test_extract_features(corpus, tmp_path):
    from yoho.features import load_features
    wav = str(corpus / "train" / "clip_00000.wav")
    assert main(["extract-features", "--out", str(tmp_path), wav]) == 0
    assert load_features(tmp_path / "clip_00000.ymel").shape == (801, 64)


def test_train_then_predict(corpus, tmp_path, capsys):
    ckpt = tmp_path / "m.yoho"
    rc = main(["train", "--train-manifest", str(corpus / "train" / "manifest.tsv"),
               "--val-manifest", str(corpus / "val" / "manifest.tsv"), "--out", str(ckpt),
               "--width", "0.125", "--repeats", "1", "--epochs", "2", "--batch-size", "2"])
    assert rc == 0 and ckpt.exists()
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["epochs"] == 2
    wav = corpus / "val" / "clip_00000.wav"
    assert main(["predict", "--model", str(ckpt), "--out", str(tmp_path / "pred"), str(wav)]) == 0
    read_events_tsv(tmp_path / "pred" / "clip_00000.tsv")


def test_train_frame_baseline(corpus, tmp_path):
    from yoho.network import load_checkpoint
    ckpt = tmp_path / "f.yoho"
    rc = main(["train", "--head", "frame", "--train-manifest", str(corpus / "train" / "manifest.tsv"),
               "--val-manifest", str(corpus / "val" / "manifest.tsv"), "--out", str(ckpt),
               "--width", "0.125", "--repeats", "1", "--epochs", "1"])
    assert rc == 0
    assert load_checkpoint(ckpt).output_shape == (801, 2)


def test_predict_silence_gives_empty_tsv(tmp_path):
    silent_model(tmp_path / "m.yoho")
    write_wav(tmp_path / "quiet.wav", AudioBuffer(np.zeros(16000 * 8), 16000))
    write_wav(tmp_path / "short.wav", AudioBuffer(np.zeros(16000), 16000))
    rc = main(["predict", "--model", str(tmp_path / "m.yoho"), "--out", str(tmp_path / "out"),
               str(tmp_path / "quiet.wav"), str(tmp_path / "short.wav")])
    assert rc == 0
    assert (tmp_path / "out" / "quiet.tsv").read_text() == ""
    assert (tmp_path / "out" / "short.tsv").read_text() == ""


def test_predict_parallel_matches_serial(tmp_path, monkeypatch, corpus):
    silent_model(tmp_path / "m.yoho")
    wavs = [str(corpus / "train" / f"clip_0000{i}.wav") for i in range(3)]
    for threads in ("1", "2"):
        monkeypatch.setenv("YOHO_THREADS", threads)
        assert main(["predict", "--model", str(tmp_path / "m.yoho"), "--threshold", "1e-9",
                     "--out", str(tmp_path / threads), *wavs]) == 0
    for i in range(3):
        name = f"clip_0000{i}.tsv"
        assert (tmp_path / "1" / name).read_text() == (tmp_path / "2" / name).read_text()


def test_exit_codes(tmp_path, capsys):
    silent_model(tmp_path / "m.yoho")
    assert main(["predict", "--model", str(tmp_path / "m.yoho"), "--out", str(tmp_path),
                 "--profile", "environmental", str(tmp_path / "x.wav")]) == 3
    assert main(["predict", "--model", str(tmp_path / "m.yoho"), "--out", str(tmp_path),
                 str(tmp_path / "missing.wav")]) == 2
    (tmp_path / "junk.yoho").write_bytes(b"junk")
    assert main(["predict", "--model", str(tmp_path / "junk.yoho"), "--out", str(tmp_path),
                 str(tmp_path / "x.wav")]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["predict"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1


def write_dir(path, files):
    path.mkdir(parents=True, exist_ok=True)
    for stem, events in files.items():
        write_events_tsv(path / f"{stem}.tsv", events)


def test_evaluate_identical_and_empty(tmp_path, capsys):
    files = {"a": [Event("music", 0.5, 4.0)], "b": [Event("speech", 1.0, 2.5)]}
    write_dir(tmp_path / "ref", files)
    write_dir(tmp_path / "same", files)
    write_dir(tmp_path / "empty", {"a": [], "b": []})
    assert main(["evaluate", str(tmp_path / "ref"), str(tmp_path / "same")]) == 0
    assert "f_overall=100.00" in capsys.readouterr().out
    assert main(["evaluate", "--json", str(tmp_path / "ref"), str(tmp_path / "empty")]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["overall"]["f_measure"] == 0.0 and data["error_rate"]["er"] == 1.0


def test_evaluate_unmatched_files(tmp_path, capsys):
    write_dir(tmp_path / "ref", {"a": [], "b": []})
    write_dir(tmp_path / "est", {"a": []})
    assert main(["evaluate", str(tmp_path / "ref"), str(tmp_path / "est")]) == 2
    assert "no estimate for: b" in capsys.readouterr().err


def test_two_files_equal_concatenation(tmp_path):
    rng = np.random.default_rng(0)

    def events(n):
        out = []
        for _ in range(n):
            onset = float(rng.uniform(0, 7))
            out.append(Event(str(rng.choice(["speech", "music"])), onset,
                             min(8.0, onset + float(rng.uniform(0.1, 3)))))
        return out
    ref = {"a": events(4), "b": events(3)}
    est = {"a": events(4), "b": events(5)}
    write_dir(tmp_path / "ref", ref)
    write_dir(tmp_path / "est", est)
    for stem in "ab":
        write_wav(tmp_path / "ref" / f"{stem}.wav", AudioBuffer(np.zeros(8 * 16000), 16000))
    got = evaluate_dirs(tmp_path / "ref", tmp_path / "est", MS)

    def shift(evs, t):
        return [Event(e.class_name, e.onset + t, e.offset + t) for e in evs]
    want = evaluate(ref["a"] + shift(ref["b"], 8.0), est["a"] + shift(est["b"], 8.0), 0.01, 16.0,
                    list(MS.classes))
    g, w = got.to_dict(), want.to_dict()
    assert g["error_rate"] == w["error_rate"]
    assert g["overall"] == pytest.approx(w["overall"])
    assert g["per_class"] == pytest.approx(w["per_class"])


def test_bench_reports_neuron_counts(tmp_path, capsys):
    silent_model(tmp_path / "y.yoho")
    silent_model(tmp_path / "f.yoho", head="frame")
    write_wav(tmp_path / "a.wav", AudioBuffer(np.zeros(16 * 16000), 16000))
    for _ in range(2):
        assert main(["bench", "--yoho", str(tmp_path / "y.yoho"), "--frame", str(tmp_path / "f.yoho"),
                     str(tmp_path / "a.wav")]) == 0
        out = capsys.readouterr().out
        assert "yoho.output_neurons_per_window=156" in out
        assert "frame.output_neurons_per_window=1602" in out
        assert "speedup.total=" in out
