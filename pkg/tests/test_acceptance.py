"""Acceptance suite: one test per shipped guarantee.

Run with -v to get a pass/fail line for each numbered guarantee, from
the filter-bank layout through synthesis, training, and the rank
statistics.  Expected values come from closed-form oracles or
brute-force enumeration written out independently inside each test.
"""

import math
from itertools import combinations

import numpy as np
import pytest

import helpers
from midisynth import (acoustic, cli, dsp, evaluation, excitation, formats,
                       midi_io, nsf)

RATE = 24000
FFT = 2048
CFG = dsp.StftConfig(sample_rate=RATE, frame_length=1200, frame_shift=288,
                     fft_size=FFT)


def note_freq(d):
    return 440.0 * 2.0 ** ((d - 69) / 12.0)


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_01_center_frequencies_match_equal_temperament():
    assert dsp.midi_center_freq(69) == 440.0
    for d in range(0, 116):
        doubled = dsp.midi_center_freq(d + 12)
        assert abs(doubled - 2.0 * dsp.midi_center_freq(d)) <= 1e-9 * doubled
    assert abs(dsp.midi_center_freq(60) - 261.6255653) <= 1e-6 * 261.6255653


def test_02_bank_empty_rows_match_coverage_oracle():
    nyquist = RATE / 2
    bins = np.arange(FFT // 2 + 1) * RATE / FFT

    coverage_empty = set()
    nyquist_empty = set()
    for d in range(128):
        center = note_freq(d)
        if center > nyquist:
            nyquist_empty.add(d)
            continue
        lo = center if d == 0 else note_freq(d - 1)
        hi = center if d == 127 else note_freq(d + 1)
        covered = np.any((bins > lo) & (bins < hi)) or np.any(bins == center)
        if not covered:
            coverage_empty.add(d)

    bank = dsp.midi_filter_bank(CFG)
    actual_empty = {d for d in range(128) if not bank.weights[d].any()}
    assert actual_empty == coverage_empty | nyquist_empty

    # narrow low-pitch triangles: a non-empty set, all below one cutoff
    assert coverage_empty
    cutoff = max(coverage_empty) + 1
    assert cutoff == 42
    for d in range(cutoff, 127):
        assert bank.weights[d].any()
    # the lone high empty row is the above-Nyquist one
    assert nyquist_empty == {127}


def test_03_every_synthesis_path_emits_frame_multiple_lengths(tmp_path):
    nsf_ckpt = tmp_path / "nsf.ckpt"
    helpers.write_zero_nsf_ckpt(nsf_ckpt)
    am_ckpt = tmp_path / "am.ckpt"
    helpers.write_tiny_am_ckpt(am_ckpt)

    rng = np.random.default_rng(2024)
    for i in range(20):
        t, specs = 0.0, []
        for _ in range(int(rng.integers(1, 4))):
            dur = float(rng.uniform(0.08, 0.18))
            specs.append((t, t + dur, int(rng.integers(45, 90)),
                          int(rng.integers(60, 120))))
            t += dur
        notes = helpers.make_notes(specs)
        midi = tmp_path / f"roll_{i}.mid"
        midi.write_bytes(midi_io.write_midi(notes))
        ref = tmp_path / f"ref_{i}.wav"
        helpers.tone_wav(ref, freq=330.0, seconds=float(rng.uniform(0.15, 0.3)))

        n_roll = math.ceil(notes.duration * RATE / 288 - 1e-9)
        n_ref = math.ceil(len(formats.read_wav(ref)) / 288)
        for mode, extra, n_frames in (
                ("direct", (), n_roll),
                ("am+nsf", ("--am-ckpt", am_ckpt), n_roll),
                ("abs", ("--ref-wav", ref), n_ref)):
            for exc_kind in ("sine", "noise"):
                out = tmp_path / f"out_{i}_{mode.replace('+', '_')}_{exc_kind}.wav"
                assert run_cli("synth", midi, out, "--nsf-ckpt", nsf_ckpt,
                               "--mode", mode, "--excitation", exc_kind,
                               *extra) == 0
                assert len(formats.read_wav(out)) == n_frames * 288


def test_04_zero_output_projections_pass_excitation_through():
    cfg = nsf.NsfConfig(feature_dim=5, upsample_factor=24, n_blocks=2,
                        convs_per_block=2, channels=8)
    rng = np.random.default_rng(7)
    feats = dsp.FeatureMatrix(rng.uniform(0.0, 1.0, (6, 5)), "mel-fb",
                              24 / RATE, RATE)
    source = dsp.WaveSignal(0.4 * rng.standard_normal(6 * 24), RATE)
    for params in (nsf.nsf_init(cfg, seed=7), nsf.nsf_zero(cfg)):
        out = nsf.nsf_forward(params, feats, source, cfg)
        assert np.array_equal(out.samples, source.samples)


def max_fd_rel_error(loss_fn, params, grads, eps=1e-4):
    """Central finite differences over every parameter entry."""
    worst = 0.0
    for name, tensor in params.tensors.items():
        grad = grads[name]
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + eps
            hi = loss_fn()
            tensor[idx] = orig - eps
            lo = loss_fn()
            tensor[idx] = orig
            fd = (hi - lo) / (2.0 * eps)
            denom = max(abs(fd), abs(grad[idx]), 1e-6)
            worst = max(worst, abs(fd - grad[idx]) / denom)
    return worst


def test_05_analytic_gradients_match_finite_differences():
    # waveform model, every entry of every tensor
    cfg = nsf.NsfConfig(feature_dim=3, upsample_factor=8, n_blocks=1,
                        convs_per_block=2, channels=2)
    rng = np.random.default_rng(11)
    feats = dsp.FeatureMatrix(rng.uniform(0.2, 1.0, (4, 3)), "mel-fb",
                              8 / RATE, RATE)
    t = np.arange(32)
    source = dsp.WaveSignal(0.6 * np.sin(2 * np.pi * 5 * t / 32)
                            + 0.05 * rng.standard_normal(32), RATE)
    target = dsp.WaveSignal(0.5 * np.sin(2 * np.pi * 3 * t / 32 + 0.4), RATE)
    resolutions = (dsp.StftConfig(RATE, 16, 4, 16), dsp.StftConfig(RATE, 32, 8, 32))
    params = nsf.nsf_init(cfg, seed=3)
    _, grads = nsf.nsf_backward(params, feats, source, target, cfg, resolutions)
    loss_fn = lambda: nsf.nsf_backward(params, feats, source, target, cfg,
                                       resolutions)[0]
    assert max_fd_rel_error(loss_fn, params, grads) < 1e-4

    # acoustic model, every entry of every tensor
    am_cfg = acoustic.AmConfig(variant="taco2", output_dim=3,
                               prenet_dropout=0.0, encoder_channels=4,
                               decoder_state_dim=4, prenet_widths=(6, 4),
                               postnet_channels=4)
    roll_values = np.zeros((8, 128))
    for frame in range(8):
        roll_values[frame, 55 + 2 * (frame % 3)] = (60 + 5 * frame) / 127.0
    roll = midi_io.PianoRoll(roll_values, 288 / RATE, RATE)
    target_feat = dsp.FeatureMatrix(rng.uniform(-0.8, 0.8, (8, 3)), "midi-fb",
                                    288 / RATE, RATE)
    am_params = acoustic.am_init(am_cfg, seed=5)
    _, am_grads, _ = acoustic.am_teacher_forced(am_params, roll, target_feat, am_cfg)
    am_loss_fn = lambda: acoustic.am_teacher_forced(am_params, roll,
                                                    target_feat, am_cfg)[0]
    assert max_fd_rel_error(am_loss_fn, am_params, am_grads) < 1e-4


def test_06_models_overfit_a_toy_clip():
    # waveform model: halve the spectral loss within 200 steps
    notes = helpers.make_notes([(0.0, 0.25, 69, 100), (0.25, 0.5, 72, 100)])
    cfg = nsf.NsfConfig(feature_dim=128, upsample_factor=96, n_blocks=1,
                        convs_per_block=3, channels=8)
    roll = midi_io.to_piano_roll(notes, 96 / RATE, RATE)
    feats = formats.feature_from_roll(roll)
    source = excitation.fit_length(excitation.sine_excitation(notes, RATE),
                                   feats.n_frames * 96)
    target = dsp.WaveSignal(0.5 * source.samples, RATE)
    train_cfg = nsf.TrainConfig(learning_rate=2e-3, batch_size=1, epochs=200)
    _, history = nsf.nsf_train(nsf.nsf_init(cfg, seed=0),
                               [(feats, source, target)], train_cfg, cfg)
    assert len(history) == 200
    assert history[-1][1] <= 0.5 * history[0][1]

    # acoustic model, dropout off: quarter the frame loss within 300 steps
    am_cfg = acoustic.AmConfig(variant="taco2", output_dim=6,
                               prenet_dropout=0.0, encoder_channels=8,
                               decoder_state_dim=8, prenet_widths=(12, 8),
                               postnet_channels=8)
    rng = np.random.default_rng(3)
    roll_values = np.zeros((24, 128))
    for frame in range(24):
        roll_values[frame, 60 + (frame % 3)] = 100 / 127.0
    am_roll = midi_io.PianoRoll(roll_values, 288 / RATE, RATE)
    am_target = dsp.FeatureMatrix(rng.uniform(-0.8, 0.8, (24, 6)), "midi-fb",
                                  288 / RATE, RATE)
    am_train_cfg = acoustic.AmTrainConfig(learning_rate=5e-3, batch_size=1,
                                          epochs=300)
    _, am_history = acoustic.am_train(acoustic.am_init(am_cfg, seed=0),
                                      [(am_roll, am_target)], am_train_cfg,
                                      am_cfg)
    assert len(am_history) == 300
    assert am_history[-1][1] <= 0.25 * am_history[0][1]


def test_07_griffin_lim_error_non_increasing():
    rng = np.random.default_rng(17)
    for _ in range(10):
        magnitude = np.abs(rng.standard_normal((12, CFG.n_bins)))
        _, history = dsp.griffin_lim(magnitude, CFG, n_iters=32,
                                     return_history=True)
        assert len(history) == 32
        for before, after in zip(history, history[1:]):
            assert after <= before + 1e-6


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_08_matched_audio_scores_below_transposed_roll(tmp_path):
    probe_dir = tmp_path / "probes"
    assert run_cli("probe-set", probe_dir, "--count", "20", "--seed", "0") == 0
    paths = sorted(probe_dir.iterdir())
    assert len(paths) == 20
    for path in paths:
        notes = midi_io.parse_midi(path.read_bytes())
        roll = midi_io.to_piano_roll(notes, 288 / RATE, RATE)
        wave = excitation.sine_excitation(notes, RATE)
        probs = evaluation.pitch_probability(wave, CFG)
        matched = evaluation.pitch_cross_entropy(probs, roll)
        shifted = evaluation.pitch_cross_entropy(
            probs, midi_io.transpose_roll(roll, 2))
        assert matched < shifted


def oracle_holm(p_values, alpha):
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    rejected = [False] * m
    running = 0.0
    blocked = False
    for rank, i in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[i]))
        adjusted[i] = running
        if not blocked and p_values[i] <= alpha / (m - rank):
            rejected[i] = True
        else:
            blocked = True
    return rejected, adjusted


def test_09_rank_statistics_match_enumeration_oracles():
    # exact U test against full enumeration, all tie-free splits of up to 10
    for n in range(2, 11):
        ranks = list(range(1, n + 1))
        for n_a in range(1, n):
            offset = n_a * (n_a + 1) // 2
            u_all = sorted(sum(c) - offset for c in combinations(ranks, n_a))
            total = len(u_all)
            for combo in combinations(ranks, n_a):
                chosen = set(combo)
                a = [float(r) for r in combo]
                b = [float(r) for r in ranks if r not in chosen]
                u, p = evaluation.mann_whitney_u(a, b)
                u_obs = sum(combo) - offset
                assert u == u_obs
                p_le = sum(v <= u_obs for v in u_all) / total
                p_ge = sum(v >= u_obs for v in u_all) / total
                assert abs(p - min(1.0, 2.0 * min(p_le, p_ge))) < 1e-12

    # worked example
    u, p = evaluation.mann_whitney_u([3.0, 4.0, 5.0], [1.0, 2.0])
    assert u == 6.0
    assert abs(p - 0.2) < 1e-12

    # Holm step-down against the definitional oracle
    rng = np.random.default_rng(29)
    for _ in range(1000):
        m = int(rng.integers(1, 9))
        p_values = [float(v) for v in rng.uniform(0.001, 0.2, m)]
        rejected, adjusted = evaluation.holm_bonferroni(p_values, alpha=0.05)
        want_rejected, want_adjusted = oracle_holm(p_values, 0.05)
        assert list(rejected) == want_rejected
        np.testing.assert_allclose(adjusted, want_adjusted, atol=1e-12)


def test_10_round_trips_are_exact(tmp_path):
    # notes -> MIDI bytes -> notes -> roll -> notes, on the frame grid
    shift = 0.0125  # 12 ticks at 480 ticks per quarter, 120 bpm
    specs = [(0.0, 0.05, 60, 100), (0.05, 0.0875, 64, 90),
             (0.1, 0.15, 72, 127), (0.2, 0.25, 60, 1)]
    notes = helpers.make_notes(specs)
    parsed = midi_io.parse_midi(midi_io.write_midi(notes))
    roll = midi_io.to_piano_roll(parsed, shift, RATE)
    recovered = sorted(midi_io.roll_to_notes(roll).notes,
                       key=lambda n: (n.onset, n.pitch))
    assert len(recovered) == len(specs)
    for (onset, offset, pitch, velocity), note in zip(specs, recovered):
        assert note.pitch == pitch
        assert note.velocity == velocity
        assert abs(note.onset - onset) < 1e-9
        assert abs(note.offset - offset) < 1e-9

    # analysis then resynthesis reproduces the interior samples
    rng = np.random.default_rng(41)
    wave = dsp.WaveSignal(0.7 * rng.uniform(-1.0, 1.0, RATE), RATE)
    back = dsp.istft(dsp.stft(wave, CFG), CFG)
    interior = slice(CFG.frame_length, len(wave) - CFG.frame_length)
    err = np.abs(back.samples[interior] - wave.samples[interior]).max()
    assert err < 1e-6 * np.abs(wave.samples).max()

    # checkpoint and feature files: save, load, save again, byte-identical
    cfg = helpers.tiny_nsf_cfg()
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    nsf.save_checkpoint(p1, nsf.nsf_init(cfg, seed=2), cfg)
    params, loaded_cfg = nsf.load_checkpoint(p1)
    nsf.save_checkpoint(p2, params, loaded_cfg)
    assert p1.read_bytes() == p2.read_bytes()

    am_cfg = helpers.tiny_am_cfg()
    a1 = tmp_path / "a_am.ckpt"
    a2 = tmp_path / "b_am.ckpt"
    acoustic.am_save_checkpoint(a1, acoustic.am_init(am_cfg, seed=2), am_cfg)
    am_params, am_loaded = acoustic.am_load_checkpoint(a1)
    acoustic.am_save_checkpoint(a2, am_params, am_loaded)
    assert a1.read_bytes() == a2.read_bytes()

    f1 = tmp_path / "a.mfb"
    f2 = tmp_path / "b.mfb"
    feat = dsp.FeatureMatrix(rng.standard_normal((9, 16)), "mel-fb",
                             288 / RATE, RATE)
    formats.write_feature_file(f1, feat)
    formats.write_feature_file(f2, formats.read_feature_file(f1))
    assert f1.read_bytes() == f2.read_bytes()


def test_11_sine_excitation_peaks_at_note_frequencies():
    def mean_voiced_spectrum(notes):
        wave = excitation.sine_excitation(notes, RATE)
        return np.abs(dsp.stft(wave, CFG))[2:-2].mean(axis=0)

    for pitch in (48, 60, 69, 81):
        spectrum = mean_voiced_spectrum(
            helpers.make_notes([(0.0, 1.0, pitch, 100)]))
        assert int(np.argmax(spectrum)) == round(note_freq(pitch) * FFT / RATE)

    triad = helpers.make_notes([(0.0, 1.0, p, 100) for p in (60, 64, 67)])
    spectrum = mean_voiced_spectrum(triad)
    floor = np.median(spectrum)
    for pitch in (60, 64, 67):
        expected = round(note_freq(pitch) * FFT / RATE)
        window = spectrum[expected - 3 : expected + 4]
        peak = expected - 3 + int(np.argmax(window))
        assert abs(peak - expected) <= 2
        assert spectrum[peak] > 5.0 * floor
