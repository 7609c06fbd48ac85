import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsad.audio_io import AudioStream
from streamsad.features import (
    CmnState,
    FeatureConfig,
    FeatureExtractor,
    StaticMfcc,
    append_deltas,
    apply_cmn,
    dct_matrix,
    extract_features,
    extract_mfcc,
    frame_count,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
)
from oracles import delta_oracle, mfcc_oracle, trailing_mean_oracle


CFG = FeatureConfig()


def tone(freq, duration, sample_rate, amp=0.5):
    t = np.arange(int(duration * sample_rate)) / sample_rate
    return amp * np.sin(2 * np.pi * freq * t)


def stream(samples, sample_rate=8000):
    return AudioStream(sample_rate, np.asarray(samples, dtype=np.float64))


class TestStaticMfcc:
    @pytest.mark.parametrize("sample_rate", [8000, 16000])
    def test_matches_direct_dft_oracle(self, sample_rate):
        rng = np.random.default_rng(5)
        duration = 0.3
        n = int(duration * sample_rate)
        t = np.arange(n) / sample_rate
        signals = [
            tone(440.0, duration, sample_rate),
            tone(1800.0, duration, sample_rate, amp=0.2) + 0.05 * rng.standard_normal(n),
            0.3 * np.sin(2 * np.pi * (300.0 + 1500.0 * t) * t),  # chirp
            rng.standard_normal(n) * 0.1,
        ]
        for samples in signals:
            got = extract_mfcc(stream(samples, sample_rate))
            want = mfcc_oracle(samples, sample_rate)
            assert np.max(np.abs(got - want)) < 1e-4

    def test_tone_at_filter_center_dominates_that_filter(self):
        sample_rate = 8000
        n_fft = CFG.fft_size(sample_rate)
        bank = mel_filterbank(sample_rate, n_fft, 23, 150.0, 4000.0)
        bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
        target = 11
        center_hz = bins[np.argmax(bank[target])]
        samples = tone(center_hz, 0.5, sample_rate)
        static = StaticMfcc(CFG, sample_rate)
        frames = samples[: static.win].reshape(1, -1)
        emphasized = np.empty_like(frames)
        emphasized[:, 0] = frames[:, 0] * (1 - CFG.pre_emphasis)
        emphasized[:, 1:] = frames[:, 1:] - CFG.pre_emphasis * frames[:, :-1]
        spectrum = np.abs(np.fft.rfft(emphasized * static.window, n=n_fft, axis=1))
        energies = spectrum @ bank.T
        assert int(np.argmax(energies[0])) == target

    def test_digital_silence_gives_identical_constant_frames(self):
        out = extract_mfcc(stream(np.zeros(8000)))
        assert np.all(out == out[0])

    def test_exact_window_gives_one_frame(self):
        out = extract_mfcc(stream(np.zeros(200)))
        assert out.shape == (1, 12)

    def test_too_short_raises(self):
        with pytest.raises(ValueError, match="shorter than one analysis window"):
            extract_mfcc(stream(np.zeros(199)))

    @settings(max_examples=40, deadline=None)
    @given(extra=st.integers(0, 1000))
    def test_frame_count_formula(self, extra):
        n = 200 + extra
        assert frame_count(n, CFG, 8000) == 1 + extra // 80
        assert len(extract_mfcc(stream(np.zeros(n)))) == frame_count(n, CFG, 8000)

    def test_filterbank_spans_requested_range(self):
        n_fft = 256
        bank = mel_filterbank(8000, n_fft, 23, 150.0, 4000.0)
        assert bank.shape == (23, n_fft // 2 + 1)
        freqs = np.arange(bank.shape[1]) * 8000 / n_fft
        active = freqs[bank.sum(axis=0) > 0]
        assert active.min() >= 150.0
        assert active.max() <= 4000.0

    def test_filterbank_rejects_bad_range(self):
        with pytest.raises(ValueError, match="Nyquist"):
            mel_filterbank(8000, 256, 23, 150.0, 5000.0)

    def test_mel_scale_round_trip(self):
        f = np.array([150.0, 1000.0, 3999.0])
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-12)

    def test_dct_rows_orthonormal_and_level_free(self):
        rows = dct_matrix(12, 23)
        np.testing.assert_allclose(rows @ rows.T, np.eye(12), atol=1e-12)
        # row 0 of the full DCT (overall level) is excluded: constant input -> 0
        np.testing.assert_allclose(rows @ np.ones(23), 0.0, atol=1e-12)


class TestCmn:
    def test_constant_input_zeroes_out(self):
        frames = np.tile([3.0, -1.5, 2.0], (50, 1))
        np.testing.assert_allclose(apply_cmn(frames), 0.0, atol=1e-12)

    def test_matches_trailing_mean_oracle(self):
        rng = np.random.default_rng(7)
        frames = rng.standard_normal((240, 12))
        np.testing.assert_allclose(
            apply_cmn(frames), trailing_mean_oracle(frames, 100), atol=1e-10
        )

    def test_recovers_after_level_step(self):
        # the shift washes out once the window holds only post-step frames
        frames = np.zeros((260, 2))
        frames[60:] = 5.0
        out = apply_cmn(frames)
        np.testing.assert_allclose(out[160:], 0.0, atol=1e-12)
        assert np.abs(out[60:159]).max() > 0.01

    def test_streaming_state_equals_batch(self):
        rng = np.random.default_rng(11)
        frames = rng.standard_normal((130, 12))
        state = CmnState(CFG)
        streamed = np.array([state.apply(f) for f in frames])
        np.testing.assert_array_equal(streamed, apply_cmn(frames))

    def test_empty_input(self):
        assert apply_cmn(np.zeros((0, 12))).shape == (0, 12)


class TestDeltas:
    def test_constant_frames_give_zero_deltas(self):
        frames = np.tile([1.0, 2.0], (20, 1))
        out = append_deltas(frames)
        np.testing.assert_allclose(out[:, 2:], 0.0, atol=1e-12)

    def test_linear_ramp_has_unit_slope_interior(self):
        frames = np.arange(30.0).reshape(-1, 1)
        out = append_deltas(frames)
        # interior deltas of a unit-slope ramp equal the slope
        np.testing.assert_allclose(out[2:-2, 1], 1.0, atol=1e-12)
        np.testing.assert_allclose(out[4:-4, 2], 0.0, atol=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(3)
        frames = rng.standard_normal((10, 4))
        out = append_deltas(frames)
        d1 = delta_oracle(frames)
        d2 = delta_oracle(d1)
        np.testing.assert_allclose(out[:, 4:8], d1, atol=1e-12)
        np.testing.assert_allclose(out[:, 8:], d2, atol=1e-12)

    def test_output_width(self):
        assert append_deltas(np.zeros((5, 12))).shape == (5, 36)

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty"):
            append_deltas(np.zeros((0, 12)))


class TestStreamingExtractor:
    def random_chunks(self, samples, rng, n_chunks):
        cuts = np.sort(rng.choice(np.arange(1, len(samples)), n_chunks - 1, replace=False))
        return np.split(samples, cuts)

    def collect(self, extractor, chunks):
        frames = []
        for chunk in chunks:
            frames.extend(extractor.push(chunk))
        frames.extend(extractor.flush())
        return np.stack(frames)

    def test_chunking_never_changes_output(self):
        rng = np.random.default_rng(21)
        samples = rng.uniform(-0.5, 0.5, 16000)
        ref = self.collect(FeatureExtractor(CFG, 8000), [samples])
        for trial in range(6):
            got = self.collect(
                FeatureExtractor(CFG, 8000), self.random_chunks(samples, rng, 8)
            )
            np.testing.assert_array_equal(got, ref)

    def test_streaming_matches_batch_pipeline(self):
        rng = np.random.default_rng(22)
        samples = rng.uniform(-0.5, 0.5, 12345)
        streamed = self.collect(FeatureExtractor(CFG, 8000), [samples])
        batch = extract_features(stream(samples))
        assert streamed.shape == batch.shape
        np.testing.assert_allclose(streamed, batch, atol=1e-10)

    def test_frame_total_matches_formula(self):
        ext = FeatureExtractor(CFG, 8000)
        total = len(ext.push(np.zeros(9999))) + len(ext.flush())
        assert total == frame_count(9999, CFG, 8000)

    def test_push_withholds_lookahead_frames(self):
        # delta-deltas need statics through t+4, so push alone holds 4 back
        ext = FeatureExtractor(CFG, 8000)
        emitted = len(ext.push(np.zeros(8000)))
        assert frame_count(8000, CFG, 8000) - emitted == 4

    def test_tiny_pushes(self):
        rng = np.random.default_rng(23)
        samples = rng.uniform(-0.5, 0.5, 4000)
        ext = FeatureExtractor(CFG, 8000)
        chunks = [samples[i : i + 17] for i in range(0, 4000, 17)]
        got = self.collect(ext, chunks)
        np.testing.assert_allclose(got, extract_features(stream(samples)), atol=1e-10)

    def test_buffers_stay_bounded(self):
        ext = FeatureExtractor(CFG, 8000)
        rng = np.random.default_rng(24)
        for _ in range(40):
            ext.push(rng.uniform(-0.5, 0.5, 800))
            # only the lookahead region plus delta window may be buffered
            assert len(ext.statics) <= 2 * CFG.delta_window + 1
            assert len(ext.deltas) <= 2 * CFG.delta_window + 1
            assert len(ext.pending) < ext.static.win

    def test_push_after_flush_raises(self):
        ext = FeatureExtractor(CFG, 8000)
        ext.push(np.zeros(4000))
        ext.flush()
        with pytest.raises(RuntimeError, match="push after flush"):
            ext.push(np.zeros(10))

    def test_short_stream_flush_is_empty(self):
        ext = FeatureExtractor(CFG, 8000)
        assert ext.push(np.zeros(100)) == []
        assert ext.flush() == []

    def test_process_too_short_raises(self):
        with pytest.raises(ValueError, match="shorter than one analysis window"):
            FeatureExtractor(CFG, 8000).process(np.zeros(50))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            FeatureConfig(hop=0.05, window_length=0.02)
        with pytest.raises(ValueError):
            FeatureConfig(n_mfcc=30)
        with pytest.raises(ValueError):
            FeatureConfig(pre_emphasis=1.0)
        with pytest.raises(ValueError):
            FeatureConfig(cmn_window=0.001)

    def test_derived_values(self):
        assert CFG.window_samples(8000) == 200
        assert CFG.hop_samples(8000) == 80
        assert CFG.fft_size(8000) == 256
        assert CFG.window_samples(16000) == 400
        assert CFG.fft_size(16000) == 512
        assert CFG.cmn_frames() == 100
        assert CFG.output_dim == 36

    def test_explicit_fft_size_respected(self):
        cfg = FeatureConfig(n_fft=512)
        assert cfg.fft_size(8000) == 512
        with pytest.raises(ValueError, match="smaller than window"):
            StaticMfcc(FeatureConfig(n_fft=128), 8000)
