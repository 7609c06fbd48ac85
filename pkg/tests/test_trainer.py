import logging

import numpy as np
import pytest

from streamsad.audio_io import NONSPEECH, SPEECH, SegmentLabel, write_labels, write_wav
from streamsad.engine import load_model, save_model, stream_detect
from streamsad.features import FeatureConfig
from streamsad.gmm import Gmm
from streamsad.synth import make_corpus
from streamsad.trainer import (
    TrainConfig,
    TrainingError,
    _cut_segments,
    frame_labels,
    load_manifest,
    train,
)


MICRO = dict(
    labeling_ubm_size=4,
    counts_ubm_per_class=8,
    supervector_ubm_size=4,
    lda_dim=4,
    pca_dim=8,
    gmm_iters=4,
    hidden_dims=(16, 8),
    mlp_epochs=3,
    base_threshold=0.0,
)


@pytest.fixture(scope="module")
def micro_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("micro_corpus")
    return make_corpus(root, n_files=2, duration=6.0, seed=777)


class TestFrameLabels:
    def test_uncovered_time_is_nonspeech(self):
        labels = [SegmentLabel(0.5, 1.0, SPEECH)]
        mask = frame_labels(labels, n_frames=8, hop=0.25, window=0.5)
        # centers: 0.25, 0.5, 0.75, 1.0, 1.25, ...
        np.testing.assert_array_equal(
            mask, [False, True, True, False, False, False, False, False]
        )

    def test_half_open_boundary_at_center(self):
        # center exactly on a segment start belongs to it; on an end does not
        labels = [
            SegmentLabel(0.0, 0.5, NONSPEECH),
            SegmentLabel(0.5, 1.0, SPEECH),
            SegmentLabel(1.0, 2.0, NONSPEECH),
        ]
        mask = frame_labels(labels, n_frames=6, hop=0.25, window=0.5)
        np.testing.assert_array_equal(mask, [False, True, True, False, False, False])

    def test_all_speech(self):
        mask = frame_labels([SegmentLabel(0.0, 10.0, SPEECH)], 50, 0.01, 0.025)
        assert mask.all()

    def test_empty_labels_mean_silence(self):
        assert not frame_labels([], 20, 0.01, 0.025).any()

    def test_matches_point_membership_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            bounds = np.sort(rng.uniform(0.0, 5.0, 6))
            labels = [
                SegmentLabel(bounds[0], bounds[1], SPEECH),
                SegmentLabel(bounds[2], bounds[3], SPEECH),
                SegmentLabel(bounds[4], bounds[5], SPEECH),
            ]
            n, hop, window = 40, 0.1, 0.2
            mask = frame_labels(labels, n, hop, window)
            for t in range(n):
                center = t * hop + window / 2
                want = any(s.start <= center < s.end for s in labels)
                assert mask[t] == want


class TestManifest:
    def test_relative_paths_resolve_next_to_manifest(self, tmp_path):
        manifest = tmp_path / "nested" / "train.tsv"
        manifest.parent.mkdir()
        manifest.write_text("a.wav\ta.lab\n/abs/b.wav\t/abs/b.lab\n")
        entries = load_manifest(manifest)
        assert entries[0] == (tmp_path / "nested" / "a.wav", tmp_path / "nested" / "a.lab")
        assert str(entries[1][0]) == "/abs/b.wav"

    def test_blank_lines_skipped(self, tmp_path):
        manifest = tmp_path / "train.tsv"
        manifest.write_text("\na.wav\ta.lab\n\n")
        assert len(load_manifest(manifest)) == 1

    def test_field_count_error(self, tmp_path):
        manifest = tmp_path / "train.tsv"
        manifest.write_text("a.wav\ta.lab\nb.wav\n")
        with pytest.raises(ValueError, match="tsv:2"):
            load_manifest(manifest)


class TestTrainConfig:
    def test_lda_rank_bound(self):
        with pytest.raises(ValueError, match="labeling_ubm_size"):
            TrainConfig(entries=[("a", "b")], labeling_ubm_size=4, lda_dim=8)

    def test_pca_bound(self):
        with pytest.raises(ValueError, match="pca_dim"):
            TrainConfig(entries=[("a", "b")], lda_dim=2, pca_dim=15)

    def test_positive_sizes(self):
        with pytest.raises(ValueError, match="positive"):
            TrainConfig(entries=[("a", "b")], gmm_iters=0)


class TestCutSegments:
    UBM = Gmm(
        weights=np.array([0.5, 0.5]),
        means=np.array([[0.0, 0.0], [1.0, 1.0]]),
        variances=np.ones((2, 2)),
    )

    def test_pure_segments_kept_with_their_label(self):
        rng = np.random.default_rng(1)
        frames = rng.standard_normal((20, 2))
        mask = np.array([True] * 10 + [False] * 10)
        svs, labels, candidates, dropped = _cut_segments(frames, mask, self.UBM)
        assert (candidates, dropped) == (2, 0)
        assert labels == [True, False]
        assert all(sv.shape == (4,) for sv in svs)

    def test_straddling_segment_dropped(self):
        rng = np.random.default_rng(2)
        frames = rng.standard_normal((30, 2))
        mask = np.array([True] * 10 + [True] * 5 + [False] * 5 + [False] * 10)
        svs, labels, candidates, dropped = _cut_segments(frames, mask, self.UBM)
        assert (candidates, dropped) == (3, 1)
        assert labels == [True, False]

    def test_leftover_tail_frames_ignored(self):
        rng = np.random.default_rng(3)
        frames = rng.standard_normal((27, 2))
        mask = np.zeros(27, dtype=bool)
        _, _, candidates, _ = _cut_segments(frames, mask, self.UBM)
        assert candidates == 2


class TestTrainedModel:
    def test_dimension_chain_matches_config(self, tiny_model):
        # conftest TINY: labeling 8, counts/class 16, supervector 8,
        # lda 8, pca 12, hidden (32, 16, 8)
        assert tiny_model.labeling_ubm.n_components == 8
        assert tiny_model.labeling_ubm.dim == 36
        assert tiny_model.lda.matrix.shape == (8, 11 * 36)
        assert tiny_model.pca.matrix.shape == (12, 7 * 8)
        assert tiny_model.counts_ubm.n_components == 32
        assert tiny_model.counts_ubm.dim == 12
        assert tiny_model.supervector_ubm.n_components == 8
        assert tiny_model.mlp.layer_dims == [8 * 12, 32, 16, 8, 2]
        assert tiny_model.speech_counts.shape == (32,)
        assert tiny_model.speech_embedding.shape == (32,)
        assert tiny_model.sample_rate == 8000
        assert tiny_model.base_threshold == 0.0

    def test_count_vectors_are_normalized_distributions(self, tiny_model):
        for vec in (tiny_model.speech_counts, tiny_model.nonspeech_counts):
            assert np.all(vec >= 0)
            assert vec.sum() == pytest.approx(1.0, abs=1e-9)

    def test_counts_ubm_is_balanced_merge(self, tiny_model):
        # each class half contributes exactly 0.5 total weight
        assert tiny_model.counts_ubm.weights[:16].sum() == pytest.approx(0.5, abs=1e-9)
        assert tiny_model.counts_ubm.weights[16:].sum() == pytest.approx(0.5, abs=1e-9)

    def test_model_detects_training_data_well(self, tiny_corpus, tiny_model):
        # sanity: on a training file the detector should beat coin flipping
        from streamsad.audio_io import read_labels, read_wav
        from streamsad.evaluation import score

        wav, lab = tiny_corpus["entries"][0]
        result = stream_detect(read_wav(wav), tiny_model)
        report = score(read_labels(lab), result.segments)
        assert report.dcf < 0.4


class TestTrainRuns:
    def test_same_seed_gives_identical_bundles(self, micro_corpus, tmp_path):
        paths = []
        for i in range(2):
            cfg = TrainConfig(entries=micro_corpus, seed=11, **MICRO)
            path = tmp_path / f"run{i}.sadb"
            train(cfg, out_path=path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_out_path_round_trips(self, micro_corpus, tmp_path):
        cfg = TrainConfig(entries=micro_corpus, seed=12, **MICRO)
        path = tmp_path / "model.sadb"
        model = train(cfg, out_path=path)
        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.speech_counts, model.speech_counts)

    def test_monitor_entries_do_not_change_the_model(self, micro_corpus, tmp_path):
        plain_cfg = TrainConfig(entries=micro_corpus, seed=13, **MICRO)
        mon_cfg = TrainConfig(
            entries=micro_corpus, seed=13, monitor_entries=micro_corpus[:1], **MICRO
        )
        p1, p2 = tmp_path / "plain.sadb", tmp_path / "mon.sadb"
        train(plain_cfg, out_path=p1)
        train(mon_cfg, out_path=p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_stage_progress_is_logged(self, micro_corpus, caplog):
        cfg = TrainConfig(entries=micro_corpus, seed=14, **MICRO)
        with caplog.at_level(logging.INFO, logger="streamsad.trainer"):
            train(cfg)
        text = caplog.text
        for stage in ("features", "labeling-ubm", "lda", "counts-ubm", "mlp"):
            assert stage in text
        assert "mlp epoch" in text

    def test_empty_entries(self):
        with pytest.raises(TrainingError, match=r"\[manifest\]"):
            train(TrainConfig(entries=[]))

    def test_missing_audio_names_file_and_stage(self, micro_corpus, tmp_path):
        bad = [(tmp_path / "ghost.wav", tmp_path / "ghost.lab")]
        cfg = TrainConfig(entries=micro_corpus + bad, seed=15, **MICRO)
        with pytest.raises(TrainingError, match=r"\[features\].*ghost\.wav"):
            train(cfg)

    def test_single_class_corpus_rejected(self, micro_corpus, tmp_path):
        # relabel a copy of the corpus as wall-to-wall speech
        entries = []
        for i, (wav, _) in enumerate(micro_corpus):
            lab = tmp_path / f"allspeech{i}.lab"
            write_labels(lab, [SegmentLabel(0.0, 6.0, SPEECH)])
            entries.append((wav, lab))
        # all-speech halves the acoustic class inventory, so shrink lda_dim
        # enough for the LDA stage to pass and expose the counts-ubm check
        cfg = TrainConfig(entries=entries, seed=16, **dict(MICRO, lda_dim=3))
        with pytest.raises(TrainingError, match="non-speech class absent"):
            train(cfg)

    def test_mixed_sample_rates_rejected(self, micro_corpus, tmp_path):
        wav16 = tmp_path / "fast.wav"
        rng = np.random.default_rng(17)
        write_wav(wav16, 16000, rng.uniform(-0.3, 0.3, 16000 * 2))
        lab16 = tmp_path / "fast.lab"
        write_labels(lab16, [SegmentLabel(0.0, 2.0, NONSPEECH)])
        cfg = TrainConfig(entries=micro_corpus + [(wav16, lab16)], seed=18, **MICRO)
        with pytest.raises(TrainingError, match="sample rate"):
            train(cfg)
