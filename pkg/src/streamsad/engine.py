"""The online detector: segment scoring, runtime adaptation, streaming I/O.

Every 10 feature frames (0.1 s at the default hop) the engine builds two
test vectors from the segment: L1-normalized posterior counts under the
large merged UBM, and an MLP embedding of the supervector under the small
UBM. Each is scored as cosine(test, speech model) − cosine(test, non-speech
model), the two scores are averaged, and the segment is called speech when
the fused score exceeds the current threshold (ties go to non-speech).

After every decision the engine refreshes its adapted state: the speech and
non-speech count-model vectors are pulled toward the mean of recently
detected segments of that class, and the threshold toward the mean fused
score of recent speech, each by a fixed fraction. Buffers are bounded ring
buffers, so memory stays constant; empty buffers leave the model values
untouched, which also makes a disabled-adaptation run identical to a
stateless detector. Only the count-based vectors adapt; the embedding
model vectors stay fixed.

Decisions depend only on frame values, never on how samples were chunked,
so feeding a file sample-by-sample or whole produces bit-identical traces.
"""

from __future__ import annotations

import io
import json
import struct
from collections import deque
from dataclasses import dataclass, fields

import numpy as np

from .audio_io import NONSPEECH, SPEECH, AudioStream, SegmentLabel
from .context_transform import (
    LDA_CONTEXT,
    PCA_CONTEXT,
    ContextSpec,
    LinearTransform,
    apply_transform,
)
from .embeddings import MlpModel, extract_embedding, make_supervector
from .features import FeatureConfig, FeatureExtractor
from .gmm import Gmm, accumulate_stats

SEGMENT_FRAMES = 10
# a trailing partial segment is decided on its own if it has at least this
# many frames; shorter tails inherit the previous label
MIN_TAIL_FRAMES = 5


@dataclass(frozen=True)
class AdaptationConfig:
    """Runtime adaptation weights and buffer capacities.

    model_adaptation is the fraction of the adapted count vectors taken
    from the recent-segment buffers; threshold_adaptation likewise for the
    decision threshold. Buffer lengths are in segments (0.1 s each).
    """

    model_adaptation: float = 0.4
    threshold_adaptation: float = 0.1
    speech_buffer_len: int = 30
    nonspeech_buffer_len: int = 60
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 <= self.model_adaptation <= 1.0):
            raise ValueError("model_adaptation must be in [0, 1]")
        if not (0.0 <= self.threshold_adaptation <= 1.0):
            raise ValueError("threshold_adaptation must be in [0, 1]")
        if self.speech_buffer_len < 1 or self.nonspeech_buffer_len < 1:
            raise ValueError("buffer lengths must be >= 1")


@dataclass(frozen=True)
class SmoothingConfig:
    """Label post-processing: fill short non-speech gaps, drop short speech."""

    enabled: bool = True
    min_gap: float = 0.3
    min_speech: float = 0.2

    def __post_init__(self):
        if self.min_gap < 0 or self.min_speech < 0:
            raise ValueError("smoothing durations must be non-negative")


@dataclass(frozen=True)
class SadModel:
    """Everything inference needs, as trained: front-end config, transforms,
    the three UBMs, the MLP, per-class model vectors, and the threshold."""

    feature_cfg: FeatureConfig
    sample_rate: int
    lda: LinearTransform
    pca: LinearTransform
    labeling_ubm: Gmm
    counts_ubm: Gmm
    supervector_ubm: Gmm
    mlp: MlpModel
    speech_counts: np.ndarray
    nonspeech_counts: np.ndarray
    speech_embedding: np.ndarray
    nonspeech_embedding: np.ndarray
    base_threshold: float = 0.25

    def __post_init__(self):
        feat_dim = self.feature_cfg.output_dim
        if self.labeling_ubm.dim != feat_dim:
            raise ValueError("labeling UBM dim does not match feature dim")
        if self.lda.input_dim != LDA_CONTEXT.size * feat_dim:
            raise ValueError("LDA input dim does not match stacked feature dim")
        if self.pca.input_dim != PCA_CONTEXT.size * self.lda.output_dim:
            raise ValueError("PCA input dim does not match stacked LDA dim")
        for name in ("counts_ubm", "supervector_ubm"):
            if getattr(self, name).dim != self.pca.output_dim:
                raise ValueError(f"{name} dim does not match transformed feature dim")
        sv_dim = self.supervector_ubm.n_components * self.supervector_ubm.dim
        if self.mlp.input_dim != sv_dim:
            raise ValueError("MLP input dim does not match supervector dim")
        for name in ("speech_counts", "nonspeech_counts"):
            vec = getattr(self, name)
            if vec.shape != (self.counts_ubm.n_components,):
                raise ValueError(f"{name} length does not match counts UBM size")
        emb_dim = self.mlp.layer_dims[self.mlp.embedding_layer]
        for name in ("speech_embedding", "nonspeech_embedding"):
            if getattr(self, name).shape != (emb_dim,):
                raise ValueError(f"{name} length does not match embedding width")
        for name in ("speech_counts", "nonspeech_counts", "speech_embedding", "nonspeech_embedding"):
            vec = getattr(self, name)
            if not np.all(np.isfinite(vec)) or not np.any(vec):
                raise ValueError(f"{name} must be finite and nonzero")
        if np.array_equal(self.speech_counts, self.nonspeech_counts):
            raise ValueError("speech and non-speech count vectors are identical")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass(frozen=True)
class Decision:
    """One 0.1 s detector output with the scores and threshold behind it."""

    index: int
    start: float
    end: float
    label: str
    zero_score: float
    emb_score: float
    fused_score: float
    threshold: float


class AdaptState:
    """Mutable per-stream adaptation state; starts equal to the model."""

    def __init__(self, model: SadModel, cfg: AdaptationConfig):
        self.speech_buffer: deque = deque(maxlen=cfg.speech_buffer_len)
        self.nonspeech_buffer: deque = deque(maxlen=cfg.nonspeech_buffer_len)
        self.speech_scores: deque = deque(maxlen=cfg.speech_buffer_len)
        self.adapted_speech_counts = model.speech_counts.copy()
        self.adapted_nonspeech_counts = model.nonspeech_counts.copy()
        self.adapted_threshold = model.base_threshold


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clipped into [-1, 1] so rounding can never leak out."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine of a zero-norm vector is undefined")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def score_vector(w_test: np.ndarray, w_speech: np.ndarray, w_nonspeech: np.ndarray) -> float:
    """Speech-affinity score in [-2, 2]: cosine to speech minus cosine to non-speech."""
    return cosine(w_test, w_speech) - cosine(w_test, w_nonspeech)


def adapt(state: AdaptState, model: SadModel, cfg: AdaptationConfig) -> AdaptState:
    """Recompute adapted vectors/threshold from the current buffer contents.

    Each adapted quantity is a convex mix of its model value and the mean
    over its buffer; an empty buffer leaves it at the model value.
    """
    alpha = cfg.model_adaptation
    beta = cfg.threshold_adaptation
    if state.speech_buffer:
        mean = np.sum(state.speech_buffer, axis=0) / len(state.speech_buffer)
        state.adapted_speech_counts = (1.0 - alpha) * model.speech_counts + alpha * mean
    else:
        state.adapted_speech_counts = model.speech_counts.copy()
    if state.nonspeech_buffer:
        mean = np.sum(state.nonspeech_buffer, axis=0) / len(state.nonspeech_buffer)
        state.adapted_nonspeech_counts = (1.0 - alpha) * model.nonspeech_counts + alpha * mean
    else:
        state.adapted_nonspeech_counts = model.nonspeech_counts.copy()
    if state.speech_scores:
        mean_score = sum(state.speech_scores) / len(state.speech_scores)
        state.adapted_threshold = (1.0 - beta) * model.base_threshold + beta * mean_score
    else:
        state.adapted_threshold = model.base_threshold
    return state


def process_segment(
    frames: np.ndarray,
    model: SadModel,
    state: AdaptState,
    cfg: AdaptationConfig,
    index: int = 0,
) -> Decision:
    """Score one segment (nominally 10 transformed frames), decide, adapt."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.pca.output_dim:
        raise ValueError(f"expected (n, {model.pca.output_dim}) transformed frames")
    if len(frames) == 0:
        raise ValueError("empty segment")

    counts = accumulate_stats(frames, model.counts_ubm).zero_order
    counts_vec = counts / counts.sum()
    zero_score = score_vector(counts_vec, state.adapted_speech_counts, state.adapted_nonspeech_counts)

    supervector = make_supervector(accumulate_stats(frames, model.supervector_ubm))
    embedding = extract_embedding(supervector, model.mlp)
    emb_score = score_vector(embedding, model.speech_embedding, model.nonspeech_embedding)

    fused = (zero_score + emb_score) / 2.0
    for value in (zero_score, emb_score, fused):
        if not (-2.0 <= value <= 2.0):
            raise RuntimeError(f"score {value} escaped [-2, 2]")

    threshold = state.adapted_threshold
    label = SPEECH if fused > threshold else NONSPEECH

    # times come straight off the integer frame grid so decision i's end is
    # bit-identical to decision i+1's start
    hop = model.feature_cfg.hop
    start_frame = index * SEGMENT_FRAMES
    decision = Decision(
        index=index,
        start=start_frame * hop,
        end=(start_frame + len(frames)) * hop,
        label=label,
        zero_score=zero_score,
        emb_score=emb_score,
        fused_score=fused,
        threshold=threshold,
    )

    if cfg.enabled:
        if label == SPEECH:
            state.speech_buffer.append(counts_vec)
            state.speech_scores.append(fused)
        else:
            state.nonspeech_buffer.append(counts_vec)
        adapt(state, model, cfg)
    return decision


class _ContextStage:
    """Streaming context stack + projection with bounded lookahead buffering.

    Emits output t only once frame t+lookahead exists, so mid-stream values
    match a whole-sequence computation; flush() finishes the tail with the
    same edge replication the batch path uses.
    """

    def __init__(self, transform: LinearTransform, spec: ContextSpec):
        self.transform = transform
        self.spec = spec
        self.offsets = np.asarray(spec.offsets)
        self.frames: deque = deque()
        self.base = 0
        self.count = 0
        self.next_out = 0

    def _emit(self, t: int, last: int) -> np.ndarray:
        idx = np.clip(t + self.offsets, 0, last)
        stacked = np.concatenate([self.frames[i - self.base] for i in idx])
        return apply_transform(stacked, self.transform)

    def _drain(self, final: bool) -> list:
        out = []
        last = self.count - 1
        while self.next_out <= last and (final or self.next_out + self.spec.lookahead <= last):
            out.append(self._emit(self.next_out, last))
            self.next_out += 1
            while self.base < self.next_out - self.spec.lookback:
                self.frames.popleft()
                self.base += 1
        return out

    def push(self, frame: np.ndarray) -> list:
        self.frames.append(frame)
        self.count += 1
        return self._drain(False)

    def flush(self) -> list:
        return self._drain(True)


class StreamingDetector:
    """Push samples in arbitrary chunks, collect Decisions as they complete.

    One instance per audio stream. Resetting between recordings is the
    caller's job (make a new instance); adaptation state deliberately
    persists across the whole stream.
    """

    def __init__(
        self,
        model: SadModel,
        adaptation: AdaptationConfig | None = None,
        smoothing: SmoothingConfig | None = None,
    ):
        self.model = model
        self.adaptation = adaptation or AdaptationConfig()
        self.smoothing = smoothing or SmoothingConfig()
        self.extractor = FeatureExtractor(model.feature_cfg, model.sample_rate)
        self.lda_stage = _ContextStage(model.lda, LDA_CONTEXT)
        self.pca_stage = _ContextStage(model.pca, PCA_CONTEXT)
        self.state = AdaptState(model, self.adaptation)
        self.decisions: list[Decision] = []
        self.pending: list[np.ndarray] = []
        self.tail_extra = 0.0
        self.finished = False

    def _consume(self, transformed: list) -> list[Decision]:
        new = []
        for vec in transformed:
            self.pending.append(vec)
            if len(self.pending) == SEGMENT_FRAMES:
                new.append(self._decide(self.pending))
                self.pending = []
        return new

    def _decide(self, frames: list) -> Decision:
        decision = process_segment(
            np.stack(frames),
            self.model,
            self.state,
            self.adaptation,
            index=len(self.decisions),
        )
        self.decisions.append(decision)
        return decision

    def _through_stages(self, feature_frames: list) -> list:
        transformed = []
        for frame in feature_frames:
            for reduced in self.lda_stage.push(frame):
                transformed.extend(self.pca_stage.push(reduced))
        return transformed

    def push(self, samples) -> list[Decision]:
        if self.finished:
            raise RuntimeError("push after flush")
        return self._consume(self._through_stages(self.extractor.push(samples)))

    def flush(self) -> list[Decision]:
        """Finish the stream and decide the trailing partial segment."""
        if self.finished:
            return []
        self.finished = True
        transformed = self._through_stages(self.extractor.flush())
        for reduced in self.lda_stage.flush():
            transformed.extend(self.pca_stage.push(reduced))
        transformed.extend(self.pca_stage.flush())
        new = self._consume(transformed)

        if self.extractor.n_statics == 0:
            raise ValueError("audio shorter than one analysis window")
        if len(self.pending) >= MIN_TAIL_FRAMES:
            new.append(self._decide(self.pending))
            self.pending = []
        elif self.pending:
            self.tail_extra = len(self.pending) * self.model.feature_cfg.hop
            self.pending = []
        return new

    def segments(self) -> list[SegmentLabel]:
        """Merged, smoothed segmentation; call after flush()."""
        if not self.finished:
            raise RuntimeError("segments() before flush()")
        merged = merge_decisions(self.decisions, self.tail_extra)
        return smooth_segments(merged, self.smoothing)


def merge_decisions(decisions: list[Decision], tail_extra: float = 0.0) -> list[SegmentLabel]:
    """Run-length merge consecutive same-label decisions into segments.

    tail_extra seconds of undecided audio extend the final segment; with no
    decisions at all the whole span is called non-speech.
    """
    segments: list[SegmentLabel] = []
    for d in decisions:
        if segments and segments[-1].label == d.label:
            segments[-1] = SegmentLabel(segments[-1].start, d.end, d.label)
        else:
            segments.append(SegmentLabel(d.start, d.end, d.label))
    if tail_extra > 0.0:
        if segments:
            last = segments[-1]
            segments[-1] = SegmentLabel(last.start, last.end + tail_extra, last.label)
        else:
            segments.append(SegmentLabel(0.0, tail_extra, NONSPEECH))
    return segments


def _merge_adjacent(segments: list[SegmentLabel]) -> list[SegmentLabel]:
    out: list[SegmentLabel] = []
    for seg in segments:
        if out and out[-1].label == seg.label:
            out[-1] = SegmentLabel(out[-1].start, seg.end, seg.label)
        else:
            out.append(seg)
    return out


def smooth_segments(segments: list[SegmentLabel], cfg: SmoothingConfig) -> list[SegmentLabel]:
    """Fill short interior non-speech gaps, then delete short speech runs."""
    if not cfg.enabled or not segments:
        return list(segments)
    filled = []
    for i, seg in enumerate(segments):
        interior = 0 < i < len(segments) - 1
        if (
            interior
            and seg.label == NONSPEECH
            and seg.duration < cfg.min_gap
            and segments[i - 1].label == SPEECH
            and segments[i + 1].label == SPEECH
        ):
            filled.append(SegmentLabel(seg.start, seg.end, SPEECH))
        else:
            filled.append(seg)
    filled = _merge_adjacent(filled)
    cleaned = [
        SegmentLabel(s.start, s.end, NONSPEECH)
        if s.label == SPEECH and s.duration < cfg.min_speech
        else s
        for s in filled
    ]
    return _merge_adjacent(cleaned)


@dataclass(frozen=True)
class DetectionResult:
    segments: list
    decisions: list


def stream_detect(
    audio: AudioStream,
    model: SadModel,
    adaptation: AdaptationConfig | None = None,
    smoothing: SmoothingConfig | None = None,
) -> DetectionResult:
    """Run the full detector over one recording."""
    if audio.sample_rate != model.sample_rate:
        raise ValueError(
            f"sample rate mismatch: model trained at {model.sample_rate} Hz, "
            f"audio is {audio.sample_rate} Hz"
        )
    detector = StreamingDetector(model, adaptation, smoothing)
    detector.push(audio.samples)
    detector.flush()
    return DetectionResult(segments=detector.segments(), decisions=detector.decisions)


TRACE_HEADER = "index,start,end,zero_score,emb_score,fused_score,theta_adapted,label"


def format_trace(decisions: list[Decision]) -> str:
    """Decision trace as CSV text, full float precision for oracle diffing."""
    lines = [TRACE_HEADER]
    for d in decisions:
        lines.append(
            f"{d.index},{d.start:.3f},{d.end:.3f},{d.zero_score:.17g},"
            f"{d.emb_score:.17g},{d.fused_score:.17g},{d.threshold:.17g},{d.label}"
        )
    return "\n".join(lines) + "\n"


def write_trace(decisions: list[Decision], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(decisions))


# ---------------------------------------------------------------------------
# model bundle serialization: a magic+version header, then fixed-order
# sections, each "4-byte tag, u64 payload length, payload". Arrays are raw
# little-endian float64, so a save/load round trip is bit-exact.

_MAGIC = b"SADB"
_VERSION = 1
_SECTION_ORDER = [b"META", b"FCFG", b"LDA ", b"PCA ", b"UBML", b"UBMC", b"UBMS", b"MLP ", b"CNTS", b"EMBS"]


def _pack_array(buf: io.BytesIO, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    buf.write(struct.pack("<B", array.ndim))
    for dim in array.shape:
        buf.write(struct.pack("<Q", dim))
    buf.write(array.tobytes())


def _unpack_array(buf: io.BytesIO) -> np.ndarray:
    (ndim,) = struct.unpack("<B", _take(buf, 1))
    shape = [struct.unpack("<Q", _take(buf, 8))[0] for _ in range(ndim)]
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_take(buf, count * 8), dtype="<f8")
    return data.reshape(shape).copy()


def _pack_json(buf: io.BytesIO, obj) -> None:
    payload = json.dumps(obj, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)


def _unpack_json(buf: io.BytesIO):
    (length,) = struct.unpack("<Q", _take(buf, 8))
    return json.loads(_take(buf, length).decode("utf-8"))


def _take(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise ValueError("model bundle truncated")
    return data


def _pack_gmm(buf: io.BytesIO, gmm: Gmm) -> None:
    _pack_array(buf, gmm.weights)
    _pack_array(buf, gmm.means)
    _pack_array(buf, gmm.variances)


def _unpack_gmm(buf: io.BytesIO) -> Gmm:
    return Gmm(weights=_unpack_array(buf), means=_unpack_array(buf), variances=_unpack_array(buf))


def _pack_transform(buf: io.BytesIO, t: LinearTransform) -> None:
    _pack_array(buf, t.matrix)
    _pack_array(buf, t.mean_offset)


def save_model(model: SadModel, path) -> None:
    """Serialize a SadModel to a single binary bundle file."""
    sections: dict[bytes, bytes] = {}

    def section(tag: bytes):
        buf = io.BytesIO()
        sections[tag] = buf
        return buf

    _pack_json(section(b"META"), {"sample_rate": model.sample_rate, "base_threshold": model.base_threshold})
    cfg = model.feature_cfg
    _pack_json(section(b"FCFG"), {f.name: getattr(cfg, f.name) for f in fields(cfg)})
    _pack_transform(section(b"LDA "), model.lda)
    _pack_transform(section(b"PCA "), model.pca)
    _pack_gmm(section(b"UBML"), model.labeling_ubm)
    _pack_gmm(section(b"UBMC"), model.counts_ubm)
    _pack_gmm(section(b"UBMS"), model.supervector_ubm)

    mlp_buf = section(b"MLP ")
    _pack_json(
        mlp_buf,
        {
            "activation": model.mlp.activation,
            "embedding_layer": model.mlp.embedding_layer,
            "epoch": model.mlp.epoch,
            "n_layers": len(model.mlp.weights),
        },
    )
    for w, b in zip(model.mlp.weights, model.mlp.biases):
        _pack_array(mlp_buf, w)
        _pack_array(mlp_buf, b)

    cnts = section(b"CNTS")
    _pack_array(cnts, model.speech_counts)
    _pack_array(cnts, model.nonspeech_counts)
    embs = section(b"EMBS")
    _pack_array(embs, model.speech_embedding)
    _pack_array(embs, model.nonspeech_embedding)

    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        for tag in _SECTION_ORDER:
            payload = sections[tag].getvalue()
            fh.write(tag)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_model(path) -> SadModel:
    """Read back a bundle written by save_model; validates as it builds."""
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = io.BytesIO(raw)
    if _take(buf, 4) != _MAGIC:
        raise ValueError(f"{path}: not a model bundle")
    (version,) = struct.unpack("<I", _take(buf, 4))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported bundle version {version}")

    payloads = {}
    for tag in _SECTION_ORDER:
        actual = _take(buf, 4)
        if actual != tag:
            raise ValueError(f"{path}: expected section {tag!r}, found {actual!r}")
        (length,) = struct.unpack("<Q", _take(buf, 8))
        payloads[tag] = io.BytesIO(_take(buf, length))
    if buf.read(1):
        raise ValueError(f"{path}: trailing bytes after final section")

    meta = _unpack_json(payloads[b"META"])
    cfg_fields = _unpack_json(payloads[b"FCFG"])
    feature_cfg = FeatureConfig(**cfg_fields)
    lda_buf, pca_buf = payloads[b"LDA "], payloads[b"PCA "]
    lda_matrix, lda_mean = _unpack_array(lda_buf), _unpack_array(lda_buf)
    pca_matrix, pca_mean = _unpack_array(pca_buf), _unpack_array(pca_buf)
    lda = LinearTransform(matrix=lda_matrix, mean_offset=lda_mean, kind="lda")
    pca = LinearTransform(matrix=pca_matrix, mean_offset=pca_mean, kind="pca")

    mlp_buf = payloads[b"MLP "]
    mlp_meta = _unpack_json(mlp_buf)
    weights, biases = [], []
    for _ in range(mlp_meta["n_layers"]):
        weights.append(_unpack_array(mlp_buf))
        biases.append(_unpack_array(mlp_buf))
    mlp = MlpModel(
        weights=weights,
        biases=biases,
        activation=mlp_meta["activation"],
        embedding_layer=mlp_meta["embedding_layer"],
        epoch=mlp_meta["epoch"],
    )

    cnts, embs = payloads[b"CNTS"], payloads[b"EMBS"]
    speech_counts, nonspeech_counts = _unpack_array(cnts), _unpack_array(cnts)
    speech_embedding, nonspeech_embedding = _unpack_array(embs), _unpack_array(embs)
    return SadModel(
        feature_cfg=feature_cfg,
        sample_rate=int(meta["sample_rate"]),
        lda=lda,
        pca=pca,
        labeling_ubm=_unpack_gmm(payloads[b"UBML"]),
        counts_ubm=_unpack_gmm(payloads[b"UBMC"]),
        supervector_ubm=_unpack_gmm(payloads[b"UBMS"]),
        mlp=mlp,
        speech_counts=speech_counts,
        nonspeech_counts=nonspeech_counts,
        speech_embedding=speech_embedding,
        nonspeech_embedding=nonspeech_embedding,
        base_threshold=float(meta["base_threshold"]),
    )
