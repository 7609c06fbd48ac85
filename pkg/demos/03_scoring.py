#!/usr/bin/env python3
"""The detection cost function by hand, on a worked example.

One reference speech segment (2.0 to 5.0 s) in a 10 s file, and a hypothesis
that starts half a second late. Shows how the no-score collar around
reference boundaries turns into scored regions, where the numbers in the
report come from, and what changes when the collar is removed.
"""

from streamsad.audio_io import NONSPEECH, SPEECH, SegmentLabel
from streamsad.evaluation import EvalConfig, aggregate, apply_collar, format_table, score


def show(name, intervals):
    body = ", ".join(f"[{a:.2f}, {b:.2f})" for a, b in intervals) or "(none)"
    print(f"  {name:16s} {body}")


def main():
    ref = [SegmentLabel(2.0, 5.0, SPEECH)]
    hyp = [
        SegmentLabel(0.0, 2.5, NONSPEECH),
        SegmentLabel(2.5, 5.0, SPEECH),
        SegmentLabel(5.0, 10.0, NONSPEECH),
    ]
    duration = 10.0

    print("reference speech [2.00, 5.00) in a 10 s file")
    print("hypothesis speech [2.50, 5.00), so the first 0.5 s is missed\n")

    cfg = EvalConfig(collar=0.25)
    mask = apply_collar(ref, cfg.collar, duration)
    print("scored regions after a 0.25 s collar around each reference boundary:")
    show("speech", mask.speech)
    show("non-speech", mask.nonspeech)

    report = score(ref, hyp, cfg, duration)
    print(f"""
missed speech inside scored speech:   {report.missed:.2f} s of {report.scored_speech:.2f} s  -> P_miss = {report.p_fn:.3f}
false alarms inside scored non-speech: {report.false_alarm:.2f} s of {report.scored_nonspeech:.2f} s -> P_fa   = {report.p_fp:.3f}
DCF = 0.75 * {report.p_fn:.3f} + 0.25 * {report.p_fp:.3f} = {report.dcf:.4f}""")

    # with no collar the whole 0.5 s error is in play
    bare = score(ref, hyp, EvalConfig(collar=0.0), duration)
    print(f"\nsame pair with --collar 0: P_miss = 0.5/3.0 = {bare.p_fn:.4f}, "
          f"DCF = {bare.dcf:.4f}")

    # pooling: time-weighted over files, not an average of per-file rates
    short = score([SegmentLabel(1.0, 2.0, SPEECH)],
                  [SegmentLabel(1.0, 2.0, SPEECH)],
                  cfg, 4.0)
    pooled = aggregate({"worked": report, "clean": short})
    print("\npooled with a second, perfectly detected file:\n")
    print(format_table(pooled))


if __name__ == "__main__":
    main()
