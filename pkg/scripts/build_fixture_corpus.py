"""Build tests/fixtures/raw_corpus.jsonl and its expectations.

Every record is assembled from sentences of known length, so the expected
outcome (skip reason, sentence count, prompt) follows from the construction
and never from running the preprocessor.
"""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

WORDS = (
    "river council storm harbor village market bridge winter school doctor "
    "station engine garden mayor coast forest signal tunnel museum airport"
).split()


def sentence(idx: int, n_words: int) -> str:
    ws = [WORDS[(idx * 7 + j) % len(WORDS)] for j in range(n_words)]
    ws[0] = ws[0].capitalize()
    return " ".join(ws) + "."


def body(lengths):
    sents = [sentence(i, k) for i, k in enumerate(lengths)]
    return sents, " ".join(sents)


def main():
    cases = []

    def add(rid, lengths, prefix="", highlights="Officials respond.\nResidents recover.\nThe town rebuilds.",
            reason=None, n_outline=3):
        sents, text = body(lengths)
        exp = {"id": rid, "reason": reason}
        if reason is None:
            exp["n_text"] = min(len(sents), 40)
            exp["prompt"] = sents[0]
            exp["n_words"] = sum(lengths)
            exp["n_outline"] = n_outline
            exp["last_sentence"] = sents[min(len(sents), 40) - 1]
        cases.append(({"id": rid, "article": prefix + text, "highlights": highlights}, exp))

    # word-count boundary: 64 retained, 63 skipped
    add("r01-64w", [8] * 8)
    add("r02-63w", [8] * 7 + [7], reason="too-short")
    add("r03-64w-uneven", [10, 6, 12, 4, 9, 9, 14])
    add("r04-63w-uneven", [10, 6, 12, 4, 9, 9, 13], reason="too-short")
    add("r05-1w", [1], reason="too-short")
    # boilerplate words never count toward the threshold
    add("r06-cnn-64w", [8] * 8, prefix="(CNN) -- ")
    add("r07-cnn-63w", [9] * 7, prefix="(CNN) -- ", reason="too-short")
    add("r08-dateline-64w", [16] * 4, prefix="WASHINGTON (CNN) -- ")
    add("r09-byline-63w", [21] * 3, prefix="By . Daily Mail Reporter . ", reason="too-short")
    add("r10-byline-64w", [16] * 4,
        prefix="By . Daily Mail Reporter . PUBLISHED: . 12:45 EST, 3 March 2013 . | . UPDATED: . 13:02 EST, 3 March 2013 . ")
    # truncation to 40 sentences
    add("r11-55s", [5] * 55)
    add("r12-40s", [4] * 40)
    add("r13-41s", [4] * 41)
    add("r14-100s", [3] * 100)
    add("r15-39s", [2] * 39)
    add("r16-cnn-55s", [6] * 55, prefix="(CNN) -- ")
    # empty after boilerplate removal
    add("r17-only-cnn", [], prefix="(CNN) -- ", reason="empty-after-strip")
    add("r18-only-byline", [], prefix="By . Sam Webb . ", reason="empty-after-strip")
    add("r19-whitespace", [], prefix="   \n  ", reason="empty-after-strip")
    # highlights
    add("r20-no-highlights", [8] * 8, highlights="", reason="empty-highlights")
    add("r21-blank-highlights", [8] * 8, highlights=" \n \n", reason="empty-highlights")
    add("r22-one-highlight", [8] * 8, highlights="Only one point", n_outline=1)
    add("r23-four-highlights", [8] * 8,
        highlights="First point .\nSecond point .\nThird point .\nFourth point .", n_outline=4)
    add("r24-two-in-one-line", [8] * 8, highlights="Point one. Point two.", n_outline=2)
    # short texts that pass easily
    add("r25-long-sentences", [32, 32])
    add("r26-65w", [13] * 5)
    add("r27-200w", [20] * 10)
    add("r28-cnn-40s", [2] * 40, prefix="(CNN)")
    add("r29-too-short-no-highlights", [5] * 3, highlights="", reason="too-short")
    add("r30-64w-one-sentence", [64])

    assert len(cases) == 30
    with open(OUT / "raw_corpus.jsonl", "w", encoding="utf-8") as fh:
        for rec, _ in cases:
            fh.write(json.dumps(rec) + "\n")
    (OUT / "raw_corpus_expected.json").write_text(
        json.dumps([exp for _, exp in cases], indent=1) + "\n", encoding="utf-8"
    )


if __name__ == "__main__":
    main()
