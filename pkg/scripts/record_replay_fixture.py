"""Capture the pipeline replay fixtures and golden reports.

Runs preprocess -> generate (both modes, recorded against a deterministic
stand-in model) -> eval through the CLI, then copies the replay file and the
resulting report CSVs into tests/fixtures/pipeline/. Run once; tests replay.

    python scripts/record_replay_fixture.py
"""
import json
import re
import shutil
import tempfile
from pathlib import Path

from outline_usage import cli

FIX = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "pipeline"

FILLER = [
    "Officials said more details would follow later.",
    "Several people gathered nearby to watch.",
    "A spokesperson declined to give further comment.",
    "Observers expect an update within days.",
]
STOP = {"the", "a", "an", "and", "of", "to", "in", "on", "by", "for", "was", "were", "is", "it", "with", "that", "as", "at"}


def _content_words(text):
    return [w for w in re.findall(r"[a-z]+", text.lower()) if w not in STOP]


def fake_model(payload: dict) -> dict:
    content = payload["messages"][-1]["content"]
    if content.startswith("You are planning"):
        prompt = re.search(r"Opening sentence: (.*)", content).group(1)
        ws = _content_words(prompt) or ["story"]
        m = int(re.search(r"exactly (\d+)", content).group(1))
        lines = [f"{i + 1}. The {ws[(2 * i) % len(ws)]} and the {ws[(2 * i + 1) % len(ws)]} shape part {i + 1}."
                 for i in range(m)]
        reply = "Here is the outline:\n" + "\n".join(lines)
    elif content.startswith("Write a complete"):
        bullets = re.findall(r"^\d+\. (.*)$", content, flags=re.M)
        # realizes every bullet up front, then drifts
        reply = " ".join(bullets + FILLER * 3)
    else:
        bullet = content.rstrip().splitlines()[-1]
        reply = " ".join([bullet] + FILLER)
    return {"choices": [{"message": {"role": "assistant", "content": reply}}]}


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        replay = tmp / "replay.jsonl"
        docs = tmp / "docs.jsonl"
        assert cli.main(["preprocess", "--in", str(FIX / "raw.jsonl"), "--out", str(docs)]) == 0
        original = cli.HttpTransport
        pipeline_calls = []

        class Fake:
            def __init__(self, *a, **k):
                pass

            def __call__(self, payload):
                pipeline_calls.append(payload)
                return fake_model(payload)

        cli.HttpTransport = Fake
        try:
            for mode in ("all-in", "separate"):
                out = tmp / f"gen-{mode}.jsonl"
                rc = cli.main(["generate", "--in", str(docs), "--out", str(out), "--mode", mode,
                               "--model", "fixture-model", "--temperature", "0", "--record", str(replay)])
                assert rc == 0
        finally:
            cli.HttpTransport = original
        shutil.copy(replay, FIX / "replay.jsonl")
        for mode in ("all-in", "separate"):
            out = tmp / f"gen-{mode}.jsonl"
            rc = cli.main(["eval", "--in", str(out), "--out", str(tmp / f"report-{mode}.json"),
                           "--csv", str(FIX / f"golden-{mode}.csv"), "--label", mode])
            assert rc == 0
        print(f"recorded {len(pipeline_calls)} requests")
        print(json.dumps({m: (FIX / f"golden-{m}.csv").read_text() for m in ("all-in", "separate")}, indent=1))


if __name__ == "__main__":
    main()
