#!/usr/bin/env python3
"""Generates the bundled sentiment fixture: a 100-sample dataset, recorded
predictions for three workers and one judge, and the run config that ties
them together. Deterministic: fixed seed, fixed iteration order.

Shape: 80 samples where all three workers agree (no escalation) and 20 where
they emit three distinct labels (escalation). The judge always answers."""

import json
import random
from pathlib import Path

LABELS = ["negative", "neutral", "positive"]
WORKERS = ["w-tiny", "w-small", "w-base"]
JUDGE = "judge-large"

SNIPPETS = [
    "the battery life is {}",
    "shipping took ages and the box {}",
    "honestly the interface feels {}",
    "support answered fast, resolution {}",
    "for the price this is {}",
    "the manual reads like it was {}",
    "after a month of daily use it {}",
    "my team switched last quarter and {}",
]
FILLERS = [
    "fine", "terrible", "great", "acceptable", "confusing", "stellar",
    "underwhelming", "exactly as advertised", "not what I expected",
]


def main() -> None:
    rng = random.Random(20260818)
    root = Path(__file__).resolve().parent.parent / "data" / "fixture_sentiment"
    root.mkdir(parents=True, exist_ok=True)

    n = 100
    escalate_ids = set(rng.sample(range(n), 20))
    null_gold_ids = {7, 41, 88}  # agreeing samples with no ground truth

    dataset_lines = []
    fixture_lines = []
    for i in range(n):
        sid = f"s{i:04d}"
        text = f"[{sid}] " + rng.choice(SNIPPETS).format(rng.choice(FILLERS))
        gold = None if i in null_gold_ids else rng.choice(LABELS)
        dataset_lines.append({"id": sid, "text": text, "gold": gold})

        if i in escalate_ids:
            worker_labels = LABELS[:]
            rng.shuffle(worker_labels)  # three distinct labels -> no majority
        else:
            agreed = gold if gold is not None else rng.choice(LABELS)
            if rng.random() < 0.1:  # occasionally agree on a wrong label
                agreed = rng.choice([l for l in LABELS if l != agreed])
            worker_labels = [agreed] * 3

        for worker, label in zip(WORKERS, worker_labels):
            fixture_lines.append({
                "id": sid,
                "worker": worker,
                "label": label,
                "confidence": round(rng.uniform(0.55, 0.99), 4),
                "latency_ms": round(rng.uniform(6.0, 18.0), 3),
                "raw": f"label: {label}",
            })

        judge_label = gold if gold is not None else rng.choice(LABELS)
        if rng.random() < 0.05:
            judge_label = rng.choice([l for l in LABELS if l != judge_label])
        fixture_lines.append({
            "id": sid,
            "worker": JUDGE,
            "label": judge_label,
            "confidence": round(rng.uniform(0.85, 0.999), 4),
            "latency_ms": round(rng.uniform(70.0, 140.0), 3),
            "raw": f"the label is {judge_label}",
        })

    (root / "dataset.jsonl").write_text(
        "".join(json.dumps(line, sort_keys=True) + "\n" for line in dataset_lines))
    (root / "fixture.jsonl").write_text(
        "".join(json.dumps(line, sort_keys=True) + "\n" for line in fixture_lines))

    config = {
        "label_space": LABELS,
        "workers": [
            {"name": name, "kind": "fixture", "path": "fixture.jsonl"}
            for name in WORKERS
        ],
        "judges": [{"name": JUDGE, "kind": "fixture", "path": "fixture.jsonl"}],
        "policy": {"kind": "simple_majority"},
        "dataset": "dataset.jsonl",
        "seed": 7,
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {root}")


if __name__ == "__main__":
    main()
