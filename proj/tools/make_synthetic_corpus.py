#!/usr/bin/env python3
"""Write a loop-prone synthetic corpus as JSON lines (id, text).

Documents are short template sentences; each sentence is repeated
immediately with probability --repeat, which makes n-gram models trained on
the output prone to degenerate loops under greedy decoding.
"""

import argparse
import json
import random

SUBJECTS = ["the cat", "the dog", "a bird", "the old man", "my friend", "the farmer",
            "a child", "the teacher"]
VERBS = ["sat on", "looked at", "walked to", "ran past", "talked about", "thought about",
         "came back to", "waited by"]
OBJECTS = ["the mat", "the house", "the river", "the big tree", "the small door", "the red car",
           "the garden", "the market"]


def make_docs(count, seed, repeat, prefix):
    rng = random.Random(seed)
    docs = []
    for i in range(count):
        sentences = []
        for _ in range(rng.randint(6, 12)):
            s = f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)} ."
            sentences.append(s)
            if rng.random() < repeat:
                sentences.append(s)
        docs.append({"id": f"{prefix}-{i:03d}", "text": " ".join(sentences)})
    return docs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=120)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--repeat", type=float, default=0.5)
    ap.add_argument("--id-prefix", default="syn")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    with open(args.out, "w", encoding="utf-8") as f:
        for d in make_docs(args.count, args.seed, args.repeat, args.id_prefix):
            f.write(json.dumps(d) + "\n")


if __name__ == "__main__":
    main()
