#!/usr/bin/env python3
"""Two small synthetic corpora for the end-to-end desk run.

The "original" text strings long, comma- and semicolon-heavy sentences from
an ornate word list; the "comparison" text uses short declarative sentences
from a plain one. Both are about 2,000 GPT-2 tokens.

Usage: python3 scripts/gen_corpora.py
"""
import os
import random

ROOT = os.path.join(os.path.dirname(__file__), "..", "tests", "data")

ORNATE_NOUNS = ["scrivener", "chambers", "melancholy", "solitude", "partition", "countenance",
                "employer", "document", "window", "wall", "afternoon", "indifference",
                "composure", "establishment", "recollection", "circumstance"]
ORNATE_VERBS = ["contemplated", "persisted", "remained", "regarded", "considered", "declined",
                "observed", "lingered", "endured", "retreated"]
ORNATE_ADJ = ["pallid", "motionless", "singular", "mild", "cadaverous", "respectable",
              "unaccountable", "melancholy", "quiet", "forlorn"]
PLAIN_NOUNS = ["dog", "car", "man", "shop", "road", "cup", "job", "day", "team", "town", "bus", "game"]
PLAIN_VERBS = ["ran", "got", "saw", "made", "took", "had", "went", "sat", "met", "won"]
PLAIN_ADJ = ["big", "red", "new", "old", "fast", "hot", "good", "bad"]


def ornate_sentence(rng):
    clauses = []
    for _ in range(rng.randint(2, 4)):
        clauses.append(f"the {rng.choice(ORNATE_ADJ)} {rng.choice(ORNATE_NOUNS)} "
                       f"{rng.choice(ORNATE_VERBS)} in {rng.choice(['a', 'the'])} "
                       f"{rng.choice(ORNATE_ADJ)} {rng.choice(ORNATE_NOUNS)}")
    text = clauses[0]
    for c in clauses[1:]:
        text += rng.choice([", and ", "; ", ", while ", ", yet "]) + c
    return "I confess that " + text + "."


def plain_sentence(rng):
    return (f"The {rng.choice(PLAIN_ADJ)} {rng.choice(PLAIN_NOUNS)} {rng.choice(PLAIN_VERBS)} "
            f"a {rng.choice(PLAIN_NOUNS)}.").capitalize()


def paragraphs(rng, make, count, per):
    return "\n\n".join(" ".join(make(rng) for _ in range(per)) for _ in range(count)) + "\n"


def main():
    os.makedirs(ROOT, exist_ok=True)
    rng = random.Random(1853)
    with open(os.path.join(ROOT, "original.txt"), "w") as f:
        f.write(paragraphs(rng, ornate_sentence, 10, 5))
    with open(os.path.join(ROOT, "comparison.txt"), "w") as f:
        f.write(paragraphs(rng, plain_sentence, 20, 12))


if __name__ == "__main__":
    main()
