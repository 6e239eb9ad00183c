#!/usr/bin/env python3
"""Tokenize a fixed string corpus with OpenAI's tiktoken (loaded from the
repo's GPT-2 vocab/merges files) and freeze the ids as a test fixture.

Usage: python3 scripts/gen_tokenizer_fixture.py > tests/fixtures/tokenizer_fixture.json
"""
import json
import os
import sys

import tiktoken
import tiktoken.load

ROOT = os.path.join(os.path.dirname(__file__), "..")

# The published GPT-2 split pattern.
GPT2_PATTERN = r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""

STRINGS = [
    "",
    "Hello world",
    "I would prefer not to.",
    "I am a rather elderly man. The nature of my avocations for the last thirty years has",
    "It was a quiet Sunday afternoon. Ginger Nut, the copyist, sat",
    "Bartleby was an immovably calm scrivener. Day after day, he would",
    "I sat awhile in perfect silence, rallying my stunned faculties.",
    "It was now noon, and Bartleby had considerably increased his output, though still refusing to examine his work.",
    "Turkey, a short pursy Englishman of about sixty, displayed a peculiar habit.",
    "don't won't can't shouldn't I'm you're we've they'll she'd it's",
    "DON'T WON'T I'M YOU'RE",
    "'s 't 're 've 'm 'll 'd",
    "''s !'s x's",
    "   leading spaces",
    "trailing spaces   ",
    "multiple   internal    spaces",
    "tabs\tand\ttabs",
    "new\nlines\n\nand\n\n\nmore",
    "\n\n  indented after blank",
    " \n \n ",
    "numbers 12345 and 3.14159 and 1,000,000",
    "mixed123abc456",
    "email@example.com http://example.org/path?q=1&r=2",
    "Punctuation!!! Really??? Yes... (maybe) [or] {not}",
    "semicolons; colons: dashes -- em—dashes",
    "quotes \"double\" and 'single' and “curly” ‘ones’",
    "café naïve résumé coöperate",
    "Straße über Größe",
    "Привет, мир!",
    "你好，世界",
    "こんにちは世界",
    "مرحبا بالعالم",
    "emoji \U0001F600\U0001F389 party \U0001F44D\U0001F3FD",
    "½ ¾ Ⅷ ① superscript²",
    "<|endoftext|> is plain text here",
    "a",
    " ",
    "  ",
    "\t",
    "x" * 40,
    "The quick brown fox jumps over the lazy dog.",
    "THE QUICK BROWN FOX",
    "camelCaseIdentifier snake_case_identifier kebab-case-identifier",
    "def f(x):\n    return x * 2\n",
    "for (int i = 0; i < n; ++i) { sum += a[i]; }",
    "Mr. Smith went to Washington, D.C., on Jan. 5th, 1853.",
    "He said, “I would prefer not to,” and returned to his desk.",
    "100% of $20.50 is €19.99?",
    "a b non-breaking space",
    "zero​width joiner",
    "combining é accent",
    "Ellipsis… and bullet • points",
    "   \n   ",
    "end with newline\n",
    "Scrivener; copyist; law-copyist; clerk.",
    "It's 5 o'clock somewhere, isn't it?",
    "1st 2nd 3rd 4th",
    "Hello\r\nWindows\r\nline endings",
]


def main():
    ranks = tiktoken.load.data_gym_to_mergeable_bpe_ranks(
        os.path.join(ROOT, "assets/gpt2/merges.txt"),
        os.path.join(ROOT, "assets/gpt2/vocab.json"),
    )
    enc = tiktoken.Encoding(
        "gpt2-local",
        pat_str=GPT2_PATTERN,
        mergeable_ranks=ranks,
        special_tokens={"<|endoftext|>": 50256},
    )
    cases = []
    for s in STRINGS:
        ids = enc.encode_ordinary(s)
        assert enc.decode(ids) == s
        cases.append({"text": s, "ids": ids})
    json.dump({"reference": "tiktoken " + tiktoken.__version__, "cases": cases},
              sys.stdout, ensure_ascii=True, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
