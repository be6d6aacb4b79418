"""Freeze reference tokenizations and sentence BLEU values from sacrebleu.

    pip install sacrebleu && python3 generate.py
"""

import json
import random

from sacrebleu.metrics import BLEU
from sacrebleu.tokenizers.tokenizer_13a import Tokenizer13a

BASE = [
    "Hello, world",
    "a b  c",
    "don't",
    "It's 3.14, isn't it?",
    "The price rose 1,000 dollars.",
    "U.S. officials said Monday (local time) that talks failed.",
    "He said: \"no way!\"",
    "e-mail me at foo@bar.com; thanks",
    "50% of 2-3 people [sic] agreed {maybe}",
    "Mr. Smith's car -- a red one -- was parked.",
    "What?! Really...",
    "co-operate re-enter 10-20",
    "A man is playing a guitar.",
    "Naïve café owners' résumés",
    "path/to/file.txt & more",
    "Tabs\tand\nnewlines",
    "x+y=z <tag> ~tilde~ `tick` ^caret^ |pipe| _under_",
    "$5.00 or #hash",
    "end.",
    "1.5 2,5 .5 5.",
]

PIECES = ["the", "cat", "sat", "on", "mat", ",", ".", "!", "?", "'s", "don't", "3.5",
          "1,000", "(", ")", "-", "a-b", "U.S.", "\"", ":", ";", "e.g.", "100%",
          "word", "Word", "WORD", "x", "—", "naïve", "/", "&"]


def main():
    rng = random.Random(20231017)
    corpus = list(BASE)
    while len(corpus) < 100:
        n = rng.randint(1, 12)
        sep = lambda: rng.choice([" ", " ", " ", "", "  "])
        s = ""
        for _ in range(n):
            s += rng.choice(PIECES) + sep()
        if s.strip():
            corpus.append(s)
    tok = Tokenizer13a()
    tokens = [{"text": s, "tokens": tok(s).split()} for s in corpus]

    bleu = BLEU(smooth_method="none", effective_order=False, tokenize="13a")
    vocab = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran", ",", "."]
    pairs = []
    for i in range(60):
        ref = " ".join(rng.choice(vocab) for _ in range(rng.randint(3, 14)))
        if i % 3 != 2:
            words = ref.split()
            cut = rng.randint(0, len(words))
            hyp = " ".join(words[:cut] + [rng.choice(vocab) for _ in range(rng.randint(0, 5))])
        else:
            hyp = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 14)))
        if not hyp.strip():
            hyp = "cat"
        score = bleu.sentence_score(hyp, [ref]).score / 100.0
        pairs.append({"reference": ref, "candidate": hyp, "bleu": score})

    with open("sacrebleu_reference.json", "w") as f:
        json.dump({"tokenize": tokens, "sentence_bleu": pairs}, f, indent=1, ensure_ascii=False)


if __name__ == "__main__":
    main()
