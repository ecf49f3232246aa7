"""Writes tests/fixtures/bleu_cases.json.

Counting and smoothing are implemented from scratch here. Tokenization uses
sacrebleu's 13a and char tokenizers, and the unsmoothed scores are checked
against sacrebleu.corpus_bleu before anything is written.
"""
import json
import math
import random
from collections import Counter

import sacrebleu
from sacrebleu.tokenizers.tokenizer_13a import Tokenizer13a
from sacrebleu.tokenizers.tokenizer_char import TokenizerChar


def tokenize(text, tokenizer, lower):
    if lower:
        text = text.lower()
    if tokenizer == "13a":
        return Tokenizer13a()(text).split()
    return TokenizerChar()(text).split()


def ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu(hyps, refs, max_order=4, smoothing="add_one", tokenizer="13a", lower=False):
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        ht, rt = tokenize(h, tokenizer, lower), tokenize(r, tokenizer, lower)
        hyp_len += len(ht)
        ref_len += len(rt)
        for n in range(1, max_order + 1):
            hc, rc = ngrams(ht, n), ngrams(rt, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(0, len(ht) - n + 1)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        if m == 0:
            if smoothing == "none":
                return 0.0
            p = 1.0 / (t + 1)
        else:
            p = m / t
        log_p += math.log(p)
    bp = min(0.0, 1.0 - ref_len / hyp_len)
    return 100.0 * math.exp(bp + log_p / max_order)


WORDS = ["a", "b", "c", "d", "e", "el", "la", "casa", "Casa", "perro", "¿Está", "usted", "bien?",
         "hola,", "mundo.", "l'homme", "3.5", "x-y", "(ok)", "café", "día", "\"quote\""]


def random_sentence(rng):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(0, 12)))


def main():
    rng = random.Random(11)
    cases = [
        {"name": "hand_count", "hyps": ["a b c d"], "refs": ["a b c e"], "max_order": 4,
         "smoothing": "add_one", "tokenizer": "13a", "lower": False},
        {"name": "identity", "hyps": ["el perro, la casa.", "hola"], "refs": ["el perro, la casa.", "hola"],
         "max_order": 4, "smoothing": "add_one", "tokenizer": "13a", "lower": False},
        {"name": "all_empty", "hyps": ["", ""], "refs": ["a b", "c"], "max_order": 4,
         "smoothing": "add_one", "tokenizer": "13a", "lower": False},
        {"name": "japanese_chars", "hyps": ["彼は学生です。"], "refs": ["彼女は学生です。"], "max_order": 4,
         "smoothing": "add_one", "tokenizer": "char", "lower": False},
    ]
    for i in range(40):
        k = rng.randint(1, 5)
        refs = [random_sentence(rng) or "a" for _ in range(k)]
        hyps = []
        for r in refs:
            toks = r.split()
            roll = rng.random()
            if roll < 0.3:
                hyps.append(r)
            elif roll < 0.7:
                hyps.append(" ".join(t if rng.random() < 0.7 else rng.choice(WORDS) for t in toks))
            else:
                hyps.append(random_sentence(rng))
        cases.append({"name": f"random_{i}", "hyps": hyps, "refs": refs,
                      "max_order": rng.choice([1, 2, 3, 4]),
                      "smoothing": rng.choice(["none", "add_one"]),
                      "tokenizer": rng.choice(["13a", "13a", "char"]),
                      "lower": rng.random() < 0.3})
    for c in cases:
        c["expected"] = bleu(c["hyps"], c["refs"], c["max_order"], c["smoothing"], c["tokenizer"], c["lower"])
        if c["smoothing"] == "none" and c["max_order"] == 4:
            ref = sacrebleu.corpus_bleu(c["hyps"], [c["refs"]], smooth_method="none",
                                        tokenize=c["tokenizer"], lowercase=c["lower"]).score
            assert abs(ref - c["expected"]) < 1e-9, (c, ref)
    # Wider agreement sweep against sacrebleu; not written out.
    for _ in range(500):
        refs = [random_sentence(rng) or "a" for _ in range(rng.randint(1, 4))]
        hyps = [random_sentence(rng) for _ in refs]
        tok, low = rng.choice(["13a", "char"]), rng.random() < 0.5
        ref = sacrebleu.corpus_bleu(hyps, [refs], smooth_method="none", tokenize=tok, lowercase=low).score
        assert abs(ref - bleu(hyps, refs, 4, "none", tok, low)) < 1e-9
    assert abs(cases[0]["expected"] - 100 * (0.75 * (2 / 3) * 0.5 * 0.5) ** 0.25) < 1e-12
    with open("tests/fixtures/bleu_cases.json", "w", encoding="utf-8") as f:
        json.dump(cases, f, ensure_ascii=False, indent=1)
        f.write("\n")
    print(len(cases), "cases; hand_count =", cases[0]["expected"])


if __name__ == "__main__":
    main()
