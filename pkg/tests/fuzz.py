"""Deterministic fuzz corpus for the answer parser."""

import random

WORDS = [
    "Data", "Row", "data", "rows", "are", "is", "abnormal", "normal", "All", "and",
    "no", "No", "None", "none", "NO", "Answer", "answer:", ":->", "->", ":", ",", ".",
    "..", "-3", "+4", "0", "00", "007", "3.5", "1e3", "12,", "5.", "½", "²", "٣", "７",
    "149", "150", "151", "200", "\n", "\t", "  ",
]
CHARS = "0123456789 ,.:->NnoeDatRw\n\t½²٣abc"


def random_text(rng: random.Random) -> str:
    n = rng.randint(0, 40)
    return "".join(rng.choice(CHARS) for _ in range(n))


def word_salad(rng: random.Random) -> str:
    parts = [rng.choice(WORDS + [str(rng.randint(0, 400))]) for _ in range(rng.randint(0, 15))]
    sep = rng.choice([" ", "", ", ", " ", ":"])
    return sep.join(parts)


def canonical(rng: random.Random) -> str:
    if rng.random() < 0.15:
        return rng.choice(["All data are normal.", "All rows are normal."])
    k = rng.randint(1, 8)
    idx = sorted(rng.sample(range(1, 200), k))
    noun = rng.choice(["Data", "Row"])
    return f"{noun} {', '.join(map(str, idx))} are abnormal."


def mutate(rng: random.Random, text: str) -> str:
    chars = list(text)
    for _ in range(rng.randint(1, 4)):
        op = rng.random()
        pos = rng.randint(0, len(chars))
        if op < 0.4 and chars:
            del chars[min(pos, len(chars) - 1)]
        elif op < 0.8:
            chars.insert(pos, rng.choice(CHARS))
        else:
            chars.insert(pos, rng.choice([" no ", " None", ":-> ", "...", ", and "]))
    return "".join(chars)


def arrow_answer(rng: random.Random) -> str:
    prefix = rng.choice(["Answer:-> ", "Reasoning: 1 2 3 :-> ", ":->", "x:->y:-> ", "Output :->"])
    return prefix + rng.choice([canonical(rng), word_salad(rng), " ".join(str(rng.randint(0, 300)) for _ in range(4))])


def corpus(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    makers = [random_text, word_salad, lambda r: canonical(r), lambda r: mutate(r, canonical(r)), arrow_answer]
    return [makers[i % len(makers)](rng) for i in range(n)]
