#!/usr/bin/env python3
"""Generate the bundled sentence-polarity corpus.

Writes data/polarity.pos and data/polarity.neg: seeded, synthetic,
movie-review-flavored sentences, one per line. The mix is tuned so a simple
character-level classifier lands well above chance but below ceiling: most
sentences carry clear sentiment, a share carry only mild sentiment, and a
small share mix both polarities.

Usage: gen_corpus.py [--per-class N] [--seed S] [--outdir DIR]
"""

import argparse
import random

POS_STRONG = [
    "wonderful", "brilliant", "delightful", "superb", "charming", "moving",
    "excellent", "captivating", "masterful", "stunning", "graceful", "riveting",
    "inspired", "tender", "hilarious", "gorgeous",
]
NEG_STRONG = [
    "awful", "dreadful", "tedious", "boring", "clumsy", "lifeless",
    "terrible", "shallow", "grating", "dismal", "painful", "hollow",
    "incoherent", "stilted", "witless", "dreary",
]
POS_MILD = ["enjoyable", "solid", "warm", "witty", "pleasant", "engaging", "neat", "likable"]
NEG_MILD = ["uneven", "slow", "thin", "stale", "flat", "tired", "muddled", "bland"]
# Sentiment-free descriptors drawn by both classes; sentences built purely
# from these carry no learnable label signal and keep the task off ceiling.
AMBIG = [
    "familiar", "ordinary", "modest", "quiet", "straightforward", "conventional",
    "restrained", "workmanlike", "low key", "unhurried", "talky", "episodic",
]

NOUNS = [
    "film", "movie", "story", "plot", "script", "acting", "cast", "direction",
    "pacing", "dialogue", "ending", "humor", "premise", "romance", "drama",
    "performance", "screenplay", "camerawork", "soundtrack", "finale",
]
OPENERS = [
    "the", "this", "that", "its", "the whole", "every bit of the", "most of the",
]
CONNECT = ["and", "yet", "while", "but"]
VERBS = ["is", "feels", "seems", "remains", "turns out", "proves"]
ADVERBS = ["truly", "simply", "quietly", "thoroughly", "often", "mostly", "utterly"]
TAILS = [
    "from start to finish", "in every scene", "all the way through", "at every turn",
    "despite the budget", "for the most part", "beyond expectation", "on every level",
]


def zipf_choice(rng, words):
    weights = [1.0 / (rank + 1) for rank in range(len(words))]
    return rng.choices(words, weights=weights, k=1)[0]


def clause(rng, words):
    noun = rng.choice(NOUNS)
    sent = zipf_choice(rng, words)
    form = rng.randrange(4)
    if form == 0:
        return f"{rng.choice(OPENERS)} {noun} {rng.choice(VERBS)} {sent}"
    if form == 1:
        return f"{rng.choice(OPENERS)} {noun} {rng.choice(VERBS)} {rng.choice(ADVERBS)} {sent}"
    if form == 2:
        return f"a {sent} {noun}"
    return f"{sent} {noun}"


def sentence(rng, primary, opposite, flavor):
    parts = [clause(rng, primary)]
    if flavor == "clear":
        if rng.random() < 0.4:
            parts.append(clause(rng, AMBIG))
    elif flavor == "mixed":
        parts.append(clause(rng, opposite))
        parts.append(clause(rng, primary))
    # "weak" and "ambig" keep the single clause
    text = f" {rng.choice(CONNECT)} ".join(parts)
    if rng.random() < 0.4:
        text = f"{text} {rng.choice(TAILS)}"
    if rng.random() < 0.3:
        text += " ."
    return text


def generate(rng, per_class):
    pos, neg = [], []
    for target, primary_strong, primary_mild, opposite in (
        (pos, POS_STRONG, POS_MILD, NEG_STRONG),
        (neg, NEG_STRONG, NEG_MILD, POS_STRONG),
    ):
        for _ in range(per_class):
            roll = rng.random()
            if roll < 0.45:
                flavor, words = "clear", primary_strong
            elif roll < 0.60:
                flavor, words = "weak", primary_mild
            elif roll < 0.70:
                flavor, words = "mixed", primary_strong
            else:
                flavor, words = "ambig", AMBIG
            target.append(sentence(rng, words, opposite, flavor))
    return pos, neg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--per-class", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240901)
    ap.add_argument("--outdir", default="data")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    pos, neg = generate(rng, args.per_class)

    import os
    os.makedirs(args.outdir, exist_ok=True)
    with open(os.path.join(args.outdir, "polarity.pos"), "w") as f:
        f.write("\n".join(pos) + "\n")
    with open(os.path.join(args.outdir, "polarity.neg"), "w") as f:
        f.write("\n".join(neg) + "\n")
    print(f"wrote {len(pos)} positive and {len(neg)} negative sentences to {args.outdir}/")


if __name__ == "__main__":
    main()
