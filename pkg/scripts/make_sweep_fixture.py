"""Generate the synthetic corpus + eval set used by the AND-count sweep.

One topic dominates the corpus. Every eval query owns six rare "specific" words;
its three relevant documents each carry four of them, so a broad OR query finds
them while the all-AND query (which needs all six at once) cannot.

    python scripts/make_sweep_fixture.py --out src/shrag/data
"""

import argparse
import json
import random
from pathlib import Path

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"
HANGUL_SYLLABLES = "가나다라마바사아자차카타파하고노도로모보소오조초코토포호구누두루무부수우주추쿠투푸후기니디리미비시이지치키티피히"


def latin_word(rng, syllables):
    return "".join(rng.choice(CONSONANTS) + rng.choice(VOWELS) for _ in range(syllables))


def hangul_word(rng, syllables):
    return "".join(rng.choice(HANGUL_SYLLABLES) for _ in range(syllables))


def vocab(rng, make, n, syllables, taken):
    out = []
    while len(out) < n:
        w = make(rng, syllables)
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def text(rng, pools, n):
    words = []
    for _ in range(n):
        pool, _weight = rng.choices(pools, weights=[w for _, w in pools])[0]
        words.append(rng.choice(pool))
    return " ".join(words)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="src/shrag/data")
    ap.add_argument("--seed", type=int, default=20251114)
    ap.add_argument("--background", type=int, default=400)
    ap.add_argument("--queries", type=int, default=20)
    args = ap.parse_args()
    rng = random.Random(args.seed)

    taken = set()
    langs = ("en", "ko")
    make = {"en": latin_word, "ko": hangul_word}
    filler = {lg: vocab(rng, make[lg], 150, 2, taken) for lg in langs}
    n_topics = 6
    topics = {lg: [vocab(rng, make[lg], 25, 3, taken) for _ in range(n_topics)] for lg in langs}
    topic_weights = [0.5] + [0.1] * (n_topics - 1)  # topic 0 dominates

    docs = []
    for i in range(args.background):
        lg = "en" if i % 3 else "ko"
        t = rng.choices(range(n_topics), weights=topic_weights)[0]
        pools = [(topics[lg][t], 0.6), (filler[lg], 0.4)]
        docs.append({
            "id": f"bg-{i:04d}",
            "title": text(rng, pools, 4),
            "abstract": "" if i % 50 == 49 else text(rng, pools, 20),
            "body": text(rng, pools, 30),
            "lang": lg,
        })

    evals = []
    for q in range(args.queries):
        lg = "en" if q % 2 == 0 else "ko"
        t = 0 if q % 5 < 3 else rng.randrange(1, n_topics)
        specific = vocab(rng, make[lg], 6, 4, taken)
        pools = [(topics[lg][t], 0.6), (filler[lg], 0.4)]
        rel_ids = []
        for r in range(3):
            chosen = rng.sample(specific, 4)
            abstract = text(rng, pools, 16).split() + chosen
            rng.shuffle(abstract)
            doc_id = f"q{q:02d}-rel{r}"
            rel_ids.append(doc_id)
            docs.append({
                "id": doc_id,
                "title": " ".join(chosen[:2] + text(rng, pools, 2).split()),
                "abstract": " ".join(abstract),
                "body": text(rng, pools, 30),
                "lang": lg,
            })
        words = specific + rng.sample(topics[lg][t], 4) + rng.sample(filler[lg], 3)
        rng.shuffle(words)
        evals.append({"query_id": f"q{q:02d}", "text": " ".join(words), "lang": lg, "relevant_ids": rel_ids})

    rng.shuffle(docs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep_corpus.jsonl", "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")
    with open(out / "sweep_eval.jsonl", "w", encoding="utf-8") as fh:
        for e in evals:
            fh.write(json.dumps(e, ensure_ascii=False) + "\n")
    print(f"{len(docs)} documents, {len(evals)} queries -> {out}")


if __name__ == "__main__":
    main()
