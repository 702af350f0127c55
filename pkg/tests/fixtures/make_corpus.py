"""Regenerate the committed fixture corpus under tests/fixtures/corpus/.

Embeddings come from the deterministic offline provider (dim=8, seed=13),
so query-time embeddings computed with the same provider land in the same
space. Run from the repository root:

    python3 tests/fixtures/make_corpus.py
"""

import json
from pathlib import Path

from ragmux.embeddings import HashEmbedder

DIM = 8
SEED = 13

PASSAGES = [
    {"id": "p1", "title": "Hello Tomorrow (album)",
     "text": "Hello Tomorrow is a studio album recorded by the saxophonist Dave Koz."},
    {"id": "p2", "title": "Dave Koz",
     "text": "Dave Koz is an American smooth jazz saxophonist from California."},
    {"id": "p3", "title": "Smooth jazz radio",
     "text": "Smooth jazz stations feature artists such as George Benson, Kenny G and Dave Koz."},
    {"id": "p4", "title": "Superstore (TV series)",
     "text": "Superstore is an American sitcom created by Justin Spitzer that premiered on NBC in 2015."},
    {"id": "p5", "title": "Johnny Pemberton",
     "text": "Johnny Pemberton is an actor who plays Bo Thompson in the sitcom Superstore."},
]

ENTITIES = [
    "dave koz", "hello tomorrow", "george benson", "kenny g",
    "superstore", "justin spitzer", "johnny pemberton", "kenneth gorelick",
]

RELATIONS = [
    ("dave koz", "recorded", "hello tomorrow"),
    ("justin spitzer", "created", "superstore"),
    ("johnny pemberton", "appears in", "superstore"),
]

MENTIONS = [
    ("dave koz", "p1"), ("hello tomorrow", "p1"),
    ("dave koz", "p2"),
    ("dave koz", "p3"), ("george benson", "p3"), ("kenny g", "p3"),
    ("superstore", "p4"), ("justin spitzer", "p4"),
    ("johnny pemberton", "p5"), ("superstore", "p5"),
]

SYNONYMS = [
    ("kenny g", "kenneth gorelick", 0.85),
]

FACTS = [
    ["dave koz", "recorded", "hello tomorrow"],
    ["justin spitzer", "created", "superstore"],
]


def main() -> None:
    out = Path(__file__).parent / "corpus"
    out.mkdir(parents=True, exist_ok=True)
    embedder = HashEmbedder(dim=DIM, seed=SEED)

    with open(out / "passages.jsonl", "w", encoding="utf-8") as fh:
        for passage in PASSAGES:
            fh.write(json.dumps(passage, ensure_ascii=False) + "\n")

    with open(out / "embeddings.jsonl", "w", encoding="utf-8") as fh:
        for passage in PASSAGES:
            vec = embedder.embed([passage["text"]])[0]
            fh.write(json.dumps({"owner_id": passage["id"], "kind": "passage",
                                 "vector": vec.tolist()}) + "\n")
        for entity in ENTITIES:
            vec = embedder.embed([entity])[0]
            fh.write(json.dumps({"owner_id": entity, "kind": "entity",
                                 "vector": vec.tolist()}) + "\n")
        for fact in FACTS:
            key = json.dumps(fact)
            vec = embedder.embed([" ".join(fact)])[0]
            fh.write(json.dumps({"owner_id": key, "kind": "fact",
                                 "vector": vec.tolist()}) + "\n")

    with open(out / "graph.jsonl", "w", encoding="utf-8") as fh:
        for s, r, o in RELATIONS:
            fh.write(json.dumps({"type": "relation", "s": s, "r": r, "o": o}) + "\n")
        for e, p in MENTIONS:
            fh.write(json.dumps({"type": "mention", "e": e, "p": p}) + "\n")
        for a, b, w in SYNONYMS:
            fh.write(json.dumps({"type": "synonym", "a": a, "b": b, "w": w}) + "\n")
    print(f"wrote corpus fixture to {out}")


if __name__ == "__main__":
    main()
