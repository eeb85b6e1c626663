"""Independent reference for the hashed bag-of-words embedder and cosine
ranking. Writes tests/fixtures/embedding_oracle.json."""
import json
import math
import re
import struct
from pathlib import Path

DIM = 512


def fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


def embed(text: str) -> list[float]:
    v = [0.0] * DIM
    for tok in re.split(r"[^0-9A-Za-z]+", text):
        if tok:
            v[fnv1a(tok.lower().encode()) % DIM] += 1.0
    n = math.sqrt(sum(x * x for x in v))
    return [f32(x / n) for x in v]


def cosine(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


DOCS = {
    "amide": "This reaction involves amide bond formation (amide coupling) of a carboxylic acid and an amine to form an amide.",
    "suzuki": "This reaction involves C-C bond formation (Suzuki-Miyaura coupling) of an aryl bromide and an arylboronic acid to form a biaryl.",
    "ester": "This reaction involves ester hydrolysis (saponification) of a methyl ester to form a carboxylic acid.",
    "boc": "This reaction involves Boc deprotection of a Boc-protected amine to form a free amine.",
}
QUERIES = [
    "The corresponding reaction involves amide coupling of a carboxylic acid and an amine.",
    "Suzuki coupling of an aryl bromide with a boronic acid to form a biaryl",
    "hydrolysis of a methyl ester",
]
TOKENS = ["amide", "suzuki", "a", "biaryl", "c", "1"]

out = {
    "dim": DIM,
    "fnv1a": {t: str(fnv1a(t.encode())) for t in TOKENS},
    "docs": DOCS,
    "queries": [],
}
vecs = {k: embed(v) for k, v in DOCS.items()}
for q in QUERIES:
    qv = embed(q)
    sims = {k: cosine(qv, v) for k, v in vecs.items()}
    ranking = sorted(sims, key=lambda k: (-sims[k], k))
    out["queries"].append({"text": q, "similarity": sims, "ranking": ranking})

path = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "embedding_oracle.json"
path.write_text(json.dumps(out, indent=2) + "\n")
print(path)
