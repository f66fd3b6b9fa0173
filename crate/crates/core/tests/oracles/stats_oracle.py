"""Candidate statistics for data/mini.jsonl and data/overfit.jsonl, via a
regex over space-joined tags and NLTK's Porter stemmer. Frozen in
tests/corpus_candgen.rs."""

import json
import re
import sys
from pathlib import Path

from nltk.stem.porter import PorterStemmer

ps = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS)
PATTERN = re.compile(r"((JJ|JJR|JJS|VBG|VBN) )*((NN|NNS|NNP|NNPS|VBG) )*(NN|NNS|NNP|NNPS|VBG)")
DATA = Path(__file__).resolve().parents[4] / "data"


def key(ws):
    return " ".join(ps.stem(w.lower()) for w in ws)


def stats(path, max_len=6):
    docs = [json.loads(l) for l in open(path) if l.strip()]
    pos = neg = gold_total = pos_spans = neg_spans = 0
    for d in docs:
        toks = [t.lower() for t in d["tokens"]][:512]
        tags = d["pos"][:512]
        gold = {key(g) for g in d["keyphrases"]}
        cands = set()
        for b in range(len(toks)):
            for e in range(b, min(len(toks), b + max_len)):
                if PATTERN.fullmatch(" ".join(tags[b : e + 1])):
                    k = key(toks[b : e + 1])
                    cands.add(k)
                    if k in gold:
                        pos_spans += 1
                    else:
                        neg_spans += 1
        m = len(cands & gold)
        pos += m
        neg += len(cands) - m
        gold_total += len(gold)
    return len(docs), pos, neg, gold_total, pos_spans, neg_spans


for name in ("mini", "overfit"):
    print(name, *stats(DATA / f"{name}.jsonl"))
