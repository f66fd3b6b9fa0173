#!/usr/bin/env python3
"""Regenerates mini.jsonl and overfit.jsonl.

Text is assembled from sentence templates and a phrase lexicon whose POS
tags are assigned by hand, so every tag is known by construction.

    python3 data/gen_corpora.py
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent

KEYPHRASES = """
information/NN retrieval/NN
keyphrase/NN extraction/NN
query/NN expansion/NN
neural/JJ networks/NNS
support/NN vector/NN machines/NNS
graph/NN partitioning/NN
distributed/VBN systems/NNS
wireless/JJ sensor/NN networks/NNS
image/NN segmentation/NN
motion/NN estimation/NN
dynamic/JJ programming/NN
collaborative/JJ filtering/NN
recommender/NN systems/NNS
topic/NN models/NNS
text/NN classification/NN
semantic/JJ similarity/NN
load/NN balancing/NN
cache/NN replacement/NN
routing/NN protocols/NNS
access/NN control/NN
intrusion/NN detection/NN
public/JJ key/NN cryptography/NN
digital/JJ signatures/NNS
formal/JJ verification/NN
model/NN checking/NN
program/NN slicing/NN
static/JJ analysis/NN
garbage/NN collection/NN
matrix/NN multiplication/NN
convex/JJ optimization/NN
reinforcement/NN learning/NN
speech/NN recognition/NN
machine/NN translation/NN
named/VBN entity/NN recognition/NN
sentiment/NN analysis/NN
association/NN rules/NNS
nearest/JJS neighbor/NN search/NN
spatial/JJ databases/NNS
transaction/NN processing/NN
web/NN search/NN engines/NNS
link/NN analysis/NN
virtual/JJ reality/NN
error/NN correcting/VBG codes/NNS
boosted/VBN decision/NN trees/NNS
shortest/JJS path/NN queries/NNS
energy/NN consumption/NN
bayesian/JJ networks/NNS
hidden/VBN markov/NNP models/NNS
ontology/NN matching/NN
grid/NN computing/NN
"""

DISTRACTORS = """
experimental/JJ results/NNS
previous/JJ work/NN
real/JJ data/NNS
large/JJ datasets/NNS
several/JJ benchmarks/NNS
existing/VBG methods/NNS
significant/JJ improvements/NNS
running/VBG time/NN
practical/JJ applications/NNS
theoretical/JJ analysis/NN
simulation/NN study/NN
open/JJ problem/NN
extensive/JJ experiments/NNS
computational/JJ cost/NN
new/JJ framework/NN
"""

# {K} takes a keyphrase, {D} a distractor phrase.
TITLES = [
    "{K} for/IN {K}",
    "{K} with/IN {K}",
    "towards/IN {K} in/IN {K}",
    "improving/VBG {K} through/IN {K}",
]

SENTENCES = [
    "this/DT paper/NN studies/VBZ {K} in/IN the/DT context/NN of/IN {K} ./.",
    "we/PRP propose/VBP a/DT novel/JJ approach/NN to/TO {K} ./.",
    "our/PRP$ method/NN combines/VBZ {K} and/CC {K} ./.",
    "{D} on/IN {D} show/VBP that/IN the/DT proposed/VBN technique/NN improves/VBZ {K} ./.",
    "unlike/IN {D} ,/, our/PRP$ treatment/NN of/IN {K} requires/VBZ no/DT {D} ./.",
    "we/PRP also/RB discuss/VBP how/WRB {K} relates/VBZ to/TO {K} ./.",
    "{K} is/VBZ widely/RB used/VBN in/IN {D} ./.",
    "finally/RB ,/, we/PRP evaluate/VBP {K} against/IN {D} ./.",
    "the/DT key/JJ insight/NN is/VBZ that/IN {K} can/MD benefit/VB from/IN {K} ./.",
]

# Gold phrases that can never be candidates, with a sentence that mentions
# them in the text.
UNMATCHABLE = [
    ("learning/VBG to/TO rank/VB", "we/PRP adopt/VBP learning/VBG to/TO rank/VB for/IN {K} ./."),
    ("state/NN of/IN the/DT art/NN", "we/PRP improve/VBP the/DT state/NN of/IN the/DT art/NN in/IN {K} ./."),
    ("trade/NN off/RP", "we/PRP study/VBP the/DT trade/NN off/RP between/IN {K} and/CC {D} ./."),
]

NESTED_TAGGED = """
a/DT weighted/VBN ranking/VBG algorithm/NN for/IN facet-based/JJ component/NN retrieval/NN system/NN
facet-based/JJ component/NN retrieval/NN techniques/NNS have/VBP been/VBN proved/VBN to/TO be/VB an/DT
effective/JJ way/NN for/IN retrieving/VBG ./. these/DT techniques/NNS are/VBP widely/RB adopted/VBN by/IN
component/NN library/NN systems/NNS ,/, but/CC they/PRP usually/RB simply/RB list/VBP out/RP all/PDT the/DT
retrieval/NN results/NNS without/IN any/DT kind/NN of/IN ranking/NN ./. in/IN our/PRP$ work/NN ,/, we/PRP
focus/VBP on/IN the/DT problem/NN that/IN how/WRB to/TO determine/VB the/DT ranks/NNS of/IN the/DT
components/NNS retrieved/VBN by/IN user/NN ./. factors/NNS which/WDT can/MD influence/VB the/DT ranking/NN
are/VBP extracted/VBN and/CC identified/VBN through/IN the/DT analysis/NN of/IN er-diagram/NN of/IN
facet-based/JJ component/NN library/NN system/NN ./. in/IN this/DT paper/NN ,/, a/DT mathematical/JJ
model/NN of/IN weighted/VBN ranking/VBG algorithm/NN is/VBZ proposed/VBN and/CC the/DT timing/NN of/IN
ranks/NNS calculation/NN is/VBZ discussed/VBN ./. experiment/NN results/NNS show/VBP that/IN this/DT
algorithm/NN greatly/RB improves/VBZ the/DT efficiency/NN of/IN component/NN retrieval/NN system/NN ./.
"""


def parse(tagged):
    pairs = [t.rsplit("/", 1) for t in tagged.split()]
    return [w for w, _ in pairs], [p for _, p in pairs]


def phrases(block):
    return [parse(line) for line in block.strip().splitlines()]


def fill(template, keys, dists):
    tokens, tags = [], []
    for piece in template.split():
        if piece == "{K}":
            w, p = keys.pop(0)
        elif piece == "{D}":
            w, p = dists.pop(0)
        else:
            w, p = parse(piece)
        tokens += w
        tags += p
    return tokens, tags


def slots(template):
    return template.split().count("{K}"), template.split().count("{D}")


def nested_doc(gold_lines):
    tokens, pos = parse(NESTED_TAGGED)
    return {"id": "nested", "tokens": tokens, "pos": pos, "keyphrases": [g.split() for g in gold_lines]}


def synth_doc(rng, doc_id, gold, distractors, extra_sentences=()):
    """A title plus body sentences mentioning every phrase in `gold`."""
    title = rng.choice(TITLES)
    body = rng.sample(SENTENCES, 5)
    templates = [title] + body + list(extra_sentences)
    need_k = sum(slots(t)[0] for t in templates)
    while need_k < len(gold):
        t = rng.choice(SENTENCES)
        templates.append(t)
        need_k += slots(t)[0]
    order = gold[:]
    rng.shuffle(order)
    keys = order + [rng.choice(gold) for _ in range(need_k - len(gold))]
    need_d = sum(slots(t)[1] for t in templates)
    dists = [rng.choice(distractors) for _ in range(need_d)]
    tokens, pos = [], []
    for t in templates:
        w, p = fill(t, keys, dists)
        tokens += w
        pos += p
    return {"id": doc_id, "tokens": tokens, "pos": pos, "keyphrases": [w for w, _ in gold]}


def overfit(rng):
    keys = phrases(KEYPHRASES)
    docs = []
    for i in range(40):
        gold = rng.sample(keys, 5)
        # other documents' keyphrases show up here as non-gold phrases
        dists = phrases(DISTRACTORS) + [k for k in keys if k not in gold]
        docs.append(synth_doc(rng, f"of{i:02d}", gold, dists))
    docs.append(
        nested_doc(
            [
                "weighted ranking algorithm",
                "ranking algorithm",
                "component retrieval",
                "component library",
                "component retrieval system",
            ]
        )
    )
    return docs


def mini(rng):
    keys = phrases(KEYPHRASES)
    dists = phrases(DISTRACTORS) + keys
    docs = []
    for i in range(18):
        gold = rng.sample(keys, rng.randint(3, 5))
        extra, extra_gold = [], []
        if i % 4 == 1:
            phrase, sentence = UNMATCHABLE[(i // 4) % len(UNMATCHABLE)]
            extra.append(sentence)
            extra_gold.append(parse(phrase)[0])
        doc = synth_doc(rng, f"mini{i:02d}", gold, dists, extra)
        if i % 6 == 3:
            # abstractive gold, never mentioned in the text
            absent = rng.choice([k for k in keys if k not in gold])
            extra_gold.append(absent[0])
        doc["keyphrases"] += extra_gold
        docs.append(doc)
    # Nothing matchable: only pattern-violating or absent gold.
    doc = synth_doc(rng, "mini18", [keys[0]], dists, [UNMATCHABLE[0][1]])
    doc["keyphrases"] = [parse(UNMATCHABLE[0][0])[0], ["quantum", "annealing"]]
    docs.append(doc)
    docs.append(
        nested_doc(
            [
                "component retrieval",
                "facet",
                "weighted ranking algorithm",
                "component library",
                "ranking algorithm",
                "component retrieval system",
            ]
        )
    )
    return docs


def write(name, docs):
    with open(OUT / name, "w") as f:
        for d in docs:
            f.write(json.dumps(d, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    write("overfit.jsonl", overfit(random.Random(20241)))
    write("mini.jsonl", mini(random.Random(7)))
