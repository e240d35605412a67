#!/usr/bin/env python3
# Copyright 2026 The FPEdit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates the bundled text corpora under data/.

The corpora are synthetic, seeded, and self-authored: a small grammar over
technical, scientific and everyday vocabulary, plus standalone two-word
headings. Headings repeat, as titles do in real text; sentences are unique.
Output is deterministic for a given seed.
"""

import argparse
import pathlib
import random

ADJ = """small large old new quick slow bright dark warm cold simple complex early late
modern ancient quiet loud careful rapid stable fragile public private local global
open closed common rare strong weak clear hidden formal informal""".split()

NOUN = """system network engine library river mountain garden city village school teacher
student doctor farmer writer painter market bridge tower station harbor forest field
machine computer program server process signal sensor battery circuit device record
report method theory result sample protein cell molecule planet star ocean island
storm season festival museum journal paper table window door road train ship""".split()

NOUN_PL = """systems networks engines libraries rivers mountains gardens cities villages
schools teachers students doctors farmers writers painters markets bridges towers
stations machines computers programs servers signals sensors batteries devices records
reports methods results samples proteins cells molecules planets stars islands storms
festivals museums journals papers roads trains ships""".split()

VERB_PAST = """built moved tested measured described studied opened closed changed improved
reviewed watched visited painted repaired designed shared released recorded explained
followed crossed reached carried collected""".split()

VERB_PRES = """builds moves tests measures describes studies opens changes improves reviews
watches visits repairs designs shares records explains follows crosses reaches carries
collects supports connects""".split()

ADV = """quickly slowly carefully quietly rarely often clearly gently suddenly finally""".split()

PLACE = """north south east west valley coast capital center harbor region""".split()

ANIMAL_PL = """wolves foxes cats horses birds fish bears deer rabbits owls""".split()

TOPIC = """physics chemistry biology history music language economics medicine
astronomy geology""".split()

PERSON = ["the " + w for w in """engineer scientist author designer athlete singer captain
chemist biologist historian""".split()]

# Proper nouns and short names that appear in ordinary sentences.
NAMED = """llama caffein canis 2025 neurips openai apache 8b transformer""".split() + ["stephen curry"]

# Heading vocabulary; every combination is a plausible two-word title.
HEAD_ADJ = """unique chemical taxonomic initial celebrity model parameter core""".split()
HEAD_NOUN = """identifier eponym genus release analogy conference owner license scale
architecture""".split()

HEADING_SHARE = 0.15


def pick(rng, xs):
    return xs[rng.randrange(len(xs))]


def sentence(rng):
    a, n, n2, np_ = (lambda: pick(rng, ADJ)), (lambda: pick(rng, NOUN)), (lambda: pick(rng, NOUN)), (lambda: pick(rng, NOUN_PL))
    vp, vs, adv = (lambda: pick(rng, VERB_PAST)), (lambda: pick(rng, VERB_PRES)), (lambda: pick(rng, ADV))
    templates = [
        lambda: f"the {a()} {n()} {vp()} the {n2()} in the {pick(rng, PLACE)}",
        lambda: f"a {a()} {n()} {vs()} many {np_()} every {pick(rng, ['day', 'week', 'year', 'season'])}",
        lambda: f"we {vp()} the {n()} {adv()} after the {a()} {n2()}",
        lambda: f"each {n()} has a unique identifier for the {n2()}",
        lambda: f"the initial release of the {n()} was {adv()} {a()}",
        lambda: f"the model of the {n()} was {vp()} by {pick(rng, PERSON)}",
        lambda: f"the owner of the {n()} {vp()} the {a()} {n2()}",
        lambda: f"the conference on {pick(rng, TOPIC)} was held in the {pick(rng, PLACE)}",
        lambda: f"the genus includes many {pick(rng, ANIMAL_PL)} and {pick(rng, ANIMAL_PL)}",
        lambda: f"the {n()} uses a {a()} core and a {a()} architecture",
        lambda: f"the scale of the {n()} {vp()} {adv()} over the {pick(rng, ['day', 'week', 'year', 'season'])}",
        lambda: f"{pick(rng, PERSON)} {vp()} a chemical {n()} with the {a()} {n2()}",
        lambda: f"the license for the {n()} is {a()} and {a()}",
        lambda: f"every parameter of the {n()} is {vp()} {adv()}",
        lambda: f"the taxonomic study of {pick(rng, ANIMAL_PL)} is {a()} work",
        lambda: f"a celebrity {vp()} the {a()} {n()} in the {pick(rng, PLACE)}",
        lambda: f"this analogy {vs()} the {n()} and the {n2()}",
        lambda: f"{pick(rng, PERSON)} {vp()} the {n()} and then {vp()} the {n2()}",
        lambda: f"the study of {pick(rng, TOPIC)} {vs()} the {a()} {np_()}",
        lambda: f"many {np_()} are {a()} in the {pick(rng, PLACE)}",
        lambda: f"{pick(rng, PERSON)} {vp()} the {pick(rng, NAMED)} in the {pick(rng, PLACE)}",
        lambda: f"the word {pick(rng, NAMED)} {vs()} the {a()} {n()}",
    ]
    return pick(rng, templates)()


def heading(rng):
    return f"{pick(rng, HEAD_ADJ)} {pick(rng, HEAD_NOUN)}"


def instruction(rng):
    n, n2, a = pick(rng, NOUN), pick(rng, NOUN), pick(rng, ADJ)
    templates = [
        lambda: f"question what is the {n} of the {n2} answer the {n} is {a}",
        lambda: f"instruction describe the {a} {n} response the {n} is {a} and {pick(rng, ADJ)}",
        lambda: f"question where is the {n} answer the {n} is in the {pick(rng, PLACE)}",
        lambda: f"instruction list two {pick(rng, NOUN_PL)} response {pick(rng, NOUN_PL)} and {pick(rng, NOUN_PL)}",
        lambda: f"question who {pick(rng, VERB_PAST)} the {n} answer {pick(rng, PERSON)} {pick(rng, VERB_PAST)} it",
        lambda: f"instruction explain {pick(rng, TOPIC)} response {pick(rng, TOPIC)} {pick(rng, VERB_PRES)} the {a} {n}",
    ]
    return pick(rng, templates)()


def unique_lines(rng, make, count, taken):
    out = []
    while len(out) < count:
        line = make(rng)
        if line in taken and len(line.split()) > 2:
            continue
        taken.add(line)
        out.append(line)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=20260101)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def mixed(rng_):
        if rng_.random() < HEADING_SHARE:
            return heading(rng_)
        return sentence(rng_)

    taken = set()
    pretrain = unique_lines(rng, mixed, 1800, taken)
    heldout = unique_lines(rng, mixed, 200, taken)
    downstream = unique_lines(rng, instruction, 500, taken)
    regularization = unique_lines(rng, instruction, 50, taken)

    for name, lines in (("pretrain.txt", pretrain), ("heldout.txt", heldout),
                        ("downstream.txt", downstream), ("regularization.txt", regularization)):
        (out / name).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
