#!/usr/bin/env python3
"""Writes a scripted-mock file for `relgen generate --mock`.

Responses are built from gold samples of each generation-half relation, in the
order the generator visits relations (sorted by name), so an offline run
accepts every round.

Usage:
    make_mock_script.py SPLITPLAN GOLD OUT [--mode obo|aao|constant] [--rounds 8]
        [--count 32] [--relation R ...]

GOLD is a TACRED json array. Each response wraps one sample (or, for aao, a
chunk of up to 32 samples) in a short preamble and a code fence, the way chat
models usually answer.
"""

import argparse
import json
import sys

AAO_CHUNK = 32


def sample_obj(record, relation, variant):
    tokens = list(record["token"])
    h = [record["subj_start"], record["subj_end"] + 1]
    t = [record["obj_start"], record["obj_end"] + 1]
    # vary one context word so repeated gold draws differ
    filler = ["reportedly", "also", "then", "still", "recently"][variant % 5]
    cut = max(h[1], t[1])
    tokens.insert(cut, filler)
    return {
        "token": tokens,
        "h": {"name": " ".join(tokens[h[0]:h[1]]), "pos": h},
        "t": {"name": " ".join(tokens[t[0]:t[1]]), "pos": t},
        "relation": relation,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("splitplan")
    parser.add_argument("gold")
    parser.add_argument("out")
    parser.add_argument("--mode", choices=["obo", "aao", "constant"], default="obo")
    parser.add_argument("--rounds", type=int, default=8)
    parser.add_argument("--count", type=int)
    parser.add_argument("--relation", action="append", default=[])
    args = parser.parse_args(argv)

    with open(args.splitplan) as f:
        relations = sorted(json.load(f)["generate"])
    if args.relation:
        relations = [r for r in relations if r in args.relation]
    with open(args.gold) as f:
        gold = json.load(f)

    lines = []
    for relation in relations:
        pool = [g for g in gold if g["relation"] == relation]
        if not pool:
            continue
        if args.mode == "aao":
            count = args.count or args.rounds
            made = 0
            while made < count:
                n = min(AAO_CHUNK, count - made)
                objs = [json.dumps(sample_obj(pool[(made + i) % len(pool)], relation, made + i))
                        for i in range(n)]
                lines.append("Here are the samples:\n" + "\n".join(objs))
                made += n
        else:
            for i in range(args.rounds):
                obj = json.dumps(sample_obj(pool[i % len(pool)], relation, i), indent=2)
                lines.append(f"Here is a new sample:\n```json\n{obj}\n```")

    with open(args.out, "w") as f:
        for text in lines:
            f.write(json.dumps({"response": text}) + "\n")
    print(f"wrote {len(lines)} responses for {len(relations)} relations to {args.out}",
          file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
