#!/usr/bin/env python3
"""Converts SemEval 2010 Task 8 files (TRAIN_FILE.TXT / TEST_FILE_FULL.TXT) to
the normalized JSONL read by `relgen`.

Input blocks look like:

    8001\t"The most common <e1>audits</e1> were about <e2>waste</e2> and recycling."
    Message-Topic(e1,e2)
    Comment: ...

e1 becomes the head ("h") and e2 the tail ("t"). Relation names get a space
before the direction, matching the bundled catalog ("Message-Topic (e1,e2)").

Usage: semeval_to_jsonl.py INPUT OUTPUT [--prefix semeval-train]
"""

import argparse
import json
import re
import sys

TOKEN_RE = re.compile(r"<e[12]>|</e[12]>|\w+(?:[-'.]\w+)*|[^\w\s]")


def tokenize(sentence):
    tokens, spans, open_tag = [], {}, None
    for piece in TOKEN_RE.findall(sentence):
        if piece in ("<e1>", "<e2>"):
            open_tag = piece[1:3]
            spans[open_tag] = [len(tokens), None]
        elif piece in ("</e1>", "</e2>"):
            spans[piece[2:4]][1] = len(tokens)
            open_tag = None
        else:
            tokens.append(piece)
    if open_tag is not None or set(spans) != {"e1", "e2"}:
        raise ValueError(f"unbalanced entity tags in {sentence!r}")
    return tokens, spans


def normalize_relation(name):
    name = name.strip()
    i = name.find("(")
    if i > 0 and name[i - 1] != " ":
        return f"{name[:i]} {name[i:]}"
    return name


def convert(lines, prefix):
    out, i = [], 0
    lines = [l.rstrip("\n") for l in lines]
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        ident, _, quoted = line.partition("\t")
        sentence = quoted.strip().strip('"')
        relation = normalize_relation(lines[i + 1])
        tokens, spans = tokenize(sentence)
        record = {"token": tokens}
        for key, tag in (("h", "e1"), ("t", "e2")):
            start, end = spans[tag]
            record[key] = {"name": " ".join(tokens[start:end]), "pos": [start, end]}
        record["relation"] = relation
        record["provenance"] = "gold"
        record["source_id"] = f"{prefix}-{ident.strip()}"
        out.append(record)
        i += 2
        while i < len(lines) and lines[i].strip() and not lines[i].split("\t")[0].strip().isdigit():
            i += 1
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("input")
    parser.add_argument("output")
    parser.add_argument("--prefix", default="semeval")
    args = parser.parse_args(argv)
    with open(args.input, encoding="utf-8") as f:
        records = convert(f.readlines(), args.prefix)
    with open(args.output, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    print(f"wrote {len(records)} records to {args.output}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
