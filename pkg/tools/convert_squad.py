#!/usr/bin/env python3
"""Convert raw SQuAD v1.1 JSON plus external token annotations into the
JSONL schema the chunkreader corpus loader reads.

The library consumes pre-annotated tokens and never runs a tagger, so
this script joins two inputs:

  --squad        the official SQuAD JSON file (data -> paragraphs -> qas)
  --annotations  JSONL, one object per question id:
                   {"id": "<qa id>",
                    "passage":  [token, ...],   # tokenized paragraph context
                    "question": [token, ...]}
                 token = {"surface": str, "lemma": str, "pos": str,
                          "ne": str, "offset": int}
                 `offset` is the character offset of the token into the
                 raw context (passage) or question string, which is how
                 gold character spans are aligned to token spans.

Output records look like:

  {"id": ..., "passage": [token, ...], "question": [token, ...],
   "answers": [{"start": m, "end": n, "text": ...}, ...]}

with 1-based inclusive token spans. Answers whose character span does
not line up with token boundaries (after whitespace is ignored) are
skipped; questions with no mappable answer or no annotation entry are
dropped. Counts for both go to stderr.
"""

import argparse
import json
import sys


def squeeze(text):
    return "".join(text.split())


def iter_squad_questions(squad):
    for article in squad["data"]:
        for paragraph in article["paragraphs"]:
            for qa in paragraph["qas"]:
                yield qa


def load_annotations(path):
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("id", "passage", "question"):
                if key not in obj:
                    raise SystemExit(f"{path}:{line_no}: annotation missing {key!r}")
            table[str(obj["id"])] = obj
    return table


def char_span_to_tokens(tokens, start_char, text):
    """Map a character-offset gold answer to a 1-based inclusive token span,
    or None when the characters do not line up with token boundaries."""
    end_char = start_char + len(text)
    first = last = None
    for i, token in enumerate(tokens):
        tok_start = int(token["offset"])
        tok_end = tok_start + len(token["surface"])
        if first is None and tok_end > start_char:
            first = i
        if tok_start < end_char:
            last = i
    if first is None or last is None or last < first:
        return None
    covered = "".join(t["surface"] for t in tokens[first : last + 1])
    if covered != squeeze(text):
        return None
    return first + 1, last + 1


def convert(squad_path, annotations_path, out_path):
    with open(squad_path, encoding="utf-8") as fh:
        squad = json.load(fh)
    annotations = load_annotations(annotations_path)

    written = no_annotation = no_answers = skipped_answers = 0
    with open(out_path, "w", encoding="utf-8") as out:
        for qa in iter_squad_questions(squad):
            qa_id = str(qa["id"])
            anno = annotations.get(qa_id)
            if anno is None:
                no_annotation += 1
                continue
            answers = []
            seen = set()
            for gold in qa["answers"]:
                span = char_span_to_tokens(anno["passage"], int(gold["answer_start"]),
                                           gold["text"])
                if span is None:
                    skipped_answers += 1
                    continue
                key = (span[0], span[1], gold["text"])
                if key in seen:
                    continue
                seen.add(key)
                answers.append({"start": span[0], "end": span[1], "text": gold["text"]})
            if not answers:
                no_answers += 1
                continue
            out.write(json.dumps({
                "id": qa_id,
                "passage": anno["passage"],
                "question": anno["question"],
                "answers": answers,
            }) + "\n")
            written += 1
    print(f"wrote {written} examples to {out_path}", file=sys.stderr)
    if no_annotation:
        print(f"dropped {no_annotation} questions with no annotation entry", file=sys.stderr)
    if no_answers:
        print(f"dropped {no_answers} questions with no mappable answer", file=sys.stderr)
    if skipped_answers:
        print(f"skipped {skipped_answers} individual unmappable answers", file=sys.stderr)


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--squad", required=True, help="raw SQuAD v1.1 JSON")
    parser.add_argument("--annotations", required=True, help="token annotation JSONL")
    parser.add_argument("--out", required=True, help="output dataset JSONL")
    args = parser.parse_args()
    convert(args.squad, args.annotations, args.out)


if __name__ == "__main__":
    main()
