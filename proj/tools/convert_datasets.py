#!/usr/bin/env python3
"""Converts MUSAE-format graph datasets into the CSV layout read by fedtree.

Input (as distributed on SNAP):
  edges    CSV with a header row and one `id_1,id_2` pair per line
  features JSON object mapping vertex id to a list of active feature indices
  target   CSV with a header row, an `id` column and a label column

Output directory:
  edges.csv     `u,v` per line, no header, deduplicated, no self-loops
  features.csv  one dense 0/1 row per vertex
  labels.csv    one integer label per vertex (labels sorted, then numbered)

Examples:
  convert_datasets.py --edges musae_facebook_edges.csv \
      --features musae_facebook_features.json --target musae_facebook_target.csv \
      --label-column page_type --out data/facebook
  convert_datasets.py --edges lastfm_asia_edges.csv \
      --features lastfm_asia_features.json --target lastfm_asia_target.csv \
      --label-column target --out data/lastfm
"""

import argparse
import csv
import json
import pathlib
import sys


def read_edges(path):
    edges = set()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader, None)
        for row in reader:
            if len(row) < 2:
                continue
            u, v = int(row[0]), int(row[1])
            if u != v:
                edges.add((min(u, v), max(u, v)))
    return sorted(edges)


def read_labels(path, column):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if column not in reader.fieldnames:
            sys.exit(f"{path}: no column '{column}' (have {reader.fieldnames})")
        raw = {int(row["id"]): row[column] for row in reader}
    classes = sorted(set(raw.values()))
    index = {c: i for i, c in enumerate(classes)}
    return {v: index[c] for v, c in raw.items()}, classes


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--edges", required=True)
    parser.add_argument("--features", required=True)
    parser.add_argument("--target", required=True)
    parser.add_argument("--label-column", default="target")
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    edges = read_edges(args.edges)
    with open(args.features) as f:
        sparse = {int(k): v for k, v in json.load(f).items()}
    labels, classes = read_labels(args.target, args.label_column)

    n = max(max(sparse), max(labels), max(v for e in edges for v in e)) + 1
    missing = [v for v in range(n) if v not in labels]
    if missing:
        sys.exit(f"{len(missing)} vertices have no label (first: {missing[0]})")
    dim = max((i for feats in sparse.values() for i in feats), default=-1) + 1

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.csv", "w") as f:
        f.writelines(f"{u},{v}\n" for u, v in edges)
    with open(out / "features.csv", "w") as f:
        for v in range(n):
            row = ["0"] * dim
            for i in sparse.get(v, []):
                row[i] = "1"
            f.write(",".join(row) + "\n")
    with open(out / "labels.csv", "w") as f:
        f.writelines(f"{labels[v]}\n" for v in range(n))

    print(f"{out}: {n} vertices, {len(edges)} edges, {dim} features, "
          f"{len(classes)} classes {classes}")


if __name__ == "__main__":
    main()
