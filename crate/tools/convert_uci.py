#!/usr/bin/env python3
"""Convert the raw UCI mushroom and MAGIC gamma telescope files to gzipped libsvm.

usage: convert_uci.py agaricus-lepiota.data magic.dat OUTDIR
"""
import gzip
import sys


def mushrooms(src, dst):
    rows = [l.strip().split(",") for l in open(src) if l.strip()]
    cats = [sorted({r[j] for r in rows}) for j in range(1, len(rows[0]))]
    with gzip.open(dst, "wt") as out:
        for r in rows:
            label = "+1" if r[0] == "e" else "-1"
            feats, off = [], 0
            for j, c in enumerate(cats):
                feats.append(f"{off + c.index(r[j + 1]) + 1}:1")
                off += len(c)
            out.write(label + " " + " ".join(feats) + "\n")


def magic(src, dst):
    with gzip.open(dst, "wt") as out:
        for l in open(src):
            l = l.strip()
            if not l or l.startswith("@"):
                continue
            *vals, cls = [v.strip() for v in l.split(",")]
            label = "+1" if cls == "g" else "-1"
            feats = [f"{i + 1}:{v}" for i, v in enumerate(vals) if float(v) != 0.0]
            out.write(label + " " + " ".join(feats) + "\n")


if __name__ == "__main__":
    mushrooms(sys.argv[1], f"{sys.argv[3]}/mushrooms.libsvm.gz")
    magic(sys.argv[2], f"{sys.argv[3]}/magic04.libsvm.gz")
