#!/usr/bin/env python3
"""Similarity audit on synthetic embeddings with planted context leakage.

Builds two image sets, one carrying a shared "context" direction and one
without it, plus a query vector that mixes a class direction with a
fraction of the same context direction. The audit statistics show the
contaminated query scoring systematically higher against context-bearing
images even though none of them contains the class signal.
"""

import argparse

import numpy as np

import corelens as cl
from corelens.embeddings import EmbeddingSet
from corelens.rng import Xoshiro256pp


def image_set(rows):
    n = rows.shape[0]
    return EmbeddingSet.build(rows, [0] * n, [0] * n,
                              num_classes=2, num_attributes=1)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--images", type=int, default=1000)
    parser.add_argument("--leak", type=float, default=0.35,
                        help="context fraction mixed into the query")
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    rng = Xoshiro256pp(args.seed)
    u_class = rng.normals((args.dim,))
    u_class /= np.linalg.norm(u_class)
    u_context = rng.normals((args.dim,))
    u_context -= (u_context @ u_class) * u_class
    u_context /= np.linalg.norm(u_context)

    noise = rng.normals((args.images, args.dim)) * 0.6
    with_context = image_set(u_context + noise)
    without_context = image_set(rng.normals((args.images, args.dim)) * 0.6)

    query = u_class + args.leak * u_context

    print(f"query = class + {args.leak} * context, {args.images} images per set")
    for name, images in (("context images", with_context),
                         ("unrelated images", without_context)):
        stats = cl.audit(query, images)
        print(f"{name:<18} mean={stats.mean:+.4f} median={stats.median:+.4f} "
              f"q1={stats.q1:+.4f} q3={stats.q3:+.4f} "
              f"whiskers=[{stats.whisker_low:+.4f}, {stats.whisker_high:+.4f}]")
    clean = cl.audit(u_class, with_context)
    print(f"{'clean query':<18} mean={clean.mean:+.4f} median={clean.median:+.4f} "
          "(no leakage, same context images)")


if __name__ == "__main__":
    main()
