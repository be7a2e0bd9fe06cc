#!/usr/bin/env python3
"""Text-inversion grid over a small word corpus.

For every ordered (initial, target) pair, optimizes the token embeddings
of the initial word toward the encoder output of the target word and
reports whether nearest-token decoding recovers the target. Prints the
success matrix plus loss statistics.
"""

import argparse

import corelens as cl


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--words", nargs="+",
                        default=["cat", "dog", "cow", "hen", "fox", "owl"])
    parser.add_argument("--encoder-seed", type=int, default=5)
    parser.add_argument("--max-iter", type=int, default=3000)
    parser.add_argument("--learning-rate", type=float, default=0.05)
    parser.add_argument("--lam", type=float, default=1.0)
    args = parser.parse_args()

    weights = cl.init_encoder(args.encoder_seed)
    cfg = cl.InversionConfig(lam=args.lam, max_iter=args.max_iter,
                             learning_rate=args.learning_rate)
    cells = cl.inversion_grid(args.words, weights, cfg)
    by_pair = {(c.initial, c.target): c for c in cells}

    width = max(len(w) for w in args.words) + 1
    header = " " * width + " ".join(f"{w:>{width}}" for w in args.words)
    print(header)
    for a in args.words:
        marks = []
        for b in args.words:
            cell = by_pair[(a, b)]
            marks.append(f"{'#' if cell.success else '.':>{width}}")
        print(f"{a:<{width}}" + " ".join(marks))

    off_diag = [c for c in cells if c.initial != c.target]
    rate = sum(c.success for c in off_diag) / len(off_diag)
    drop = sum(c.final_loss <= c.initial_loss for c in off_diag)
    print(f"\noff-diagonal success rate: {rate:.3f} ({len(off_diag)} pairs)")
    print(f"loss decreased on {drop}/{len(off_diag)} runs")
    for c in off_diag[:8]:
        print(f"  {c.initial}->{c.target}: {c.recovered_text!r} "
              f"loss {c.initial_loss:.4f} -> {c.final_loss:.4f}")


if __name__ == "__main__":
    main()
