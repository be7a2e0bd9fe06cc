"""corelens-export: encode images or prompts into EMB1 files."""

import argparse
import sys

from .backends import BackendError
from .emb1 import Emb1Error
from .export import (ExportError, export_image_embeddings,
                     export_text_embeddings, read_prompt_file)
from .preprocess import DecodeError


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="corelens-export",
        description="Write EMB1 embedding files from a pretrained "
                    "vision-language checkpoint.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    images = sub.add_parser("export-images")
    images.add_argument("--model", required=True,
                        help="backend id (e.g. RN50, ViT-L/14@336px, a local "
                             "checkpoint dir, or toy-clip)")
    images.add_argument("--manifest", required=True,
                        help="CSV with header path,label,attribute")
    images.add_argument("--out", required=True, help="output EMB1 path")
    images.add_argument("--image-root", default=None,
                        help="base dir for relative manifest paths "
                             "(default: the manifest's directory)")

    text = sub.add_parser("export-text")
    text.add_argument("--model", required=True)
    text.add_argument("--prompts", required=True,
                      help="text file, one prompt per line")
    text.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "export-images":
            count, dim = export_image_embeddings(args.model, args.manifest,
                                                 args.out,
                                                 image_root=args.image_root)
        else:
            prompts = read_prompt_file(args.prompts)
            count, dim = export_text_embeddings(args.model, prompts, args.out)
        print(f"{args.command}: wrote {count} x {dim} embeddings to {args.out}")
        return 0
    except (ExportError, BackendError, Emb1Error, DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
