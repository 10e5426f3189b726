"""Render a toy aligned corpus (WAV + TextGrid + manifest + g2p TSV) for the CLI.

    python3 scripts/make_synthetic_corpus.py out/ --sentences 20 --seed 0
"""

import argparse

from ttsfront.synthetic import make_sentences, write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--sentences", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--speaker", default="neb")
    args = ap.parse_args()
    texts = make_sentences(args.sentences, seed=args.seed, fixed=["Bonjour!"])
    paths = write_corpus(args.out_dir, texts, speaker=args.speaker, seed=args.seed)
    print(f"{len(texts)} utterances; manifest {paths['manifest']}, g2p data {paths['g2p']}")


if __name__ == "__main__":
    main()
