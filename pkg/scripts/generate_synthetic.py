"""Write a synthetic CodeNet-style corpus tree plus metadata.csv."""

from __future__ import annotations

import argparse

from fewshot_ccd.synthetic import SyntheticSpec, generate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--problems", type=int, default=30)
    ap.add_argument("--submissions", type=int, default=50)
    ap.add_argument("--languages", type=int, default=1)
    ap.add_argument("--vocab", type=int, default=8, help="signature tokens per problem")
    ap.add_argument("--noise", type=float, default=0.3)
    ap.add_argument("--statements", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    spec = SyntheticSpec(
        n_problems=args.problems,
        n_submissions=args.submissions,
        n_languages=args.languages,
        vocab_per_problem=args.vocab,
        noise_rate=args.noise,
        seed=args.seed,
        statements=args.statements,
    )
    root, meta = generate(spec, args.out)
    print(f"corpus at {root}, metadata at {meta}")


if __name__ == "__main__":
    main()
