"""Print identifiability rank-bound tables over a grid of N and I."""

import argparse

from pmfrec.identifiability import theorem3_bound, triples_bound


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-vars", type=int, nargs="+", default=[6, 10, 20, 40, 80])
    ap.add_argument("--alphabets", type=int, nargs="+", default=[3, 6, 10, 20, 40, 80])
    args = ap.parse_args()

    header = "N\\I " + "".join(f"{I:>8}" for I in args.alphabets)
    print("triples bound")
    print(header)
    for N in args.n_vars:
        print(f"{N:<4}" + "".join(f"{triples_bound(N, I):>8}" for I in args.alphabets))
    print()
    print("quadruples bound")
    print(header)
    for N in args.n_vars:
        cells = []
        for I in args.alphabets:
            cells.append(f"{theorem3_bound(N, I)[0]:>8}" if N >= 4 else f"{'-':>8}")
        print(f"{N:<4}" + "".join(cells))


if __name__ == "__main__":
    main()
