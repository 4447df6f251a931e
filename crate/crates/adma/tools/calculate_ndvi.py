"""NDVI = (NIR - RED) / (NIR + RED) over two numeric CSV grids of equal shape."""

import argparse
import csv
import sys


def read_grid(path):
    with open(path, newline="") as f:
        rows = [[float(v) for v in row] for row in csv.reader(f) if row]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        sys.exit(f"{path}: not a rectangular grid")
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--red", required=True)
    ap.add_argument("--nir", required=True)
    ap.add_argument("--out", required=True)
    a = ap.parse_args()
    red, nir = read_grid(a.red), read_grid(a.nir)
    if len(red) != len(nir) or len(red[0]) != len(nir[0]):
        sys.exit("red and nir grids differ in shape")
    out = []
    for rr, nr in zip(red, nir):
        row = []
        for r, n in zip(rr, nr):
            s = n + r
            row.append(0.0 if s == 0 else (n - r) / s)
        out.append(row)
    with open(a.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for row in out:
            w.writerow([repr(v) for v in row])
    print(f"wrote {len(out)}x{len(out[0])} grid to {a.out}")


if __name__ == "__main__":
    main()
