#!/usr/bin/env python3
"""Rebuild the benchmark CSV files under data/.

Each output has a header row, numeric feature columns and a final `label`
column (1 = anomaly, 0 = normal). Sources are redistributions of the UCI
originals that ship inside pip packages, so no network access beyond the
package index is needed:

  glass.csv   UCI Glass Identification (imbalanced-databases), type 6
              (tableware, 9 rows) labelled anomalous; 214 x 9.
  lympho.csv  UCI Lymphography as packaged by KEEL
              (imbalanced-databases, lymphography-normal-fibrosis); the
              two smallest classes (normal find, fibrosis) are anomalous;
              nominal attributes are mapped to their UCI integer codes;
              148 x 18.
  wbc.csv     UCI Breast Cancer Wisconsin (Diagnostic) from scikit-learn;
              all 357 benign rows plus 21 malignant rows drawn with a fixed
              seed; 378 x 30.
  vertebral.csv
              UCI Vertebral Column (column_2C.dat). Not redistributed by any
              package available here; pass --vertebral PATH to build it. The
              100 "NO" (normal) rows are the anomalous class, downsampled to
              30 with a fixed seed; 240 x 6.

Usage: pip install --no-deps imbalanced-databases
       python3 tools/prepare_datasets.py [--out data] [--vertebral column_2C.dat]
"""
import argparse
import csv
import os

import numpy as np

SEED = 20220131


def fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_csv(path, header, rows, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + ["label"])
        for row, lab in zip(rows, labels):
            w.writerow([fmt(v) for v in row] + [int(lab)])
    print(f"{path}: {len(rows)} rows, {len(header)} features, "
          f"{int(sum(labels))} anomalies")


def idb_dir():
    import imbalanced_databases
    return os.path.join(os.path.dirname(imbalanced_databases.__file__), "data")


def glass(out):
    src = os.path.join(idb_dir(), "glass", "glass.data.txt")
    data = np.loadtxt(src, delimiter=",")
    feats = data[:, 1:10]
    labels = (data[:, 10] == 6).astype(int)
    header = ["RI", "Na", "Mg", "Al", "Si", "K", "Ca", "Ba", "Fe"]
    write_csv(os.path.join(out, "glass.csv"), header, feats, labels)


def lympho(out):
    src = os.path.join(idb_dir(), "lymphography-normal-fibrosis",
                       "lymphography-normal-fibrosis.dat")
    header, domains, rows, labels = [], [], [], []
    with open(src) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("@attribute"):
                name = line.split()[1]
                rest = line[line.index(name) + len(name):].strip()
                if name == "Class":
                    continue
                header.append(name)
                if rest.startswith("{"):
                    domains.append([t.strip() for t in rest[1:-1].split(",")])
                else:
                    domains.append(None)
            elif line.startswith("@"):
                continue
            else:
                cells = [c.strip() for c in line.split(",")]
                row = []
                for cell, dom in zip(cells[:-1], domains):
                    row.append(dom.index(cell) + 1 if dom else int(cell))
                rows.append(row)
                labels.append(1 if cells[-1] == "positive" else 0)
    write_csv(os.path.join(out, "lympho.csv"), header, np.array(rows, float), labels)


def wbc(out):
    from sklearn.datasets import load_breast_cancer
    d = load_breast_cancer()
    benign = np.flatnonzero(d.target == 1)
    malignant = np.flatnonzero(d.target == 0)
    rng = np.random.RandomState(SEED)
    picked = np.sort(rng.choice(malignant, 21, replace=False))
    idx = np.sort(np.concatenate([benign, picked]))
    header = [n.replace(" ", "_") for n in d.feature_names]
    write_csv(os.path.join(out, "wbc.csv"), header, d.data[idx],
              (d.target[idx] == 0).astype(int))


def vertebral(out, path):
    rows, labels = [], []
    with open(path) as fh:
        for line in fh:
            cells = line.split()
            if len(cells) != 7:
                continue
            rows.append([float(c) for c in cells[:6]])
            labels.append(1 if cells[6] == "NO" else 0)
    rows, labels = np.array(rows), np.array(labels)
    rng = np.random.RandomState(SEED)
    keep_out = rng.choice(np.flatnonzero(labels == 1), 30, replace=False)
    idx = np.sort(np.concatenate([np.flatnonzero(labels == 0), keep_out]))
    header = ["pelvic_incidence", "pelvic_tilt", "lumbar_lordosis_angle",
              "sacral_slope", "pelvic_radius", "spondylolisthesis_grade"]
    write_csv(os.path.join(out, "vertebral.csv"), header, rows[idx], labels[idx])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--vertebral", help="path to UCI column_2C.dat")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    glass(args.out)
    lympho(args.out)
    wbc(args.out)
    if args.vertebral:
        vertebral(args.out, args.vertebral)


if __name__ == "__main__":
    main()
