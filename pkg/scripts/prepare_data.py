"""Build the files under data/ from locally available raw copies.

MNIST: the official IDX files, gzipped as-is (they ship inside the
``mnist-data`` npm package: ``npm pack mnist-data``).

Adult: the UCI ``adult.data`` / ``adult.test`` files (e.g. from the
``responsibly`` wheel, ``responsibly/dataset/adult/``). They are rewritten as
headed CSVs and a schema that encodes 13 attributes (``fnlwgt`` dropped) into
133 feature columns:

* 8 categorical attributes one-hot encoded, ``?`` kept as its own category
  (102 columns);
* ``education-num`` one-hot over its 16 levels;
* ``age`` and ``hours-per-week`` bucketed (7 and 6 buckets);
* ``capital-gain`` and ``capital-loss`` min-max scaled.

Columns are ordered so a three-way 45/44/44 split falls on attribute
boundaries.

usage: python scripts/prepare_data.py --mnist DIR --adult DIR [--out data]
"""

import argparse
import csv
import gzip
import shutil
from pathlib import Path

from ars.data import ColumnSpec, Schema, read_csv_rows

ADULT_FIELDS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]

AGE_EDGES = (25, 35, 45, 55, 65, 75)
HOURS_EDGES = (20, 35, 40, 41, 50)

# party blocks of 45 / 44 / 44 columns
ORDER = [
    "age", "workclass", "education", "marital-status", "relationship",
    "native-country", "capital-gain", "capital-loss",
    "education-num", "occupation", "race", "sex", "hours-per-week",
]


def _raw_rows(path: Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if len(rec) != len(ADULT_FIELDS):
                continue
            row = dict(zip(ADULT_FIELDS, (v.strip() for v in rec)))
            row["income"] = row["income"].rstrip(".")
            rows.append(row)
    return rows


def _write_csv_gz(rows: list[dict], path: Path) -> None:
    with gzip.open(path, "wt", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ADULT_FIELDS)
        w.writeheader()
        w.writerows(rows)


def adult_schema(train_rows: list[dict], test_rows: list[dict]) -> Schema:
    cols = {}
    for name in ("workclass", "education", "marital-status", "occupation",
                 "relationship", "race", "sex", "native-country"):
        cols[name] = ColumnSpec(name, "categorical",
                                values=tuple(sorted({r[name] for r in train_rows + test_rows})))
    cols["education-num"] = ColumnSpec("education-num", "categorical",
                                       values=tuple(str(i) for i in range(1, 17)))
    cols["age"] = ColumnSpec("age", "binned", edges=AGE_EDGES)
    cols["hours-per-week"] = ColumnSpec("hours-per-week", "binned", edges=HOURS_EDGES)
    cols["capital-gain"] = ColumnSpec("capital-gain", "numeric")
    cols["capital-loss"] = ColumnSpec("capital-loss", "numeric")
    income = ColumnSpec("income", "categorical", values=("<=50K", ">50K"))
    schema = Schema(tuple(cols[n] for n in ORDER) + (income,), label="income")
    return schema.fit_scaling(train_rows)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--mnist", type=Path, help="directory holding the four raw MNIST IDX files")
    ap.add_argument("--adult", type=Path, help="directory holding adult.data and adult.test")
    ap.add_argument("--out", type=Path, default=Path("data"))
    args = ap.parse_args()

    if args.mnist:
        dst = args.out / "mnist"
        dst.mkdir(parents=True, exist_ok=True)
        for stem in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                     "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            with open(args.mnist / stem, "rb") as src, gzip.open(dst / (stem + ".gz"), "wb") as out:
                shutil.copyfileobj(src, out)

    if args.adult:
        dst = args.out / "adult"
        dst.mkdir(parents=True, exist_ok=True)
        train = _raw_rows(args.adult / "adult.data")
        test = _raw_rows(args.adult / "adult.test")
        _write_csv_gz(train, dst / "adult_train.csv.gz")
        _write_csv_gz(test, dst / "adult_test.csv.gz")
        schema = adult_schema(read_csv_rows(dst / "adult_train.csv.gz"), test)
        schema.save(dst / "adult_schema.json")
        print(f"adult: {len(train)} train / {len(test)} test rows, {schema.n_features} feature columns")


if __name__ == "__main__":
    main()
