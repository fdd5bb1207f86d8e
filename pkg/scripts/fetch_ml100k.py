"""Build ``u.data`` and ``attributes.csv`` for MovieLens 100k.

The copy of the data shipped inside the pytorch-widedeep wheel is used, so
only the package index has to be reachable. Needs pandas and pyarrow, which
are not dependencies of mmfrec itself.

    python scripts/fetch_ml100k.py /root/data/ml-100k
"""

import argparse
import csv
import glob
import io
import re
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

WHEEL = "pytorch-widedeep==1.7.0"
PREFIX = "pytorch_widedeep/datasets/data/MovieLens100k_"
GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime", "Documentary",
          "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller",
          "War", "Western"]
YEAR = re.compile(r"\((\d{4})\)\s*$")


def read_wheel(wheel: Path, name: str) -> pd.DataFrame:
    with zipfile.ZipFile(wheel) as z:
        return pd.read_parquet(io.BytesIO(z.read(f"{PREFIX}{name}.parquet.brotli")))


def attribute_rows(items: pd.DataFrame):
    for rec in items.to_dict("records"):
        j = rec["movie_id"]
        for g in GENRES:
            if rec[g]:
                yield j, "genre", g
        # titles are kept verbatim, trailing blanks included
        title = str(rec["movie_title"])
        m = YEAR.search(title)
        if m:
            yield j, "year", m.group(1)
        if title:
            yield j, "title", title


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--wheel", type=Path, help="use an already downloaded wheel")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, WHEEL], check=True)
            wheel = Path(glob.glob(f"{tmp}/*.whl")[0])
        data = read_wheel(wheel, "data")
        items = read_wheel(wheel, "items")
    data[["user_id", "movie_id", "rating", "timestamp"]].to_csv(
        args.out / "u.data", sep="\t", header=False, index=False
    )
    with open(args.out / "attributes.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "type", "value"])
        w.writerows(attribute_rows(items))
    print(f"wrote {len(data)} ratings and attributes for {len(items)} items to {args.out}")


if __name__ == "__main__":
    main()
