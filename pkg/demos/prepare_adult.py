"""Download the UCI census income dataset and write a clean headered CSV.

Fetches the train and test partitions, strips the test partition's comment
line and trailing label periods, drops rows with missing fields, and writes
everything to one file the loaders and the acceptance suite can use:

    python3 demos/prepare_adult.py              # writes data/adult.csv
    python3 demos/prepare_adult.py --out /tmp/adult.csv

Point the suite at a custom location with CASEHASH_ADULT=/tmp/adult.csv.
Needs outbound network access, which sandboxed environments may not have.
"""

import argparse
import csv
import os
import urllib.request

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases/adult"
COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def fetch_rows(url):
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        text = resp.read().decode("utf-8", errors="replace")
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        fields = [f.strip().rstrip(".") for f in line.split(",")]
        if len(fields) != len(COLUMNS):
            continue
        if "?" in fields:
            continue  # rows with missing values are dropped
        rows.append(fields)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join("data", "adult.csv"))
    args = ap.parse_args()

    rows = fetch_rows(f"{BASE}/adult.data") + fetch_rows(f"{BASE}/adult.test")
    if not rows:
        raise SystemExit("no rows fetched; is the network reachable?")

    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    labels = {r[-1] for r in rows}
    print(f"wrote {len(rows)} rows to {args.out} (labels: {sorted(labels)})")


if __name__ == "__main__":
    main()
