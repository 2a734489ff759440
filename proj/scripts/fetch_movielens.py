#!/usr/bin/env python3
"""Fetch MovieLens-100K ratings into data/ml-100k/u.data.

Tries the GroupLens archive first. When that host is unreachable, falls back
to the copy of the same file shipped inside the RecBole wheel on PyPI
(recbole/dataset_example/ml-100k/ml-100k.inter, which carries a header line).
The output is the canonical tab-separated `user item rating timestamp` layout.
"""

import argparse
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
EXPECTED_LINES = 100000


def from_grouplens(timeout):
    with urllib.request.urlopen(GROUPLENS_URL, timeout=timeout) as resp:
        blob = resp.read()
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        return zf.read("ml-100k/u.data").decode()


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", tmp, "recbole==1.2.1"],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            text = zf.read("recbole/dataset_example/ml-100k/ml-100k.inter").decode()
    lines = text.splitlines()
    if lines and lines[0].startswith("user_id"):
        lines = lines[1:]
    return "\n".join(lines) + "\n"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent
                                             / "data" / "ml-100k" / "u.data"))
    parser.add_argument("--timeout", type=float, default=10.0)
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    if out.exists():
        print(f"{out} already present")
        return 0
    try:
        text = from_grouplens(args.timeout)
    except Exception as exc:  # network blocked, DNS failure, ...
        print(f"grouplens unavailable ({exc}); using the RecBole wheel copy")
        text = from_recbole()

    count = sum(1 for line in text.splitlines() if line.strip())
    if count != EXPECTED_LINES:
        print(f"unexpected line count {count}", file=sys.stderr)
        return 1
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"wrote {out} ({count} ratings)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
