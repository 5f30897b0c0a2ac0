#!/usr/bin/env python3
"""Download MovieLens 100k ratings into data/ml-100k/u.data.

Tries the GroupLens archive first. If that host is unreachable, falls back to
the copy bundled in the recbole wheel on PyPI (same records, same order, with
a typed header line that is dropped here).

The bundled copy hashes to md5 6e47046882bad158b0efbb84cd5cb987.
"""
import hashlib
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "ml-100k" / "u.data"
GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
RECBOLE = "recbole==1.2.1"


def fetch(url):
    with urllib.request.urlopen(url, timeout=60) as r:
        return r.read()


def from_grouplens():
    with zipfile.ZipFile(io.BytesIO(fetch(GROUPLENS))) as z:
        return z.read("ml-100k/u.data")


def from_recbole():
    # pip honours whatever index or mirror is configured locally
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", RECBOLE, "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("*.whl"))
        with zipfile.ZipFile(wheel) as z:
            text = z.read("recbole/dataset_example/ml-100k/ml-100k.inter").decode()
    lines = text.splitlines()[1:]
    return ("\n".join(lines) + "\n").encode()


def main():
    for source in (from_grouplens, from_recbole):
        try:
            data = source()
        except Exception as e:  # network or archive layout problems
            print(f"{source.__name__}: {e}", file=sys.stderr)
            continue
        lines = data.splitlines()
        if len(lines) != 100_000 or any(len(l.split(b"\t")) != 4 for l in lines):
            print(f"{source.__name__}: not 100000 tab-separated ratings", file=sys.stderr)
            continue
        OUT.parent.mkdir(parents=True, exist_ok=True)
        OUT.write_bytes(data)
        print(f"wrote {OUT} (md5 {hashlib.md5(data).hexdigest()})")
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
