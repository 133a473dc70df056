#!/usr/bin/env python3
"""Download the SuiteSparse matrices used by the acceptance suite.

Fetches the Matrix Market archives for epb2 and wang3 and unpacks the
``.mtx`` files into ``data/matrices`` (or the directory given with
``--dest``). Needs network access to the SuiteSparse collection.
"""
import argparse
import io
import sys
import tarfile
import urllib.request
from pathlib import Path

BASE = "https://suitesparse-collection-website.herokuapp.com/MM"
MATRICES = {"epb2": "Averous", "wang3": "Wang"}


def fetch(name, group, dest: Path):
    url = f"{BASE}/{group}/{name}.tar.gz"
    print(f"fetching {url}")
    with urllib.request.urlopen(url, timeout=120) as resp:
        data = resp.read()
    with tarfile.open(fileobj=io.BytesIO(data), mode="r:gz") as tar:
        member = tar.getmember(f"{name}/{name}.mtx")
        with tar.extractfile(member) as src:
            (dest / f"{name}.mtx").write_bytes(src.read())


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dest", type=Path,
                   default=Path(__file__).resolve().parents[1] / "data" / "matrices")
    p.add_argument("names", nargs="*", default=sorted(MATRICES))
    args = p.parse_args(argv)
    args.dest.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        if (args.dest / f"{name}.mtx").exists():
            print(f"{name}.mtx already present")
            continue
        fetch(name, MATRICES[name], args.dest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
