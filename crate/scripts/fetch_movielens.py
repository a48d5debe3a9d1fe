#!/usr/bin/env python3
"""Place the MovieLens 100K ratings file at data/ml-100k/u.data.

Tries the GroupLens archive first, then falls back to the copy of the same
ratings bundled in the `recbole` wheel on PyPI (header row dropped, fields
otherwise identical to u.data).
"""
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

DEST = pathlib.Path(__file__).resolve().parent.parent / "data" / "ml-100k" / "u.data"
GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data").decode()


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "recbole==1.2.1", "-d", tmp],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("recbole-*.whl"))
        raw = zipfile.ZipFile(wheel).read("recbole/dataset_example/ml-100k/ml-100k.inter").decode()
    lines = raw.splitlines()[1:]
    return "\n".join(lines) + "\n"


def main():
    if DEST.exists():
        print(f"{DEST} already present")
        return
    try:
        text = from_grouplens()
    except Exception as err:  # noqa: BLE001
        print(f"grouplens download failed ({err}); using recbole wheel", file=sys.stderr)
        text = from_recbole()
    rows = [l for l in text.splitlines() if l.strip()]
    if len(rows) != 100000:
        sys.exit(f"unexpected row count {len(rows)}")
    DEST.parent.mkdir(parents=True, exist_ok=True)
    DEST.write_text(text)
    print(f"wrote {DEST} ({len(rows)} ratings)")


if __name__ == "__main__":
    main()
