"""Download the public datasets used by the configs into ``data/``.

    python scripts/fetch_data.py                 # abalone + mnist
    python scripts/fetch_data.py letter usps madelon --dest /somewhere

Files that already exist are left alone.  Letter, USPS and madelon are
converted to plain CSV with the label in the column their config expects.
"""
import argparse
import bz2
import hashlib
import shutil
import sys
import urllib.request
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
MNIST_MIRRORS = ["https://ossci-datasets.s3.amazonaws.com/mnist",
                 "https://storage.googleapis.com/cvdf-datasets/mnist",
                 "http://yann.lecun.com/exdb/mnist"]
MNIST_MD5 = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}
USPS = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass"


def download(urls, target: Path, md5=None):
    if target.exists():
        print(f"exists: {target}")
        return target
    target.parent.mkdir(parents=True, exist_ok=True)
    last = None
    for url in [urls] if isinstance(urls, str) else urls:
        try:
            print(f"fetching {url}")
            tmp = target.with_suffix(target.suffix + ".part")
            with urllib.request.urlopen(url, timeout=60) as resp, open(tmp, "wb") as fh:
                shutil.copyfileobj(resp, fh)
            if md5 and hashlib.md5(tmp.read_bytes()).hexdigest() != md5:
                tmp.unlink()
                raise OSError(f"checksum mismatch for {url}")
            tmp.replace(target)
            return target
        except OSError as exc:
            last = exc
            print(f"  failed: {exc}", file=sys.stderr)
    raise SystemExit(f"could not download {target.name}: {last}")


def split_rows(lines, first):
    """The first ``first`` non-empty lines, then the rest."""
    rows = [line for line in lines if line.strip()]
    return rows[:first], rows[first:]


def libsvm_to_csv(lines, width):
    """Dense CSV rows (features then label) from ``label idx:value ...`` lines."""
    out = []
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        values = ["0"] * width
        for item in parts[1:]:
            idx, value = item.split(":")
            values[int(idx) - 1] = value
        out.append(",".join(values + [parts[0]]))
    return out


def join_features_labels(data_lines, label_lines):
    """CSV rows from whitespace separated features and a parallel label file."""
    data = [line.split() for line in data_lines if line.strip()]
    labels = [line.strip() for line in label_lines if line.strip()]
    if len(data) != len(labels):
        raise ValueError(f"{len(data)} feature rows but {len(labels)} labels")
    return [",".join(row + [label]) for row, label in zip(data, labels)]


def write_lines(path: Path, lines):
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path} ({len(lines)} rows)")


def fetch_abalone(dest: Path):
    download(f"{UCI}/abalone/abalone.data", dest / "abalone.data")


def fetch_mnist(dest: Path):
    for name, md5 in MNIST_MD5.items():
        download([f"{m}/{name}" for m in MNIST_MIRRORS], dest / "mnist" / name, md5)


def fetch_letter(dest: Path):
    raw = download(f"{UCI}/letter-recognition/letter-recognition.data", dest / "raw" / "letter.data")
    train, test = split_rows(raw.read_text().splitlines(), 16000)
    write_lines(dest / "letter_train.csv", train)
    write_lines(dest / "letter_test.csv", test)


def fetch_usps(dest: Path):
    for name, out in (("usps.bz2", "usps_train.csv"), ("usps.t.bz2", "usps_test.csv")):
        raw = download(f"{USPS}/{name}", dest / "raw" / name)
        write_lines(dest / out, libsvm_to_csv(bz2.decompress(raw.read_bytes()).decode().splitlines(), 256))


def fetch_madelon(dest: Path):
    base = f"{UCI}/madelon"
    files = {
        "train.data": f"{base}/MADELON/madelon_train.data",
        "train.labels": f"{base}/MADELON/madelon_train.labels",
        "valid.data": f"{base}/MADELON/madelon_valid.data",
        "valid.labels": f"{base}/madelon_valid.labels",
    }
    got = {k: download(url, dest / "raw" / f"madelon_{k}").read_text().splitlines()
           for k, url in files.items()}
    write_lines(dest / "madelon_train.csv", join_features_labels(got["train.data"], got["train.labels"]))
    write_lines(dest / "madelon_test.csv", join_features_labels(got["valid.data"], got["valid.labels"]))


FETCHERS = {"abalone": fetch_abalone, "mnist": fetch_mnist, "letter": fetch_letter,
            "usps": fetch_usps, "madelon": fetch_madelon}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("datasets", nargs="*", metavar="DATASET",
                        help=f"any of {', '.join(FETCHERS)} (default: abalone mnist)")
    parser.add_argument("--dest", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = parser.parse_args(argv)
    names = args.datasets or ["abalone", "mnist"]
    unknown = [n for n in names if n not in FETCHERS]
    if unknown:
        parser.error(f"unknown dataset(s): {', '.join(unknown)}")
    for name in names:
        FETCHERS[name](Path(args.dest))


if __name__ == "__main__":
    main()
